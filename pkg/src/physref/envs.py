"""Vectorized reference-tracking environment.

One object steps B independent planar robots against reference motion clips:
physics via the batched simulator, rewards against the interpolated
reference, stage-specific termination, and automatic resets driven by the
adaptive start-bin sampler. Finished episodes are queued as results the
caller can drain for sampler updates and logging.

Stage defaults (override per constructor argument):
  PMG  - nominal physics, command-window noise on, no pushes, no obs noise
  GMT  - randomized physics, pushes on, obs noise on, clean windows
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import RobotModel, link_kinematics, point_positions, point_velocities
from .motion import (WINDOW_OFFSETS, CommandNoise, MotionClip, command_window,
                     sample_clip)
from .obs import ObsNoise, build_obs, obs_dim
from .reward import RewardConfig, reward_terms
from .rl.sampler import (MIN_COEFF_GMT, MIN_COEFF_PMG, SamplerState,
                         build_bins, sample_start, update_sampler)
from .rl.termination import check_termination
from .sim import (RandomizationRanges, SimConfig, _contact_forces,
                  sample_physics_randomization, sample_push)
from .stage import Stage

_STAGE_DEFAULT = object()


class EnvError(ValueError):
    pass


def link_force_magnitudes(model: RobotModel, point_forces: np.ndarray
                          ) -> np.ndarray:
    """Aggregate per-point contact forces (B, P, 2) into per-link force
    magnitudes (B, L)."""
    per_link = np.zeros((point_forces.shape[0], model.n_links, 2))
    np.add.at(per_link, (slice(None), model.cp_link), point_forces)
    return np.linalg.norm(per_link, axis=-1)


def static_link_forces(model: RobotModel, cfg: SimConfig, qpos, qvel,
                       mu_s, mu_d, e_rest) -> np.ndarray:
    """Per-link contact force magnitudes (B, L) of a state as it stands,
    with fresh friction anchors (used for the very first observation)."""
    if not model.n_contact_points:
        return np.zeros((qpos.shape[0], model.n_links))
    pos, ang, vel, angvel = link_kinematics(model, qpos, qvel)
    cp = point_positions(model, pos, ang)
    cv = point_velocities(model, pos, ang, vel, angvel)
    anchors = np.full((qpos.shape[0], model.n_contact_points), np.nan)
    forces, _, _, _, _ = _contact_forces(cfg, cp, cv, anchors,
                                         np.asarray(mu_s), np.asarray(mu_d),
                                         np.asarray(e_rest))
    return link_force_magnitudes(model, forces)


@dataclass(frozen=True)
class EpisodeResult:
    """Outcome of one finished episode (for sampler updates and logging)."""

    bin_index: int
    failed: bool            # ended by termination (not by reaching clip end)
    episode_return: float
    episode_length: int     # control steps
    max_steps: int          # steps from the start bin to the clip end


class TrackingEnv:
    def __init__(self, model: RobotModel, clips, stage, *, n_envs: int = 16,
                 seed: int = 0, sim_config: SimConfig | None = None,
                 reward_config: RewardConfig | None = None,
                 ranges: RandomizationRanges | None = None,
                 command_offsets=WINDOW_OFFSETS,
                 obs_noise=_STAGE_DEFAULT, command_noise=_STAGE_DEFAULT,
                 pushes=_STAGE_DEFAULT, min_coeff: float | None = None):
        self.model = model
        self.stage = Stage.parse(stage)
        self.clips: tuple[MotionClip, ...] = tuple(clips)
        self.cfg = sim_config or SimConfig()
        self.reward_cfg = reward_config or RewardConfig()
        self.ranges = ranges or RandomizationRanges()
        self.offsets = np.asarray(command_offsets, dtype=np.float64)
        self.n_envs = int(n_envs)
        self.rng = np.random.default_rng(seed)

        if not self.clips:
            raise EnvError("no motion clips")
        if self.n_envs < 1:
            raise EnvError("n_envs must be >= 1")
        for clip in self.clips:
            if clip.model != model.name:
                raise EnvError(f"clip targets model {clip.model!r}, "
                               f"environment runs {model.name!r}")
            if abs(clip.fps * self.cfg.control_dt - 1.0) > 1e-9:
                raise EnvError(f"clip fps {clip.fps} does not match the "
                               f"control rate {1.0 / self.cfg.control_dt:g} Hz")
            if clip.contacts is None:
                raise EnvError("clips must carry contact masks")

        if obs_noise is _STAGE_DEFAULT:
            obs_noise = ObsNoise() if self.stage is Stage.GMT else None
        if command_noise is _STAGE_DEFAULT:
            command_noise = CommandNoise() if self.stage is Stage.PMG else None
        if pushes is _STAGE_DEFAULT:
            pushes = self.stage is Stage.GMT
        self.obs_noise = obs_noise
        self.command_noise = command_noise
        self.pushes = bool(pushes)

        if min_coeff is None:
            min_coeff = (MIN_COEFF_PMG if self.stage is Stage.PMG
                         else MIN_COEFF_GMT)
        self.sampler: SamplerState = build_bins(
            [c.duration for c in self.clips], min_coeff=min_coeff)

        self.obs_dim = obs_dim(model, self.stage, len(self.offsets))
        self.action_dim = model.n_joints

        B, nq, nj = self.n_envs, model.nq, model.n_joints
        self.qpos = np.zeros((B, nq))
        self.qvel = np.zeros((B, nq))
        self.anchors = np.full((B, model.n_contact_points), np.nan)
        self.prev_action = np.zeros((B, nj))
        self.t = np.zeros(B)
        self.end_time = np.zeros(B)
        self.env_clip = np.zeros(B, dtype=np.intp)
        self.env_bin = np.zeros(B, dtype=np.intp)
        self.next_push = np.full(B, np.inf)
        self.ep_return = np.zeros(B)
        self.ep_len = np.zeros(B, dtype=np.intp)
        self.ep_max = np.zeros(B, dtype=np.intp)
        self.mu_s = np.zeros(B)
        self.mu_d = np.zeros(B)
        self.e_rest = np.zeros(B)
        self.com_off = np.zeros((B, 2))
        self._results: list[EpisodeResult] = []

    # -- episode plumbing ---------------------------------------------------

    def _reset_rows(self, idx) -> None:
        for i in idx:
            draw = sample_start(self.sampler, self.rng)
            params = sample_physics_randomization(
                self.ranges, self.model, self.cfg, self.rng, self.stage)
            clip = self.clips[draw.clip_id]
            ref = sample_clip(clip, draw.start_time)
            self.qpos[i, 0:2] = ref["root_pos"]
            self.qpos[i, 2] = ref["root_pitch"] + params.root_pitch_offset
            self.qpos[i, 3:] = ref["joint_pos"] + params.joint_pos_offset
            self.qvel[i, 0:2] = ref["root_lin_vel"]
            self.qvel[i, 2] = ref["root_ang_vel"]
            self.qvel[i, 3:] = ref["joint_vel"]
            self.anchors[i] = np.nan
            self.prev_action[i] = 0.0
            self.t[i] = draw.start_time
            self.end_time[i] = clip.duration
            self.env_clip[i] = draw.clip_id
            self.env_bin[i] = draw.bin_index
            self.ep_return[i] = 0.0
            self.ep_len[i] = 0
            self.ep_max[i] = int(round(
                (clip.duration - draw.start_time) / self.cfg.control_dt))
            self.mu_s[i] = params.mu_static
            self.mu_d[i] = params.mu_dynamic
            self.e_rest[i] = params.restitution
            self.com_off[i] = params.com_offset
            self.next_push[i] = (draw.start_time
                                 + self.rng.uniform(*self.ranges.push_interval)
                                 if self.pushes else np.inf)

    def reset(self) -> np.ndarray:
        self._reset_rows(range(self.n_envs))
        self._results.clear()
        return self._build_obs(np.arange(self.n_envs))

    def drain_episode_results(self) -> list[EpisodeResult]:
        out = self._results
        self._results = []
        return out

    def update_sampling(self) -> list[EpisodeResult]:
        """Fold finished episodes into the start-bin sampler; returns them."""
        results = self.drain_episode_results()
        if results:
            self.sampler = update_sampler(
                self.sampler, [(r.bin_index, r.failed) for r in results])
        return results

    # -- observation assembly -----------------------------------------------

    def _windows(self, idx) -> np.ndarray:
        rng = self.rng if (self.stage is Stage.PMG
                           and self.command_noise is not None) else None
        rows = [command_window(self.clips[self.env_clip[i]], self.t[i],
                               self.offsets, self.stage,
                               rng=rng, noise=self.command_noise)
                for i in idx]
        return np.stack(rows)

    def _build_obs(self, idx, link_force=None) -> np.ndarray:
        noise_rng = self.rng if self.obs_noise is not None else None
        kw = {}
        if self.stage is Stage.PMG:
            if link_force is None:
                link_force = static_link_forces(
                    self.model, self.cfg, self.qpos[idx], self.qvel[idx],
                    self.mu_s[idx], self.mu_d[idx], self.e_rest[idx])
            pos, _, vel, _ = link_kinematics(
                self.model, self.qpos[idx], self.qvel[idx])
            kw = dict(
                body_pos=pos, body_lin_vel=vel,
                contact_flags=link_force > self.reward_cfg.contact_force_threshold,
            )
        return build_obs(self.model, self.stage, self.qpos[idx],
                         self.qvel[idx], self.prev_action[idx],
                         self._windows(idx), noise=self.obs_noise,
                         rng=noise_rng, **kw)

    def _reference_batch(self, t):
        B, nq = self.n_envs, self.model.nq
        ref_qpos = np.empty((B, nq))
        ref_qvel = np.empty((B, nq))
        ref_contacts = np.empty((B, len(self.model.ee_idx)))
        for ci in np.unique(self.env_clip):
            m = self.env_clip == ci
            s = sample_clip(self.clips[ci], t[m])
            ref_qpos[m, 0:2] = s["root_pos"]
            ref_qpos[m, 2] = s["root_pitch"]
            ref_qpos[m, 3:] = s["joint_pos"]
            ref_qvel[m, 0:2] = s["root_lin_vel"]
            ref_qvel[m, 2] = s["root_ang_vel"]
            ref_qvel[m, 3:] = s["joint_vel"]
            ref_contacts[m] = s["contacts"]
        return ref_qpos, ref_qvel, ref_contacts

    # -- stepping -------------------------------------------------------------

    def step(self, actions: np.ndarray):
        """Advance every env one control step.

        Returns (obs, reward, terminated, truncated, info); done rows are
        reset in place AFTER the returned reward/flags are computed, and
        ``info["final_obs"]`` holds the pre-reset observation of every row
        (needed to bootstrap the value of truncated episodes).
        """
        from .sim import batch_control_step

        model = self.model
        actions = np.asarray(actions, dtype=np.float64)
        if actions.shape != (self.n_envs, model.n_joints):
            raise EnvError(f"actions must be shaped "
                           f"({self.n_envs}, {model.n_joints})")

        push_dv = None
        if self.pushes:
            fire = self.t >= self.next_push - 1e-12
            if fire.any():
                push_dv = np.zeros((self.n_envs, 3))
                for i in np.flatnonzero(fire):
                    p = sample_push(self.ranges, self.rng, self.t[i])
                    push_dv[i] = (p.dvx, p.dvz, p.domega)
                    self.next_push[i] = self.t[i] + self.rng.uniform(
                        *self.ranges.push_interval)

        qpos, qvel, anchors, contact, diverged = batch_control_step(
            model, self.cfg, self.qpos, self.qvel, actions,
            self.mu_s, self.mu_d, self.e_rest, self.com_off, self.anchors,
            push_dv)
        self.t += self.cfg.control_dt

        ref_qpos, ref_qvel, ref_contacts = self._reference_batch(self.t)
        # keep downstream arithmetic finite: diverged rows terminate anyway
        bad = ~(np.isfinite(qpos).all(axis=1) & np.isfinite(qvel).all(axis=1))
        if bad.any():
            qpos[bad] = ref_qpos[bad]
            qvel[bad] = ref_qvel[bad]
        self.qpos, self.qvel, self.anchors = qpos, qvel, anchors

        pos, ang, vel, angvel = link_kinematics(model, qpos, qvel)
        rpos, rang, rvel, rangvel = link_kinematics(model, ref_qpos, ref_qvel)
        link_force = link_force_magnitudes(model, contact["forces"])
        thr = self.reward_cfg.contact_force_threshold
        non_ee = np.ones(model.n_links, dtype=bool)
        non_ee[model.ee_idx] = False

        tracked = model.tracked_idx
        _, weighted, reward = reward_terms(
            self.reward_cfg, self.stage,
            body_pos=pos[:, tracked], body_angle=ang[:, tracked],
            body_lin_vel=vel[:, tracked], body_ang_vel=angvel[:, tracked],
            ref_body_pos=rpos[:, tracked], ref_body_angle=rang[:, tracked],
            ref_body_lin_vel=rvel[:, tracked], ref_body_ang_vel=rangvel[:, tracked],
            root=qpos[:, :3], ref_root=ref_qpos[:, :3],
            ee_force=link_force[:, model.ee_idx],
            ref_contact_mask=ref_contacts > 0.5,
            undesired_count=(link_force[:, non_ee] > thr).sum(axis=-1),
            action=actions, prev_action=self.prev_action,
            q=qpos[:, 3:], joint_lo=model.joint_limits[:, 0],
            joint_hi=model.joint_limits[:, 1], dq_ref=ref_qvel[:, 3:])
        reward = np.where(diverged, 0.0, reward)

        terminated = check_termination(pos[:, tracked], rpos[:, tracked],
                                       self.stage, diverged)
        truncated = (self.t >= self.end_time - 1e-9) & ~terminated

        self.prev_action = actions.copy()
        self.ep_return += reward
        self.ep_len += 1

        obs = self._build_obs(np.arange(self.n_envs), link_force)
        info = {
            "final_obs": obs.copy(),
            "reward_terms": {k: float(np.mean(v)) for k, v in weighted.items()},
        }

        done = terminated | truncated
        if done.any():
            rows = np.flatnonzero(done)
            for i in rows:
                self._results.append(EpisodeResult(
                    bin_index=int(self.env_bin[i]),
                    failed=bool(terminated[i]),
                    episode_return=float(self.ep_return[i]),
                    episode_length=int(self.ep_len[i]),
                    max_steps=int(self.ep_max[i])))
            self._reset_rows(rows)
            obs[rows] = self._build_obs(rows)
        return obs, reward, terminated, truncated, info
