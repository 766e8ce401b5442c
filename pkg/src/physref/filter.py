"""Online reference filtering for live command streams.

A persistent shadow simulator runs the privileged reference-filtering
policy against whatever command frames arrive; the simulator state after
each control step is the physics-consistent command handed downstream.
Commands the dynamics cannot realize (teleports, floating poses) come out
as whatever the robot can actually do, so consumers never see a
discontinuous reference.

The filter holds exactly one shadow environment per session instead of
re-rolling lookahead windows: state carries over between steps, which keeps
both continuity and per-step latency bounded.
"""

from __future__ import annotations

import time
from collections import deque
from dataclasses import dataclass

import numpy as np

from .checkpoint import Checkpoint
from .model import RobotModel, link_kinematics, load_builtin_model
from .motion import WINDOW_OFFSETS
from .obs import build_obs, obs_dim
from .envs import link_force_magnitudes, static_link_forces
from .rl.policy import PolicyParams, act
from .rl.termination import check_termination
from .sim import EnvPhysicsParams, SimConfig, batch_control_step
from .stage import Stage


class FilterError(ValueError):
    pass


@dataclass(frozen=True)
class CommandFrame:
    """One incoming reference frame (global root pose + joint state)."""

    root_pos: np.ndarray       # (2,) m
    root_pitch: float          # rad
    root_lin_vel: np.ndarray   # (2,) m/s
    root_ang_vel: float        # rad/s
    joint_pos: np.ndarray      # (nj,) rad
    joint_vel: np.ndarray      # (nj,) rad/s
    contacts: np.ndarray | None = None  # (n_ee,) bool

    def __post_init__(self):
        object.__setattr__(self, "root_pos",
                           np.asarray(self.root_pos, dtype=np.float64))
        object.__setattr__(self, "root_lin_vel",
                           np.asarray(self.root_lin_vel, dtype=np.float64))
        object.__setattr__(self, "joint_pos",
                           np.asarray(self.joint_pos, dtype=np.float64))
        object.__setattr__(self, "joint_vel",
                           np.asarray(self.joint_vel, dtype=np.float64))
        if self.contacts is not None:
            object.__setattr__(self, "contacts",
                               np.asarray(self.contacts, dtype=bool))


@dataclass(frozen=True)
class FilteredFrame:
    """Shadow-simulator state emitted as the physics-consistent command."""

    t: float
    root_pos: np.ndarray
    root_pitch: float
    root_lin_vel: np.ndarray
    root_ang_vel: float
    joint_pos: np.ndarray
    joint_vel: np.ndarray
    contacts: np.ndarray       # (n_ee,) bool, force-derived
    fault: bool                # held frame after a shadow-sim reset


def hold_window(model: RobotModel, frame, stage) -> np.ndarray:
    """Zero-order-hold lookahead window from a single frame.

    Every row repeats the latest command, so the relative-x column is 0 and
    the velocities carry the motion intent. Accepts CommandFrame or
    FilteredFrame; must match the column layout of motion.command_window
    for the given stage (tested).
    """
    stage = Stage.parse(stage)
    contacts = frame.contacts
    if contacts is None:
        contacts = np.zeros(len(model.ee_idx), dtype=bool)
    parts = [
        [0.0, frame.root_pos[1], frame.root_pitch],
        frame.root_lin_vel, [frame.root_ang_vel],
        frame.joint_pos, frame.joint_vel,
        contacts.astype(np.float64),
    ]
    if stage is Stage.PMG:
        parts.append(frame.root_pos)
    row = np.concatenate(parts)
    return np.tile(row, (len(WINDOW_OFFSETS), 1))


class OnlineFilter:
    """Lockstep shadow sim + privileged policy over a live command stream.

    Each ``step`` advances one control period (no faster and no slower than
    the physics), so callers own the real-time pacing. Lookahead windows
    are built by holding the latest command constant: at this horizon the
    velocities in the frame carry the motion intent.
    """

    def __init__(self, model: RobotModel, params: PolicyParams, *,
                 sim_config: SimConfig | None = None,
                 contact_threshold: float = 1.0,  # N
                 latency_window: int = 20_000):
        if params.obs_dim != obs_dim(model, Stage.PMG):
            raise FilterError(
                f"policy expects {params.obs_dim}-dim observations, the "
                f"privileged layout for {model.name!r} has "
                f"{obs_dim(model, Stage.PMG)}")
        self.model = model
        self.params = params
        self.cfg = sim_config or SimConfig()
        self.contact_threshold = float(contact_threshold)
        nominal = EnvPhysicsParams.nominal(model, self.cfg)
        self._mu_s = np.array([nominal.mu_static])
        self._mu_d = np.array([nominal.mu_dynamic])
        self._e_rest = np.array([nominal.restitution])
        self._com_off = nominal.com_offset[None]
        self.latencies_ms: deque[float] = deque(maxlen=latency_window)
        self.faults = 0
        self.t = 0.0
        self._qpos: np.ndarray | None = None

    @classmethod
    def from_checkpoint(cls, checkpoint: Checkpoint, *,
                        sim_config: SimConfig | None = None,
                        contact_threshold: float = 1.0) -> "OnlineFilter":
        if checkpoint.stage is not Stage.PMG:
            raise FilterError("online filtering needs a pmg checkpoint, got "
                              f"stage {checkpoint.stage.value!r}")
        model = load_builtin_model(checkpoint.model)
        return cls(model, checkpoint.params, sim_config=sim_config,
                   contact_threshold=contact_threshold)

    # -- session state ------------------------------------------------

    def reset(self, frame: CommandFrame) -> None:
        """Seed the shadow sim at an incoming frame (start of session)."""
        self._check_frame(frame)
        self._qpos = np.concatenate([frame.root_pos, [frame.root_pitch],
                                     frame.joint_pos])[None]
        self._qvel = np.concatenate([frame.root_lin_vel,
                                     [frame.root_ang_vel],
                                     frame.joint_vel])[None]
        self._anchors = np.full((1, self.model.n_contact_points), np.nan)
        self._prev_action = np.zeros((1, self.model.n_joints))
        self._link_force = static_link_forces(
            self.model, self.cfg, self._qpos, self._qvel,
            self._mu_s, self._mu_d, self._e_rest)
        self.t = 0.0
        self._save_valid()

    def _save_valid(self):
        self._valid = (self._qpos.copy(), self._qvel.copy(),
                       self._anchors.copy(), self._prev_action.copy(),
                       self._link_force.copy())

    def _restore_valid(self):
        (self._qpos, self._qvel, self._anchors, self._prev_action,
         self._link_force) = (a.copy() for a in self._valid)

    def _check_frame(self, frame: CommandFrame):
        nj = self.model.n_joints
        if frame.joint_pos.shape != (nj,) or frame.joint_vel.shape != (nj,):
            raise FilterError(
                f"command frame carries {frame.joint_pos.shape[0]} joints, "
                f"model {self.model.name!r} has {nj}")

    # -- stepping -------------------------------------------------------

    def step(self, frame: CommandFrame) -> FilteredFrame:
        """Advance one control step tracking ``frame``; emit shadow state.

        On shadow-sim divergence (integrator blow-up, or tracking error
        beyond the stage-one termination bound) the sim rolls back to the
        last valid state and the previous frame is held; ``fault`` marks
        such frames and the session keeps running.
        """
        t0 = time.perf_counter()
        if self._qpos is None:
            self.reset(frame)
        else:
            self._check_frame(frame)

        window = hold_window(self.model, frame, Stage.PMG)[None]
        pos, _, vel, _ = link_kinematics(self.model, self._qpos, self._qvel)
        obs = build_obs(self.model, Stage.PMG, self._qpos, self._qvel,
                        self._prev_action, window, body_pos=pos,
                        body_lin_vel=vel,
                        contact_flags=self._link_force > self.contact_threshold)
        action, _, _ = act(self.params, obs, deterministic=True)

        qpos, qvel, anchors, contact, diverged = batch_control_step(
            self.model, self.cfg, self._qpos, self._qvel, action,
            self._mu_s, self._mu_d, self._e_rest, self._com_off,
            self._anchors)

        fault = bool(diverged[0])
        if not fault:
            ref_qpos = np.concatenate([frame.root_pos, [frame.root_pitch],
                                       frame.joint_pos])[None]
            body, _ = link_kinematics(self.model, qpos)
            ref_body, _ = link_kinematics(self.model, ref_qpos)
            fault = bool(check_termination(
                body[:, self.model.tracked_idx],
                ref_body[:, self.model.tracked_idx], Stage.PMG)[0])

        self.t += self.cfg.control_dt
        if fault:
            self.faults += 1
            self._restore_valid()
        else:
            self._qpos, self._qvel, self._anchors = qpos, qvel, anchors
            self._prev_action = action
            self._link_force = link_force_magnitudes(self.model,
                                                     contact["forces"])
            self._save_valid()

        out = FilteredFrame(
            t=self.t,
            root_pos=self._qpos[0, 0:2].copy(),
            root_pitch=float(self._qpos[0, 2]),
            root_lin_vel=self._qvel[0, 0:2].copy(),
            root_ang_vel=float(self._qvel[0, 2]),
            joint_pos=self._qpos[0, 3:].copy(),
            joint_vel=self._qvel[0, 3:].copy(),
            contacts=self._link_force[0, self.model.ee_idx]
                     > self.contact_threshold,
            fault=fault,
        )
        self.latencies_ms.append((time.perf_counter() - t0) * 1e3)
        return out

    def latency_percentile(self, q: float) -> float:
        if not self.latencies_ms:
            raise FilterError("no steps recorded yet")
        return float(np.percentile(np.fromiter(self.latencies_ms, float), q))
