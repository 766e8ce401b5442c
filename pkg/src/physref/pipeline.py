"""Two-stage orchestration.

Stage I trains the privileged reference-filtering policy (PMG) on raw clips
and replays it to record physics-consistent reference motions. Stage II
trains the deployable proprioceptive tracker (GMT) on those recordings.
Evaluation always scores rollouts against the ORIGINAL raw references, so
reference cleanup cannot hide tracking error by moving the goalposts.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .config import ConfigError, DatasetEntry, StageConfig
from .envs import TrackingEnv, link_force_magnitudes, static_link_forces
from .metrics import (EvalReport, MetricThresholds, artifact_report,
                      build_eval_report, tracking_errors)
from .model import RobotModel, link_kinematics, load_builtin_model
from .motion import (WINDOW_OFFSETS, MotionClip, command_window,
                     inject_artifacts, load_motion, sample_clip, save_motion,
                     slice_clip, synthesize_gait)
from .obs import build_obs, obs_dim
from .rl.policy import PolicyParams, act
from .rl.termination import check_termination
from .rl.train import TrainConfig, TrainResult, train
from .sim import (EnvPhysicsParams, RandomizationRanges, SimConfig,
                  batch_control_step, sample_push)
from .stage import Stage


class PipelineError(RuntimeError):
    pass


def resolve_dataset(entries: list[DatasetEntry], model: RobotModel,
                    seed: int = 0, base_dir: str | Path = "."
                    ) -> list[tuple[str, MotionClip]]:
    """Materialize dataset entries: load files, synthesize gait recipes.

    Synthesis draws from one seeded generator in entry order, so the same
    (dataset, seed) always yields byte-identical clips.
    """
    rng = np.random.default_rng(seed)
    out = []
    for entry in entries:
        if entry.path is not None:
            path = Path(base_dir) / entry.path
            try:
                clip = load_motion(path)
            except (OSError, ValueError) as e:
                raise PipelineError(f"dataset clip {path}: {e}") from e
        else:
            clip = synthesize_gait(model, entry.gait)
            if entry.artifacts is not None:
                clip = inject_artifacts(clip, entry.artifacts, rng)
        if clip.model != model.name:
            raise PipelineError(
                f"dataset clip {entry.label!r} targets model "
                f"{clip.model!r}, run uses {model.name!r}")
        out.append((entry.label, clip))
    return out


# ---------------------------------------------------------------------------
# stage training
# ---------------------------------------------------------------------------

@dataclass
class TrainOutcome:
    checkpoint_path: Path
    log_path: Path
    result: TrainResult
    labels: list[str]


def build_env(config: StageConfig, clips: list[MotionClip]) -> TrackingEnv:
    model = load_builtin_model(config.model)
    kwargs = dict(
        n_envs=config.n_envs, seed=config.seed, sim_config=config.sim,
        reward_config=config.reward, min_coeff=config.min_coeff)
    if config.stage is Stage.GMT:
        if config.randomization is not None:
            kwargs["ranges"] = config.randomization
        if config.obs_noise is not None:
            kwargs["obs_noise"] = config.obs_noise
    else:
        if config.command_noise is not None:
            kwargs["command_noise"] = config.command_noise
    return TrackingEnv(model, clips, config.stage, **kwargs)


def train_stage(config: StageConfig, out_dir: str | Path) -> TrainOutcome:
    """Train one stage end to end; writes the log and checkpoints under
    ``out_dir`` and returns the final checkpoint path."""
    model = load_builtin_model(config.model)
    labeled = resolve_dataset(config.dataset, model, seed=config.seed)
    if config.stage is Stage.GMT:
        for label, clip in labeled:
            if clip.source != "physical":
                raise ConfigError(
                    f"gmt training requires physical-source references; "
                    f"dataset clip {label!r} has source {clip.source!r} "
                    f"(record it through the pmg stage first)")

    env = build_env(config, [c for _, c in labeled])
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    log_path = out_dir / f"train-{config.stage.value}.jsonl"
    final_path = out_dir / f"policy-{config.stage.value}.ckpt"

    def save(params, opt, iteration):
        save_checkpoint(final_path, params, stage=config.stage,
                        model_name=config.model, iteration=iteration, opt=opt)

    tc = TrainConfig(iterations=config.iterations, hyper=config.ppo,
                     seed=config.seed,
                     checkpoint_every=config.checkpoint_every)
    with open(log_path, "w") as log:
        result = train(env, tc, log_stream=log, checkpoint_fn=save)
    return TrainOutcome(checkpoint_path=final_path, log_path=log_path,
                        result=result, labels=[l for l, _ in labeled])


# ---------------------------------------------------------------------------
# policy rollout against a reference clip (single robot, lockstep)
# ---------------------------------------------------------------------------

@dataclass
class RolloutResult:
    clip: MotionClip          # recorded trajectory, frame 0 = initial state
    terminated: bool
    steps: int


def rollout_tracking(model: RobotModel, params: PolicyParams,
                     reference: MotionClip, stage, *,
                     sim_config: SimConfig | None = None,
                     start_frame: int = 0,
                     contact_threshold: float = 1.0,
                     push_ranges: RandomizationRanges | None = None,
                     rng: np.random.Generator | None = None) -> RolloutResult:
    """Roll the deterministic policy against ``reference`` from
    ``start_frame`` to the clip end in nominal physics, recording every
    control step as a physical-source motion frame.

    ``push_ranges`` enables base velocity perturbations (evaluation only);
    they draw from ``rng``.
    """
    stage = Stage.parse(stage)
    cfg = sim_config or SimConfig()
    if abs(reference.fps * cfg.control_dt - 1.0) > 1e-9:
        raise PipelineError(
            f"reference fps {reference.fps} does not match the control rate")
    if params.obs_dim != obs_dim(model, stage):
        raise PipelineError(
            f"policy expects {params.obs_dim}-dim observations, the "
            f"{stage.value} layout for {model.name!r} has "
            f"{obs_dim(model, stage)}")
    if push_ranges is not None and rng is None:
        raise PipelineError("push perturbations need an rng")

    t = start_frame / reference.fps
    s0 = sample_clip(reference, t)
    qpos = np.concatenate([s0["root_pos"], [s0["root_pitch"]],
                           s0["joint_pos"]])[None]
    qvel = np.concatenate([s0["root_lin_vel"], [s0["root_ang_vel"]],
                           s0["joint_vel"]])[None]
    anchors = np.full((1, model.n_contact_points), np.nan)
    prev_action = np.zeros((1, model.n_joints))
    nominal = EnvPhysicsParams.nominal(model, cfg)
    mu_s = np.array([nominal.mu_static])
    mu_d = np.array([nominal.mu_dynamic])
    e_rest = np.array([nominal.restitution])
    com_off = nominal.com_offset[None]
    link_force = static_link_forces(model, cfg, qpos, qvel, mu_s, mu_d, e_rest)

    frames = {k: [] for k in ("root_pos", "root_pitch", "root_lin_vel",
                              "root_ang_vel", "joint_pos", "joint_vel",
                              "contacts")}

    def record(contacts):
        frames["root_pos"].append(qpos[0, 0:2].copy())
        frames["root_pitch"].append(qpos[0, 2])
        frames["root_lin_vel"].append(qvel[0, 0:2].copy())
        frames["root_ang_vel"].append(qvel[0, 2])
        frames["joint_pos"].append(qpos[0, 3:].copy())
        frames["joint_vel"].append(qvel[0, 3:].copy())
        frames["contacts"].append(contacts)

    # the initial stance intent comes from the reference; the simulator has
    # not produced contact forces yet at the very first frame
    record(s0["contacts"].astype(bool) if "contacts" in s0
           else np.zeros(len(model.ee_idx), dtype=bool))

    next_push = np.inf
    if push_ranges is not None:
        next_push = t + rng.uniform(*push_ranges.push_interval)

    terminated = False
    steps = 0
    while t < reference.duration - 1e-9:
        window = command_window(reference, t, WINDOW_OFFSETS, stage)[None]
        kw = {}
        if stage is Stage.PMG:
            pos, _, vel, _ = link_kinematics(model, qpos, qvel)
            kw = dict(body_pos=pos, body_lin_vel=vel,
                      contact_flags=link_force > contact_threshold)
        obs = build_obs(model, stage, qpos, qvel, prev_action, window, **kw)
        action, _, _ = act(params, obs, deterministic=True)

        push_dv = None
        if t >= next_push - 1e-12:
            p = sample_push(push_ranges, rng, t)
            push_dv = np.array([[p.dvx, p.dvz, p.domega]])
            next_push = t + rng.uniform(*push_ranges.push_interval)

        qpos, qvel, anchors, contact, diverged = batch_control_step(
            model, cfg, qpos, qvel, action, mu_s, mu_d, e_rest, com_off,
            anchors, push_dv)
        t += cfg.control_dt
        steps += 1
        prev_action = action
        if diverged[0]:
            terminated = True
            break
        link_force = link_force_magnitudes(model, contact["forces"])
        record(link_force[0, model.ee_idx] > contact_threshold)

        s = sample_clip(reference, t)
        ref_qpos = np.concatenate([s["root_pos"], [s["root_pitch"]],
                                   s["joint_pos"]])[None]
        pos, _ = link_kinematics(model, qpos)
        ref_pos, _ = link_kinematics(model, ref_qpos)
        if check_termination(pos[:, model.tracked_idx],
                             ref_pos[:, model.tracked_idx], stage)[0]:
            terminated = True
            break

    clip = MotionClip(
        fps=reference.fps, source="physical", model=model.name,
        joint_names=model.joint_names,
        root_pos=np.array(frames["root_pos"]),
        root_pitch=np.array(frames["root_pitch"]),
        root_lin_vel=np.array(frames["root_lin_vel"]),
        root_ang_vel=np.array(frames["root_ang_vel"]),
        joint_pos=np.array(frames["joint_pos"]),
        joint_vel=np.array(frames["joint_vel"]),
        contacts=np.array(frames["contacts"], dtype=bool),
    )
    return RolloutResult(clip=clip, terminated=terminated, steps=steps)


# ---------------------------------------------------------------------------
# physical reference recording
# ---------------------------------------------------------------------------

@dataclass
class PhysicalMotionSet:
    """Feasibility-gated recordings of the privileged policy's rollouts."""

    clips: list[MotionClip]
    labels: list[str]
    excluded: list[dict] = field(default_factory=list)   # {"label", "reason"}
    provenance: dict = field(default_factory=dict)
    per_clip: list[dict] = field(default_factory=list)


def record_physical_references(checkpoint: Checkpoint | str | Path,
                               references: list[tuple[str, MotionClip]], *,
                               sim_config: SimConfig | None = None,
                               thresholds: MetricThresholds | None = None
                               ) -> PhysicalMotionSet:
    """Replay the privileged policy over raw clips and keep only rollouts
    that are artifact-free end to end.

    Terminated rollouts and any recording with nonzero penetration or
    floating time are reported in ``excluded`` instead of being silently
    dropped or included.
    """
    if not isinstance(checkpoint, Checkpoint):
        checkpoint = load_checkpoint(checkpoint)
    if checkpoint.stage is not Stage.PMG:
        raise PipelineError(
            f"reference recording needs a pmg checkpoint, got "
            f"{checkpoint.stage.value}")
    model = load_builtin_model(checkpoint.model)
    thresholds = thresholds or MetricThresholds()

    out = PhysicalMotionSet(clips=[], labels=[], provenance={
        "model": checkpoint.model,
        "checkpoint_iteration": checkpoint.iteration,
        "sources": [label for label, _ in references],
    })
    for label, raw in references:
        if raw.model != model.name:
            raise PipelineError(
                f"clip {label!r} targets model {raw.model!r}, checkpoint "
                f"is for {model.name!r}")
        res = rollout_tracking(model, checkpoint.params, raw, Stage.PMG,
                               sim_config=sim_config)
        if res.terminated:
            out.excluded.append({
                "label": label,
                "reason": f"terminated after {res.steps} steps "
                          f"({res.steps / raw.fps:.2f} s)"})
            continue
        rep = artifact_report(res.clip, model, thresholds=thresholds)
        if rep.penetration_duration > 0.0 or rep.floating_duration > 0.0:
            out.excluded.append({
                "label": label,
                "reason": f"artifact gate: penetration "
                          f"{rep.penetration_fraction * 100:.2f}%, floating "
                          f"{rep.floating_fraction * 100:.2f}%"})
            continue
        mpjpe, _, _ = tracking_errors(res.clip, raw, model)
        out.clips.append(res.clip)
        out.labels.append(label)
        out.per_clip.append({"label": label, "mpjpe_vs_raw": mpjpe,
                             "frames": res.clip.n_frames})
    return out


def save_motion_set(ms: PhysicalMotionSet, out_dir: str | Path) -> Path:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = {
        "format_version": 1,
        "provenance": ms.provenance,
        "clips": [],
        "excluded": ms.excluded,
        "per_clip": ms.per_clip,
    }
    for label, clip in zip(ms.labels, ms.clips):
        fname = f"{label}.ref"
        save_motion(clip, out_dir / fname)
        manifest["clips"].append({"label": label, "file": fname,
                                  "frames": clip.n_frames})
    path = out_dir / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path


def load_motion_set(dir_path: str | Path) -> PhysicalMotionSet:
    dir_path = Path(dir_path)
    manifest_path = dir_path / "manifest.json"
    if not manifest_path.exists():
        raise PipelineError(f"no manifest.json under {dir_path}")
    manifest = json.loads(manifest_path.read_text())
    ms = PhysicalMotionSet(clips=[], labels=[],
                           excluded=manifest.get("excluded", []),
                           provenance=manifest.get("provenance", {}),
                           per_clip=manifest.get("per_clip", []))
    for spec in manifest["clips"]:
        ms.clips.append(load_motion(dir_path / spec["file"]))
        ms.labels.append(spec["label"])
    return ms


# ---------------------------------------------------------------------------
# evaluation
# ---------------------------------------------------------------------------

def evaluate_policy(checkpoint: Checkpoint | str | Path,
                    references: list[tuple[str, MotionClip]], *,
                    episodes_per_clip: int = 1,
                    pushes: bool = False,
                    ranges: RandomizationRanges | None = None,
                    sim_config: SimConfig | None = None,
                    seed: int = 0,
                    segment_duration: float = 10.0,
                    height_threshold: float = 0.25) -> EvalReport:
    """Score a policy against the original raw references.

    Episode 0 of every clip starts at frame 0; additional episodes start at
    seeded random frames. Rollouts are deterministic given (checkpoint,
    seed); pushes draw their schedule from the same seeded stream.
    """
    if not isinstance(checkpoint, Checkpoint):
        checkpoint = load_checkpoint(checkpoint)
    model = load_builtin_model(checkpoint.model)
    if episodes_per_clip < 1:
        raise PipelineError("episodes_per_clip must be >= 1")
    rng = np.random.default_rng(seed)
    push_ranges = (ranges or RandomizationRanges()) if pushes else None

    pairs = []
    pair_labels = []
    for label, ref in references:
        if ref.model != model.name:
            raise PipelineError(
                f"clip {label!r} targets model {ref.model!r}, checkpoint "
                f"is for {model.name!r}")
        for ep in range(episodes_per_clip):
            if ep == 0:
                start = 0
            else:
                # keep at least one second of reference ahead of the start
                hi = max(1, ref.n_frames - int(ref.fps))
                start = int(rng.integers(0, hi))
            res = rollout_tracking(model, checkpoint.params, ref,
                                   checkpoint.stage, sim_config=sim_config,
                                   start_frame=start,
                                   push_ranges=push_ranges, rng=rng)
            pairs.append((res.clip, slice_clip(ref, start)))
            pair_labels.append(label if episodes_per_clip == 1
                               else f"{label}#{ep}")
    return build_eval_report(pairs, model, segment_duration=segment_duration,
                             height_threshold=height_threshold,
                             labels=pair_labels)
