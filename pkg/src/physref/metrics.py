"""Motion-quality and tracking metrics.

Every metric here is a direct per-frame scan over forward-kinematics
quantities — no approximations — so optimized callers can be checked against
these as oracles.

Artifact metrics (per clip): penetration = cumulative time any contact point
sits below -5 mm; floating = cumulative time of root-height excursions above
a threshold lasting more than one second; smoothness = mean |joint jerk| via
third-order central differences; MPJPE = mean tracked-body position error
against a baseline clip, mm.

Policy metrics (rollout vs reference): MPJPE / Delta-vel / Delta-acc and the
segment success rate (10-second segments, 0.25 m height-error thresholds;
early-terminated episodes fail their remaining segments).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import RobotModel, link_kinematics, point_positions
from .motion import MotionClip


class MetricsError(ValueError):
    pass


@dataclass(frozen=True)
class MetricThresholds:
    penetration_tol: float = 0.005       # m below ground that counts as penetration
    floating_height: float | None = None  # m; None -> 1.1 x standing root height
    floating_min_duration: float = 1.0   # s; shorter excursions are ignored

    def resolved_floating_height(self, model: RobotModel) -> float:
        if self.floating_height is not None:
            return self.floating_height
        return 1.1 * model.standing_root_height


@dataclass(frozen=True)
class ArtifactReport:
    penetration_duration: float   # s
    penetration_fraction: float
    floating_duration: float      # s
    floating_fraction: float
    smoothness: float             # mean |joint jerk| rad/s^3
    mpjpe: float                  # mm vs baseline (0 when baseline is the clip)


@dataclass(frozen=True)
class EvalReport:
    success_rate: float           # %
    mpjpe: float                  # mm
    dvel: float                   # mm/s
    dacc: float                   # rad/s
    per_clip: tuple[dict, ...]
    n_episodes: int

    def __post_init__(self):
        if not 0.0 <= self.success_rate <= 100.0:
            raise MetricsError("success rate must be within [0, 100]")
        if self.n_episodes < 1:
            raise MetricsError("report needs at least one episode")


def clip_qpos(clip: MotionClip) -> np.ndarray:
    """(T, nq) generalized positions from a clip."""
    return np.concatenate(
        [clip.root_pos, clip.root_pitch[:, None], clip.joint_pos], axis=1)


def clip_qvel(clip: MotionClip) -> np.ndarray:
    """(T, nq) generalized velocities from a clip."""
    return np.concatenate(
        [clip.root_lin_vel, clip.root_ang_vel[:, None], clip.joint_vel], axis=1)


def clip_body_kinematics(model: RobotModel, clip: MotionClip):
    """FK over all frames: (pos (T,L,2), ang (T,L), vel (T,L,2), angvel (T,L))."""
    return link_kinematics(model, clip_qpos(clip), clip_qvel(clip))


def _contiguous_runs(mask: np.ndarray):
    """(start, length) pairs of maximal true runs."""
    idx = np.flatnonzero(np.diff(np.concatenate([[0], mask.astype(int), [0]])))
    return [(int(s), int(e - s)) for s, e in zip(idx[::2], idx[1::2])]


def floating_duration(root_height: np.ndarray, fps: float, threshold: float,
                      min_duration: float = 1.0) -> float:
    """Total time of above-threshold excursions lasting > min_duration, s."""
    total = 0.0
    for _, length in _contiguous_runs(root_height > threshold):
        dur = length / fps
        if dur > min_duration:
            total += dur
    return total


def joint_jerk(joint_pos: np.ndarray, fps: float) -> float:
    """Mean |third derivative| over joints via the five-point central stencil."""
    if joint_pos.shape[0] < 5 or joint_pos.shape[1] == 0:
        return 0.0
    dt3 = (1.0 / fps) ** 3
    x = joint_pos
    jerk = (x[4:] - 2 * x[3:-1] + 2 * x[1:-3] - x[:-4]) / (2 * dt3)
    return float(np.mean(np.abs(jerk)))


def _check_comparable(a: MotionClip, b: MotionClip) -> int:
    if abs(a.fps - b.fps) > 1e-9:
        raise MetricsError(f"clips must share fps ({a.fps} vs {b.fps})")
    n = min(a.n_frames, b.n_frames)
    if n == 0:
        raise MetricsError("empty overlap")
    return n


def artifact_report(clip: MotionClip, model: RobotModel,
                    baseline: MotionClip | None = None,
                    thresholds: MetricThresholds = MetricThresholds()
                    ) -> ArtifactReport:
    pos, ang = link_kinematics(model, clip_qpos(clip))
    points = point_positions(model, pos, ang)      # (T, P, 2)
    dt = 1.0 / clip.fps
    clip_len = clip.n_frames * dt

    penetrating = np.any(points[:, :, 1] < -thresholds.penetration_tol, axis=1)
    pen_dur = float(penetrating.sum()) * dt

    fl_dur = floating_duration(clip.root_pos[:, 1], clip.fps,
                               thresholds.resolved_floating_height(model),
                               thresholds.floating_min_duration)

    if baseline is None or baseline is clip:
        mpjpe = 0.0
    else:
        mpjpe, _, _ = tracking_errors(clip, baseline, model)

    return ArtifactReport(
        penetration_duration=pen_dur,
        penetration_fraction=pen_dur / clip_len,
        floating_duration=fl_dur,
        floating_fraction=fl_dur / clip_len,
        smoothness=joint_jerk(clip.joint_pos, clip.fps),
        mpjpe=mpjpe,
    )


def tracking_errors(rollout: MotionClip, reference: MotionClip,
                    model: RobotModel) -> tuple[float, float, float]:
    """(MPJPE mm, Delta-vel mm/s, Delta-acc rad/s) over tracked bodies.

    Delta-acc follows the evaluation convention of reporting the mean
    per-body angular-velocity error in rad/s despite the name.
    """
    n = _check_comparable(rollout, reference)
    tb = model.tracked_idx
    pa, aa, va, wa = clip_body_kinematics(model, rollout)
    pb, ab, vb, wb = clip_body_kinematics(model, reference)
    dpos = np.linalg.norm(pa[:n][:, tb] - pb[:n][:, tb], axis=-1)
    dvel = np.linalg.norm(va[:n][:, tb] - vb[:n][:, tb], axis=-1)
    dacc = np.abs(wa[:n][:, tb] - wb[:n][:, tb])
    return (float(dpos.mean()) * 1000.0,
            float(dvel.mean()) * 1000.0,
            float(dacc.mean()))


def segment_failures(rollout: MotionClip, reference: MotionClip,
                     model: RobotModel, segment_duration: float = 10.0,
                     height_threshold: float = 0.25) -> tuple[int, int]:
    """(failed, total) fixed-duration segments of one episode.

    The reference defines the intended episode length; a shorter rollout is
    an early termination and every step past its end fails. A step fails
    when the root height error or any end-effector height error exceeds the
    threshold. A trailing partial segment counts as one segment.
    """
    if abs(rollout.fps - reference.fps) > 1e-9:
        raise MetricsError(f"clips must share fps ({rollout.fps} vs {reference.fps})")
    T = reference.n_frames
    n = min(rollout.n_frames, T)

    pa, aa = link_kinematics(model, clip_qpos(rollout))
    pb, ab = link_kinematics(model, clip_qpos(reference))
    ee = model.ee_idx
    root_err = np.abs(rollout.root_pos[:n, 1] - reference.root_pos[:n, 1])
    ee_err = np.abs(pa[:n][:, ee, 1] - pb[:n][:, ee, 1])
    # frame 0 is the initial state; frames 1..T-1 are the outcomes of the
    # T-1 control steps being segmented. Steps past the rollout end fail.
    step_fail = np.ones(T, dtype=bool)
    step_fail[:n] = (root_err > height_threshold) | \
        np.any(ee_err > height_threshold, axis=1)
    step_fail = step_fail[1:]

    seg_len = max(1, int(round(segment_duration * reference.fps)))
    n_seg = max(1, int(np.ceil(len(step_fail) / seg_len)))
    failed = sum(bool(step_fail[k * seg_len:(k + 1) * seg_len].any())
                 for k in range(n_seg))
    return failed, n_seg


def success_rate(pairs, model: RobotModel, segment_duration: float = 10.0,
                 height_threshold: float = 0.25) -> float:
    """SR % = passing segments / total segments across (rollout, reference) pairs."""
    failed = total = 0
    for rollout, reference in pairs:
        f, t = segment_failures(rollout, reference, model,
                                segment_duration, height_threshold)
        failed += f
        total += t
    if total == 0:
        raise MetricsError("no segments to evaluate")
    return 100.0 * (total - failed) / total


def build_eval_report(pairs, model: RobotModel, segment_duration: float = 10.0,
                      height_threshold: float = 0.25,
                      labels=None) -> EvalReport:
    """Aggregate SR and tracking errors over (rollout, reference) pairs.

    ``labels`` optionally names each pair in the per-clip rows (defaults to
    the pair index).
    """
    pairs = list(pairs)
    if not pairs:
        raise MetricsError("report needs at least one episode")
    if labels is not None and len(labels) != len(pairs):
        raise MetricsError("one label per episode pair required")
    per_clip = []
    for i, (rollout, reference) in enumerate(pairs):
        mpjpe, dvel, dacc = tracking_errors(rollout, reference, model)
        failed, total = segment_failures(rollout, reference, model,
                                         segment_duration, height_threshold)
        per_clip.append({
            "clip": labels[i] if labels is not None else i,
            "success_rate": 100.0 * (total - failed) / total,
            "mpjpe": mpjpe, "dvel": dvel, "dacc": dacc,
            "segments": total,
        })
    return EvalReport(
        success_rate=success_rate(pairs, model, segment_duration, height_threshold),
        mpjpe=float(np.mean([c["mpjpe"] for c in per_clip])),
        dvel=float(np.mean([c["dvel"] for c in per_clip])),
        dacc=float(np.mean([c["dacc"] for c in per_clip])),
        per_clip=tuple(per_clip),
        n_episodes=len(per_clip),
    )
