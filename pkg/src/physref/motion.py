"""Motion clips: data model, text file I/O, procedural gait synthesis,
artifact injection, and command-window extraction.

Clips store per-frame root pose/velocity, joint positions/velocities, and
(optionally) per-end-effector contact masks at a fixed frame rate. Synthetic
gaits stand in for retargeted capture data; artifact injection then produces
controlled amounts of floating, ground penetration, root drift, and joint
jitter so that cleanup can be measured exactly.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .model import RobotModel, link_kinematics, point_positions
from .stage import Stage

MOTION_FORMAT_VERSION = 1
MOTION_FPS = 50.0                      # synthesis rate; matches the control rate
SOURCES = ("raw", "physical", "teleop")

# command window lookahead offsets, seconds
WINDOW_OFFSETS = (0.02, 0.1, 0.3, 0.5)


class MotionError(ValueError):
    pass


@dataclass
class MotionClip:
    """Fixed-rate motion data. Arrays are (T, ...) over frames.

    ``root_pos`` is the floating-base frame origin (x, z); ``contacts`` is a
    per-end-effector stance mask, required for physical-source clips.
    """

    fps: float
    source: str                       # raw | physical | teleop
    model: str                        # robot model name
    joint_names: tuple[str, ...]
    root_pos: np.ndarray              # (T, 2) m
    root_pitch: np.ndarray            # (T,) rad
    root_lin_vel: np.ndarray          # (T, 2) m/s
    root_ang_vel: np.ndarray          # (T,) rad/s
    joint_pos: np.ndarray             # (T, nj) rad
    joint_vel: np.ndarray             # (T, nj) rad/s
    contacts: np.ndarray | None = None  # (T, n_ee) bool

    def __post_init__(self):
        if self.fps <= 0:
            raise MotionError("fps must be > 0")
        if self.source not in SOURCES:
            raise MotionError(f"unknown source {self.source!r} (expected one of {SOURCES})")
        self.root_pos = np.asarray(self.root_pos, dtype=np.float64)
        self.root_pitch = np.asarray(self.root_pitch, dtype=np.float64)
        self.root_lin_vel = np.asarray(self.root_lin_vel, dtype=np.float64)
        self.root_ang_vel = np.asarray(self.root_ang_vel, dtype=np.float64)
        self.joint_pos = np.asarray(self.joint_pos, dtype=np.float64)
        self.joint_vel = np.asarray(self.joint_vel, dtype=np.float64)
        T = self.root_pos.shape[0] if self.root_pos.ndim == 2 else 0
        if T == 0:
            raise MotionError("empty clip")
        nj = len(self.joint_names)
        shapes = {
            "root_pos": (self.root_pos, (T, 2)),
            "root_pitch": (self.root_pitch, (T,)),
            "root_lin_vel": (self.root_lin_vel, (T, 2)),
            "root_ang_vel": (self.root_ang_vel, (T,)),
            "joint_pos": (self.joint_pos, (T, nj)),
            "joint_vel": (self.joint_vel, (T, nj)),
        }
        for name, (arr, want) in shapes.items():
            if arr.shape != want:
                raise MotionError(f"{name} has shape {arr.shape}, expected {want}")
        if self.contacts is not None:
            self.contacts = np.asarray(self.contacts, dtype=bool)
            if self.contacts.ndim != 2 or self.contacts.shape[0] != T:
                raise MotionError(f"contacts has shape {self.contacts.shape}, expected ({T}, n_ee)")
        if self.source == "physical" and self.contacts is None:
            raise MotionError("physical-source clips must carry contact masks")

    @property
    def n_frames(self) -> int:
        return self.root_pos.shape[0]

    @property
    def n_joints(self) -> int:
        return len(self.joint_names)

    @property
    def duration(self) -> float:
        """Time of the last frame, s."""
        return (self.n_frames - 1) / self.fps

    def copy(self) -> "MotionClip":
        return replace(
            self,
            root_pos=self.root_pos.copy(),
            root_pitch=self.root_pitch.copy(),
            root_lin_vel=self.root_lin_vel.copy(),
            root_ang_vel=self.root_ang_vel.copy(),
            joint_pos=self.joint_pos.copy(),
            joint_vel=self.joint_vel.copy(),
            contacts=None if self.contacts is None else self.contacts.copy(),
        )


# ---------------------------------------------------------------------------
# interpolation
# ---------------------------------------------------------------------------

def sample_clip(clip: MotionClip, t):
    """Linearly interpolate all clip fields at times ``t`` (scalar or array).

    Times are clamped to [0, duration]. Contact masks are taken from the
    frame the query time falls in (no interpolation of booleans). Returns a
    dict of arrays with leading shape = shape of ``t``.
    """
    t = np.asarray(t, dtype=np.float64)
    ft = np.clip(t * clip.fps, 0.0, clip.n_frames - 1)
    i0 = np.floor(ft).astype(np.intp)
    i0 = np.minimum(i0, clip.n_frames - 1)
    i1 = np.minimum(i0 + 1, clip.n_frames - 1)
    w = (ft - i0)[..., None]

    def lerp(a):
        if a.ndim == 1:
            return a[i0] * (1 - w[..., 0]) + a[i1] * w[..., 0]
        return a[i0] * (1 - w) + a[i1] * w

    out = {
        "root_pos": lerp(clip.root_pos),
        "root_pitch": lerp(clip.root_pitch),
        "root_lin_vel": lerp(clip.root_lin_vel),
        "root_ang_vel": lerp(clip.root_ang_vel),
        "joint_pos": lerp(clip.joint_pos),
        "joint_vel": lerp(clip.joint_vel),
    }
    if clip.contacts is not None:
        out["contacts"] = clip.contacts[i0]
    return out


# ---------------------------------------------------------------------------
# file I/O
# ---------------------------------------------------------------------------
# Format: first line is a JSON header {format_version, model, fps, source,
# joint_names, n_frames, has_contacts}; each following line is one frame:
#   root_x root_z pitch vx vz pitch_rate q_1..q_nj dq_1..dq_nj [c_1..c_nee]
# Floats are written with shortest round-trip representation, so
# save -> load reproduces every value bit-exactly.

def save_motion(clip: MotionClip, path: str | Path) -> None:
    path = Path(path)
    header = {
        "format_version": MOTION_FORMAT_VERSION,
        "model": clip.model,
        "fps": clip.fps,
        "source": clip.source,
        "joint_names": list(clip.joint_names),
        "n_frames": clip.n_frames,
        "has_contacts": clip.contacts is not None,
    }
    lines = [json.dumps(header)]
    for i in range(clip.n_frames):
        vals = [
            clip.root_pos[i, 0], clip.root_pos[i, 1], clip.root_pitch[i],
            clip.root_lin_vel[i, 0], clip.root_lin_vel[i, 1], clip.root_ang_vel[i],
            *clip.joint_pos[i], *clip.joint_vel[i],
        ]
        parts = [repr(float(v)) for v in vals]
        if clip.contacts is not None:
            parts += [str(int(c)) for c in clip.contacts[i]]
        lines.append(" ".join(parts))
    path.write_text("\n".join(lines) + "\n")


def load_motion(path: str | Path, target_fps: float | None = None) -> MotionClip:
    path = Path(path)
    text = path.read_text().splitlines()
    if not text:
        raise MotionError(f"{path}: empty file")
    try:
        header = json.loads(text[0])
    except json.JSONDecodeError as e:
        raise MotionError(f"{path}: malformed header: {e}") from e
    if header.get("format_version") != MOTION_FORMAT_VERSION:
        raise MotionError(f"{path}: unsupported format_version {header.get('format_version')!r}")
    for key in ("model", "fps", "source", "joint_names", "n_frames", "has_contacts"):
        if key not in header:
            raise MotionError(f"{path}: header missing {key!r}")
    nj = len(header["joint_names"])
    n_frames = int(header["n_frames"])
    has_contacts = bool(header["has_contacts"])
    body = [ln for ln in text[1:] if ln.strip()]
    if len(body) != n_frames:
        raise MotionError(f"{path}: header declares {n_frames} frames, file has {len(body)}")

    base = 6 + 2 * nj
    rows = []
    n_ee = None
    for k, ln in enumerate(body):
        parts = ln.split()
        if n_ee is None:
            n_ee = len(parts) - base
            if n_ee < 0 or (has_contacts and n_ee == 0) or (not has_contacts and n_ee != 0):
                raise MotionError(f"{path}: frame 0 has {len(parts)} fields, expected "
                                  f"{base}{' + contact masks' if has_contacts else ''}")
        if len(parts) != base + n_ee:
            raise MotionError(f"{path}: frame {k} has {len(parts)} fields, expected {base + n_ee}")
        try:
            rows.append([float(p) for p in parts])
        except ValueError as e:
            raise MotionError(f"{path}: frame {k}: {e}") from e
    data = np.array(rows, dtype=np.float64)

    clip = MotionClip(
        fps=float(header["fps"]),
        source=str(header["source"]),
        model=str(header["model"]),
        joint_names=tuple(header["joint_names"]),
        root_pos=data[:, 0:2],
        root_pitch=data[:, 2],
        root_lin_vel=data[:, 3:5],
        root_ang_vel=data[:, 5],
        joint_pos=data[:, 6:6 + nj],
        joint_vel=data[:, 6 + nj:base],
        contacts=data[:, base:].astype(bool) if has_contacts else None,
    )
    if target_fps is not None and abs(clip.fps - target_fps) > 1e-9:
        clip = resample_motion(clip, target_fps)
    return clip


def slice_clip(clip: MotionClip, start: int, stop: int | None = None
               ) -> MotionClip:
    """Copy frames [start, stop) into a new clip (same fps/source)."""
    stop = clip.n_frames if stop is None else stop
    if not 0 <= start < stop <= clip.n_frames:
        raise MotionError(f"slice [{start}, {stop}) outside clip "
                          f"of {clip.n_frames} frames")
    if stop - start < 2:
        raise MotionError("slice must keep at least two frames")
    sl = slice(start, stop)
    return replace(
        clip,
        root_pos=clip.root_pos[sl].copy(),
        root_pitch=clip.root_pitch[sl].copy(),
        root_lin_vel=clip.root_lin_vel[sl].copy(),
        root_ang_vel=clip.root_ang_vel[sl].copy(),
        joint_pos=clip.joint_pos[sl].copy(),
        joint_vel=clip.joint_vel[sl].copy(),
        contacts=None if clip.contacts is None else clip.contacts[sl].copy(),
    )


def resample_motion(clip: MotionClip, fps: float) -> MotionClip:
    """Linearly resample a clip to a new frame rate (duration preserved)."""
    if fps <= 0:
        raise MotionError("fps must be > 0")
    n = max(2, int(round(clip.duration * fps)) + 1)
    t = np.arange(n) / fps
    s = sample_clip(clip, t)
    return MotionClip(
        fps=float(fps), source=clip.source, model=clip.model,
        joint_names=clip.joint_names,
        root_pos=s["root_pos"], root_pitch=s["root_pitch"],
        root_lin_vel=s["root_lin_vel"], root_ang_vel=s["root_ang_vel"],
        joint_pos=s["joint_pos"], joint_vel=s["joint_vel"],
        contacts=s.get("contacts"),
    )


# ---------------------------------------------------------------------------
# gait synthesis
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GaitSpec:
    """Procedural gait parameters.

    ``amplitude`` is gait-specific: hip swing rad for walk, squat depth m,
    jump apex height m. ``frequency`` is the gait cycle rate, Hz.
    """

    type: str = "walk"
    duration: float = 4.0     # s
    frequency: float = 1.0    # Hz
    amplitude: float = 0.3

    def __post_init__(self):
        if self.duration <= 0:
            raise MotionError("duration must be > 0")
        if self.frequency <= 0:
            raise MotionError("frequency must be > 0")
        if self.amplitude < 0:
            raise MotionError("amplitude must be >= 0")


def _fd_velocities(x: np.ndarray, fps: float) -> np.ndarray:
    """Central finite differences over frames (one-sided at the ends)."""
    v = np.empty_like(x)
    v[1:-1] = (x[2:] - x[:-2]) * (fps / 2.0)
    v[0] = (x[1] - x[0]) * fps
    v[-1] = (x[-1] - x[-2]) * fps
    return v


def _leg_ik_for_height(d: np.ndarray, seg: float = 0.4):
    """Symmetric crouch angles for hip-to-ankle distance d (two equal segments).

    Returns (hip, knee, ankle) keeping the ankle under the hip and the foot
    level: hip = acos(d / (2 seg)), knee = -2 hip, ankle = hip.
    """
    c = np.clip(d / (2 * seg), -1.0, 1.0)
    h = np.arccos(c)
    return h, -2.0 * h, h


def synthesize_gait(model: RobotModel, spec: GaitSpec) -> MotionClip:
    """Generate a smooth procedural reference clip at 50 fps (raw source).

    Velocities are stored as central finite differences of the sampled
    positions so that stored velocity and positional motion agree exactly
    under the same stencil.
    """
    fps = MOTION_FPS
    n = int(round(spec.duration * fps)) + 1
    t = np.arange(n) / fps
    nj = model.n_joints
    H = model.standing_root_height
    q = np.tile(model.default_pose, (n, 1))
    root = np.zeros((n, 2))
    root[:, 1] = H
    pitch = np.zeros(n)
    contacts = np.ones((n, len(model.end_effectors)), dtype=bool)

    # joint layout of the bundled walker: hip_l, knee_l, ankle_l, hip_r, knee_r, ankle_r
    def leg_cols(side):
        names = [f"hip_{side}", f"knee_{side}", f"ankle_{side}"]
        return [model.joint_index[nm] for nm in names]

    if spec.type == "stand":
        pass

    elif spec.type == "walk":
        theta = 2 * np.pi * spec.frequency * t
        A = spec.amplitude
        leg_len = 0.8
        for side, phase in (("l", 0.0), ("r", np.pi)):
            hip_c, knee_c, ankle_c = leg_cols(side)
            q[:, hip_c] = A * np.sin(theta + phase)
            q[:, knee_c] = -0.8 * A * (1 - np.cos(theta + phase)) / 2.0
            q[:, ankle_c] = 0.15 * A * np.sin(theta + phase + np.pi)
            # stance while the leg sweeps backward relative to the root
            contacts[:, model.end_effectors.index(f"foot_{side}")] = \
                np.cos(theta + phase) <= 0.0
        root[:, 0] = 2.0 * leg_len * A * spec.frequency * t
        root[:, 1] = H - 0.05 * A * (1 - np.cos(2 * theta)) / 2.0

    elif spec.type == "squat":
        depth = min(spec.amplitude, 0.3)
        z = H - depth * (1 - np.cos(2 * np.pi * spec.frequency * t)) / 2.0
        hip, knee, ankle = _leg_ik_for_height(z - 0.05)
        for side in ("l", "r"):
            hip_c, knee_c, ankle_c = leg_cols(side)
            q[:, hip_c] = hip
            q[:, knee_c] = knee
            q[:, ankle_c] = ankle
        root[:, 1] = z

    elif spec.type == "jump":
        apex = min(spec.amplitude if spec.amplitude > 0 else 0.15, 0.25)
        crouch = 0.15
        g = 9.81
        v0 = np.sqrt(2 * g * apex)
        t_flight = 2 * v0 / g
        if spec.duration < t_flight + 0.8:
            raise MotionError(
                f"jump duration {spec.duration} s too short (needs >= {t_flight + 0.8:.2f} s)")
        ground_time = spec.duration - t_flight
        t1 = 0.35 * ground_time          # crouch bottom
        t2 = 0.55 * ground_time          # takeoff
        t3 = t2 + t_flight               # touchdown
        t4 = t3 + 0.2 * ground_time      # landing crouch bottom

        def hermite(tt, ta, tb, za, zb, va, vb):
            s = np.clip((tt - ta) / (tb - ta), 0.0, 1.0)
            h00 = 2 * s**3 - 3 * s**2 + 1
            h10 = s**3 - 2 * s**2 + s
            h01 = -2 * s**3 + 3 * s**2
            h11 = s**3 - s**2
            return h00 * za + h10 * (tb - ta) * va + h01 * zb + h11 * (tb - ta) * vb

        z = np.full(n, H)
        ph_crouch = t <= t1
        z[ph_crouch] = hermite(t[ph_crouch], 0.0, t1, H, H - crouch, 0.0, 0.0)
        ph_push = (t > t1) & (t <= t2)
        z[ph_push] = hermite(t[ph_push], t1, t2, H - crouch, H, 0.0, v0)
        ph_flight = (t > t2) & (t < t3)
        tau = t[ph_flight] - t2
        z[ph_flight] = H + v0 * tau - 0.5 * g * tau**2
        ph_land = (t >= t3) & (t <= t4)
        z[ph_land] = hermite(t[ph_land], t3, t4, H, H - crouch, -v0, 0.0)
        ph_rec = t > t4
        z[ph_rec] = hermite(t[ph_rec], t4, spec.duration, H - crouch, H, 0.0, 0.0)

        # legs follow the root during ground phases and stay extended in flight
        d = np.where(ph_flight, 2 * 0.4, np.minimum(z - 0.05, 2 * 0.4))
        hip, knee, ankle = _leg_ik_for_height(d)
        for side in ("l", "r"):
            hip_c, knee_c, ankle_c = leg_cols(side)
            q[:, hip_c] = hip
            q[:, knee_c] = knee
            q[:, ankle_c] = ankle
        root[:, 1] = z
        contacts[ph_flight, :] = False

    else:
        raise MotionError(f"unknown gait type {spec.type!r} "
                          f"(expected stand, walk, squat, or jump)")

    # ground projection: the leg recipes above set joint angles without
    # solving for foot clearance, so lift the root wherever the deepest
    # FK'd contact point would dip below the ground plane
    qpos = np.concatenate([root, pitch[:, None], q], axis=1)
    pos, ang = link_kinematics(model, qpos)
    pts = point_positions(model, pos, ang)
    if pts.shape[1]:
        lift = -pts[:, :, 1].min(axis=1)
        root[:, 1] += np.where(lift > 1e-9, lift, 0.0)  # ignore FK roundoff

    return MotionClip(
        fps=fps, source="raw", model=model.name,
        joint_names=tuple(model.joint_names),
        root_pos=root, root_pitch=pitch,
        root_lin_vel=_fd_velocities(root, fps),
        root_ang_vel=_fd_velocities(pitch, fps),
        joint_pos=q, joint_vel=_fd_velocities(q, fps),
        contacts=contacts,
    )


# ---------------------------------------------------------------------------
# artifact injection
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ArtifactSpec:
    """Controlled corruption levels for raw-source clips."""

    floating_offset: float = 0.0        # m added to root height
    floating_fraction: float = 0.0      # fraction of frames floated
    penetration_depth: float = 0.0      # m root shift into the ground
    penetration_fraction: float = 0.0
    foot_skate_drift: float = 0.0       # m/s root x drift while masks claim stance
    jitter_std: float = 0.0             # rad i.i.d. joint noise

    def __post_init__(self):
        for name in ("floating_fraction", "penetration_fraction"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise MotionError(f"{name} must be within [0, 1], got {v}")
        for name in ("floating_offset", "penetration_depth", "jitter_std"):
            if getattr(self, name) < 0:
                raise MotionError(f"{name} must be >= 0")

    @property
    def is_identity(self) -> bool:
        return (self.floating_fraction == 0 and self.penetration_fraction == 0
                and self.foot_skate_drift == 0 and self.jitter_std == 0)


def inject_artifacts(clip: MotionClip, spec: ArtifactSpec,
                     rng: np.random.Generator) -> MotionClip:
    """Corrupt a raw clip with measurable amounts of the classic retargeting
    artifacts: floating, ground penetration, foot skate, and joint jitter.

    Floating frames form one contiguous segment (so duration-based detectors
    see it); penetration frames are scattered in ~1 s chunks disjoint from
    the floated segment.
    """
    if clip.source != "raw":
        raise MotionError(f"artifact injection expects a raw clip, got {clip.source!r}")
    T = clip.n_frames
    n_float = int(round(spec.floating_fraction * T))
    n_pen = int(round(spec.penetration_fraction * T))
    if n_float + n_pen > T:
        raise MotionError("floating and penetration fractions exceed the clip length")

    out = clip.copy()
    taken = np.zeros(T, dtype=bool)

    if n_float > 0:
        start = int(rng.integers(0, T - n_float + 1))
        out.root_pos[start:start + n_float, 1] += spec.floating_offset
        taken[start:start + n_float] = True

    if n_pen > 0:
        chunk = int(round(clip.fps))  # ~1 s pieces
        remaining = n_pen
        free = ~taken
        guard = 0
        while remaining > 0 and guard < 10000:
            guard += 1
            k = min(chunk, remaining)
            starts = np.where(np.convolve(free.astype(int), np.ones(k, dtype=int),
                                          "valid") == k)[0]
            if len(starts) == 0:
                k = 1
                starts = np.where(free)[0]
                if len(starts) == 0:
                    break
            s = int(rng.choice(starts))
            out.root_pos[s:s + k, 1] -= spec.penetration_depth
            free[s:s + k] = False
            taken[s:s + k] = True
            remaining -= k

    if spec.foot_skate_drift != 0.0 and clip.contacts is not None:
        stance = clip.contacts.any(axis=1)
        drift = np.cumsum(stance / clip.fps) * spec.foot_skate_drift
        out.root_pos[:, 0] += drift

    if spec.jitter_std > 0.0:
        out.joint_pos += rng.normal(0.0, spec.jitter_std, size=out.joint_pos.shape)

    return out


# ---------------------------------------------------------------------------
# command windows
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CommandNoise:
    """Reference command perturbation ranges (uniform, applied per frame)."""

    joint_pos: float = 0.01    # rad
    joint_vel: float = 0.5     # rad/s
    root_pos: float = 0.01     # m
    root_ori: float = 0.05     # rad


def window_dim(model: RobotModel, stage: Stage) -> int:
    """Per-frame width of a command window row."""
    d = 6 + 2 * model.n_joints + len(model.end_effectors)
    if Stage.parse(stage) is Stage.PMG:
        d += 2  # global root position
    return d


def command_window(clip: MotionClip, t: float, offsets, stage,
                   rng: np.random.Generator | None = None,
                   noise: CommandNoise | None = None) -> np.ndarray:
    """Reference lookahead frames for the policy, one row per offset.

    Row layout:
      [0]   root x relative to the reference root at time t (heading-local)
      [1]   root z
      [2]   root pitch
      [3:5] root linear velocity (x, z)
      [5]   root pitch rate
      [6 : 6+nj]        joint positions
      [6+nj : 6+2nj]    joint velocities
      [... : ...+n_ee]  contact masks (0/1)
      (PMG only) [+2]   global root position (x, z)

    PMG windows carry injected command noise (uniform per frame) on joint
    positions/velocities and root pose when ``rng`` is given.
    """
    offsets = np.asarray(offsets, dtype=np.float64)
    if offsets.size == 0:
        raise MotionError("empty offsets")
    stage = Stage.parse(stage)
    nj = clip.n_joints

    anchor = sample_clip(clip, t)
    rows = sample_clip(clip, t + offsets)

    K = offsets.size
    root_pos = rows["root_pos"].reshape(K, 2).copy()
    root_pitch = rows["root_pitch"].reshape(K).copy()
    jpos = rows["joint_pos"].reshape(K, nj).copy()
    jvel = rows["joint_vel"].reshape(K, nj).copy()

    if stage is Stage.PMG and rng is not None:
        nz = noise or CommandNoise()
        jpos += rng.uniform(-nz.joint_pos, nz.joint_pos, size=jpos.shape)
        jvel += rng.uniform(-nz.joint_vel, nz.joint_vel, size=jvel.shape)
        root_pos += rng.uniform(-nz.root_pos, nz.root_pos, size=root_pos.shape)
        root_pitch += rng.uniform(-nz.root_ori, nz.root_ori, size=root_pitch.shape)

    cols = [
        root_pos[:, 0:1] - anchor["root_pos"][0],
        root_pos[:, 1:2],
        root_pitch[:, None],
        rows["root_lin_vel"].reshape(K, 2),
        rows["root_ang_vel"].reshape(K, 1),
        jpos,
        jvel,
    ]
    if "contacts" in rows:
        cols.append(rows["contacts"].reshape(K, -1).astype(np.float64))
    else:
        cols.append(np.zeros((K, 0)))
    if stage is Stage.PMG:
        cols.append(root_pos)
    return np.concatenate(cols, axis=1)
