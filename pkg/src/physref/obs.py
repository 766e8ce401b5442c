"""Policy observation layout.

Proprioceptive base (both stages): joint positions, joint velocities,
sin/cos of base pitch, base pitch rate, previous action, then the flattened
command window. The privileged stage (PMG) appends simulation-only signals:
global root position/velocity, all link positions and linear velocities, and
per-link contact flags.

The exact index map is data (``obs_layout``) so tests and tooling can slice
observations by name instead of hard-coded offsets.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import RobotModel
from .motion import WINDOW_OFFSETS, window_dim
from .stage import Stage


class ObsError(ValueError):
    pass


@dataclass(frozen=True)
class ObsNoise:
    """Uniform proprioception noise ranges (GMT training only). Values are
    half-widths; zero disables a channel."""

    joint_pos: float = 0.01     # rad
    joint_vel: float = 0.5      # rad/s
    root_pitch: float = 0.05    # rad, applied before the sin/cos encoding
    root_ang_vel: float = 0.2   # rad/s

    def __post_init__(self):
        for name in self.__dataclass_fields__:
            if getattr(self, name) < 0:
                raise ObsError(f"{name} noise must be >= 0")


def obs_layout(model: RobotModel, stage, n_window_frames: int = len(WINDOW_OFFSETS)
               ) -> dict[str, slice]:
    """Name -> slice map over the flat observation vector."""
    stage = Stage.parse(stage)
    nj = model.n_joints
    L = model.n_links
    parts = [
        ("joint_pos", nj),
        ("joint_vel", nj),
        ("pitch_sincos", 2),
        ("root_ang_vel", 1),
        ("prev_action", nj),
        ("command_window", n_window_frames * window_dim(model, stage)),
    ]
    if stage is Stage.PMG:
        parts += [
            ("root_pos", 2),
            ("root_lin_vel", 2),
            ("body_pos", 2 * L),
            ("body_lin_vel", 2 * L),
            ("contact_flags", L),
        ]
    layout = {}
    at = 0
    for name, width in parts:
        layout[name] = slice(at, at + width)
        at += width
    return layout


def obs_dim(model: RobotModel, stage, n_window_frames: int = len(WINDOW_OFFSETS)
            ) -> int:
    layout = obs_layout(model, stage, n_window_frames)
    return max(s.stop for s in layout.values())


def build_obs(model: RobotModel, stage, qpos, qvel, prev_action, window,
              body_pos=None, body_lin_vel=None, contact_flags=None,
              noise: ObsNoise | None = None,
              rng: np.random.Generator | None = None) -> np.ndarray:
    """Assemble observations over arbitrary leading dims.

    qpos/qvel: (..., nq); prev_action: (..., nj); window: (..., K, wd) or
    already flattened (..., K*wd). PMG additionally needs body_pos /
    body_lin_vel (..., L, 2) and contact_flags (..., L).
    """
    stage = Stage.parse(stage)
    qpos = np.asarray(qpos, dtype=np.float64)
    qvel = np.asarray(qvel, dtype=np.float64)
    prev_action = np.asarray(prev_action, dtype=np.float64)
    lead = qpos.shape[:-1]

    q = qpos[..., 3:]
    dq = qvel[..., 3:]
    pitch = qpos[..., 2]
    w = qvel[..., 2]
    if noise is not None:
        if rng is None:
            raise ObsError("observation noise needs an rng")
        q = q + rng.uniform(-noise.joint_pos, noise.joint_pos, q.shape)
        dq = dq + rng.uniform(-noise.joint_vel, noise.joint_vel, dq.shape)
        pitch = pitch + rng.uniform(-noise.root_pitch, noise.root_pitch, pitch.shape)
        w = w + rng.uniform(-noise.root_ang_vel, noise.root_ang_vel, w.shape)

    window = np.asarray(window, dtype=np.float64)
    if window.ndim > len(lead) + 1:
        window = window.reshape(lead + (-1,))

    parts = [
        q, dq,
        np.stack([np.sin(pitch), np.cos(pitch)], axis=-1),
        w[..., None],
        prev_action,
        window,
    ]
    if stage is Stage.PMG:
        if body_pos is None or body_lin_vel is None or contact_flags is None:
            raise ObsError("privileged observations need body_pos, "
                           "body_lin_vel, and contact_flags")
        parts += [
            qpos[..., 0:2],
            qvel[..., 0:2],
            np.asarray(body_pos, dtype=np.float64).reshape(lead + (-1,)),
            np.asarray(body_lin_vel, dtype=np.float64).reshape(lead + (-1,)),
            np.asarray(contact_flags, dtype=np.float64),
        ]
    out = np.concatenate(parts, axis=-1)
    want = obs_dim(model, stage, window.shape[-1] // window_dim(model, stage))
    if out.shape[-1] != want:
        raise ObsError(f"observation assembled to {out.shape[-1]} dims, "
                       f"layout expects {want}")
    return out
