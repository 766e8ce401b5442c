"""Live command synthesis.

Turns discrete operator commands (velocity target, preset, raw pose) into
a 50 Hz stream of reference frames with slew-rate limiting, standing in
for a mocap/VR retargeting front end. Deliberately imperfect: the output
is kinematic intent, and the online filter downstream is what makes it
physically consistent.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..filter import CommandFrame
from ..model import RobotModel
from ..motion import GaitSpec, MotionClip, _leg_ik_for_height, synthesize_gait

PRESETS = ("stand", "squat", "lean", "step-in-place", "jump")
MODES = ("velocity", "preset", "pose")


class SynthError(ValueError):
    pass


@dataclass(frozen=True)
class TeleopCommand:
    """One operator command; fields beyond the mode's own are ignored."""

    mode: str
    vx: float | None = None        # m/s, velocity mode
    preset: str | None = None
    pose: dict | None = None       # joint name -> target rad
    t: float = 0.0                 # client timestamp, staleness filter

    def __post_init__(self):
        if self.mode not in MODES:
            raise SynthError(f"unknown mode {self.mode!r}")
        if self.mode == "velocity" and self.vx is None:
            raise SynthError("velocity mode needs vx")
        if self.mode == "preset" and self.preset not in PRESETS:
            raise SynthError(f"unknown preset {self.preset!r}")
        if self.mode == "pose" and not isinstance(self.pose, dict):
            raise SynthError("pose mode needs a {joint: rad} mapping")


@dataclass
class SlewLimits:
    """Per-tick rate caps on the synthesized reference."""

    joint: float = 4.0    # rad/s
    z: float = 1.0        # m/s
    pitch: float = 2.0    # rad/s
    accel: float = 4.0    # m/s^2 on the forward-velocity target


class CommandSynthesizer:
    """Holds the live reference state and slews it toward command targets.

    ``tick`` advances one control period and returns the next reference
    frame; ``set_command`` swaps the target (latest wins). The walk cycle
    uses the same joint recipe as the procedural gait generator, so the
    synthesized stream stays on the motion manifold the policies trained
    on.
    """

    WALK_FREQ = 1.0          # Hz
    MAX_SWING = 0.35         # rad hip amplitude cap
    VX_DEADBAND = 0.05       # m/s; below this a velocity command stands

    def __init__(self, model: RobotModel, dt: float = 0.02,
                 vx_max: float = 1.0, limits: SlewLimits | None = None):
        if dt <= 0:
            raise SynthError("dt must be > 0")
        self.model = model
        self.dt = float(dt)
        self.vx_max = float(vx_max)
        self.lim = limits or SlewLimits()

        H = model.standing_root_height
        self.x, self.z, self.pitch = 0.0, H, 0.0
        self.q = model.default_pose.copy()
        self.vx = 0.0
        self.phase = 0.0
        self.t = 0.0
        self.contacts = np.ones(len(model.ee_idx), dtype=bool)

        self.mode = "preset"
        self.preset = "stand"
        self.target_vx = 0.0
        self.pose_targets: dict[int, float] = {}
        self._jump: tuple[MotionClip, int] | None = None

    # -- commands -------------------------------------------------------

    def set_command(self, cmd: TeleopCommand) -> str | None:
        """Install a new target; returns a warning string when clamping."""
        warning = None
        if cmd.mode == "velocity":
            vx = float(cmd.vx)
            if abs(vx) > self.vx_max:
                clamped = float(np.clip(vx, -self.vx_max, self.vx_max))
                warning = f"vx {vx:g} clamped to {clamped:g}"
                vx = clamped
            self.mode, self.target_vx = "velocity", vx
        elif cmd.mode == "preset":
            self.mode, self.preset = "preset", cmd.preset
            if cmd.preset == "jump":
                clip = synthesize_gait(self.model,
                                       GaitSpec(type="jump", duration=1.4))
                self._jump = (clip, 0)
        else:
            targets = {}
            for name, val in cmd.pose.items():
                if name not in self.model.joint_index:
                    raise SynthError(f"unknown joint {name!r}")
                k = self.model.joint_index[name]
                lo, hi = self.model.joint_limits[k]
                targets[k] = float(np.clip(float(val), lo, hi))
            self.mode, self.pose_targets = "pose", targets
        return warning

    # -- target synthesis -------------------------------------------------

    def _walk_pose(self, amp: float):
        """Joint/contact targets for the walk cycle at the current phase
        (same recipe as the procedural gait generator)."""
        model = self.model
        q = model.default_pose.copy()
        contacts = np.ones(len(model.ee_idx), dtype=bool)
        for side, off in (("l", 0.0), ("r", np.pi)):
            th = self.phase + off
            q[model.joint_index[f"hip_{side}"]] = amp * np.sin(th)
            q[model.joint_index[f"knee_{side}"]] = \
                -0.8 * amp * (1 - np.cos(th)) / 2.0
            q[model.joint_index[f"ankle_{side}"]] = \
                0.15 * amp * np.sin(th + np.pi)
            contacts[model.end_effectors.index(f"foot_{side}")] = \
                np.cos(th) <= 0.0
        z = self.model.standing_root_height \
            - 0.05 * abs(amp) * (1 - np.cos(2 * self.phase)) / 2.0
        return q, z, contacts

    def _targets(self):
        """(q, z, pitch, vx, contacts) the synthesizer is steering toward."""
        model = self.model
        H = model.standing_root_height
        q = model.default_pose.copy()
        z, pitch, vx = H, 0.0, 0.0
        contacts = np.ones(len(model.ee_idx), dtype=bool)

        if self.mode == "velocity":
            vx = self.target_vx
            if abs(vx) >= self.VX_DEADBAND:
                amp = np.clip(vx / (1.6 * self.WALK_FREQ),
                              -self.MAX_SWING, self.MAX_SWING)
                self.phase += 2 * np.pi * self.WALK_FREQ * self.dt
                q, z, contacts = self._walk_pose(float(amp))
            else:
                vx = 0.0

        elif self.mode == "preset":
            if self._jump is not None:
                clip, i = self._jump
                q = clip.joint_pos[i].copy()
                z = float(clip.root_pos[i, 1])
                contacts = clip.contacts[i].copy()
                i += 1
                if i >= clip.n_frames:
                    self._jump, self.preset = None, "stand"
                else:
                    self._jump = (clip, i)
            elif self.preset == "squat":
                z = H - 0.18
                hip, knee, ankle = _leg_ik_for_height(np.asarray(z - 0.05))
                for side in ("l", "r"):
                    q[model.joint_index[f"hip_{side}"]] = hip
                    q[model.joint_index[f"knee_{side}"]] = knee
                    q[model.joint_index[f"ankle_{side}"]] = ankle
            elif self.preset == "lean":
                pitch = 0.15
            elif self.preset == "step-in-place":
                self.phase += 2 * np.pi * self.WALK_FREQ * self.dt
                q, z, contacts = self._walk_pose(0.2)
            # "stand" keeps the defaults

        else:   # pose
            for k, val in self.pose_targets.items():
                q[k] = val

        lo, hi = self.model.joint_limits[:, 0], self.model.joint_limits[:, 1]
        return np.clip(q, lo, hi), z, pitch, vx, contacts

    # -- stepping -------------------------------------------------------

    def tick(self) -> CommandFrame:
        """Advance one control period toward the targets (slew-limited)."""
        qt, zt, pitcht, vxt, contacts = self._targets()
        dt, lim = self.dt, self.lim

        q0, z0, pitch0 = self.q.copy(), self.z, self.pitch
        self.vx += float(np.clip(vxt - self.vx, -lim.accel * dt,
                                 lim.accel * dt))
        self.x += self.vx * dt
        self.z += float(np.clip(zt - self.z, -lim.z * dt, lim.z * dt))
        self.pitch += float(np.clip(pitcht - self.pitch, -lim.pitch * dt,
                                    lim.pitch * dt))
        self.q += np.clip(qt - self.q, -lim.joint * dt, lim.joint * dt)
        self.t += dt
        self.contacts = contacts

        return CommandFrame(
            root_pos=np.array([self.x, self.z]),
            root_pitch=self.pitch,
            root_lin_vel=np.array([self.vx, (self.z - z0) / dt]),
            root_ang_vel=(self.pitch - pitch0) / dt,
            joint_pos=self.q.copy(),
            joint_vel=(self.q - q0) / dt,
            contacts=contacts.copy(),
        )
