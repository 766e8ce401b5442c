"""Tracking reward: exponential kernels over per-body pose/velocity errors
plus contact, smoothness, and joint-limit regularizers, with stage-dependent
term gating.

All tracking kernels use exp(-mse / sigma^2) where mse is the mean squared
error over tracked bodies. Angle errors are wrapped to (-pi, pi] so adding
2*pi to any orientation changes nothing. The smoothness penalty is scaled
down in the proprioceptive stage when the reference moves fast, permitting
sharper control changes in dynamic phases.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .model import BodyState, RobotModel
from .sim import ContactReport
from .stage import Stage


class RewardError(ValueError):
    pass


@dataclass(frozen=True)
class RewardConfig:
    """Term weights and kernel scales.

    Stage-tagged terms: root_pos and undesired_contacts fire only in the
    privileged stage (PMG); desired_contacts only in the proprioceptive
    stage (GMT).
    """

    body_pos_weight: float = 1.0
    body_pos_sigma: float = 0.3          # m
    body_ori_weight: float = 1.0
    body_ori_sigma: float = 0.4          # rad
    body_lin_vel_weight: float = 1.0
    body_lin_vel_sigma: float = 1.0      # m/s
    body_ang_vel_weight: float = 1.0
    body_ang_vel_sigma: float = 3.14     # rad/s
    root_pos_weight: float = 0.5
    root_pos_sigma: float = 0.3          # m
    root_ori_weight: float = 0.5
    root_ori_sigma: float = 0.4          # rad
    desired_contact_weight: float = 0.1
    action_smoothness_weight: float = -0.1
    joint_limit_weight: float = -10.0
    undesired_contact_weight: float = -0.1
    contact_force_threshold: float = 1.0  # N
    smoothness_velocity_gain: float = 1.0  # s/rad

    def __post_init__(self):
        for name in ("body_pos_sigma", "body_ori_sigma", "body_lin_vel_sigma",
                     "body_ang_vel_sigma", "root_pos_sigma", "root_ori_sigma"):
            if getattr(self, name) <= 0:
                raise RewardError(f"{name} must be > 0")
        if self.contact_force_threshold <= 0:
            raise RewardError("contact_force_threshold must be > 0")
        if self.smoothness_velocity_gain < 0:
            raise RewardError("smoothness_velocity_gain must be >= 0")


@dataclass(frozen=True)
class RewardBreakdown:
    """Per-term values (unweighted) and the weighted total.

    Only stage-active terms are present; asking for an inactive one is an
    error rather than a silent zero.
    """

    stage: Stage
    terms: Mapping[str, float] = field(default_factory=dict)
    weighted: Mapping[str, float] = field(default_factory=dict)
    total: float = 0.0

    def term(self, name: str) -> float:
        if name not in self.terms:
            raise RewardError(f"term {name!r} is not active in stage {self.stage.value}")
        return self.terms[name]


def exp_kernel(mean_sq_err, sigma: float):
    """exp(-mse / sigma^2); 1 at zero error, strictly decreasing."""
    return np.exp(-np.asarray(mean_sq_err) / sigma**2)


def wrap_angle(x):
    """Wrap to (-pi, pi]."""
    return np.pi - np.mod(np.pi - np.asarray(x), 2 * np.pi)


def reward_terms(config: RewardConfig, stage: Stage, *,
                 body_pos, body_angle, body_lin_vel, body_ang_vel,
                 ref_body_pos, ref_body_angle, ref_body_lin_vel, ref_body_ang_vel,
                 root, ref_root, ee_force, ref_contact_mask, undesired_count,
                 action, prev_action, q, joint_lo, joint_hi, dq_ref):
    """Batched reward core over arbitrary leading shape.

    body_* arrays are restricted to tracked bodies: (..., B, 2) positions and
    velocities, (..., B) angles and rates. ``root``/``ref_root`` are
    (..., 3) = [x, z, pitch]. ``ee_force`` is (..., n_ee) contact force
    magnitudes; ``undesired_count`` (...,) is precomputed by the caller.
    Returns (terms dict, weighted dict, total array).
    """
    stage = Stage.parse(stage)
    cfg = config
    terms = {}
    weighted = {}

    def kernel(name, mse, weight, sigma):
        terms[name] = exp_kernel(mse, sigma)
        weighted[name] = weight * terms[name]

    kernel("body_pos",
           np.mean(np.sum((body_pos - ref_body_pos) ** 2, axis=-1), axis=-1),
           cfg.body_pos_weight, cfg.body_pos_sigma)
    kernel("body_ori",
           np.mean(wrap_angle(body_angle - ref_body_angle) ** 2, axis=-1),
           cfg.body_ori_weight, cfg.body_ori_sigma)
    kernel("body_lin_vel",
           np.mean(np.sum((body_lin_vel - ref_body_lin_vel) ** 2, axis=-1), axis=-1),
           cfg.body_lin_vel_weight, cfg.body_lin_vel_sigma)
    kernel("body_ang_vel",
           np.mean((body_ang_vel - ref_body_ang_vel) ** 2, axis=-1),
           cfg.body_ang_vel_weight, cfg.body_ang_vel_sigma)

    root = np.asarray(root, dtype=np.float64)
    ref_root = np.asarray(ref_root, dtype=np.float64)
    if stage is Stage.PMG:
        kernel("root_pos",
               np.sum((root[..., :2] - ref_root[..., :2]) ** 2, axis=-1),
               cfg.root_pos_weight, cfg.root_pos_sigma)
    kernel("root_ori", wrap_angle(root[..., 2] - ref_root[..., 2]) ** 2,
           cfg.root_ori_weight, cfg.root_ori_sigma)

    touching = np.asarray(ee_force) > cfg.contact_force_threshold
    if stage is Stage.GMT:
        terms["desired_contacts"] = np.sum(
            np.asarray(ref_contact_mask, dtype=bool) & touching, axis=-1
        ).astype(np.float64)
        weighted["desired_contacts"] = cfg.desired_contact_weight * terms["desired_contacts"]
    else:
        terms["undesired_contacts"] = np.asarray(undesired_count, dtype=np.float64)
        weighted["undesired_contacts"] = \
            cfg.undesired_contact_weight * terms["undesired_contacts"]

    terms["action_smoothness"] = np.sum(
        (np.asarray(action) - np.asarray(prev_action)) ** 2, axis=-1)
    w_smooth = cfg.action_smoothness_weight
    if stage is Stage.GMT:
        ref_speed = np.mean(np.abs(np.asarray(dq_ref)), axis=-1)
        w_smooth = w_smooth / (1.0 + cfg.smoothness_velocity_gain * ref_speed)
    weighted["action_smoothness"] = w_smooth * terms["action_smoothness"]

    q = np.asarray(q)
    terms["joint_limit"] = np.sum((q < joint_lo) | (q > joint_hi), axis=-1).astype(np.float64)
    weighted["joint_limit"] = cfg.joint_limit_weight * terms["joint_limit"]

    total = sum(weighted.values())
    return terms, weighted, total


def compute_reward(body: BodyState, body_ref: BodyState, root, root_ref,
                   contacts: ContactReport, ref_contact_mask, action, prev_action,
                   q, dq_ref, model: RobotModel, stage, config: RewardConfig
                   ) -> RewardBreakdown:
    """Single-environment reward with a per-term breakdown.

    ``body``/``body_ref`` cover all model links; tracked bodies are selected
    here. ``root``/``root_ref`` are [x, z, pitch].
    """
    stage = Stage.parse(stage)
    tb = model.tracked_idx
    thr = config.contact_force_threshold
    ee_force = contacts.link_force[model.ee_idx]
    not_ee = np.setdiff1d(np.arange(model.n_links), model.ee_idx)
    undesired = int(np.sum(contacts.link_force[not_ee] > thr))

    terms, weighted, total = reward_terms(
        config, stage,
        body_pos=body.position[tb], body_angle=body.angle[tb],
        body_lin_vel=body.lin_vel[tb], body_ang_vel=body.ang_vel[tb],
        ref_body_pos=body_ref.position[tb], ref_body_angle=body_ref.angle[tb],
        ref_body_lin_vel=body_ref.lin_vel[tb], ref_body_ang_vel=body_ref.ang_vel[tb],
        root=root, ref_root=root_ref,
        ee_force=ee_force, ref_contact_mask=ref_contact_mask,
        undesired_count=undesired,
        action=action, prev_action=prev_action,
        q=q, joint_lo=model.joint_limits[:, 0], joint_hi=model.joint_limits[:, 1],
        dq_ref=dq_ref,
    )
    return RewardBreakdown(
        stage=stage,
        terms={k: float(v) for k, v in terms.items()},
        weighted={k: float(v) for k, v in weighted.items()},
        total=float(total),
    )
