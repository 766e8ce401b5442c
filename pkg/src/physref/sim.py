"""Deterministic fixed-timestep planar articulated-body simulator.

Dynamics are integrated in generalized coordinates (base x, z, pitch plus one
angle per revolute joint) with semi-implicit Euler at the physics rate.
Ground contact is a penalty model: a normal spring-damper per declared
contact point and an anchored tangential spring capped by Coulomb friction
(stick/slip). Joint actuation is PD control toward target joint positions
with hard torque clamping.

Everything below the public single-environment API operates on arrays with a
leading batch dimension, so parallel training environments share one
vectorized stepping path. All arithmetic is float64 and sequential, which
makes entire rollouts bitwise reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import (
    BodyState,
    RobotModel,
    link_kinematics,
    perp,
    point_positions,
    point_velocities,
    rot2,
)
from .stage import Stage


class SimError(RuntimeError):
    pass


@dataclass(frozen=True)
class SimConfig:
    physics_dt: float = 0.005          # s (200 Hz)
    control_decimation: int = 4        # physics substeps per control step (50 Hz)
    gravity: float = 9.81              # m/s^2
    contact_stiffness: float = 4.0e5   # N/m, normal spring (implicit: static
                                       # depth stays ~0.2 mm under full weight)
    contact_damping: float = 100.0     # N s/m, normal damper
    tangent_stiffness: float = 4.0e4   # N/m, stick anchor spring
    tangent_damping: float = 100.0     # N s/m
    stick_velocity: float = 0.1        # m/s, static/dynamic friction crossover
    friction_static: float = 1.0       # nominal (unrandomized) values
    friction_dynamic: float = 0.8
    restitution: float = 0.0
    action_scale: float = 0.5          # rad per unit action around default pose
    max_gen_velocity: float = 100.0    # divergence guard
    seed: int = 0

    def __post_init__(self):
        if self.physics_dt <= 0:
            raise ValueError("physics_dt must be > 0")
        if self.control_decimation < 1:
            raise ValueError("control_decimation must be >= 1")
        if self.contact_stiffness <= 0:
            raise ValueError("contact_stiffness must be > 0")

    @property
    def control_dt(self) -> float:
        return self.physics_dt * self.control_decimation


@dataclass(frozen=True)
class RandomizationRanges:
    """Uniform sampling ranges for per-episode physics randomization."""

    friction_static: tuple[float, float] = (0.3, 1.6)
    friction_dynamic: tuple[float, float] = (0.3, 1.2)
    restitution: tuple[float, float] = (0.0, 0.5)
    default_joint_pos: tuple[float, float] = (-0.01, 0.01)   # rad, per joint
    default_root_pitch: tuple[float, float] = (-0.02, 0.02)  # rad
    com_offset_x: tuple[float, float] = (-0.025, 0.025)      # m, torso COM
    com_offset_z: tuple[float, float] = (-0.05, 0.05)        # m
    push_linvel_x: tuple[float, float] = (-0.5, 0.5)         # m/s
    push_linvel_z: tuple[float, float] = (-0.2, 0.2)         # m/s
    push_angvel: tuple[float, float] = (-0.52, 0.52)         # rad/s
    push_interval: tuple[float, float] = (1.0, 2.0)          # s between push events

    def __post_init__(self):
        for name in self.__dataclass_fields__:
            lo, hi = getattr(self, name)
            if not lo <= hi:
                raise ValueError(f"randomization range '{name}': min {lo} > max {hi}")

    def validate(self):
        return self  # construction already checks


@dataclass(frozen=True)
class EnvPhysicsParams:
    """Episode-level physics parameters drawn by domain randomization."""

    mu_static: float
    mu_dynamic: float
    restitution: float
    joint_pos_offset: np.ndarray      # (nj,) rad, added to the reset pose
    root_pitch_offset: float          # rad, added at reset
    com_offset: np.ndarray            # (2,) m, base-link COM shift

    @classmethod
    def nominal(cls, model: RobotModel, cfg: SimConfig) -> "EnvPhysicsParams":
        return cls(
            mu_static=cfg.friction_static,
            mu_dynamic=cfg.friction_dynamic,
            restitution=cfg.restitution,
            joint_pos_offset=np.zeros(model.n_joints),
            root_pitch_offset=0.0,
            com_offset=np.zeros(2),
        )


@dataclass(frozen=True)
class PushSpec:
    trigger_time: float   # s, simulator time at which the impulse fires
    dvx: float = 0.0      # m/s, added to base linear velocity
    dvz: float = 0.0
    domega: float = 0.0   # rad/s, added to base angular velocity


@dataclass
class ContactReport:
    """Per-point contact data from the last physics substep of a control step."""

    point_link: tuple[str, ...]     # link name per contact point
    in_contact: np.ndarray          # (P,) bool, true iff normal force > 0
    normal_force: np.ndarray        # (P,) N (>= 0)
    tangent_force: np.ndarray       # (P,) N (signed, along x)
    depth: np.ndarray               # (P,) m geometric penetration (0 when above ground)
    link_force: np.ndarray          # (L,) N, magnitude of net contact force per link

    def ee_contact_flags(self, model: RobotModel, threshold: float = 1.0) -> np.ndarray:
        """Per-end-effector boolean: aggregated link force magnitude > threshold [N]."""
        return self.link_force[model.ee_idx] > threshold


@dataclass
class SimState:
    """Full simulator state for one environment."""

    model: RobotModel
    config: SimConfig
    params: EnvPhysicsParams
    time: float
    qpos: np.ndarray                 # (nq,)
    qvel: np.ndarray                 # (nq,)
    prev_action: np.ndarray          # (nj,)
    contacts: ContactReport
    pending_pushes: tuple[PushSpec, ...] = ()
    diverged: bool = False
    tangent_anchor: np.ndarray = None   # (P,) world x of stick anchors, NaN while free

    @property
    def body(self) -> BodyState:
        pos, ang, vel, angvel = link_kinematics(self.model, self.qpos, self.qvel)
        return BodyState(position=pos, angle=ang, lin_vel=vel, ang_vel=angvel)


# ---------------------------------------------------------------------------
# randomization
# ---------------------------------------------------------------------------

def sample_physics_randomization(
    ranges: RandomizationRanges,
    model: RobotModel,
    cfg: SimConfig,
    rng: np.random.Generator,
    stage: Stage = Stage.GMT,
) -> EnvPhysicsParams:
    """Draw per-episode physics parameters.

    The reference-filtering stage (PMG) runs unrandomized: it returns the
    nominal parameters with zero offsets so rollouts are maximally faithful.
    """
    if Stage.parse(stage) is Stage.PMG:
        return EnvPhysicsParams.nominal(model, cfg)

    mu_s = rng.uniform(*ranges.friction_static)
    mu_d = rng.uniform(*ranges.friction_dynamic)
    while mu_d > mu_s:  # dynamic friction may not exceed static
        mu_d = rng.uniform(*ranges.friction_dynamic)
    return EnvPhysicsParams(
        mu_static=float(mu_s),
        mu_dynamic=float(mu_d),
        restitution=float(rng.uniform(*ranges.restitution)),
        joint_pos_offset=rng.uniform(*ranges.default_joint_pos, size=model.n_joints),
        root_pitch_offset=float(rng.uniform(*ranges.default_root_pitch)),
        com_offset=np.array([
            rng.uniform(*ranges.com_offset_x),
            rng.uniform(*ranges.com_offset_z),
        ]),
    )


def sample_push(ranges: RandomizationRanges, rng: np.random.Generator,
                trigger_time: float) -> PushSpec:
    return PushSpec(
        trigger_time=trigger_time,
        dvx=float(rng.uniform(*ranges.push_linvel_x)),
        dvz=float(rng.uniform(*ranges.push_linvel_z)),
        domega=float(rng.uniform(*ranges.push_angvel)),
    )


# ---------------------------------------------------------------------------
# batched dynamics core
# ---------------------------------------------------------------------------

def _rot_centers(model: RobotModel, link_pos: np.ndarray) -> np.ndarray:
    """World position of each rotational dof's axis, (..., 1+nj, 2)."""
    return link_pos[..., model.rot_dof_link, :]


def _point_jacobians(model: RobotModel, points: np.ndarray, point_link: np.ndarray,
                     centers: np.ndarray) -> np.ndarray:
    """Translational Jacobians of world points attached to links.

    points: (B, K, 2); point_link: (K,) link index per point;
    centers: (B, 1+nj, 2). Returns (B, K, 2, nq).
    """
    B, K = points.shape[0], points.shape[1]
    nq = model.nq
    J = np.zeros((B, K, 2, nq))
    J[:, :, 0, 0] = 1.0
    J[:, :, 1, 1] = 1.0
    # rotational dofs: column = mask * perp(point - center)
    diff = points[:, :, None, :] - centers[:, None, :, :]       # (B, K, R, 2)
    cols = perp(diff)                                           # (B, K, R, 2)
    mask = model.rot_mask[point_link]                           # (K, R)
    cols = cols * mask[None, :, :, None]
    J[:, :, :, model.rot_dof_gen_index] = np.moveaxis(cols, 3, 2)
    return J


def _jw_quadratic(model: RobotModel) -> np.ndarray:
    """Constant rotational part of the mass matrix, sum_l I_l Jw_l^T Jw_l."""
    cached = getattr(model, "_jw_quad", None)
    if cached is not None:
        return cached
    nq = model.nq
    Jw = np.zeros((model.n_links, nq))
    Jw[:, model.rot_dof_gen_index] = model.rot_mask.astype(float)
    quad = np.einsum("l,ld,le->de", model.inertias, Jw, Jw)
    model._jw_quad = quad
    return quad


def _velocity_product_com_accel(model: RobotModel, ang, angvel, com_off):
    """COM accelerations with zero generalized acceleration (centripetal terms).

    ang/angvel: (B, L); com_off: (B, L, 2) world-frame is computed here.
    Returns (B, L, 2).
    """
    B, L = ang.shape
    a_origin = np.zeros((B, L, 2))
    for li in model.topo_order:
        p = model.parent_link[li]
        if p < 0:
            continue
        r = rot2(ang[:, p], model.anchors[li])
        a_origin[:, li] = a_origin[:, p] - (angvel[:, p] ** 2)[:, None] * r
    c_world = rot2(ang, com_off)
    return a_origin - (angvel ** 2)[..., None] * c_world


def _tangent_forces(cfg: SimConfig, px, vx, anchors, mu_s, mu_d, normal,
                    touching):
    """Anchored-spring friction clamped by the Coulomb cone.

    px/vx: (B, P) point x position/velocity; anchors: (B, P) world-x stick
    anchors (NaN = free); normal: (B, P) available normal load.
    Returns (tangent force (B, P), new anchors).
    """
    new_anchor = np.where(touching & np.isnan(anchors), px, anchors)
    stretch = px - new_anchor
    spring = -cfg.tangent_stiffness * stretch
    raw = spring - cfg.tangent_damping * vx
    mu = np.where(np.abs(vx) <= cfg.stick_velocity, mu_s[:, None], mu_d[:, None])
    cap = mu * normal
    ft = np.where(touching, np.clip(raw, -cap, cap), 0.0)
    # anchor slides only when the spring alone exceeds the dynamic cap, and
    # only far enough that the spring holds exactly the cap: the stored
    # elastic energy never grows from an anchor update, so slip dissipates
    cap_d = mu_d[:, None] * normal
    slide = touching & (np.abs(spring) > cap_d)
    new_anchor = np.where(
        slide,
        px - np.sign(stretch) * cap_d / cfg.tangent_stiffness,
        new_anchor,
    )
    new_anchor = np.where(touching, new_anchor, np.nan)
    return ft, new_anchor


def _contact_forces(cfg: SimConfig, points, point_vel, anchors, mu_s, mu_d, e_rest):
    """Explicit penalty-force evaluation of a state as it stands.

    Used for reset/static reports and first observations; the stepping core
    integrates the same spring-damper law implicitly (see batch_substep), and
    the two agree at equilibrium. Returns (forces (B, P, 2), new anchors,
    normal (B, P), tangent (B, P), depth (B, P)).
    """
    del e_rest  # restitution acts on impact dynamics, not static forces
    B, P = points.shape[0], points.shape[1]
    if P == 0:
        z = np.zeros((B, 0))
        return np.zeros((B, 0, 2)), anchors, z, z, z
    px, pz = points[..., 0], points[..., 1]
    vx, vz = point_vel[..., 0], point_vel[..., 1]

    depth = np.maximum(0.0, -pz)
    touching = depth > 0.0

    normal = np.where(touching,
                      cfg.contact_stiffness * depth - cfg.contact_damping * vz,
                      0.0)
    normal = np.maximum(normal, 0.0)

    ft, new_anchor = _tangent_forces(cfg, px, vx, anchors, mu_s, mu_d,
                                     normal, touching)
    forces = np.stack([ft, normal], axis=-1)
    return forces, new_anchor, normal, ft, depth


def batch_pd_torques(model: RobotModel, qpos, qvel, targets):
    """PD torques toward targets, clamped at the joint torque limits. Batched."""
    q = qpos[..., 3:]
    qd = qvel[..., 3:]
    tau = model.kp * (targets - q) - model.kd * qd
    return np.clip(tau, -model.torque_limits, model.torque_limits)


def _solve_vel(model: RobotModel, A, b):
    """New generalized velocities from A v' = b (root rows pinned when the
    base is fixed)."""
    if model.floating_base:
        return np.linalg.solve(A, b[..., None])[..., 0]
    out = np.zeros_like(b)
    out[:, 3:] = np.linalg.solve(A[:, 3:, 3:], b[:, 3:, None])[..., 0]
    return out


def batch_substep(model: RobotModel, cfg: SimConfig, qpos, qvel, torques,
                  mu_s, mu_d, e_rest, com_offset, anchors):
    """One physics substep for a batch of environments.

    Symplectic Euler with the normal contact springs integrated implicitly.
    The spring-damper force is evaluated at an interior point of the step,
    theta = 1/(1 + e): at e = 0 this is backward Euler, whose numerical
    damping kills the rebound of a stiff contact (inelastic); at e = 1 it is
    the energy-preserving midpoint rule. In the stiff limit the scheme's
    velocity amplification per impact equals e, so restitution is realized
    by damping shaping at any stiffness, and the solve stays stable at
    200 Hz for arbitrarily large spring constants. Friction stays an
    explicit anchored spring fed by the implicit normal load.

    qpos/qvel: (B, nq); torques: (B, nj); mu_s/mu_d/e_rest: (B,);
    com_offset: (B, 2) base-link COM shift; anchors: (B, P).
    Returns (qpos', qvel', anchors', contact dict).
    """
    B = qpos.shape[0]
    dt = cfg.physics_dt
    pos, ang, vel, angvel = link_kinematics(model, qpos, qvel)

    com_off = np.broadcast_to(model.com_offsets, (B,) + model.com_offsets.shape).copy()
    com_off[:, 0, :] += com_offset

    centers = _rot_centers(model, pos)
    coms = pos + rot2(ang, com_off)
    Jv = _point_jacobians(model, coms, np.arange(model.n_links), centers)  # (B,L,2,nq)

    M = np.einsum("l,blad,blae->bde", model.masses, Jv, Jv) + _jw_quadratic(model)

    a_vp = _velocity_product_com_accel(model, ang, angvel, com_off)        # (B,L,2)
    h_cor = np.einsum("l,blad,bla->bd", model.masses, Jv, a_vp)
    q_grav = -cfg.gravity * np.einsum("l,bld->bd", model.masses, Jv[:, :, 1, :])

    rhs = q_grav - h_cor
    rhs[:, 3:] += torques
    b = np.einsum("bde,be->bd", M, qvel) + dt * rhs

    if not model.n_contact_points:
        qvel_new = _solve_vel(model, M, b)
        qpos_new = qpos + dt * qvel_new
        return qpos_new, qvel_new, anchors, {
            "normal": np.zeros((B, 0)), "tangent": np.zeros((B, 0)),
            "depth": np.zeros((B, 0)), "forces": np.zeros((B, 0, 2)),
        }

    cp_pos = point_positions(model, pos, ang)
    cp_vel = point_velocities(model, pos, ang, vel, angvel)
    Jc = _point_jacobians(model, cp_pos, model.cp_link, centers)           # (B,P,2,nq)
    Jx, Jz = Jc[:, :, 0, :], Jc[:, :, 1, :]

    depth = np.maximum(0.0, -cp_pos[..., 1])
    vz = cp_vel[..., 1]
    # N = k d_theta - c vz_theta, with the theta-state advanced by the new
    # velocity: d_theta = d - theta dt vz', vz_theta = theta vz' + (1-theta) vz
    theta = 1.0 / (1.0 + e_rest)[:, None]
    f0 = cfg.contact_stiffness * depth \
        - (1.0 - theta) * cfg.contact_damping * vz
    gain = theta * (cfg.contact_stiffness * dt + cfg.contact_damping)

    # active-set iteration: points whose implicit force turns tensile are
    # released and the system re-solved (the set only shrinks, so this ends)
    active = depth > 0.0
    normal = np.zeros_like(depth)
    A = M
    qvel_new = None
    for _ in range(4):
        w = np.where(active, dt * gain, 0.0)
        A = M + np.einsum("bpd,bp,bpe->bde", Jz, w, Jz)
        bb = b + dt * np.einsum("bpd,bp->bd", Jz, np.where(active, f0, 0.0))
        qvel_new = _solve_vel(model, A, bb)
        normal = np.where(active,
                          f0 - gain * np.einsum("bpd,bd->bp", Jz, qvel_new),
                          0.0)
        tensile = normal < 0.0
        if not tensile.any():
            break
        active &= ~tensile

    # friction impulse on top, resolved through the same implicit system so
    # its normal-direction side effects stay consistent
    vx_new = np.einsum("bpd,bd->bp", Jx, qvel_new)
    ft, anchors = _tangent_forces(cfg, cp_pos[..., 0], vx_new, anchors,
                                  mu_s, mu_d, np.maximum(normal, 0.0),
                                  depth > 0.0)
    if np.any(ft):
        qvel_new = qvel_new + dt * _solve_vel(
            model, A, np.einsum("bpd,bp->bd", Jx, ft))
        normal = np.where(active,
                          f0 - gain * np.einsum("bpd,bd->bp", Jz, qvel_new),
                          0.0)
    normal = np.maximum(normal, 0.0)

    qpos_new = qpos + dt * qvel_new
    forces = np.stack([ft, normal], axis=-1)
    contact = {"normal": normal, "tangent": ft, "depth": depth, "forces": forces}
    return qpos_new, qvel_new, anchors, contact


def batch_control_step(model: RobotModel, cfg: SimConfig, qpos, qvel, action,
                       mu_s, mu_d, e_rest, com_offset, anchors,
                       push_dv=None):
    """Advance one control step (control_decimation substeps). Batched.

    action: (B, nj) policy output, mapped to PD targets around the default
    pose; push_dv: optional (B, 3) base velocity delta applied before the
    first substep. Returns (qpos, qvel, anchors, contact dict, diverged (B,)).
    """
    targets = model.default_pose + cfg.action_scale * action
    targets = np.clip(targets, model.joint_limits[:, 0], model.joint_limits[:, 1])
    if push_dv is not None:
        qvel = qvel.copy()
        qvel[:, :3] += push_dv
    contact = None
    for _ in range(cfg.control_decimation):
        torques = batch_pd_torques(model, qpos, qvel, targets)
        qpos, qvel, anchors, contact = batch_substep(
            model, cfg, qpos, qvel, torques, mu_s, mu_d, e_rest, com_offset, anchors)
    with np.errstate(invalid="ignore"):
        diverged = (~np.isfinite(qpos).all(axis=1)) | (~np.isfinite(qvel).all(axis=1)) \
            | (np.nanmax(np.abs(np.where(np.isfinite(qvel), qvel, 0.0)), axis=1)
               > cfg.max_gen_velocity)
    return qpos, qvel, anchors, contact, diverged


def mechanical_energy(model: RobotModel, cfg: SimConfig, qpos, qvel,
                      com_offset=None) -> np.ndarray:
    """Total kinetic + gravitational potential energy, batched (B,)."""
    qpos = np.atleast_2d(qpos)
    qvel = np.atleast_2d(qvel)
    B = qpos.shape[0]
    pos, ang, vel, angvel = link_kinematics(model, qpos, qvel)
    com_off = np.broadcast_to(model.com_offsets, (B,) + model.com_offsets.shape).copy()
    if com_offset is not None:
        com_off[:, 0, :] += np.atleast_2d(com_offset)
    coms = pos + rot2(ang, com_off)
    com_vel = vel + angvel[..., None] * perp(rot2(ang, com_off))
    kin = 0.5 * np.einsum("l,bl->b", model.masses, np.sum(com_vel ** 2, axis=-1)) \
        + 0.5 * np.einsum("l,bl->b", model.inertias, angvel ** 2)
    pot = cfg.gravity * np.einsum("l,bl->b", model.masses, coms[..., 1])
    return kin + pot


# ---------------------------------------------------------------------------
# single-environment API
# ---------------------------------------------------------------------------

def pd_torques(model: RobotModel, q: np.ndarray, qdot: np.ndarray,
               target: np.ndarray) -> np.ndarray:
    """tau_j = kp_j (target_j - q_j) - kd_j qdot_j, clamped to the torque limit."""
    q = np.asarray(q, dtype=np.float64)
    qdot = np.asarray(qdot, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if q.shape[-1] != model.n_joints or qdot.shape[-1] != model.n_joints \
            or target.shape[-1] != model.n_joints:
        raise SimError(f"expected {model.n_joints} joint entries")
    tau = model.kp * (target - q) - model.kd * qdot
    return np.clip(tau, -model.torque_limits, model.torque_limits)


def _report_from_arrays(model: RobotModel, contact: dict) -> ContactReport:
    normal = contact["normal"][0]
    tangent = contact["tangent"][0]
    depth = contact["depth"][0]
    forces = contact["forces"][0]
    link_force = np.zeros(model.n_links)
    if model.n_contact_points:
        per_link = np.zeros((model.n_links, 2))
        np.add.at(per_link, model.cp_link, forces)
        link_force = np.linalg.norm(per_link, axis=1)
    return ContactReport(
        point_link=tuple(model.links[li].name for li in model.cp_link),
        in_contact=normal > 0.0,
        normal_force=normal.copy(),
        tangent_force=tangent.copy(),
        depth=depth.copy(),
        link_force=link_force,
    )


def _empty_anchor(model: RobotModel) -> np.ndarray:
    return np.full(model.n_contact_points, np.nan)


def _static_report(model: RobotModel, cfg: SimConfig, params: EnvPhysicsParams,
                   qpos, qvel, anchors) -> ContactReport:
    pos, ang, vel, angvel = link_kinematics(model, qpos[None], qvel[None])
    cp_pos = point_positions(model, pos, ang)
    cp_vel = point_velocities(model, pos, ang, vel, angvel)
    _, _, normal, tangent, depth = _contact_forces(
        cfg, cp_pos, cp_vel, anchors[None],
        np.array([params.mu_static]), np.array([params.mu_dynamic]),
        np.array([params.restitution]))
    return _report_from_arrays(model, {
        "normal": normal, "tangent": tangent, "depth": depth,
        "forces": np.stack([tangent, normal], axis=-1),
    })


MIN_ROOT_HEIGHT_FRACTION = 0.15  # of standing height; lower initializations are rejected


def reset_env(model: RobotModel, cfg: SimConfig, params: EnvPhysicsParams,
              init_qpos: np.ndarray, init_qvel: np.ndarray,
              rng: np.random.Generator | None = None) -> SimState:
    """Reset to a reference state plus the params' reset offsets.

    The offsets live in ``params`` (zero for nominal/PMG parameters), so the
    same call serves both stages. ``rng`` is unused but accepted for
    signature stability.
    """
    init_qpos = np.asarray(init_qpos, dtype=np.float64).copy()
    init_qvel = np.asarray(init_qvel, dtype=np.float64).copy()
    if init_qpos.shape != (model.nq,) or init_qvel.shape != (model.nq,):
        raise SimError(f"init state must have {model.nq} generalized coordinates")
    if init_qpos[1] < MIN_ROOT_HEIGHT_FRACTION * model.standing_root_height:
        raise SimError(
            f"invalid initialization: root height {init_qpos[1]:.3f} m below minimum "
            f"feasible height"
        )
    init_qpos[2] += params.root_pitch_offset
    init_qpos[3:] += params.joint_pos_offset
    anchors = _empty_anchor(model)
    report = _static_report(model, cfg, params, init_qpos, init_qvel, anchors)
    return SimState(
        model=model, config=cfg, params=params, time=0.0,
        qpos=init_qpos, qvel=init_qvel,
        prev_action=np.zeros(model.n_joints),
        contacts=report, pending_pushes=(), diverged=False,
        tangent_anchor=anchors,
    )


def step_env(state: SimState, action: np.ndarray,
             pushes: tuple[PushSpec, ...] = ()) -> tuple[SimState, ContactReport]:
    """Advance one control step; returns the new state and its contact report.

    ``pushes`` are merged into the pending schedule; each fires at the first
    physics substep at or after its trigger time by adding its velocity delta
    to the base.
    """
    model, cfg, params = state.model, state.config, state.params
    action = np.asarray(action, dtype=np.float64)
    if action.shape != (model.n_joints,):
        raise SimError(f"action must have {model.n_joints} entries")
    if state.diverged:
        raise SimError("simulation diverged; reset the environment")

    pending = sorted(state.pending_pushes + tuple(pushes), key=lambda p: p.trigger_time)
    qpos = state.qpos[None].copy()
    qvel = state.qvel[None].copy()
    anchors = state.tangent_anchor[None].copy()
    mu_s = np.array([params.mu_static])
    mu_d = np.array([params.mu_dynamic])
    e_rest = np.array([params.restitution])
    com_offset = params.com_offset[None]

    targets = model.default_pose + cfg.action_scale * action
    targets = np.clip(targets, model.joint_limits[:, 0], model.joint_limits[:, 1])

    t = state.time
    contact = None
    for _ in range(cfg.control_decimation):
        while pending and pending[0].trigger_time <= t + 1e-12:
            p = pending.pop(0)
            qvel[0, 0] += p.dvx
            qvel[0, 1] += p.dvz
            qvel[0, 2] += p.domega
        torques = batch_pd_torques(model, qpos, qvel, targets[None])
        qpos, qvel, anchors, contact = batch_substep(
            model, cfg, qpos, qvel, torques, mu_s, mu_d, e_rest, com_offset, anchors)
        t += cfg.physics_dt

    finite = np.all(np.isfinite(qpos)) and np.all(np.isfinite(qvel))
    diverged = (not finite) or np.max(np.abs(qvel)) > cfg.max_gen_velocity
    report = _report_from_arrays(model, contact)
    new_state = SimState(
        model=model, config=cfg, params=params,
        time=round(t / cfg.physics_dt) * cfg.physics_dt,
        qpos=qpos[0], qvel=qvel[0],
        prev_action=action.copy(),
        contacts=report,
        pending_pushes=tuple(pending),
        diverged=bool(diverged),
        tangent_anchor=anchors[0],
    )
    return new_state, report
