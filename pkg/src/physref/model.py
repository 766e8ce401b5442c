"""Robot description loading, validation, and planar forward kinematics.

A robot is a tree of rigid links connected by revolute joints, moving in the
sagittal (x-z) plane. The floating base contributes three generalized
coordinates (x, z, pitch); each joint adds one. Link frames sit at the joint
connecting the link to its parent; the base link frame is the root pose.

All kinematics helpers accept arbitrary leading batch dimensions on the
generalized coordinate arrays, so the same code serves a single simulator
state, a batch of parallel environments, or a whole motion clip at once.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
import yaml

ROBOT_FORMAT_VERSION = 1
BASE_DOFS = 3  # x, z, pitch


class ModelError(ValueError):
    """Malformed or physically invalid robot description."""


@dataclass(frozen=True)
class LinkSpec:
    name: str
    mass: float                 # kg
    inertia: float              # kg m^2 about the COM
    length: float               # m, rendering/documentation only
    com_offset: tuple[float, float]          # m, link frame
    contact_points: tuple[tuple[float, float], ...] = ()  # m, link frame


@dataclass(frozen=True)
class JointSpec:
    name: str
    parent: str
    child: str
    anchor: tuple[float, float]   # m, in the parent link frame
    limits: tuple[float, float]   # rad
    velocity_limit: float         # rad/s
    torque_limit: float           # N m
    kp: float                     # N m / rad
    kd: float                     # N m s / rad


@dataclass
class BodyState:
    """Per-link world-frame pose and velocity, ordered like ``model.links``.

    ``position`` is the link frame origin (the joint location), which is what
    tracking rewards and per-joint error metrics compare.
    """

    position: np.ndarray   # (L, 2)
    angle: np.ndarray      # (L,)
    lin_vel: np.ndarray    # (L, 2)
    ang_vel: np.ndarray    # (L,)


@dataclass
class RobotModel:
    """Validated robot description plus precomputed structure arrays.

    Instances are immutable by convention after construction and safe to
    share across environments and threads.
    """

    name: str
    links: tuple[LinkSpec, ...]
    joints: tuple[JointSpec, ...]
    tracked_bodies: tuple[str, ...]
    end_effectors: tuple[str, ...]
    default_pose: np.ndarray          # (nj,) rad
    standing_root_height: float       # m
    floating_base: bool = True

    # derived structure, filled in __post_init__
    link_index: dict = field(default_factory=dict, repr=False)
    joint_index: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        self.default_pose = np.asarray(self.default_pose, dtype=np.float64)
        self.link_index = {l.name: i for i, l in enumerate(self.links)}
        self.joint_index = {j.name: i for i, j in enumerate(self.joints)}
        self._validate()
        self._build_arrays()

    # -- sizes ------------------------------------------------------------

    @property
    def n_links(self) -> int:
        return len(self.links)

    @property
    def n_joints(self) -> int:
        return len(self.joints)

    @property
    def nq(self) -> int:
        """Generalized coordinate count (base x, z, pitch + joints)."""
        return BASE_DOFS + self.n_joints

    @property
    def joint_names(self) -> list[str]:
        return [j.name for j in self.joints]

    @property
    def total_mass(self) -> float:
        return float(sum(l.mass for l in self.links))

    # -- validation --------------------------------------------------------

    def _validate(self):
        if not self.links:
            raise ModelError("model has no links")
        names = [l.name for l in self.links]
        if len(set(names)) != len(names):
            raise ModelError("duplicate link names")

        for l in self.links:
            if l.mass <= 0:
                raise ModelError(f"link '{l.name}': mass must be > 0")
            if l.inertia <= 0:
                raise ModelError(f"link '{l.name}': inertia must be > 0")
        for j in self.joints:
            if j.parent not in self.link_index:
                raise ModelError(f"joint '{j.name}': unknown parent link '{j.parent}'")
            if j.child not in self.link_index:
                raise ModelError(f"joint '{j.name}': unknown child link '{j.child}'")
            if j.torque_limit <= 0:
                raise ModelError(f"joint '{j.name}': torque limit must be > 0")
            if j.velocity_limit <= 0:
                raise ModelError(f"joint '{j.name}': velocity limit must be > 0")
            if not j.limits[0] < j.limits[1]:
                raise ModelError(f"joint '{j.name}': position limits min < max required")
            if j.kp < 0 or j.kd < 0:
                raise ModelError(f"joint '{j.name}': gains must be >= 0")

        # Tree check: every link except the base has exactly one parent joint,
        # and walking parents from any link reaches the base without cycles.
        child_counts = {}
        for j in self.joints:
            child_counts[j.child] = child_counts.get(j.child, 0) + 1
        for name, c in child_counts.items():
            if c > 1:
                raise ModelError(f"link '{name}' has multiple parent joints: not a tree")
        roots = [l.name for l in self.links if l.name not in child_counts]
        if len(roots) != 1:
            raise ModelError(
                f"joint graph is not a tree rooted at a single base link (roots: {roots})"
            )
        base = roots[0]
        parent_of = {j.child: j.parent for j in self.joints}
        for l in self.links:
            seen = set()
            cur = l.name
            while cur != base:
                if cur in seen:
                    raise ModelError(f"joint graph contains a cycle through '{cur}': not a tree")
                seen.add(cur)
                if cur not in parent_of:
                    raise ModelError(f"link '{cur}' is disconnected from the base: not a tree")
                cur = parent_of[cur]

        if self.links[0].name != base:
            raise ModelError(
                f"base link must be listed first (base is '{base}', first link is "
                f"'{self.links[0].name}')"
            )

        for name in self.tracked_bodies:
            if name not in self.link_index:
                raise ModelError(f"tracked body '{name}' is not a link")
        for name in self.end_effectors:
            if name not in self.link_index:
                raise ModelError(f"end effector '{name}' is not a link")

        if self.default_pose.shape != (self.n_joints,):
            raise ModelError(
                f"default_pose has {self.default_pose.shape[0] if self.default_pose.ndim else 0} "
                f"entries, expected {self.n_joints}"
            )
        for j, q in zip(self.joints, self.default_pose):
            if not (j.limits[0] <= q <= j.limits[1]):
                raise ModelError(f"default pose for joint '{j.name}' outside position limits")
        if self.standing_root_height <= 0:
            raise ModelError("standing_root_height must be > 0")

    # -- derived arrays ----------------------------------------------------

    def _build_arrays(self):
        L = self.n_links
        joint_of_child = {self.link_index[j.child]: k for k, j in enumerate(self.joints)}

        self.parent_link = np.full(L, -1, dtype=np.intp)
        self.link_joint = np.full(L, -1, dtype=np.intp)     # joint index per link
        self.anchors = np.zeros((L, 2))                     # in parent frame
        for li in range(L):
            if li in joint_of_child:
                k = joint_of_child[li]
                j = self.joints[k]
                self.parent_link[li] = self.link_index[j.parent]
                self.link_joint[li] = k
                self.anchors[li] = j.anchor

        # topological order (parents before children)
        order, pending = [], set(range(L))
        placed = set()
        while pending:
            progressed = False
            for li in sorted(pending):
                p = self.parent_link[li]
                if p < 0 or p in placed:
                    order.append(li)
                    placed.add(li)
                    pending.discard(li)
                    progressed = True
            if not progressed:  # unreachable after the tree check
                raise ModelError("joint graph is not a tree")
        self.topo_order = np.array(order, dtype=np.intp)

        self.masses = np.array([l.mass for l in self.links])
        self.inertias = np.array([l.inertia for l in self.links])
        self.com_offsets = np.array([l.com_offset for l in self.links])

        # flattened contact points
        cps, cp_link = [], []
        for li, l in enumerate(self.links):
            for p in l.contact_points:
                cps.append(p)
                cp_link.append(li)
        self.cp_local = np.array(cps, dtype=np.float64).reshape(-1, 2)
        self.cp_link = np.array(cp_link, dtype=np.intp)
        self.n_contact_points = len(cp_link)

        self.tracked_idx = np.array([self.link_index[n] for n in self.tracked_bodies], dtype=np.intp)
        self.ee_idx = np.array([self.link_index[n] for n in self.end_effectors], dtype=np.intp)
        # contact points per end effector (list of index arrays)
        self.ee_cp = [np.where(self.cp_link == li)[0] for li in self.ee_idx]

        self.kp = np.array([j.kp for j in self.joints])
        self.kd = np.array([j.kd for j in self.joints])
        self.torque_limits = np.array([j.torque_limit for j in self.joints])
        self.joint_limits = np.array([j.limits for j in self.joints]).reshape(-1, 2)

        # Rotational dofs: pitch (generalized index 2) then one per joint.
        # rot_dof_link[r] is the link whose frame origin the dof rotates about.
        nj = self.n_joints
        self.rot_dof_gen_index = np.concatenate(([2], 3 + np.arange(nj))).astype(np.intp)
        rot_dof_link = [0] + [self.link_index[j.child] for j in self.joints]
        self.rot_dof_link = np.array(rot_dof_link, dtype=np.intp)
        # ancestor mask: rot_mask[l, r] == True when rotational dof r moves link l
        self.rot_mask = np.zeros((L, 1 + nj), dtype=bool)
        for li in range(L):
            self.rot_mask[li, 0] = True  # base pitch moves everything
            cur = li
            while cur >= 0:
                k = self.link_joint[cur]
                if k >= 0:
                    self.rot_mask[li, 1 + k] = True
                cur = self.parent_link[cur]


# ---------------------------------------------------------------------------
# kinematics
# ---------------------------------------------------------------------------

def rot2(angle: np.ndarray, vec: np.ndarray) -> np.ndarray:
    """Rotate 2-D vectors by angles (broadcasting; vec[..., 2])."""
    c, s = np.cos(angle), np.sin(angle)
    x, z = vec[..., 0], vec[..., 1]
    out = np.empty(np.broadcast_shapes(np.shape(c), x.shape) + (2,))
    out[..., 0] = c * x - s * z
    out[..., 1] = s * x + c * z
    return out


def perp(vec: np.ndarray) -> np.ndarray:
    """90-degree CCW rotation: (x, z) -> (-z, x). omega * perp(r) = omega x r."""
    out = np.empty_like(vec)
    out[..., 0] = -vec[..., 1]
    out[..., 1] = vec[..., 0]
    return out


def link_kinematics(model: RobotModel, qpos: np.ndarray, qvel: np.ndarray | None = None):
    """Forward kinematics over arbitrary batch dims.

    qpos: (..., nq) -> (pos (..., L, 2), ang (..., L)) and, when qvel is
    given, also (vel (..., L, 2), angvel (..., L)). Positions are link frame
    origins.
    """
    qpos = np.asarray(qpos, dtype=np.float64)
    batch = qpos.shape[:-1]
    L = model.n_links
    pos = np.zeros(batch + (L, 2))
    ang = np.zeros(batch + (L,))
    vel = angvel = None
    if qvel is not None:
        qvel = np.asarray(qvel, dtype=np.float64)
        vel = np.zeros(batch + (L, 2))
        angvel = np.zeros(batch + (L,))

    for li in model.topo_order:
        p = model.parent_link[li]
        if p < 0:
            pos[..., li, :] = qpos[..., 0:2]
            ang[..., li] = qpos[..., 2]
            if qvel is not None:
                vel[..., li, :] = qvel[..., 0:2]
                angvel[..., li] = qvel[..., 2]
            continue
        k = model.link_joint[li]
        parent_ang = ang[..., p]
        r = rot2(parent_ang, model.anchors[li])
        pos[..., li, :] = pos[..., p, :] + r
        ang[..., li] = parent_ang + qpos[..., 3 + k]
        if qvel is not None:
            wp = angvel[..., p]
            vel[..., li, :] = vel[..., p, :] + wp[..., None] * perp(r)
            angvel[..., li] = wp + qvel[..., 3 + k]

    if qvel is None:
        return pos, ang
    return pos, ang, vel, angvel


def com_positions(model: RobotModel, pos: np.ndarray, ang: np.ndarray,
                  com_offsets: np.ndarray | None = None) -> np.ndarray:
    """World COM positions from link poses; com_offsets overrides the model's
    per-link offsets (used for COM randomization), broadcastable (..., L, 2)."""
    off = model.com_offsets if com_offsets is None else com_offsets
    return pos + rot2(ang, off)


def point_positions(model: RobotModel, pos: np.ndarray, ang: np.ndarray) -> np.ndarray:
    """World positions of all declared contact points, (..., P, 2)."""
    if model.n_contact_points == 0:
        return np.zeros(pos.shape[:-2] + (0, 2))
    lp = pos[..., model.cp_link, :]
    la = ang[..., model.cp_link]
    return lp + rot2(la, model.cp_local)


def point_velocities(model: RobotModel, pos: np.ndarray, ang: np.ndarray,
                     vel: np.ndarray, angvel: np.ndarray) -> np.ndarray:
    """World velocities of all contact points, (..., P, 2)."""
    if model.n_contact_points == 0:
        return np.zeros(pos.shape[:-2] + (0, 2))
    la = ang[..., model.cp_link]
    r = rot2(la, model.cp_local)
    lv = vel[..., model.cp_link, :]
    lw = angvel[..., model.cp_link]
    return lv + lw[..., None] * perp(r)


def forward_state(model: RobotModel, root_pose: Sequence[float], root_vel: Sequence[float],
                  q: np.ndarray, qdot: np.ndarray) -> BodyState:
    """Body poses and velocities for a single configuration.

    root_pose: (x, z, pitch); root_vel: (vx, vz, pitch rate); q/qdot: (nj,).
    """
    root_pose = np.asarray(root_pose, dtype=np.float64)
    root_vel = np.asarray(root_vel, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    qdot = np.asarray(qdot, dtype=np.float64)
    if root_pose.shape != (3,) or root_vel.shape != (3,):
        raise ModelError("root pose and velocity must each have 3 components (x, z, pitch)")
    if q.shape != (model.n_joints,) or qdot.shape != (model.n_joints,):
        raise ModelError(
            f"joint arrays must have {model.n_joints} entries, got {q.shape} / {qdot.shape}"
        )
    if not (np.all(np.isfinite(root_pose)) and np.all(np.isfinite(root_vel))
            and np.all(np.isfinite(q)) and np.all(np.isfinite(qdot))):
        raise ModelError("non-finite values in forward_state inputs")
    qpos = np.concatenate([root_pose, q])
    qvel = np.concatenate([root_vel, qdot])
    pos, ang, vel, angvel = link_kinematics(model, qpos, qvel)
    return BodyState(position=pos, angle=ang, lin_vel=vel, ang_vel=angvel)


# ---------------------------------------------------------------------------
# loading
# ---------------------------------------------------------------------------

def _pair(value, what: str) -> tuple[float, float]:
    try:
        a, b = value
        return (float(a), float(b))
    except (TypeError, ValueError) as e:
        raise ModelError(f"{what}: expected a pair of numbers, got {value!r}") from e


def robot_model_from_dict(doc: dict) -> RobotModel:
    if not isinstance(doc, dict):
        raise ModelError("robot description must be a mapping")
    version = doc.get("format_version")
    if version != ROBOT_FORMAT_VERSION:
        raise ModelError(f"unsupported format_version {version!r} (expected {ROBOT_FORMAT_VERSION})")
    try:
        links = tuple(
            LinkSpec(
                name=str(l["name"]),
                mass=float(l["mass"]),
                inertia=float(l["inertia"]),
                length=float(l.get("length", 0.0)),
                com_offset=_pair(l["com_offset"], f"link '{l.get('name')}' com_offset"),
                contact_points=tuple(
                    _pair(p, f"link '{l.get('name')}' contact point") for p in l.get("contact_points", [])
                ),
            )
            for l in doc["links"]
        )
        joints = tuple(
            JointSpec(
                name=str(j["name"]),
                parent=str(j["parent"]),
                child=str(j["child"]),
                anchor=_pair(j["anchor"], f"joint '{j.get('name')}' anchor"),
                limits=_pair(j["limits"], f"joint '{j.get('name')}' limits"),
                velocity_limit=float(j["velocity_limit"]),
                torque_limit=float(j["torque_limit"]),
                kp=float(j["kp"]),
                kd=float(j["kd"]),
            )
            for j in doc["joints"]
        )
        return RobotModel(
            name=str(doc["name"]),
            links=links,
            joints=joints,
            tracked_bodies=tuple(doc["tracked_bodies"]),
            end_effectors=tuple(doc["end_effectors"]),
            default_pose=np.asarray(doc["default_pose"], dtype=np.float64),
            standing_root_height=float(doc["standing_root_height"]),
            floating_base=bool(doc.get("floating_base", True)),
        )
    except KeyError as e:
        raise ModelError(f"robot description missing required field {e.args[0]!r}") from e


def load_robot_model(path: str | Path) -> RobotModel:
    """Load and validate a robot description file."""
    path = Path(path)
    try:
        doc = yaml.safe_load(path.read_text())
    except yaml.YAMLError as e:
        raise ModelError(f"cannot parse robot description {path}: {e}") from e
    return robot_model_from_dict(doc)


def builtin_model_path(name: str = "planar-walker-7") -> Path:
    """Path of a robot description bundled with the package."""
    files = {"planar-walker-7": "planar_walker7.yaml"}
    if name not in files:
        raise ModelError(f"no builtin model named '{name}' (have: {sorted(files)})")
    return Path(__file__).parent / "data" / files[name]


def load_builtin_model(name: str = "planar-walker-7") -> RobotModel:
    return load_robot_model(builtin_model_path(name))
