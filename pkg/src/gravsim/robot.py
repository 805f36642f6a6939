"""Robot description: links, joints, states, and gravity environments.

A robot is a kinematic tree rooted at a 6-DOF floating base.  Link 0 is the
base; every revolute joint ``j`` connects an earlier link to link ``j + 1``
(topological order).  Models are immutable after construction and safe to
share across parallel simulations.

Models load from a hierarchical plain-text (YAML) file with this schema::

    name: reference_quadruped
    leg_length: 0.5            # optional metadata, metres
    links:
      - name: base
        mass: 8.05             # kg
        com: [0.0, 0.0, 0.0]   # COM offset in the link frame, metres
        inertia: [Ixx, Iyy, Izz]         # about the COM, kg m^2
        # or a full 3x3 row-major list of lists
    joints:
      - name: leg0_yaw
        parent: base           # parent link name
        child: leg0_hip        # child link name (must exist in links)
        axis: [0, 0, 1]        # unit vector in the joint frame
        origin_xyz: [x, y, z]  # joint frame offset in the parent link frame
        origin_rpy: [r, p, y]  # joint frame rotation (XYZ Euler), radians
        limits: [lo, hi]       # joint position limits, radians
        velocity_limit: 20.0   # rad/s
    q_def: [...]               # default joint positions, one per joint
    feet:
      - {link: leg0_lower, offset: [0.25, 0, 0]}
    damping: 0.1               # per-joint viscous damping, scalar or list
    armature: 0.01             # per-joint reflected inertia, scalar or list
"""

from __future__ import annotations

import importlib.resources
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from .rotations import IDENTITY_QUAT, quat_normalize, rpy_to_rot

EARTH_GRAVITY = 9.81

GRAVITY_PRESETS = {
    "moon": 1.62,
    "mars": 3.73,
    "earth": EARTH_GRAVITY,
    "super-earth": 19.62,
    # alternate super-Earth figure kept as a named alias
    "super-earth-alt": 19.96,
}


class ModelError(ValueError):
    """Invalid robot description (bad inertia, broken tree, ...)."""


@dataclass(frozen=True)
class GravityEnv:
    """Gravity environment: magnitude g (m/s^2) acting along world -z."""

    g: float = EARTH_GRAVITY

    def __post_init__(self):
        if not self.g > 0.0:
            raise ValueError(f"gravity must be positive, got {self.g}")

    @classmethod
    def from_name(cls, name: str) -> "GravityEnv":
        key = str(name).strip().lower().replace("_", "-")
        if key in GRAVITY_PRESETS:
            return cls(GRAVITY_PRESETS[key])
        try:
            return cls(float(name))
        except ValueError:
            raise ValueError(
                f"unknown gravity preset {name!r}; options: {sorted(GRAVITY_PRESETS)}"
            ) from None

    @property
    def vector(self) -> np.ndarray:
        return np.array([0.0, 0.0, -self.g])


@dataclass(frozen=True)
class Link:
    name: str
    mass: float
    com: np.ndarray          # (3,) COM offset in the link frame
    inertia: np.ndarray      # (3, 3) about the COM, link frame


@dataclass(frozen=True)
class Joint:
    name: str
    parent: int              # parent link index
    axis: np.ndarray         # (3,) unit vector in the joint frame
    origin_xyz: np.ndarray   # (3,) joint frame offset in the parent frame
    origin_rot: np.ndarray   # (3, 3) joint frame rotation in the parent frame
    limits: tuple[float, float]
    velocity_limit: float
    origin_rpy: tuple[float, float, float] = (0.0, 0.0, 0.0)


@dataclass(frozen=True)
class RobotModel:
    """Floating-base rigid-body model.  Immutable after construction."""

    name: str
    links: tuple[Link, ...]
    joints: tuple[Joint, ...]
    q_def: np.ndarray                 # (nj,) default joint positions
    feet: tuple[tuple[int, np.ndarray], ...] = ()   # (link index, offset)
    damping: np.ndarray = None        # (nj,) viscous joint damping, N m s/rad
    armature: np.ndarray = None       # (nj,) reflected joint inertia, kg m^2
    leg_length: float = 0.0
    # structure caches, filled in __post_init__
    ancestors: tuple[tuple[int, ...], ...] = field(default=None, repr=False)

    def __post_init__(self):
        nj = len(self.joints)
        if self.damping is None:
            object.__setattr__(self, "damping", np.zeros(nj))
        if self.armature is None:
            object.__setattr__(self, "armature", np.zeros(nj))
        # joint j's child link is link j + 1; ancestors[i] = joints on the
        # path from the base to link i, in order
        anc: list[tuple[int, ...]] = [()]
        for j, joint in enumerate(self.joints):
            if not 0 <= joint.parent <= j:
                raise ModelError(
                    f"joint {joint.name}: parent link {joint.parent} breaks topological order"
                )
            anc.append(anc[joint.parent] + (j,))
        object.__setattr__(self, "ancestors", tuple(anc))
        self.validate()

    # ---- dimensions -----------------------------------------------------
    @property
    def n_links(self) -> int:
        return len(self.links)

    @property
    def n_joints(self) -> int:
        return len(self.joints)

    @property
    def nv(self) -> int:
        """Velocity (tangent) dimension: 6 base DOF + joints."""
        return 6 + self.n_joints

    @property
    def nq(self) -> int:
        """Configuration dimension: base position + quaternion + joints."""
        return 7 + self.n_joints

    @property
    def total_mass(self) -> float:
        return float(sum(l.mass for l in self.links))

    @property
    def masses(self) -> np.ndarray:
        return np.array([l.mass for l in self.links])

    @property
    def joint_limits(self) -> np.ndarray:
        return np.array([j.limits for j in self.joints]).reshape(self.n_joints, 2)

    # ---- validation ------------------------------------------------------
    def validate(self) -> None:
        if len(self.q_def) != self.n_joints:
            raise ModelError("q_def length does not match joint count")
        for link in self.links:
            if link.mass <= 0:
                raise ModelError(f"link {link.name}: mass must be positive")
            inertia = link.inertia
            if not np.allclose(inertia, inertia.T, atol=1e-12):
                raise ModelError(f"link {link.name}: inertia not symmetric")
            eig = np.linalg.eigvalsh(inertia)
            if np.any(eig <= 0):
                raise ModelError(f"link {link.name}: inertia not positive definite")
            a, b, c = np.sort(eig)
            if c > a + b + 1e-12:
                raise ModelError(
                    f"link {link.name}: principal moments violate the triangle inequality"
                )
        for j in self.joints:
            if abs(np.linalg.norm(j.axis) - 1.0) > 1e-9:
                raise ModelError(f"joint {j.name}: axis must be a unit vector")
            if j.limits[0] >= j.limits[1]:
                raise ModelError(f"joint {j.name}: empty limit range")
        for link_idx, _ in self.feet:
            if not 0 <= link_idx < self.n_links:
                raise ModelError(f"foot attached to unknown link {link_idx}")

    # ---- states ----------------------------------------------------------
    def default_state(self, base_pos=(0.0, 0.0, 0.5), batch: int | None = None) -> "GeneralizedState":
        q = np.zeros(self.nq)
        q[0:3] = base_pos
        q[3:7] = IDENTITY_QUAT
        q[7:] = self.q_def
        v = np.zeros(self.nv)
        if batch is not None:
            q = np.repeat(q[None, :], batch, axis=0)
            v = np.repeat(v[None, :], batch, axis=0)
        return GeneralizedState(q=q, v=v)


@dataclass
class GeneralizedState:
    """Configuration and velocity of a floating-base robot.

    ``q``: base position (3), base orientation quaternion (4, scalar-last),
    joint positions.  ``v``: base linear and angular velocity (world frame),
    joint velocities.  Arbitrary leading batch dimensions are allowed.
    """

    q: np.ndarray
    v: np.ndarray

    @property
    def base_pos(self) -> np.ndarray:
        return self.q[..., 0:3]

    @property
    def base_quat(self) -> np.ndarray:
        return self.q[..., 3:7]

    @property
    def joint_pos(self) -> np.ndarray:
        return self.q[..., 7:]

    @property
    def base_lin_vel(self) -> np.ndarray:
        return self.v[..., 0:3]

    @property
    def base_ang_vel(self) -> np.ndarray:
        return self.v[..., 3:6]

    @property
    def joint_vel(self) -> np.ndarray:
        return self.v[..., 6:]

    def copy(self) -> "GeneralizedState":
        return GeneralizedState(q=self.q.copy(), v=self.v.copy())

    def normalized(self) -> "GeneralizedState":
        q = self.q.copy()
        q[..., 3:7] = quat_normalize(q[..., 3:7])
        return GeneralizedState(q=q, v=self.v.copy())


# ---------------------------------------------------------------------------
# loading
# ---------------------------------------------------------------------------

def _parse_inertia(raw) -> np.ndarray:
    arr = np.asarray(raw, dtype=float)
    if arr.shape == (3,):
        return np.diag(arr)
    if arr.shape == (3, 3):
        return arr
    raise ModelError(f"inertia must be 3 principal moments or a 3x3 matrix, got shape {arr.shape}")


def model_from_dict(data: dict) -> RobotModel:
    try:
        link_specs = data["links"]
        joint_specs = data.get("joints", [])
    except KeyError as exc:
        raise ModelError(f"missing robot config section: {exc}") from None

    names = [spec["name"] for spec in link_specs]
    if len(set(names)) != len(names):
        raise ModelError("duplicate link names")
    index = {n: i for i, n in enumerate(names)}

    # reorder links so that joint j's child is link j + 1
    order = [0] * len(link_specs)
    child_names = [j["child"] for j in joint_specs]
    if link_specs and link_specs[0]["name"] in child_names:
        raise ModelError("the first link is the base and cannot be a joint child")
    for j, cname in enumerate(child_names):
        if cname not in index:
            raise ModelError(f"joint child link {cname!r} not defined")
        order[j + 1] = index[cname]
    non_children = [i for i, n in enumerate(names) if n not in child_names]
    if non_children != [0] or len(child_names) != len(link_specs) - 1:
        raise ModelError("links and joints do not form a tree rooted at the first link")

    links = []
    for i in order:
        spec = link_specs[i]
        links.append(
            Link(
                name=spec["name"],
                mass=float(spec["mass"]),
                com=np.asarray(spec.get("com", [0.0, 0.0, 0.0]), dtype=float),
                inertia=_parse_inertia(spec["inertia"]),
            )
        )
    new_index = {l.name: k for k, l in enumerate(links)}

    joints = []
    for spec in joint_specs:
        axis = np.asarray(spec["axis"], dtype=float)
        norm = np.linalg.norm(axis)
        if norm == 0:
            raise ModelError(f"joint {spec['name']}: zero axis")
        rpy = tuple(float(x) for x in spec.get("origin_rpy", (0.0, 0.0, 0.0)))
        joints.append(
            Joint(
                name=spec["name"],
                parent=new_index[spec["parent"]],
                axis=axis / norm,
                origin_xyz=np.asarray(spec.get("origin_xyz", [0, 0, 0]), dtype=float),
                origin_rot=rpy_to_rot(rpy),
                limits=tuple(float(x) for x in spec.get("limits", (-3.14159, 3.14159))),
                velocity_limit=float(spec.get("velocity_limit", 30.0)),
                origin_rpy=rpy,
            )
        )

    nj = len(joints)
    q_def = np.asarray(data.get("q_def", np.zeros(nj)), dtype=float)
    feet = tuple(
        (new_index[f["link"]], np.asarray(f.get("offset", [0, 0, 0]), dtype=float))
        for f in data.get("feet", [])
    )
    damping = np.broadcast_to(np.asarray(data.get("damping", 0.0), dtype=float), (nj,)).copy()
    armature = np.broadcast_to(np.asarray(data.get("armature", 0.0), dtype=float), (nj,)).copy()

    model = RobotModel(
        name=data.get("name", "robot"),
        links=tuple(links),
        joints=tuple(joints),
        q_def=q_def,
        feet=feet,
        damping=damping,
        armature=armature,
        leg_length=float(data.get("leg_length", 0.0)),
    )
    declared = data.get("total_mass")
    if declared is not None and abs(model.total_mass - float(declared)) > 1e-9:
        raise ModelError(
            f"declared total mass {declared} != link sum {model.total_mass}"
        )
    return model


def model_to_dict(model: RobotModel) -> dict:
    """Round-trippable plain-data form of a model (the file schema)."""
    child_names = [model.links[j + 1].name for j in range(model.n_joints)]
    return {
        "name": model.name,
        "total_mass": model.total_mass,
        "leg_length": model.leg_length,
        "links": [
            {"name": l.name, "mass": l.mass, "com": l.com.tolist(),
             "inertia": l.inertia.tolist()}
            for l in model.links
        ],
        "joints": [
            {"name": j.name, "parent": model.links[j.parent].name,
             "child": child_names[k], "axis": j.axis.tolist(),
             "origin_xyz": j.origin_xyz.tolist(), "origin_rpy": list(j.origin_rpy),
             "limits": list(j.limits), "velocity_limit": j.velocity_limit}
            for k, j in enumerate(model.joints)
        ],
        "q_def": model.q_def.tolist(),
        "feet": [
            {"link": model.links[idx].name, "offset": off.tolist()}
            for idx, off in model.feet
        ],
        "damping": model.damping.tolist(),
        "armature": model.armature.tolist(),
    }


def load_model(path: str | Path) -> RobotModel:
    with open(path) as fh:
        data = yaml.safe_load(fh)
    return model_from_dict(data)


def reference_model() -> RobotModel:
    """The bundled 15.65 kg, 12-joint reference quadruped."""
    ref = importlib.resources.files("gravsim.data").joinpath("reference_quadruped.yaml")
    return model_from_dict(yaml.safe_load(ref.read_text()))
