"""Reward terms, gravity-based weight rescaling, and the penalty curriculum.

Joint torques of a standing or slowly walking robot scale roughly linearly
with gravity, so each reward term carries a gravity exponent k: terms linear
in torque (mechanical joint power) scale their weight by alpha^1, quadratic
terms (squared torque, winding loss) by alpha^2, and torque-free terms keep
k = 0, where alpha = 9.81 / g.  Scaling weights this way preserves the
relative magnitude of the terms across gravity levels.

The single Earth-gravity energy weight is applied to the two loss parts
separately so they can be rescaled with their own exponents.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .actuation import ActuatorParams, power_loss
from .robot import EARTH_GRAVITY


def gravity_factor(g: float) -> float:
    """alpha = Earth gravity / target gravity."""
    if g <= 0:
        raise ValueError(f"gravity must be positive, got {g}")
    return EARTH_GRAVITY / g


@dataclass(frozen=True)
class RewardTerm:
    name: str
    weight: float              # Earth-gravity weight
    gravity_exponent: int = 0  # k in weight_scaled = alpha^k * weight
    kind: str = ""             # evaluation rule, defaults to the name

    def __post_init__(self):
        if self.gravity_exponent not in (0, 1, 2):
            raise ValueError("gravity exponent must be 0, 1 or 2")
        if not self.kind:
            object.__setattr__(self, "kind", self.name)


# Earth-gravity term catalogs
BASELINE_REGULARIZATION = (
    RewardTerm("torque_sq", -1e-4, gravity_exponent=2),
    RewardTerm("action_rate", -0.08),
    RewardTerm("joint_accel", -8e-7),
)

POWER_REGULARIZATION = (
    RewardTerm("energy_joint", -3e-3, gravity_exponent=1),
    RewardTerm("energy_winding", -3e-3, gravity_exponent=2),
)

LOCOMOTION_TASK = (
    RewardTerm("lin_vel_tracking", 1.0),
    RewardTerm("yaw_rate_tracking", 0.5),
    RewardTerm("foot_impact", -0.6),
)

BASE_POSE_TASK = (
    RewardTerm("height_tracking", 1.0),
    RewardTerm("pitch_tracking", 1.0),
    RewardTerm("yaw_rate_tracking_pose", 2.0),
    RewardTerm("xy_velocity", -0.6),
)

# regularization penalties under the training curriculum (the general set
# plus the task-specific ones): ramped in only after the tracking behavior
# is learned, so gait discovery is not suppressed by smoothness/efficiency
# costs
CURRICULUM_TERMS = {"torque_sq", "action_rate", "joint_accel",
                    "energy_joint", "energy_winding",
                    "foot_impact", "xy_velocity"}


@dataclass(frozen=True)
class RewardSpec:
    task: str                          # "locomotion" | "base_pose"
    regularization: str                # "baseline" | "power"
    scale_gravity: bool = True
    terms: tuple[RewardTerm, ...] = ()

    @classmethod
    def build(cls, task: str, regularization: str, scale_gravity: bool = True) -> "RewardSpec":
        if task == "locomotion":
            task_terms = LOCOMOTION_TASK
        elif task == "base_pose":
            task_terms = BASE_POSE_TASK
        else:
            raise ValueError(f"unknown task {task!r}")
        if regularization == "baseline":
            reg_terms = BASELINE_REGULARIZATION
        elif regularization == "power":
            reg_terms = POWER_REGULARIZATION
        else:
            raise ValueError(f"unknown regularization set {regularization!r}")
        return cls(task=task, regularization=regularization,
                   scale_gravity=scale_gravity, terms=task_terms + reg_terms)

    def to_dict(self) -> dict:
        return {
            "task": self.task,
            "regularization": self.regularization,
            "scale_gravity": self.scale_gravity,
            "terms": [
                {"name": t.name, "weight": t.weight, "gravity_exponent": t.gravity_exponent,
                 "kind": t.kind}
                for t in self.terms
            ],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "RewardSpec":
        return cls(
            task=data["task"],
            regularization=data["regularization"],
            scale_gravity=bool(data.get("scale_gravity", True)),
            terms=tuple(
                RewardTerm(t["name"], float(t["weight"]),
                           int(t.get("gravity_exponent", 0)), t.get("kind", ""))
                for t in data["terms"]
            ),
        )


def scale_weights(spec: RewardSpec, g: float) -> RewardSpec:
    """Rescale every weight by alpha^k; identity if scaling is off."""
    if not spec.scale_gravity or g == EARTH_GRAVITY:
        return spec
    alpha = gravity_factor(g)
    terms = tuple(
        replace(t, weight=alpha ** t.gravity_exponent * t.weight) for t in spec.terms
    )
    return replace(spec, terms=terms)


def curriculum_weight(w_final: float, progress: float) -> float:
    """Linear ramp of a penalty weight over training progress in [0, 1]."""
    if not 0.0 <= progress <= 1.0:
        raise ValueError("progress must lie in [0, 1]")
    return progress * w_final


@dataclass
class StepContext:
    """Per-control-step quantities the reward terms read.

    Tracking errors follow e = command - measured.  Fields may carry a
    leading batch dimension.  ``impact_speed_sq`` is the summed squared
    touchdown speed of feet that made new contact during the step.
    """

    command: np.ndarray                # (..., 3)
    base_lin_vel: np.ndarray           # (..., 3) base frame
    base_ang_vel: np.ndarray           # (..., 3) base frame
    joint_torque: np.ndarray           # (..., 12)
    joint_vel: np.ndarray              # (..., 12)
    joint_acc: np.ndarray              # (..., 12)
    action: np.ndarray                 # (..., 12)
    prev_action: np.ndarray            # (..., 12)
    impact_speed_sq: np.ndarray        # (...,)
    gravity: float = EARTH_GRAVITY
    base_height: np.ndarray | None = None   # (...,) above local terrain
    base_pitch: np.ndarray | None = None    # (...,) terrain frame
    actuator: ActuatorParams = field(default_factory=ActuatorParams)


def _require(value, name: str):
    if value is None:
        raise ValueError(f"step context is missing field {name!r}")
    return value


def _term_value(term: RewardTerm, ctx: StepContext) -> np.ndarray:
    kind = term.kind
    if kind == "lin_vel_tracking":
        ex = ctx.command[..., 0] - ctx.base_lin_vel[..., 0]
        ey = ctx.command[..., 1] - ctx.base_lin_vel[..., 1]
        return np.exp(-(ex**2 + ey**2) / 0.25)
    if kind == "yaw_rate_tracking":
        e = ctx.command[..., 2] - ctx.base_ang_vel[..., 2]
        return np.exp(-(e**2) / 0.25)
    if kind == "foot_impact":
        return ctx.impact_speed_sq
    if kind == "height_tracking":
        e = ctx.command[..., 0] - _require(ctx.base_height, "base_height")
        return np.exp(-(e**2) / 0.1**2)
    if kind == "pitch_tracking":
        e = ctx.command[..., 1] - _require(ctx.base_pitch, "base_pitch")
        return np.exp(-(e**2) / 0.15**2)
    if kind == "yaw_rate_tracking_pose":
        e = ctx.command[..., 2] - ctx.base_ang_vel[..., 2]
        return np.exp(-(e**2) / 0.15**2)
    if kind == "xy_velocity":
        return ctx.base_lin_vel[..., 0] ** 2 + ctx.base_lin_vel[..., 1] ** 2
    if kind == "torque_sq":
        return np.sum(np.square(ctx.joint_torque), axis=-1)
    if kind == "action_rate":
        return np.sum(np.square(ctx.action - ctx.prev_action), axis=-1)
    if kind == "joint_accel":
        return np.sum(np.square(ctx.joint_acc), axis=-1)
    if kind == "energy_joint":
        _, joint, _ = power_loss(ctx.joint_torque, ctx.joint_vel, ctx.actuator)
        return joint
    if kind == "energy_winding":
        _, _, winding = power_loss(ctx.joint_torque, ctx.joint_vel, ctx.actuator)
        return winding
    raise ValueError(f"unknown reward kind {kind!r}")


def eval_reward(
    spec: RewardSpec,
    ctx: StepContext,
    curriculum_progress: float = 1.0,
) -> tuple[np.ndarray, dict[str, np.ndarray]]:
    """Total weighted reward and the per-term weighted breakdown."""
    total = None
    breakdown: dict[str, np.ndarray] = {}
    for term in spec.terms:
        w = term.weight
        if term.name in CURRICULUM_TERMS:
            w = curriculum_weight(w, curriculum_progress)
        value = w * _term_value(term, ctx)
        breakdown[term.name] = value
        total = value if total is None else total + value
    return total, breakdown
