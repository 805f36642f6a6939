"""Constant-force-spring gravity offload: error forces and compensation.

The rig hangs the robot from a constant-force spring on a moving gantry.
When the rope deflects by a horizontal radius r from vertical, the tension
F splits into a vertical part F * h / sqrt(r^2 + h^2) and a radial part
F * r / sqrt(r^2 + h^2); the vertical error is the shortfall relative to F.

Planning closes the offload force budget: a measured spring force short of
m * (g_E - g_target) is compensated by removing battery mass on the real
robot and adding mass in simulation.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, replace

import numpy as np

from .robot import EARTH_GRAVITY


class RigError(ValueError):
    """Infeasible offload plan or invalid rig geometry."""


@dataclass(frozen=True)
class RigSpec:
    spring_force: float               # N
    mount_height: float = 1.9         # m, vertical rope span
    attach_offset: tuple[float, float, float] = (0.0, 0.0, 0.0)  # body frame, m
    max_radius: float = 0.15          # m, gantry tracking error bound
    gantry_time_constant: float = 0.5  # s, first-order gantry lag

    def __post_init__(self):
        if self.spring_force <= 0 or self.mount_height <= 0:
            raise RigError("spring force and mount height must be positive")
        if self.max_radius < 0:
            raise RigError("max radius must be nonnegative")


@dataclass(frozen=True)
class RigPlan:
    required_offload_n: float
    measured_offload_n: float
    deficit_n: float
    battery_mass_kg: float
    battery_credit_n: float
    residual_n: float
    added_sim_mass_kg: float
    target_gravity: float

    def to_dict(self) -> dict:
        return asdict(self)


def required_offload(mass: float, g_target: float) -> float:
    """Vertical force needed to emulate g_target under Earth gravity."""
    if not 0.0 < g_target <= EARTH_GRAVITY:
        raise RigError(f"target gravity must lie in (0, {EARTH_GRAVITY}], got {g_target}")
    return mass * (EARTH_GRAVITY - g_target)


def vertical_error(rig: RigSpec, r: float) -> float:
    """Loss of vertical offload at radial deflection r, N."""
    if np.any(np.asarray(r) < 0):
        raise RigError("radial deflection must be nonnegative")
    h = rig.mount_height
    return rig.spring_force * (1.0 - h / np.sqrt(np.square(r) + h * h))


def radial_error(rig: RigSpec, r: float) -> float:
    """Horizontal disturbance force at radial deflection r, N."""
    if np.any(np.asarray(r) < 0):
        raise RigError("radial deflection must be nonnegative")
    h = rig.mount_height
    return rig.spring_force * np.asarray(r) / np.sqrt(np.square(r) + h * h)


def plan_compensation(
    mass: float,
    g_target: float,
    measured_offload: float,
    battery_mass: float,
) -> RigPlan:
    """Battery-removal + simulated-mass plan closing the offload deficit."""
    required = required_offload(mass, g_target)
    if measured_offload > required + 1e-9:
        raise RigError(
            f"measured offload {measured_offload} N exceeds the required "
            f"{required:.1f} N; a stronger spring cannot be compensated by adding mass"
        )
    deficit = required - measured_offload
    credit = battery_mass * EARTH_GRAVITY
    residual = deficit - credit
    if residual < -1e-9:
        raise RigError(
            f"battery removal over-compensates: credit {credit:.2f} N exceeds "
            f"deficit {deficit:.2f} N"
        )
    return RigPlan(
        required_offload_n=required,
        measured_offload_n=measured_offload,
        deficit_n=deficit,
        battery_mass_kg=battery_mass,
        battery_credit_n=credit,
        residual_n=residual,
        added_sim_mass_kg=residual / g_target,
        target_gravity=g_target,
    )


def rig_environment(base_cfg, rig: RigSpec):
    """Environment-config variant that runs the policy on the offload rig.

    Dynamics run at Earth gravity with the spring force applied at the base
    attachment point, leg gravity compensation stays on, and a horizontal
    disturbance follows the gantry-lag radial error.  The config's gravity
    field keeps the policy's target gravity.
    """
    return replace(base_cfg, rig=rig, feedforward=True)


def format_plan_table(plan: RigPlan) -> str:
    rows = [
        ("required offload", f"{plan.required_offload_n:8.2f} N"),
        ("measured offload", f"{plan.measured_offload_n:8.2f} N"),
        ("deficit", f"{plan.deficit_n:8.2f} N"),
        (f"battery removed ({plan.battery_mass_kg} kg)", f"{plan.battery_credit_n:8.2f} N"),
        ("residual", f"{plan.residual_n:8.2f} N"),
        ("added simulation mass", f"{plan.added_sim_mass_kg:8.3f} kg"),
    ]
    width = max(len(r[0]) for r in rows)
    return "\n".join(f"{name:<{width}}  {value}" for name, value in rows)
