"""PD joint actuation and the drivetrain power-loss model.

Electrical cost per joint is the sum of two parts:

* joint (recuperation) loss: positive mechanical power is billed in full;
  braking power is credited only up to the recuperation efficiency, so with
  efficiency 0 braking dissipates mechanically and costs nothing.
* winding loss: resistive heating, (tau / (G * k_t))^2 * R.

Gearbox friction is not modeled here; it is absorbed by the joint damping
in the dynamics configuration.
"""

from __future__ import annotations

import io
from dataclasses import dataclass
from pathlib import Path

import numpy as np


class LogFormatError(ValueError):
    """Malformed trajectory log."""


@dataclass(frozen=True)
class ActuatorParams:
    gear_ratio: float = 9.0          # G
    torque_constant: float = 0.1     # k_t, N m / A at the motor
    winding_resistance: float = 0.3  # R, ohms
    recuperation: float = 0.0        # eta in [0, 1]
    kp: float = 80.0                 # N m / rad
    kd: float = 2.0                  # N m s / rad
    torque_limit: float = 25.0       # N m
    velocity_limit: float = 20.0     # rad/s

    def __post_init__(self):
        if min(self.gear_ratio, self.torque_constant, self.winding_resistance) <= 0:
            raise ValueError("gear ratio, torque constant and resistance must be positive")
        if not 0.0 <= self.recuperation <= 1.0:
            raise ValueError("recuperation efficiency must lie in [0, 1]")
        if self.torque_limit <= 0 or self.velocity_limit <= 0:
            raise ValueError("limits must be positive")


def pd_torque(params: ActuatorParams, q_target, q, q_dot, tau_ff=0.0) -> np.ndarray:
    """tau = clamp(kp (q* - q) - kd qd + tau_ff, +/- limit)."""
    tau = params.kp * (np.asarray(q_target) - np.asarray(q)) - params.kd * np.asarray(q_dot)
    tau = tau + tau_ff
    return np.clip(tau, -params.torque_limit, params.torque_limit)


def recuperation_loss(tau, q_dot, recuperation: float = 0.0) -> np.ndarray:
    """Billed mechanical power per joint, >= 0."""
    p = np.asarray(tau) * np.asarray(q_dot)
    return np.maximum(p, 0.0) - np.minimum(recuperation * p, 0.0)


def winding_loss(tau, params: ActuatorParams) -> np.ndarray:
    """Resistive winding heating per joint, >= 0 and even in tau."""
    current = np.asarray(tau) / (params.gear_ratio * params.torque_constant)
    return np.square(current) * params.winding_resistance


def power_loss(tau, q_dot, params: ActuatorParams):
    """Total electrical loss (W) with the per-joint breakdown.

    Returns (total, joint_part, winding_part); the parts are summed over the
    trailing joint axis and kept separate so they can be weighted separately
    when rescaling rewards with gravity.
    """
    tau = np.asarray(tau, dtype=float)
    q_dot = np.asarray(q_dot, dtype=float)
    if tau.shape != q_dot.shape:
        raise ValueError(f"shape mismatch: tau {tau.shape} vs q_dot {q_dot.shape}")
    joint = recuperation_loss(tau, q_dot, params.recuperation).sum(axis=-1)
    winding = winding_loss(tau, params).sum(axis=-1)
    return joint + winding, joint, winding


# ---------------------------------------------------------------------------
# trajectory logs
# ---------------------------------------------------------------------------

N_JOINTS = 12

LOG_COLUMNS = (
    ["t"]
    + [f"q{i}" for i in range(N_JOINTS)]
    + [f"dq{i}" for i in range(N_JOINTS)]
    + [f"tau{i}" for i in range(N_JOINTS)]
    + ["px", "py", "pz", "qx", "qy", "qz", "qw"]
    + ["vx", "vy", "vz", "wx", "wy", "wz"]
    + [f"c{i}" for i in range(4)]
)


@dataclass
class TrajectoryLog:
    """Uniformly sampled joint/base trajectory, SI units throughout."""

    sample_rate_hz: float
    t: np.ndarray            # (T,)
    joint_pos: np.ndarray    # (T, 12)
    joint_vel: np.ndarray    # (T, 12)
    joint_torque: np.ndarray  # (T, 12)
    base_pose: np.ndarray    # (T, 7) position + quaternion (scalar-last)
    base_twist: np.ndarray   # (T, 6) world linear + angular velocity
    contact_flags: np.ndarray  # (T, 4) 0/1

    def __len__(self) -> int:
        return len(self.t)

    def to_csv(self, path: str | Path) -> None:
        data = np.column_stack(
            [
                self.t,
                self.joint_pos,
                self.joint_vel,
                self.joint_torque,
                self.base_pose,
                self.base_twist,
                self.contact_flags,
            ]
        )
        with open(path, "w") as fh:
            fh.write(f"# sample_rate_hz: {self.sample_rate_hz}\n")
            fh.write(",".join(LOG_COLUMNS) + "\n")
            np.savetxt(fh, data, delimiter=",", fmt="%.10g")

    @classmethod
    def from_csv(cls, path: str | Path) -> "TrajectoryLog":
        text = Path(path).read_text()
        lines = text.splitlines()
        if not lines:
            raise LogFormatError(f"{path}: empty file")
        rate = None
        header_idx = 0
        for i, line in enumerate(lines):
            if line.startswith("#"):
                if "sample_rate_hz" in line:
                    rate = float(line.split(":", 1)[1])
            else:
                header_idx = i
                break
        if rate is None:
            raise LogFormatError(f"{path}: missing '# sample_rate_hz: ...' comment line")
        header = [c.strip() for c in lines[header_idx].split(",")]
        missing = [c for c in LOG_COLUMNS if c not in header]
        if missing:
            raise LogFormatError(f"{path}: missing column {missing[0]!r} (line {header_idx + 1})")
        body = "\n".join(lines[header_idx + 1:]).strip()
        if not body:
            raise LogFormatError(f"{path}: no data rows")
        try:
            raw = np.loadtxt(io.StringIO(body), delimiter=",", ndmin=2)
        except ValueError as exc:
            raise LogFormatError(f"{path}: unparseable data: {exc}") from None
        if raw.shape[1] != len(header):
            raise LogFormatError(
                f"{path}: row width {raw.shape[1]} does not match header width {len(header)}"
            )
        cols = {name: raw[:, i] for i, name in enumerate(header)}
        grab = lambda names: np.column_stack([cols[n] for n in names])
        log = cls(
            sample_rate_hz=rate,
            t=cols["t"],
            joint_pos=grab([f"q{i}" for i in range(N_JOINTS)]),
            joint_vel=grab([f"dq{i}" for i in range(N_JOINTS)]),
            joint_torque=grab([f"tau{i}" for i in range(N_JOINTS)]),
            base_pose=grab(["px", "py", "pz", "qx", "qy", "qz", "qw"]),
            base_twist=grab(["vx", "vy", "vz", "wx", "wy", "wz"]),
            contact_flags=grab([f"c{i}" for i in range(4)]),
        )
        dt = np.diff(log.t)
        if len(dt) and np.any(np.abs(dt - 1.0 / rate) > 0.01 / rate):
            worst = int(np.argmax(np.abs(dt - 1.0 / rate)))
            raise LogFormatError(
                f"{path}: non-uniform timestamps near row {worst + 1} "
                f"(dt = {dt[worst]:.6g}, expected {1.0 / rate:.6g})"
            )
        return log


@dataclass
class PowerSummary:
    duration_s: float
    average_power_w: float
    energy_j: float
    average_joint_w: float
    average_winding_w: float
    power_trace: np.ndarray      # (T,) instantaneous total loss
    joint_trace: np.ndarray
    winding_trace: np.ndarray


def trajectory_power(log: TrajectoryLog, params: ActuatorParams) -> PowerSummary:
    """Trapezoid-rule energy and average power over a trajectory log."""
    if len(log) == 0:
        raise LogFormatError("empty trajectory log")
    total, joint, winding = power_loss(log.joint_torque, log.joint_vel, params)
    if len(log) == 1:
        return PowerSummary(0.0, float(total[0]), 0.0, float(joint[0]), float(winding[0]),
                            total, joint, winding)
    trapezoid = getattr(np, "trapezoid", None) or np.trapz
    duration = float(log.t[-1] - log.t[0])
    energy = float(trapezoid(total, log.t))
    e_joint = float(trapezoid(joint, log.t))
    e_winding = float(trapezoid(winding, log.t))
    return PowerSummary(
        duration_s=duration,
        average_power_w=energy / duration,
        energy_j=energy,
        average_joint_w=e_joint / duration,
        average_winding_w=e_winding / duration,
        power_trace=total,
        joint_trace=joint,
        winding_trace=winding,
    )
