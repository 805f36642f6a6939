"""Penalty contact with regularized Coulomb friction at point feet.

Normal force is a one-sided spring-damper against the heightfield, with
penetration measured vertically (vertical-normal approximation).  The
tangential force opposes horizontal slip and is capped by the friction cone:
static coefficient inside the stick band, dynamic outside it.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .terrain import HeightField


@dataclass(frozen=True)
class ContactParams:
    stiffness: float = 8.0e3        # N/m
    damping: float = 80.0           # N s/m
    mu_static: float = 0.8
    mu_dynamic: float = 0.6
    stick_velocity: float = 0.05    # m/s, stick/slip threshold

    def __post_init__(self):
        if self.stiffness <= 0 or self.damping <= 0:
            raise ValueError("stiffness and damping must be positive")
        if not self.mu_static >= self.mu_dynamic >= 0:
            raise ValueError("need mu_static >= mu_dynamic >= 0")


@dataclass
class ContactState:
    """Per-foot contact results; arrays share leading batch dims + (F,)."""

    in_contact: np.ndarray       # bool
    new_contact: np.ndarray      # bool, contact began this step
    penetration: np.ndarray      # m, >= 0
    force: np.ndarray            # (..., F, 3) world force on the foot
    slip_velocity: np.ndarray    # (..., F) horizontal speed while in contact


@dataclass(frozen=True)
class ImpactEvent:
    foot: int
    velocity: np.ndarray    # (3,) world foot velocity just before contact
    speed: float


def contact_forces(
    positions: np.ndarray,
    velocities: np.ndarray,
    field: HeightField,
    params: ContactParams,
    prev_contact: np.ndarray | None = None,
    mu_static: np.ndarray | None = None,
    mu_dynamic: np.ndarray | None = None,
    tangential_slope: np.ndarray | None = None,
) -> ContactState:
    """Evaluate penalty contact for foot points.

    ``positions``/``velocities``: (..., F, 3) world foot states.
    ``mu_static``/``mu_dynamic`` optionally override the friction
    coefficients per batch element (shape broadcastable to (..., F)).

    ``tangential_slope`` (N s/m, broadcastable to (..., F)) bounds the
    friction force by slope * slip before the Coulomb cap.  A stepping
    simulator should pass the foot's effective mass / dt so the friction
    impulse can stop the slip within one step but never reverse it;
    without it the slope defaults to mu_s * N / stick_velocity (pure
    regularized Coulomb), which chatters when integrated explicitly.
    """
    positions = np.asarray(positions, dtype=float)
    velocities = np.asarray(velocities, dtype=float)
    ground = field.height_at(positions[..., 0], positions[..., 1])
    penetration = np.maximum(0.0, ground - positions[..., 2])
    in_contact = penetration > 0.0

    # spring-damper normal, never adhesive
    normal = np.maximum(
        0.0, params.stiffness * penetration - params.damping * velocities[..., 2]
    )
    normal = np.where(in_contact, normal, 0.0)

    mu_s = params.mu_static if mu_static is None else np.asarray(mu_static)
    mu_d = params.mu_dynamic if mu_dynamic is None else np.asarray(mu_dynamic)

    v_t = velocities[..., 0:2]
    slip = np.linalg.norm(v_t, axis=-1)
    slipping = slip >= params.stick_velocity
    # cone cap: mu_s inside the stick band, mu_d outside it
    cap = np.where(slipping, mu_d * normal, mu_s * normal)
    if tangential_slope is None:
        ramp = mu_s * normal * slip / params.stick_velocity
    else:
        ramp = np.asarray(tangential_slope) * slip
    mag = np.minimum(ramp, cap)
    safe = np.maximum(slip, 1e-12)
    tangential = -v_t * (mag / safe)[..., None]

    force = np.concatenate([tangential, normal[..., None]], axis=-1)
    force[~in_contact] = 0.0

    if prev_contact is None:
        new_contact = in_contact.copy()
    else:
        new_contact = in_contact & ~prev_contact
    return ContactState(
        in_contact=in_contact,
        new_contact=new_contact,
        penetration=penetration,
        force=force,
        slip_velocity=np.where(in_contact, slip, 0.0),
    )


def detect_impacts(
    previous: ContactState,
    current: ContactState,
    previous_velocities: np.ndarray,
) -> list[ImpactEvent]:
    """Edge-triggered touchdown events for a single (unbatched) foot set.

    ``previous_velocities`` are the world foot velocities of the step before
    contact, (F, 3).
    """
    events = []
    flags = current.in_contact & ~previous.in_contact
    for foot in np.flatnonzero(flags):
        vel = np.asarray(previous_velocities)[foot]
        events.append(ImpactEvent(foot=int(foot), velocity=vel, speed=float(np.linalg.norm(vel))))
    return events
