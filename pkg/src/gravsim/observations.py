"""Observation assembly for the actor and critic networks.

Actor (66): command (3), base angular-velocity history over the last 8
control ticks, most recent first (24), projected gravity direction (3),
joint positions relative to default (12), joint velocities (12), previous
actions (12).

Critic (48): the angular-velocity history is replaced by the ground-truth
base twist (6) in the base frame; everything else matches the actor.

Velocity entries carry fixed scale factors so all inputs land in a similar
numeric range; the projected gravity stays a unit vector.
"""

from __future__ import annotations

import numpy as np

HISTORY_LEN = 8
ACTOR_DIM = 66
CRITIC_DIM = 48

ANG_VEL_SCALE = 0.25
LIN_VEL_SCALE = 2.0
JOINT_VEL_SCALE = 0.05

ACTOR_SLICES = {
    "command": slice(0, 3),
    "ang_vel_history": slice(3, 27),
    "proj_gravity": slice(27, 30),
    "joint_pos": slice(30, 42),
    "joint_vel": slice(42, 54),
    "prev_action": slice(54, 66),
}

CRITIC_SLICES = {
    "command": slice(0, 3),
    "base_twist": slice(3, 9),
    "proj_gravity": slice(9, 12),
    "joint_pos": slice(12, 24),
    "joint_vel": slice(24, 36),
    "prev_action": slice(36, 48),
}


def assemble_actor_obs(
    command: np.ndarray,
    ang_vel_history: np.ndarray,
    proj_gravity: np.ndarray,
    joint_pos_rel: np.ndarray,
    joint_vel: np.ndarray,
    prev_action: np.ndarray,
) -> np.ndarray:
    """Flatten actor inputs; ``ang_vel_history`` is (..., 8, 3) newest first."""
    flat_hist = ang_vel_history.reshape(ang_vel_history.shape[:-2] + (3 * HISTORY_LEN,))
    return np.concatenate(
        [
            command,
            flat_hist * ANG_VEL_SCALE,
            proj_gravity,
            joint_pos_rel,
            joint_vel * JOINT_VEL_SCALE,
            prev_action,
        ],
        axis=-1,
    )


def assemble_critic_obs(
    command: np.ndarray,
    base_lin_vel_b: np.ndarray,
    base_ang_vel_b: np.ndarray,
    proj_gravity: np.ndarray,
    joint_pos_rel: np.ndarray,
    joint_vel: np.ndarray,
    prev_action: np.ndarray,
) -> np.ndarray:
    return np.concatenate(
        [
            command,
            base_lin_vel_b * LIN_VEL_SCALE,
            base_ang_vel_b * ANG_VEL_SCALE,
            proj_gravity,
            joint_pos_rel,
            joint_vel * JOINT_VEL_SCALE,
            prev_action,
        ],
        axis=-1,
    )
