"""Mirror symmetries of the reference quadruped as signed permutations.

The robot is symmetric about its xz-plane (left-right mirror) and yz-plane
(front-back mirror), so observations, actions and states map onto each
other under four transforms: identity, left-right, front-back, and their
composition (a half-turn about z).  Because every leg chain is identical in
its own outward-yawed frame, the joint maps are plain signed permutations:
mirrored legs swap and hip-yaw angles flip sign under a single mirror.

Conventions: leg order (fl, fr, hl, hr), joints (yaw, pitch, knee) per leg;
body-frame true vectors v and pseudo-vectors w transform as v -> S v and
w -> -S w for a mirror S, both -> (-x, -y, z) under the half-turn.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .observations import ACTOR_DIM, ACTOR_SLICES, CRITIC_DIM, CRITIC_SLICES, HISTORY_LEN

LABELS = ("identity", "left-right", "front-back", "both")

# leg index permutations (fl, fr, hl, hr)
_LEG_PERM = {
    "identity": (0, 1, 2, 3),
    "left-right": (1, 0, 3, 2),
    "front-back": (2, 3, 0, 1),
    "both": (3, 2, 1, 0),
}
# per-leg joint sign patterns (yaw, pitch, knee)
_JOINT_SIGN = {
    "identity": (1.0, 1.0, 1.0),
    "left-right": (-1.0, 1.0, 1.0),
    "front-back": (-1.0, 1.0, 1.0),
    "both": (1.0, 1.0, 1.0),
}
# body-frame component signs for true vectors and pseudo-vectors
_VEC_SIGN = {
    "identity": (1.0, 1.0, 1.0),
    "left-right": (1.0, -1.0, 1.0),
    "front-back": (-1.0, 1.0, 1.0),
    "both": (-1.0, -1.0, 1.0),
}
_PSEUDO_SIGN = {
    "identity": (1.0, 1.0, 1.0),
    "left-right": (-1.0, 1.0, -1.0),
    "front-back": (1.0, -1.0, -1.0),
    "both": (-1.0, -1.0, 1.0),
}
# command component signs per task
_COMMAND_SIGN = {
    "locomotion": {
        "identity": (1.0, 1.0, 1.0),
        "left-right": (1.0, -1.0, -1.0),
        "front-back": (-1.0, 1.0, -1.0),
        "both": (-1.0, -1.0, 1.0),
    },
    "base_pose": {
        "identity": (1.0, 1.0, 1.0),
        "left-right": (1.0, 1.0, -1.0),
        "front-back": (1.0, -1.0, -1.0),
        "both": (1.0, -1.0, 1.0),
    },
}
# quaternion vector-part signs under R -> S R S (scalar part unchanged)
_QUAT_SIGN = {
    "identity": (1.0, 1.0, 1.0),
    "left-right": (-1.0, 1.0, -1.0),
    "front-back": (1.0, -1.0, -1.0),
    "both": (-1.0, -1.0, 1.0),
}


@dataclass(frozen=True)
class SymmetryTransform:
    """Signed index permutations: out[i] = sign[i] * x[perm[i]]."""

    label: str
    actor_perm: np.ndarray
    actor_sign: np.ndarray
    critic_perm: np.ndarray
    critic_sign: np.ndarray
    action_perm: np.ndarray
    action_sign: np.ndarray
    command_sign: np.ndarray

    def apply_actor(self, obs: np.ndarray) -> np.ndarray:
        return obs[..., self.actor_perm] * self.actor_sign

    def apply_critic(self, obs: np.ndarray) -> np.ndarray:
        return obs[..., self.critic_perm] * self.critic_sign

    def apply_action(self, action: np.ndarray) -> np.ndarray:
        return action[..., self.action_perm] * self.action_sign

    def apply_command(self, command: np.ndarray) -> np.ndarray:
        return command * self.command_sign

    def mirror_state(self, q: np.ndarray, v: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Mirror a generalized state (for trajectory-equivalence checks)."""
        vec = np.asarray(_VEC_SIGN[self.label])
        pseudo = np.asarray(_PSEUDO_SIGN[self.label])
        quat_sign = np.asarray(_QUAT_SIGN[self.label])
        q2 = np.array(q, copy=True)
        v2 = np.array(v, copy=True)
        q2[..., 0:3] = q[..., 0:3] * vec
        q2[..., 3:6] = q[..., 3:6] * quat_sign
        q2[..., 7:] = q[..., 7:][..., self.action_perm] * self.action_sign
        v2[..., 0:3] = v[..., 0:3] * vec
        v2[..., 3:6] = v[..., 3:6] * pseudo
        v2[..., 6:] = v[..., 6:][..., self.action_perm] * self.action_sign
        return q2, v2


def _joint_map(label: str) -> tuple[np.ndarray, np.ndarray]:
    perm = np.zeros(12, dtype=int)
    sign = np.zeros(12)
    legs = _LEG_PERM[label]
    jsign = _JOINT_SIGN[label]
    for leg in range(4):
        for k in range(3):
            perm[3 * leg + k] = 3 * legs[leg] + k
            sign[3 * leg + k] = jsign[k]
    return perm, sign


def _triple(perm, sign, sl: slice, component_sign) -> None:
    n = (sl.stop - sl.start) // 3
    for rep in range(n):
        base = sl.start + 3 * rep
        for axis in range(3):
            perm[base + axis] = base + axis
            sign[base + axis] = component_sign[axis]


def symmetry_transforms(task: str = "locomotion") -> tuple[SymmetryTransform, ...]:
    """The four mirror transforms for one task's command convention."""
    if task not in _COMMAND_SIGN:
        raise ValueError(f"unknown task {task!r}")
    out = []
    for label in LABELS:
        jperm, jsign = _joint_map(label)
        cmd_sign = np.asarray(_COMMAND_SIGN[task][label])
        vec = _VEC_SIGN[label]
        pseudo = _PSEUDO_SIGN[label]

        a_perm = np.arange(ACTOR_DIM)
        a_sign = np.ones(ACTOR_DIM)
        a_sign[ACTOR_SLICES["command"]] = cmd_sign
        _triple(a_perm, a_sign, ACTOR_SLICES["ang_vel_history"], pseudo)
        assert (ACTOR_SLICES["ang_vel_history"].stop - ACTOR_SLICES["ang_vel_history"].start) == 3 * HISTORY_LEN
        a_sign[ACTOR_SLICES["proj_gravity"]] = vec
        for name in ("joint_pos", "joint_vel", "prev_action"):
            sl = ACTOR_SLICES[name]
            a_perm[sl] = sl.start + jperm
            a_sign[sl] = jsign

        c_perm = np.arange(CRITIC_DIM)
        c_sign = np.ones(CRITIC_DIM)
        c_sign[CRITIC_SLICES["command"]] = cmd_sign
        tw = CRITIC_SLICES["base_twist"]
        c_sign[tw.start:tw.start + 3] = vec
        c_sign[tw.start + 3:tw.stop] = pseudo
        c_sign[CRITIC_SLICES["proj_gravity"]] = vec
        for name in ("joint_pos", "joint_vel", "prev_action"):
            sl = CRITIC_SLICES[name]
            c_perm[sl] = sl.start + jperm
            c_sign[sl] = jsign

        out.append(
            SymmetryTransform(
                label=label,
                actor_perm=a_perm,
                actor_sign=a_sign,
                critic_perm=c_perm,
                critic_sign=c_sign,
                action_perm=jperm,
                action_sign=jsign,
                command_sign=cmd_sign,
            )
        )
    return tuple(out)
