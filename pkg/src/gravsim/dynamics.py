"""Floating-base rigid-body kinematics and dynamics.

The equation of motion solved here is

    tau = M(q) qdd + b(q, qd) + g(q) - J_c(q)^T F_c

with generalized coordinates [base position, base quaternion, joint angles]
and velocities [world-frame base linear, world-frame base angular, joint
rates].  The mass matrix comes from composite-rigid-body accumulation over
the tree, gravity and Coriolis terms from Newton-Euler subtree reductions,
so everything is exact arithmetic (no internal finite differences) and
broadcasts over leading batch dimensions; a few hundred robots step in
lockstep at interactive rates.

``b`` includes the configured per-joint viscous damping in addition to the
Coriolis/centrifugal terms; damping is zero unless the model sets it, so the
ideal-model identities (b(q, 0) = 0, energy conservation) hold for undamped
models.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .robot import GeneralizedState, GravityEnv, RobotModel
from .rotations import cross, quat_from_rotvec, quat_mul, quat_normalize, quat_to_rot, skew


class DynamicsError(ValueError):
    """Non-finite inputs or ill-posed dynamics."""


_EYE3 = np.eye(3)
_ARRAY_CACHE: dict[int, "_ModelArrays"] = {}


@dataclass(frozen=True)
class _ModelArrays:
    """Static per-model arrays used by the batched kernels."""

    parent: np.ndarray        # (J,) parent link of joint j
    link_parent: np.ndarray   # (L,) parent link of link l (base: -1)
    axis: np.ndarray          # (J, 3)
    axis_skew: np.ndarray     # (J, 3, 3)
    axis_outer: np.ndarray    # (J, 3, 3)
    origin_xyz: np.ndarray    # (J, 3)
    origin_rot: np.ndarray    # (J, 3, 3)
    com: np.ndarray           # (L, 3)
    inertia: np.ndarray       # (L, 3, 3)
    masses: np.ndarray        # (L,)
    anc_mask: np.ndarray      # (L, J) joint j moves link l
    foot_link: np.ndarray     # (F,)
    foot_offset: np.ndarray   # (F, 3)
    foot_anc_mask: np.ndarray  # (F, J)
    pair_j: np.ndarray        # (P,) joint-joint coupling pairs, k ancestor of j
    pair_k: np.ndarray        # (P,)


def _arrays(model: RobotModel) -> _ModelArrays:
    cached = _ARRAY_CACHE.get(id(model))
    if cached is not None:
        return cached
    J = model.n_joints
    L = model.n_links
    axis = np.stack([j.axis for j in model.joints]) if J else np.zeros((0, 3))
    anc = np.zeros((L, J), dtype=bool)
    for l in range(L):
        for j in model.ancestors[l]:
            anc[l, j] = True
    foot_link = np.array([f[0] for f in model.feet], dtype=int)
    pairs = [(j, k) for j in range(J) for k in model.ancestors[j + 1]]
    arr = _ModelArrays(
        parent=np.array([j.parent for j in model.joints], dtype=int),
        link_parent=np.array([-1] + [j.parent for j in model.joints], dtype=int),
        axis=axis,
        axis_skew=skew(axis),
        axis_outer=axis[:, :, None] * axis[:, None, :],
        origin_xyz=np.stack([j.origin_xyz for j in model.joints]) if J else np.zeros((0, 3)),
        origin_rot=np.stack([j.origin_rot for j in model.joints]) if J else np.zeros((0, 3, 3)),
        com=np.stack([l.com for l in model.links]),
        inertia=np.stack([l.inertia for l in model.links]),
        masses=model.masses,
        anc_mask=anc,
        foot_link=foot_link,
        foot_offset=(np.stack([f[1] for f in model.feet])
                     if model.feet else np.zeros((0, 3))),
        foot_anc_mask=anc[foot_link] if len(foot_link) else np.zeros((0, J), dtype=bool),
        pair_j=np.array([p[0] for p in pairs], dtype=int),
        pair_k=np.array([p[1] for p in pairs], dtype=int),
    )
    _ARRAY_CACHE[id(model)] = arr
    return arr


@dataclass
class Kinematics:
    """World-frame frames and points for one batch of configurations."""

    link_rot: np.ndarray      # (..., L, 3, 3)
    link_pos: np.ndarray      # (..., L, 3) link frame origins
    com: np.ndarray           # (..., L, 3) link COM positions
    joint_axis: np.ndarray    # (..., J, 3) world joint axes
    joint_anchor: np.ndarray  # (..., J, 3) world joint anchor points


def compute_kinematics(model: RobotModel, q: np.ndarray) -> Kinematics:
    arr = _arrays(model)
    batch = q.shape[:-1]
    L, J = model.n_links, model.n_joints
    rot = np.zeros(batch + (L, 3, 3))
    pos = np.zeros(batch + (L, 3))
    axis_w = np.zeros(batch + (J, 3))
    anchor = np.zeros(batch + (J, 3))

    rot[..., 0, :, :] = quat_to_rot(q[..., 3:7])
    pos[..., 0, :] = q[..., 0:3]
    theta = q[..., 7:]
    c = np.cos(theta)
    s = np.sin(theta)
    for j in range(J):
        p = arr.parent[j]
        r_parent = rot[..., p, :, :]
        r_joint = r_parent @ arr.origin_rot[j]
        anchor[..., j, :] = pos[..., p, :] + (r_parent @ arr.origin_xyz[j])
        axis_w[..., j, :] = r_joint @ arr.axis[j]
        # Rodrigues about the fixed local axis
        r_local = (
            c[..., j, None, None] * _EYE3
            + s[..., j, None, None] * arr.axis_skew[j]
            + (1.0 - c[..., j, None, None]) * arr.axis_outer[j]
        )
        rot[..., j + 1, :, :] = r_joint @ r_local
        pos[..., j + 1, :] = anchor[..., j, :]

    com = pos + (rot @ arr.com[:, :, None])[..., 0]
    return Kinematics(rot, pos, com, axis_w, anchor)


def _jacobian_blocks(points, base_pos, axis_w, anchors, anc_mask):
    """[I | -skew(p - base) | axis_j x (p - anchor_j) masked], (..., P, 3, nv)."""
    batch_p = points.shape[:-1]
    nj = anc_mask.shape[-1]
    out = np.zeros(batch_p + (3, 6 + nj))
    out[..., 0, 0] = 1.0
    out[..., 1, 1] = 1.0
    out[..., 2, 2] = 1.0
    out[..., :, 3:6] = -skew(points - base_pos[..., None, :])
    if nj:
        diff = points[..., :, None, :] - anchors[..., None, :, :]
        cols = cross(axis_w[..., None, :, :], diff)
        cols *= anc_mask[..., None]
        out[..., :, 6:] = np.swapaxes(cols, -1, -2)
    return out


def com_jacobians(model: RobotModel, kin: Kinematics) -> tuple[np.ndarray, np.ndarray]:
    """Linear and angular COM Jacobians, each (..., L, 3, nv)."""
    arr = _arrays(model)
    L, J = model.n_links, model.n_joints
    batch = kin.com.shape[:-2]
    jv = _jacobian_blocks(kin.com, kin.link_pos[..., 0, :], kin.joint_axis,
                          kin.joint_anchor, arr.anc_mask)
    jw = np.zeros(batch + (L, 3, model.nv))
    jw[..., 0, 3] = 1.0
    jw[..., 1, 4] = 1.0
    jw[..., 2, 5] = 1.0
    if J:
        cols = kin.joint_axis[..., None, :, :] * arr.anc_mask[..., None]
        jw[..., :, 6:] = np.swapaxes(cols, -1, -2)
    return jv, jw


def world_inertia(model: RobotModel, kin: Kinematics) -> np.ndarray:
    """Per-link rotational inertia about the COM in world axes, (..., L, 3, 3)."""
    arr = _arrays(model)
    return kin.link_rot @ arr.inertia @ np.swapaxes(kin.link_rot, -1, -2)


def _subtree_reduce(model: RobotModel, kin: Kinematics, f_com: np.ndarray,
                    t_com: np.ndarray | None) -> np.ndarray:
    """Generalized force of per-link COM forces and couples, (..., nv).

    Equivalent to sum_l Jv_l^T f_l + Jw_l^T t_l, evaluated by accumulating
    subtree force sums and moments leaf-to-root instead of building the
    Jacobians.
    """
    arr = _arrays(model)
    L = model.n_links
    batch = f_com.shape[:-2]
    out = np.zeros(batch + (model.nv,))
    mom0 = cross(kin.com, f_com)
    if t_com is not None:
        mom0 = mom0 + t_com
    out[..., 0:3] = f_com.sum(axis=-2)
    base_pos = kin.link_pos[..., 0, :]
    out[..., 3:6] = mom0.sum(axis=-2) - cross(base_pos, out[..., 0:3])
    if model.n_joints == 0:
        return out
    f_sub = f_com.copy()
    mom_sub = mom0.copy()
    for l in range(L - 1, 0, -1):
        p = arr.link_parent[l]
        f_sub[..., p, :] += f_sub[..., l, :]
        mom_sub[..., p, :] += mom_sub[..., l, :]
    # joint j's subtree is link j+1's subtree; moment taken about the anchor
    f_j = f_sub[..., 1:, :]
    mom_j = mom_sub[..., 1:, :] - cross(kin.joint_anchor, f_j)
    out[..., 6:] = np.sum(kin.joint_axis * mom_j, axis=-1)
    return out


def _shift_inertia(inertia, h, mass, s):
    """Move the reference point of a composite inertia by s (new = old + s)."""
    hs = np.sum(h * s, axis=-1)[..., None, None]
    outer_ss = s[..., :, None] * s[..., None, :]
    outer_hs = h[..., :, None] * s[..., None, :]
    ss = np.sum(s * s, axis=-1)[..., None, None]
    return (
        inertia
        + mass[..., None, None] * (ss * _EYE3 - outer_ss)
        + outer_hs
        + np.swapaxes(outer_hs, -1, -2)
        - 2.0 * hs * _EYE3
    )


def mass_matrix(
    model: RobotModel,
    state: GeneralizedState,
    kin: Kinematics | None = None,
    masses: np.ndarray | None = None,
    inertia_w: np.ndarray | None = None,
) -> np.ndarray:
    """Joint-space inertia matrix M(q), (..., nv, nv), symmetric PD.

    Composite-rigid-body accumulation: each joint's column is the wrench a
    unit joint acceleration produces through its subtree's composite
    inertia.  ``masses`` optionally overrides link masses per batch element,
    shape (..., L), used for payload randomization.
    """
    arr = _arrays(model)
    if kin is None:
        kin = compute_kinematics(model, state.q)
    m = np.broadcast_to(arr.masses if masses is None else np.asarray(masses),
                        kin.com.shape[:-1])
    iw = world_inertia(model, kin) if inertia_w is None else inertia_w
    batch = kin.com.shape[:-2]
    L, J, nv = model.n_links, model.n_joints, model.nv
    M = np.zeros(batch + (nv, nv))

    # per-link composite about the link origin, accumulated leaf to root
    origin = kin.link_pos
    d = kin.com - origin
    mc = m.copy()
    h = m[..., None] * d
    dd = np.sum(d * d, axis=-1)[..., None, None]
    ic = iw + m[..., None, None] * (dd * _EYE3 - d[..., :, None] * d[..., None, :])
    for l in range(L - 1, 0, -1):
        p = arr.link_parent[l]
        s = origin[..., p, :] - origin[..., l, :]
        ic[..., p, :, :] += _shift_inertia(
            ic[..., l, :, :], h[..., l, :], mc[..., l], s
        )
        h[..., p, :] += h[..., l, :] - mc[..., l, None] * s
        mc[..., p] += mc[..., l]

    # base block
    base_pos = origin[..., 0, :]
    m_tot = mc[..., 0]
    M[..., 0, 0] = m_tot
    M[..., 1, 1] = m_tot
    M[..., 2, 2] = m_tot
    sk_h = skew(h[..., 0, :])
    M[..., 0:3, 3:6] = -sk_h
    M[..., 3:6, 0:3] = np.swapaxes(-sk_h, -1, -2)
    M[..., 3:6, 3:6] = ic[..., 0, :, :]

    # joint columns: subtree of joint j is link j+1 (anchored at the joint);
    # a unit joint acceleration produces the wrench (f_col, n_col) there
    if J:
        axis = kin.joint_axis
        anchor = kin.joint_anchor
        f_col = cross(axis, h[..., 1:, :])                       # (..., J, 3)
        n_col = (ic[..., 1:, :, :] @ axis[..., None])[..., 0]    # (..., J, 3)
        base_rows = n_col + cross(anchor - base_pos[..., None, :], f_col)
        M[..., 0:3, 6:] = np.swapaxes(f_col, -1, -2)
        M[..., 3:6, 6:] = np.swapaxes(base_rows, -1, -2)
        M[..., 6:, 0:3] = f_col
        M[..., 6:, 3:6] = base_rows
        pj, pk = arr.pair_j, arr.pair_k
        lever = anchor[..., pj, :] - anchor[..., pk, :]
        entries = np.sum(
            axis[..., pk, :] * (n_col[..., pj, :] + cross(lever, f_col[..., pj, :])),
            axis=-1,
        )
        M[..., 6 + pk, 6 + pj] = entries
        M[..., 6 + pj, 6 + pk] = entries
        idx = np.arange(6, nv)
        M[..., idx, idx] += model.armature
    return M


def _velocity_products(model, kin, v):
    """Per-link angular velocity, vp angular acceleration and COM vp linear
    acceleration (accelerations with qdd = 0)."""
    arr = _arrays(model)
    batch = v.shape[:-1]
    L = model.n_links
    omega = np.zeros(batch + (L, 3))
    alpha = np.zeros(batch + (L, 3))
    a_ref = np.zeros(batch + (L, 3))
    omega[..., 0, :] = v[..., 3:6]
    for j in range(model.n_joints):
        p = arr.parent[j]
        r = kin.joint_anchor[..., j, :] - kin.link_pos[..., p, :]
        wp = omega[..., p, :]
        a_ref[..., j + 1, :] = (
            a_ref[..., p, :]
            + cross(alpha[..., p, :], r)
            + cross(wp, cross(wp, r))
        )
        qd = v[..., 6 + j, None]
        ax = kin.joint_axis[..., j, :]
        omega[..., j + 1, :] = wp + ax * qd
        alpha[..., j + 1, :] = alpha[..., p, :] + cross(wp, ax) * qd
    rc = kin.com - kin.link_pos
    a_com = a_ref + cross(alpha, rc) + cross(omega, cross(omega, rc))
    return omega, alpha, a_com


def bias_forces(
    model: RobotModel,
    state: GeneralizedState,
    kin: Kinematics | None = None,
    masses: np.ndarray | None = None,
    inertia_w: np.ndarray | None = None,
) -> np.ndarray:
    """Coriolis/centrifugal (+ viscous joint damping) generalized forces."""
    if kin is None:
        kin = compute_kinematics(model, state.q)
    arr = _arrays(model)
    m = arr.masses if masses is None else np.asarray(masses)
    iw = world_inertia(model, kin) if inertia_w is None else inertia_w
    omega, alpha, a_com = _velocity_products(model, kin, state.v)
    f = m[..., :, None] * a_com
    t = (iw @ alpha[..., None])[..., 0] + cross(omega, (iw @ omega[..., None])[..., 0])
    b = _subtree_reduce(model, kin, f, t)
    if model.n_joints:
        b[..., 6:] += model.damping * state.v[..., 6:]
    return b


def gravity_forces(
    model: RobotModel,
    state: GeneralizedState,
    env: GravityEnv,
    kin: Kinematics | None = None,
    masses: np.ndarray | None = None,
) -> np.ndarray:
    """Generalized gravity g(q) = grad of potential energy, (..., nv)."""
    if kin is None:
        kin = compute_kinematics(model, state.q)
    arr = _arrays(model)
    m = arr.masses if masses is None else np.asarray(masses)
    weight = np.broadcast_to(env.vector, kin.com.shape) * m[..., :, None]
    return -_subtree_reduce(model, kin, weight, None)


def potential_energy(model, state, env, kin=None, masses=None) -> np.ndarray:
    if kin is None:
        kin = compute_kinematics(model, state.q)
    m = _arrays(model).masses if masses is None else np.asarray(masses)
    return env.g * np.sum(m * kin.com[..., 2], axis=-1)


def kinetic_energy(model, state, kin=None, masses=None) -> np.ndarray:
    M = mass_matrix(model, state, kin=kin, masses=masses)
    return 0.5 * np.einsum("...i,...ij,...j->...", state.v, M, state.v)


def foot_points(model: RobotModel, kin: Kinematics) -> np.ndarray:
    """World positions of the model's feet, (..., F, 3)."""
    arr = _arrays(model)
    rot = kin.link_rot[..., arr.foot_link, :, :]
    return kin.link_pos[..., arr.foot_link, :] + (rot @ arr.foot_offset[:, :, None])[..., 0]


def foot_jacobians(model: RobotModel, kin: Kinematics) -> np.ndarray:
    """Contact Jacobians for every foot, (..., F, 3, nv)."""
    arr = _arrays(model)
    pts = foot_points(model, kin)
    return _jacobian_blocks(pts, kin.link_pos[..., 0, :], kin.joint_axis,
                            kin.joint_anchor, arr.foot_anc_mask)


def contact_jacobian(model: RobotModel, state: GeneralizedState, foot_index: int) -> np.ndarray:
    """World-frame linear Jacobian of one foot point, (..., 3, nv)."""
    if not 0 <= foot_index < len(model.feet):
        raise IndexError(f"foot index {foot_index} out of range 0..{len(model.feet) - 1}")
    kin = compute_kinematics(model, state.q)
    return foot_jacobians(model, kin)[..., foot_index, :, :]


def forward_dynamics(
    model: RobotModel,
    state: GeneralizedState,
    tau: np.ndarray,
    contact_forces: np.ndarray | None,
    env: GravityEnv,
    kin: Kinematics | None = None,
    masses: np.ndarray | None = None,
    base_fixed: bool = False,
) -> np.ndarray:
    """Generalized acceleration solving the equation of motion.

    ``tau`` is (..., nv): entries 0..5 are an external world wrench on the
    base (force, torque about the base origin), entries 6.. are joint
    torques.  ``contact_forces`` is (..., F, 3) world foot forces or None.
    With ``base_fixed`` the base is clamped and only the joint block is
    solved (base acceleration returned as zero).
    """
    tau = np.asarray(tau, dtype=float)
    if not (np.all(np.isfinite(tau)) and np.all(np.isfinite(state.q)) and np.all(np.isfinite(state.v))):
        raise DynamicsError("non-finite state or torque input")
    if kin is None:
        kin = compute_kinematics(model, state.q)
    iw = world_inertia(model, kin)
    M = mass_matrix(model, state, kin=kin, masses=masses, inertia_w=iw)
    rhs = (
        tau
        - bias_forces(model, state, kin=kin, masses=masses, inertia_w=iw)
        - gravity_forces(model, state, env, kin=kin, masses=masses)
    )
    if contact_forces is not None:
        jc = foot_jacobians(model, kin)
        rhs = rhs + np.einsum("...fak,...fa->...k", jc, np.asarray(contact_forces))
    if base_fixed:
        acc = np.zeros_like(rhs)
        acc[..., 6:] = np.linalg.solve(M[..., 6:, 6:], rhs[..., 6:, None])[..., 0]
        return acc
    return np.linalg.solve(M, rhs[..., None])[..., 0]


def integrate(state: GeneralizedState, acceleration: np.ndarray, dt: float) -> GeneralizedState:
    """Semi-implicit Euler step; quaternion updated by the exponential map."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    v = state.v + acceleration * dt
    q = state.q.copy()
    q[..., 0:3] += v[..., 0:3] * dt
    dq = quat_from_rotvec(v[..., 3:6] * dt)
    q[..., 3:7] = quat_normalize(quat_mul(dq, q[..., 3:7]))
    q[..., 7:] += v[..., 6:] * dt
    return GeneralizedState(q=q, v=v)


def leg_gravity_compensation(
    model: RobotModel, state: GeneralizedState, env: GravityEnv, kin: Kinematics | None = None
) -> np.ndarray:
    """Joint torques statically supporting the leg links against gravity.

    The base columns never see leg-joint motion, so the joint slice of g(q)
    contains exactly the leg-weight support torques and excludes base weight.
    """
    return gravity_forces(model, state, env, kin=kin)[..., 6:]
