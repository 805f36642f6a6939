"""Dynamics oracles: closed forms, finite differences, and consistency."""

import numpy as np
import pytest

from gravsim import dynamics as dyn
from gravsim.robot import GeneralizedState, GravityEnv
from gravsim.rotations import quat_from_rotvec, quat_mul, quat_normalize

from conftest import double_pendulum_model, make_state, pendulum_model, point_mass_model

EARTH = GravityEnv(9.81)


def tangent_perturb(q, direction, eps):
    """Move a configuration along a tangent direction (quaternion on the left)."""
    q2 = q.copy()
    q2[0:3] += direction[0:3] * eps
    q2[3:7] = quat_normalize(
        quat_mul(quat_from_rotvec(direction[3:6] * eps), q[3:7])
    )
    q2[7:] += direction[6:] * eps
    return q2


class TestMassMatrix:
    def test_velocity_independent(self, quadruped):
        rng = np.random.default_rng(0)
        s1 = make_state(quadruped, rng)
        s2 = GeneralizedState(q=s1.q.copy(), v=rng.normal(size=quadruped.nv))
        m1 = dyn.mass_matrix(quadruped, s1)
        m2 = dyn.mass_matrix(quadruped, s2)
        np.testing.assert_array_equal(m1, m2)

    def test_symmetric(self, quadruped):
        rng = np.random.default_rng(1)
        for _ in range(10):
            M = dyn.mass_matrix(quadruped, make_state(quadruped, rng))
            assert np.abs(M - M.T).max() < 1e-9

    def test_positive_definite(self, quadruped):
        rng = np.random.default_rng(2)
        for _ in range(10):
            M = dyn.mass_matrix(quadruped, make_state(quadruped, rng))
            assert np.linalg.eigvalsh(M).min() > 0

    def test_point_mass_translation_block(self):
        model = point_mass_model(mass=3.25)
        state = model.default_state()
        M = dyn.mass_matrix(model, state)
        np.testing.assert_allclose(M[0:3, 0:3], 3.25 * np.eye(3), atol=1e-12)

    def test_matches_jacobian_aggregation(self, quadruped):
        # independent construction: M = sum m Jv^T Jv + Jw^T Iw Jw
        rng = np.random.default_rng(3)
        state = make_state(quadruped, rng)
        kin = dyn.compute_kinematics(quadruped, state.q)
        jv, jw = dyn.com_jacobians(quadruped, kin)
        iw = dyn.world_inertia(quadruped, kin)
        m = quadruped.masses
        M_ref = np.einsum("lak,laj->kj", jv * m[:, None, None], jv)
        M_ref += np.einsum("lak,laj->kj", jw, iw @ jw)
        M_ref[np.arange(6, 18), np.arange(6, 18)] += quadruped.armature
        np.testing.assert_allclose(dyn.mass_matrix(quadruped, state), M_ref,
                                   atol=1e-11)


class TestBiasForces:
    def test_zero_velocity(self, quadruped):
        rng = np.random.default_rng(4)
        state = make_state(quadruped, rng, with_velocity=False)
        np.testing.assert_array_equal(dyn.bias_forces(quadruped, state),
                                      np.zeros(quadruped.nv))

    def test_double_pendulum_closed_form(self):
        model = double_pendulum_model()
        m1, m2, l1, l2 = 1.3, 0.7, 0.4, 0.6
        rng = np.random.default_rng(5)
        for _ in range(20):
            th = rng.uniform(-2.5, 2.5, 2)
            thd = rng.uniform(-4, 4, 2)
            q = np.zeros(model.nq)
            q[3:7] = (0, 0, 0, 1)
            q[7:] = th
            v = np.zeros(model.nv)
            v[6:] = thd
            state = GeneralizedState(q, v)
            s2 = np.sin(th[1])
            b_expect = np.array([
                -m2 * l1 * l2 * s2 * (2 * thd[0] * thd[1] + thd[1] ** 2),
                m2 * l1 * l2 * s2 * thd[0] ** 2,
            ])
            b = dyn.bias_forces(model, state)[6:]
            np.testing.assert_allclose(b, b_expect, atol=1e-8)

    def test_power_balance_along_trajectory(self):
        # undamped pendulum: d/dt kinetic energy = v . (tau - g)
        model = pendulum_model()
        env = EARTH
        q = np.zeros(model.nq)
        q[3:7] = (0, 0, 0, 1)
        q[7] = 1.1
        state = GeneralizedState(q, np.zeros(model.nv))
        dt = 1e-4
        tau = np.zeros(model.nv)
        for _ in range(200):
            ke0 = dyn.kinetic_energy(model, state)
            g = dyn.gravity_forces(model, state, env)
            acc = dyn.forward_dynamics(model, state, tau, None, env, base_fixed=True)
            state = dyn.integrate(state, acc, dt)
            ke1 = dyn.kinetic_energy(model, state)
            power = float(state.v @ (tau - g))
            assert abs((ke1 - ke0) / dt - power) < 2e-2 + 0.05 * abs(power)


class TestGravityForces:
    def test_zero_gravity(self, quadruped):
        state = make_state(quadruped, np.random.default_rng(6))
        g = dyn.gravity_forces(quadruped, state, GravityEnv(1e-12))
        assert np.abs(g).max() < 1e-9

    def test_linear_in_g(self, quadruped):
        state = make_state(quadruped, np.random.default_rng(7))
        g_earth = dyn.gravity_forces(quadruped, state, GravityEnv(9.81))
        g_mars = dyn.gravity_forces(quadruped, state, GravityEnv(3.73))
        np.testing.assert_allclose(g_mars, (3.73 / 9.81) * g_earth, atol=1e-10)

    def test_gradient_of_potential(self, quadruped):
        rng = np.random.default_rng(8)
        state = make_state(quadruped, rng)
        g = dyn.gravity_forces(quadruped, state, EARTH)
        eps = 1e-6
        for _ in range(10):
            direction = rng.normal(size=quadruped.nv)
            vp = dyn.potential_energy(
                quadruped, GeneralizedState(tangent_perturb(state.q, direction, eps),
                                            state.v), EARTH)
            vm = dyn.potential_energy(
                quadruped, GeneralizedState(tangent_perturb(state.q, direction, -eps),
                                            state.v), EARTH)
            fd = (vp - vm) / (2 * eps)
            analytic = float(g @ direction)
            assert abs(fd - analytic) <= 1e-5 * max(1.0, abs(analytic))


class TestContactJacobian:
    def test_invalid_foot_index(self, quadruped):
        state = make_state(quadruped, np.random.default_rng(9))
        with pytest.raises(IndexError):
            dyn.contact_jacobian(quadruped, state, 4)

    def test_rigid_translation(self, quadruped):
        state = make_state(quadruped, np.random.default_rng(10), with_velocity=False)
        v = np.zeros(quadruped.nv)
        v[0:3] = (0.3, -0.2, 0.8)
        for foot in range(4):
            jc = dyn.contact_jacobian(quadruped, state, foot)
            np.testing.assert_allclose(jc @ v, v[0:3], atol=1e-12)

    def test_finite_difference_velocity(self, quadruped):
        rng = np.random.default_rng(11)
        state = make_state(quadruped, rng)
        dt = 1e-7
        kin0 = dyn.compute_kinematics(quadruped, state.q)
        q1 = tangent_perturb(state.q, state.v, dt)
        kin1 = dyn.compute_kinematics(quadruped, q1)
        p0 = dyn.foot_points(quadruped, kin0)
        p1 = dyn.foot_points(quadruped, kin1)
        fd_vel = (p1 - p0) / dt
        for foot in range(4):
            jc = dyn.contact_jacobian(quadruped, state, foot)
            np.testing.assert_allclose(jc @ state.v, fd_vel[foot], atol=1e-5)

    def test_virtual_work_duality(self, quadruped):
        rng = np.random.default_rng(12)
        state = make_state(quadruped, rng)
        for foot in range(4):
            force = rng.normal(size=3) * 30
            jc = dyn.contact_jacobian(quadruped, state, foot)
            generalized = jc.T @ force
            for _ in range(5):
                v = rng.normal(size=quadruped.nv)
                assert abs(generalized @ v - force @ (jc @ v)) < 1e-9


class TestForwardDynamics:
    def test_free_fall(self, quadruped):
        state = make_state(quadruped, np.random.default_rng(13),
                           with_velocity=False)
        acc = dyn.forward_dynamics(quadruped, state, np.zeros(quadruped.nv),
                                   None, EARTH)
        np.testing.assert_allclose(acc[0:3], [0, 0, -9.81], atol=1e-9)
        np.testing.assert_allclose(acc[3:], 0, atol=1e-9)

    def test_inverse_dynamics_round_trip(self, quadruped):
        rng = np.random.default_rng(14)
        env = GravityEnv(3.73)
        for _ in range(10):
            state = make_state(quadruped, rng)
            qdd_target = rng.normal(0, 2, quadruped.nv)
            forces = rng.normal(0, 10, (4, 3))
            kin = dyn.compute_kinematics(quadruped, state.q)
            jc = dyn.foot_jacobians(quadruped, kin)
            tau = (
                dyn.mass_matrix(quadruped, state) @ qdd_target
                + dyn.bias_forces(quadruped, state)
                + dyn.gravity_forces(quadruped, state, env)
                - np.einsum("fak,fa->k", jc, forces)
            )
            qdd = dyn.forward_dynamics(quadruped, state, tau, forces, env)
            np.testing.assert_allclose(qdd, qdd_target, atol=1e-8)

    def test_passive_pendulum_closed_form(self):
        model = pendulum_model(mass=1.2, length=0.7)
        rng = np.random.default_rng(15)
        for _ in range(10):
            theta = rng.uniform(-3, 3)
            q = np.zeros(model.nq)
            q[3:7] = (0, 0, 0, 1)
            q[7] = theta
            state = GeneralizedState(q, np.zeros(model.nv))
            acc = dyn.forward_dynamics(model, state, np.zeros(model.nv), None,
                                       EARTH, base_fixed=True)
            assert abs(acc[6] - (-(9.81 / 0.7) * np.sin(theta))) < 1e-8

    def test_non_finite_rejected(self, quadruped):
        state = make_state(quadruped, np.random.default_rng(16))
        tau = np.zeros(quadruped.nv)
        tau[7] = np.nan
        with pytest.raises(dyn.DynamicsError):
            dyn.forward_dynamics(quadruped, state, tau, None, EARTH)

    def test_ballistic_com_trajectory(self, quadruped):
        rng = np.random.default_rng(17)
        state = make_state(quadruped, rng)
        dt = 1e-3
        kin = dyn.compute_kinematics(quadruped, state.q)
        m = quadruped.masses
        com0 = (kin.com * m[:, None]).sum(0) / m.sum()
        jv, _ = dyn.com_jacobians(quadruped, kin)
        com_vel0 = np.einsum("lak,k,l->a", jv, state.v, m) / m.sum()
        steps = 200
        for _ in range(steps):
            acc = dyn.forward_dynamics(quadruped, state, np.zeros(quadruped.nv),
                                       None, EARTH)
            state = dyn.integrate(state, acc, dt)
        t = steps * dt
        kin = dyn.compute_kinematics(quadruped, state.q)
        com1 = (kin.com * m[:, None]).sum(0) / m.sum()
        expected = com0 + com_vel0 * t + 0.5 * np.array([0, 0, -9.81]) * t * t
        np.testing.assert_allclose(com1, expected, atol=5e-3)


class TestIntegrate:
    def test_rest_stays(self, quadruped):
        state = make_state(quadruped, None)
        out = dyn.integrate(state, np.zeros(quadruped.nv), 0.005)
        np.testing.assert_allclose(out.q, state.q, atol=1e-15)

    def test_constant_acceleration_kinematics(self):
        model = point_mass_model()
        state = model.default_state(base_pos=(0, 0, 0))
        a = np.zeros(model.nv)
        a[0] = 2.0
        dt = 1e-3
        steps = 1000
        for _ in range(steps):
            state = dyn.integrate(state, a, dt)
        t = steps * dt
        # semi-implicit Euler overshoots by a*t*dt/2, one-step error bound
        assert abs(state.v[0] - 2.0 * t) < 1e-12
        assert abs(state.q[0] - 0.5 * 2.0 * t**2) < 2.0 * t * dt

    def test_quaternion_norm_preserved(self, quadruped):
        rng = np.random.default_rng(18)
        state = make_state(quadruped, rng)
        for _ in range(100):
            acc = rng.normal(size=quadruped.nv)
            state = dyn.integrate(state, acc, 0.005)
            assert abs(np.linalg.norm(state.base_quat) - 1.0) < 1e-9

    def test_pendulum_energy_drift(self):
        # 10 s passive swing at the physics timestep, undamped model; the
        # semi-implicit integrator oscillates around the true energy, so
        # drift is the change of the window-averaged energy over the run
        model = pendulum_model()
        env = EARTH
        q = np.zeros(model.nq)
        q[3:7] = (0, 0, 0, 1)
        q[7] = 1.2
        state = GeneralizedState(q, np.zeros(model.nv))
        scale = abs(9.81 * 1.0 * 0.5 * (1 - np.cos(1.2)))  # swing energy scale
        energies = []
        for _ in range(2000):  # 10 s at 5 ms
            acc = dyn.forward_dynamics(model, state, np.zeros(model.nv), None,
                                       env, base_fixed=True)
            state = dyn.integrate(state, acc, 0.005)
            energies.append(float(dyn.kinetic_energy(model, state)
                                  + dyn.potential_energy(model, state, env)))
        first = np.mean(energies[:285])   # one swing period ~ 1.42 s
        last = np.mean(energies[-285:])
        assert abs(last - first) / scale < 0.01

    def test_rejects_bad_dt(self, quadruped):
        state = make_state(quadruped, None)
        with pytest.raises(ValueError):
            dyn.integrate(state, np.zeros(quadruped.nv), 0.0)


class TestLegGravityCompensation:
    def test_zero_gravity(self, quadruped):
        state = make_state(quadruped, np.random.default_rng(19))
        ff = dyn.leg_gravity_compensation(quadruped, state, GravityEnv(1e-12))
        assert np.abs(ff).max() < 1e-9

    def test_linear_in_g(self, quadruped):
        state = make_state(quadruped, np.random.default_rng(20))
        f1 = dyn.leg_gravity_compensation(quadruped, state, GravityEnv(9.81))
        f2 = dyn.leg_gravity_compensation(quadruped, state, GravityEnv(1.62))
        np.testing.assert_allclose(f2, (1.62 / 9.81) * f1, atol=1e-12)

    def test_static_equilibrium_base_clamped(self, quadruped):
        state = quadruped.default_state()
        env = EARTH
        ff = dyn.leg_gravity_compensation(quadruped, state, env)
        tau = np.zeros(quadruped.nv)
        tau[6:] = ff
        # independent check through the reduced joint-space system
        M = dyn.mass_matrix(quadruped, state)[6:, 6:]
        rhs = tau[6:] - dyn.bias_forces(quadruped, state)[6:] \
            - dyn.gravity_forces(quadruped, state, env)[6:]
        qdd = np.linalg.solve(M, rhs)
        assert np.abs(qdd).max() < 1e-6
        acc = dyn.forward_dynamics(quadruped, state, tau, None, env, base_fixed=True)
        assert np.abs(acc[6:]).max() < 1e-6


class TestGravityLinearityAcrossDynamics:
    def test_static_support_torques_linear(self, quadruped):
        # contact forces that hold the robot statically scale exactly with g
        state = quadruped.default_state()
        for g1, g2 in [(9.81, 1.62), (9.81, 19.62)]:
            f1 = dyn.gravity_forces(quadruped, state, GravityEnv(g1))
            f2 = dyn.gravity_forces(quadruped, state, GravityEnv(g2))
            np.testing.assert_allclose(f2 * g1, f1 * g2, rtol=1e-12, atol=1e-12)
