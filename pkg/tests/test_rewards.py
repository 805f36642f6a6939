"""Reward terms, gravity-based weight rescaling, curriculum."""

import numpy as np
import pytest

from gravsim.actuation import ActuatorParams, power_loss
from gravsim.rewards import (RewardSpec, RewardTerm, StepContext,
                             curriculum_weight, eval_reward, gravity_factor,
                             scale_weights)


def make_ctx(**overrides) -> StepContext:
    base = dict(
        command=np.zeros(3),
        base_lin_vel=np.zeros(3),
        base_ang_vel=np.zeros(3),
        joint_torque=np.zeros(12),
        joint_vel=np.zeros(12),
        joint_acc=np.zeros(12),
        action=np.zeros(12),
        prev_action=np.zeros(12),
        impact_speed_sq=np.zeros(()),
        gravity=9.81,
        base_height=np.zeros(()),
        base_pitch=np.zeros(()),
        actuator=ActuatorParams(),
    )
    base.update(overrides)
    return StepContext(**base)


class TestGravityFactor:
    def test_earth(self):
        assert gravity_factor(9.81) == 1.0

    def test_moon(self):
        assert gravity_factor(1.62) == pytest.approx(9.81 / 1.62)
        assert gravity_factor(1.62) == pytest.approx(6.0556, abs=1e-4)

    def test_double_earth(self):
        assert gravity_factor(19.62) == pytest.approx(0.5)

    def test_rejects_nonpositive(self):
        with pytest.raises(ValueError):
            gravity_factor(0.0)


class TestCatalog:
    def test_baseline_weights(self):
        spec = RewardSpec.build("locomotion", "baseline")
        weights = {t.name: (t.weight, t.gravity_exponent) for t in spec.terms}
        assert weights["torque_sq"] == (-1e-4, 2)
        assert weights["action_rate"] == (-0.08, 0)
        assert weights["joint_accel"] == (-8e-7, 0)
        assert weights["lin_vel_tracking"] == (1.0, 0)
        assert weights["yaw_rate_tracking"] == (0.5, 0)
        assert weights["foot_impact"] == (-0.6, 0)

    def test_power_set_split_energy(self):
        spec = RewardSpec.build("base_pose", "power")
        weights = {t.name: (t.weight, t.gravity_exponent) for t in spec.terms}
        assert weights["energy_joint"] == (-3e-3, 1)
        assert weights["energy_winding"] == (-3e-3, 2)
        assert weights["height_tracking"] == (1.0, 0)
        assert weights["pitch_tracking"] == (1.0, 0)
        assert weights["yaw_rate_tracking_pose"] == (2.0, 0)
        assert weights["xy_velocity"] == (-0.6, 0)

    def test_serialization_round_trip(self):
        spec = RewardSpec.build("locomotion", "power", scale_gravity=False)
        again = RewardSpec.from_dict(spec.to_dict())
        assert again == spec

    def test_unknown_task(self):
        with pytest.raises(ValueError):
            RewardSpec.build("flying", "baseline")


class TestScaleWeights:
    def test_weight_ratio_law(self):
        # every term's scaled/Earth weight ratio is alpha^k to 1e-12 relative
        for task in ("locomotion", "base_pose"):
            for reg in ("baseline", "power"):
                spec = RewardSpec.build(task, reg)
                for g in (1.62, 3.73, 19.62, 19.96):
                    alpha = gravity_factor(g)
                    scaled = scale_weights(spec, g)
                    for term, ref in zip(scaled.terms, spec.terms):
                        expected = alpha ** ref.gravity_exponent
                        assert term.weight / ref.weight == pytest.approx(
                            expected, rel=1e-12)

    def test_moon_torque_weight(self):
        spec = RewardSpec.build("locomotion", "baseline")
        scaled = scale_weights(spec, 1.62)
        torque = next(t for t in scaled.terms if t.name == "torque_sq")
        assert torque.weight == pytest.approx(-1e-4 * (9.81 / 1.62) ** 2, rel=1e-12)
        assert torque.weight == pytest.approx(-3.667e-3, abs=1e-6)

    def test_mars_joint_energy_weight(self):
        spec = RewardSpec.build("locomotion", "power")
        scaled = scale_weights(spec, 3.73)
        joint = next(t for t in scaled.terms if t.name == "energy_joint")
        assert joint.weight == pytest.approx(-3e-3 * (9.81 / 3.73), rel=1e-12)
        assert joint.weight == pytest.approx(-7.890e-3, abs=1e-6)

    def test_earth_unchanged(self):
        spec = RewardSpec.build("locomotion", "power")
        assert scale_weights(spec, 9.81) == spec

    def test_flag_off_is_identity(self):
        spec = RewardSpec.build("locomotion", "power", scale_gravity=False)
        assert scale_weights(spec, 1.62) == spec


class TestEvalReward:
    def test_perfect_tracking_locomotion(self):
        spec = RewardSpec.build("locomotion", "baseline")
        total, breakdown = eval_reward(spec, make_ctx())
        assert total == pytest.approx(1.0 + 0.5)
        assert breakdown["lin_vel_tracking"] == pytest.approx(1.0)
        assert breakdown["yaw_rate_tracking"] == pytest.approx(0.5)

    def test_linear_tracking_formula(self):
        spec = RewardSpec.build("locomotion", "baseline")
        ctx = make_ctx(command=np.array([0.5, 0.0, 0.0]))
        _, breakdown = eval_reward(spec, ctx)
        assert breakdown["lin_vel_tracking"] == pytest.approx(np.exp(-1.0))

    def test_height_tracking_formula(self):
        spec = RewardSpec.build("base_pose", "baseline")
        ctx = make_ctx(command=np.array([0.42, 0.0, 0.0]),
                       base_height=np.asarray(0.32))
        _, breakdown = eval_reward(spec, ctx)
        assert breakdown["height_tracking"] == pytest.approx(np.exp(-1.0))

    def test_tracking_bounded_and_maximized_at_zero_error(self):
        spec = RewardSpec.build("locomotion", "baseline")
        rng = np.random.default_rng(0)
        best, _ = eval_reward(spec, make_ctx())
        for _ in range(50):
            ctx = make_ctx(command=rng.uniform(-0.7, 0.7, 3),
                           base_lin_vel=rng.normal(0, 1, 3),
                           base_ang_vel=rng.normal(0, 1, 3))
            _, breakdown = eval_reward(spec, ctx)
            for name in ("lin_vel_tracking", "yaw_rate_tracking"):
                assert 0.0 < breakdown[name] <= {"lin_vel_tracking": 1.0,
                                                 "yaw_rate_tracking": 0.5}[name]

    def test_penalties_nonpositive(self):
        spec = RewardSpec.build("locomotion", "power")
        rng = np.random.default_rng(1)
        ctx = make_ctx(joint_torque=rng.normal(0, 10, 12),
                       joint_vel=rng.normal(0, 5, 12),
                       joint_acc=rng.normal(0, 100, 12),
                       action=rng.normal(0, 1, 12),
                       impact_speed_sq=np.asarray(0.4))
        _, breakdown = eval_reward(spec, ctx)
        for name in ("energy_joint", "energy_winding", "foot_impact"):
            assert breakdown[name] <= 0.0

    def test_impact_only_on_new_contact(self):
        spec = RewardSpec.build("locomotion", "baseline")
        quiet, _ = eval_reward(spec, make_ctx())
        loud, breakdown = eval_reward(spec, make_ctx(impact_speed_sq=np.asarray(0.09)))
        assert breakdown["foot_impact"] == pytest.approx(-0.6 * 0.09)
        assert loud < quiet

    def test_energy_matches_power_breakdown(self):
        # the energy reward recombines the drivetrain breakdown with the
        # two separately scaled weights
        g = 1.62
        spec = scale_weights(RewardSpec.build("locomotion", "power"), g)
        rng = np.random.default_rng(2)
        params = ActuatorParams()
        ctx = make_ctx(joint_torque=rng.normal(0, 8, 12),
                       joint_vel=rng.normal(0, 4, 12),
                       gravity=g, actuator=params)
        _, breakdown = eval_reward(spec, ctx)
        _, joint_part, winding_part = power_loss(ctx.joint_torque, ctx.joint_vel,
                                                 params)
        alpha = gravity_factor(g)
        expected = (alpha * -3e-3) * joint_part + (alpha**2 * -3e-3) * winding_part
        assert breakdown["energy_joint"] + breakdown["energy_winding"] == \
            pytest.approx(expected, rel=1e-12)

    def test_deterministic(self):
        spec = RewardSpec.build("base_pose", "power")
        rng = np.random.default_rng(3)
        ctx = make_ctx(command=rng.uniform(0, 0.4, 3),
                       base_lin_vel=rng.normal(0, 1, 3),
                       joint_torque=rng.normal(0, 5, 12),
                       base_height=np.asarray(0.3), base_pitch=np.asarray(0.1))
        r1, _ = eval_reward(spec, ctx)
        r2, _ = eval_reward(spec, ctx)
        assert r1 == r2

    def test_missing_field_raises(self):
        spec = RewardSpec.build("base_pose", "baseline")
        ctx = make_ctx(base_height=None)
        with pytest.raises(ValueError, match="base_height"):
            eval_reward(spec, ctx)

    def test_batched(self):
        spec = RewardSpec.build("locomotion", "baseline")
        rng = np.random.default_rng(4)
        n = 7
        ctx = make_ctx(
            command=rng.uniform(-0.5, 0.5, (n, 3)),
            base_lin_vel=rng.normal(0, 1, (n, 3)),
            base_ang_vel=rng.normal(0, 1, (n, 3)),
            joint_torque=rng.normal(0, 5, (n, 12)),
            joint_vel=rng.normal(0, 3, (n, 12)),
            joint_acc=rng.normal(0, 50, (n, 12)),
            action=rng.normal(0, 1, (n, 12)),
            prev_action=rng.normal(0, 1, (n, 12)),
            impact_speed_sq=rng.uniform(0, 0.2, n),
        )
        total, _ = eval_reward(spec, ctx)
        assert total.shape == (n,)
        for i in range(n):
            single = make_ctx(**{
                k: getattr(ctx, k)[i]
                for k in ("command", "base_lin_vel", "base_ang_vel", "joint_torque",
                          "joint_vel", "joint_acc", "action", "prev_action",
                          "impact_speed_sq")
            })
            ri, _ = eval_reward(spec, single)
            assert ri == pytest.approx(total[i], rel=1e-12)


class TestCurriculum:
    def test_endpoints(self):
        assert curriculum_weight(-3e-3, 0.0) == 0.0
        assert curriculum_weight(-3e-3, 1.0) == -3e-3

    def test_linear_midpoint(self):
        assert curriculum_weight(-0.08, 0.5) == pytest.approx(-0.04)

    def test_monotone(self):
        values = [curriculum_weight(-1.0, p) for p in np.linspace(0, 1, 11)]
        assert all(b <= a for a, b in zip(values, values[1:]))

    def test_progress_bounds(self):
        with pytest.raises(ValueError):
            curriculum_weight(1.0, 1.5)

    def test_applied_inside_eval(self):
        spec = RewardSpec.build("locomotion", "power")
        ctx = make_ctx(joint_torque=np.full(12, 5.0), joint_vel=np.full(12, 2.0))
        full, b_full = eval_reward(spec, ctx, curriculum_progress=1.0)
        half, b_half = eval_reward(spec, ctx, curriculum_progress=0.5)
        assert b_half["energy_joint"] == pytest.approx(0.5 * b_full["energy_joint"])
        assert half > full  # weaker penalty, higher reward
