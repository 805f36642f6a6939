"""Acceptance criteria, one test per criterion, one printed line each.

Criteria 8 and 9 train real policies on the CPU and dominate the suite's
runtime.  Criterion 9 is a directional claim marked soft: a failure is
reported as expected-failure for investigation rather than a hard rejection.
"""

import contextlib
import json
from pathlib import Path

import numpy as np
import pytest

from gravsim import dynamics as dyn
from gravsim.actuation import ActuatorParams, power_loss, winding_loss
from gravsim.cli import main as cli_main
from gravsim.env import EnvConfig, VecEnv
from gravsim.observations import (ACTOR_DIM, CRITIC_DIM, assemble_actor_obs,
                                  assemble_critic_obs)
from gravsim.ppo import TrainConfig, evaluate, load_checkpoint, train
from gravsim.rewards import RewardSpec, gravity_factor, scale_weights
from gravsim.rig import RigSpec, plan_compensation, radial_error, required_offload, vertical_error
from gravsim.robot import GeneralizedState, GravityEnv, reference_model
from gravsim.symmetry import symmetry_transforms

from conftest import make_state, pendulum_model


@contextlib.contextmanager
def criterion(number: int, description: str):
    try:
        yield
    except BaseException:
        print(f"ACCEPTANCE {number:2d} FAIL: {description}")
        raise
    print(f"ACCEPTANCE {number:2d} PASS: {description}")


def test_criterion_01_offload_error_equations():
    with criterion(1, "offload error equations at F=117.2 N, h=1.9 m, r=0.15 m"):
        rig = RigSpec(spring_force=117.2, mount_height=1.9)
        v_err = vertical_error(rig, 0.15)
        r_err = radial_error(rig, 0.15)
        assert 0.35 <= v_err <= 0.37
        assert abs(r_err - 9.27) <= 0.1


def test_criterion_02_compensation_chain():
    with criterion(2, "offload compensation chain for the 15.65 kg robot at 1.62 m/s^2"):
        assert abs(required_offload(15.65, 1.62) - 128.2) <= 0.1
        plan = plan_compensation(15.65, 1.62, 117.2, 0.8)
        assert 7.85 <= round(plan.battery_credit_n, 2) <= 7.9
        assert abs(plan.residual_n - 3.1) <= 0.1
        assert abs(plan.added_sim_mass_kg - 1.9) <= 0.05


def test_criterion_03_reward_scaling_law():
    with criterion(3, "weight rescaling = alpha^k per term to 1e-12 relative"):
        for task in ("locomotion", "base_pose"):
            for reg in ("baseline", "power"):
                spec = RewardSpec.build(task, reg)
                for g in (1.62, 3.73, 9.81, 19.62, 19.96):
                    alpha = gravity_factor(g)
                    scaled = scale_weights(spec, g)
                    for term, ref in zip(scaled.terms, spec.terms):
                        ratio = term.weight / ref.weight
                        expected = alpha ** ref.gravity_exponent
                        assert abs(ratio - expected) <= 1e-12 * abs(expected)
        moon = scale_weights(RewardSpec.build("locomotion", "baseline"), 1.62)
        torque = next(t for t in moon.terms if t.name == "torque_sq")
        expected = -1e-4 * (9.81 / 1.62) ** 2
        assert abs(torque.weight - expected) <= 1e-12 * abs(expected)


def test_criterion_04_observation_contract():
    with criterion(4, "actor/critic observation lengths 66 and 48 for 1e4 random states"):
        rng = np.random.default_rng(0)
        n = 10_000
        quat = rng.normal(size=(n, 4))
        quat /= np.linalg.norm(quat, axis=-1, keepdims=True)
        proj_g = -np.stack([2 * (quat[:, 0] * quat[:, 2] - quat[:, 3] * quat[:, 1]),
                            2 * (quat[:, 1] * quat[:, 2] + quat[:, 3] * quat[:, 0]),
                            1 - 2 * (quat[:, 0] ** 2 + quat[:, 1] ** 2)], axis=-1)
        actor = assemble_actor_obs(
            command=rng.uniform(-0.7, 0.7, (n, 3)),
            ang_vel_history=rng.normal(size=(n, 8, 3)),
            proj_gravity=proj_g,
            joint_pos_rel=rng.normal(size=(n, 12)),
            joint_vel=rng.normal(size=(n, 12)),
            prev_action=rng.normal(size=(n, 12)),
        )
        critic = assemble_critic_obs(
            command=rng.uniform(-0.7, 0.7, (n, 3)),
            base_lin_vel_b=rng.normal(size=(n, 3)),
            base_ang_vel_b=rng.normal(size=(n, 3)),
            proj_gravity=proj_g,
            joint_pos_rel=rng.normal(size=(n, 12)),
            joint_vel=rng.normal(size=(n, 12)),
            prev_action=rng.normal(size=(n, 12)),
        )
        assert actor.shape == (n, 66)
        assert critic.shape == (n, 48)
        # integrated check through the environment
        env = VecEnv(EnvConfig(randomize=True), num_envs=32, seed=1)
        a, c = env.reset()
        for _ in range(4):
            a, c, *_ = env.step(rng.normal(0, 0.5, (32, 12)))
            assert a.shape == (32, 66) and c.shape == (32, 48)


def test_criterion_05_dynamics_oracles(quadruped):
    with criterion(5, "dynamics oracle suite (symmetry, grad V, ID/FD, free fall, energy)"):
        rng = np.random.default_rng(2)
        earth = GravityEnv(9.81)

        for _ in range(10):
            state = make_state(quadruped, rng)
            M = dyn.mass_matrix(quadruped, state)
            assert np.abs(M - M.T).max() < 1e-9

        # gravity vs central finite difference of the potential
        from test_dynamics import tangent_perturb
        state = make_state(quadruped, rng)
        g_vec = dyn.gravity_forces(quadruped, state, earth)
        for _ in range(10):
            d = rng.normal(size=quadruped.nv)
            eps = 1e-6
            vp = dyn.potential_energy(
                quadruped, GeneralizedState(tangent_perturb(state.q, d, eps), state.v), earth)
            vm = dyn.potential_energy(
                quadruped, GeneralizedState(tangent_perturb(state.q, d, -eps), state.v), earth)
            fd = (vp - vm) / (2 * eps)
            analytic = float(g_vec @ d)
            assert abs(fd - analytic) <= 1e-5 * max(1.0, abs(analytic))

        # inverse/forward dynamics round trip
        env373 = GravityEnv(3.73)
        for _ in range(5):
            state = make_state(quadruped, rng)
            qdd_t = rng.normal(0, 2, quadruped.nv)
            forces = rng.normal(0, 10, (4, 3))
            kin = dyn.compute_kinematics(quadruped, state.q)
            jc = dyn.foot_jacobians(quadruped, kin)
            tau = (dyn.mass_matrix(quadruped, state) @ qdd_t
                   + dyn.bias_forces(quadruped, state)
                   + dyn.gravity_forces(quadruped, state, env373)
                   - np.einsum("fak,fa->k", jc, forces))
            qdd = dyn.forward_dynamics(quadruped, state, tau, forces, env373)
            assert np.abs(qdd - qdd_t).max() < 1e-8

        # free fall exactness
        state = make_state(quadruped, rng, with_velocity=False)
        acc = dyn.forward_dynamics(quadruped, state, np.zeros(quadruped.nv), None, earth)
        assert np.allclose(acc[0:3], [0, 0, -9.81], atol=1e-9)
        assert np.allclose(acc[3:], 0.0, atol=1e-9)

        # passive pendulum energy drift < 1% over 10 s at the physics dt
        model = pendulum_model()
        q = np.zeros(model.nq)
        q[3:7] = (0, 0, 0, 1)
        q[7] = 1.2
        state = GeneralizedState(q, np.zeros(model.nv))
        energies = []
        for _ in range(2000):
            acc = dyn.forward_dynamics(model, state, np.zeros(model.nv), None,
                                       earth, base_fixed=True)
            state = dyn.integrate(state, acc, 0.005)
            energies.append(float(dyn.kinetic_energy(model, state)
                                  + dyn.potential_energy(model, state, earth)))
        scale = 9.81 * 0.5 * (1 - np.cos(1.2))
        assert abs(np.mean(energies[-285:]) - np.mean(energies[:285])) / scale < 0.01


def test_criterion_06_power_model():
    with criterion(6, "power nonnegativity (1e6 draws), exact quadratic winding, worked example"):
        rng = np.random.default_rng(3)
        n = 1_000_000
        tau = rng.uniform(-60, 60, n)
        qd = rng.uniform(-40, 40, n)
        eta = rng.uniform(0, 1, n)
        p = np.maximum(tau * qd, 0.0) - np.minimum(eta * tau * qd, 0.0)
        params = ActuatorParams()
        total = p + winding_loss(tau, params)
        assert np.all(p >= 0) and np.all(total >= 0)
        # the module path on a batch with a shared recuperation setting
        total_b, joint_b, winding_b = power_loss(
            tau.reshape(-1, 4), qd.reshape(-1, 4),
            ActuatorParams(recuperation=0.37))
        assert np.all(total_b >= 0) and np.all(joint_b >= 0) and np.all(winding_b >= 0)

        sample = rng.uniform(-50, 50, 10_000)
        assert np.array_equal(winding_loss(2 * sample, params),
                              4 * winding_loss(sample, params))

        worked = ActuatorParams(gear_ratio=9.0, torque_constant=0.1,
                                winding_resistance=0.3)
        assert abs(winding_loss(5.0, worked) - 9.259) <= 1e-3


def test_criterion_07_symmetry():
    with criterion(7, "involutions, mirrored trajectories within 1e-6, 4x augmentation"):
        rng = np.random.default_rng(4)
        for task in ("locomotion", "base_pose"):
            transforms = symmetry_transforms(task)
            assert len(transforms) == 4
            obs = rng.normal(size=(16, ACTOR_DIM))
            cobs = rng.normal(size=(16, CRITIC_DIM))
            act = rng.normal(size=(16, 12))
            for tr in transforms:
                assert np.array_equal(tr.apply_actor(tr.apply_actor(obs)), obs)
                assert np.array_equal(tr.apply_critic(tr.apply_critic(cobs)), cobs)
                assert np.array_equal(tr.apply_action(tr.apply_action(act)), act)

        # mirrored flat-terrain trajectories
        cfg = EnvConfig(task="locomotion", randomize=False,
                        fixed_command=(0.3, 0.15, -0.1), init_joint_noise=0.0,
                        init_yaw_random=False)
        for tr in symmetry_transforms("locomotion")[1:]:
            env_a = VecEnv(cfg, num_envs=1, seed=0)
            env_b = VecEnv(cfg, num_envs=1, seed=0)
            env_a.reset()
            env_b.reset()
            qm, vm = tr.mirror_state(env_a.q[0], env_a.v[0])
            env_b.q[0] = qm
            env_b.v[0] = vm
            env_b.set_command(tr.apply_command(np.asarray(cfg.fixed_command)))
            for _ in range(40):
                action = rng.normal(0, 0.4, (1, 12))
                env_a.step(action)
                env_b.step(tr.apply_action(action))
                qm, vm = tr.mirror_state(env_a.q[0], env_a.v[0])
                assert np.abs(env_b.q[0] - qm).max() < 1e-6
                assert np.abs(env_b.v[0] - vm).max() < 1e-6

        # augmentation: exactly 4x with an exact identity slice
        from gravsim.ppo import augment_symmetry
        batch = {
            "actor_obs": rng.normal(size=(64, ACTOR_DIM)),
            "critic_obs": rng.normal(size=(64, CRITIC_DIM)),
            "actions": rng.normal(size=(64, 12)),
            "advantages": rng.normal(size=64),
            "returns": rng.normal(size=64),
        }
        out = augment_symmetry(batch, symmetry_transforms("locomotion"))
        for key, arr in out.items():
            assert arr.shape[0] == 4 * 64
            assert np.array_equal(arr[:64], batch[key])


# ---------------------------------------------------------------------------
# training-based criteria
# ---------------------------------------------------------------------------

SMOKE_ENV = dict(task="locomotion", gravity=9.81, scale_gravity=True,
                 terrain_kind="flat", randomize=True)
SMOKE_TRAIN = dict(num_envs=256, horizon=24, hidden=(128, 64),
                   iterations=1000, checkpoint_every=0,
                   curriculum_tracking_threshold=0.7, curriculum_ramp_iters=250,
                   min_std=0.1, stop_tracking_mean=0.82, stop_patience=10)


def _smoke_run(out_dir: Path, rewards: str, seed: int):
    env_cfg = EnvConfig(rewards=rewards, **SMOKE_ENV)
    train_cfg = TrainConfig(seed=seed, **SMOKE_TRAIN)
    result = train(train_cfg, env_cfg, out_dir)
    policy, _, meta = load_checkpoint(result.checkpoint_path)
    ev = evaluate(policy, meta["env_config_obj"], "loco-0.4", seconds=60.0,
                  n_envs=16, model=meta["model_obj"])
    (out_dir / "accept_eval.json").write_text(json.dumps(ev.summary_dict()))
    return result, ev


@pytest.fixture(scope="session")
def smoke_runs(tmp_path_factory):
    """Train {baseline, power} x 3 seeds under the criterion-8 conditions."""
    root = tmp_path_factory.mktemp("smoke")
    runs = {}
    for rewards in ("baseline", "power"):
        for seed in (11, 12, 13):
            out = root / f"{rewards}_{seed}"
            runs[(rewards, seed)] = _smoke_run(out, rewards, seed)
    return runs


def test_criterion_08_training_smoke(smoke_runs):
    with criterion(8, "Earth flat locomotion: tracking term > 0.6 at 0.4 m/s, falls < 10%"):
        result, ev = smoke_runs[("baseline", 11)]
        assert result.iterations_run <= 1000
        print(f"    [criterion 8] iterations {result.iterations_run}, "
              f"eval tracking {ev.tracking_term_mean:.3f}, "
              f"fall rate {ev.fall_rate:.2f}, power {ev.avg_power_w:.1f} W")
        assert ev.tracking_term_mean > 0.6
        assert ev.fall_rate < 0.10


def test_criterion_09_directional_power(smoke_runs):
    """Soft criterion: failure is reported for investigation, not rejection."""
    baseline = [smoke_runs[("baseline", s)][1].avg_power_w for s in (11, 12, 13)]
    power = [smoke_runs[("power", s)][1].avg_power_w for s in (11, 12, 13)]
    med_b, med_p = float(np.median(baseline)), float(np.median(power))
    print(f"    [criterion 9] median power: baseline {med_b:.1f} W, "
          f"power-optimized {med_p:.1f} W "
          f"(baseline seeds {[round(x, 1) for x in baseline]}, "
          f"power seeds {[round(x, 1) for x in power]})")
    if not med_p < med_b:
        print("ACCEPTANCE  9 FAIL (soft): power-optimized median not below baseline")
        pytest.xfail("directional power claim not met on this budget; "
                     "soft criterion, flagged for investigation")
    print("ACCEPTANCE  9 PASS: power-optimized median power below baseline")


def test_criterion_10_sweep_harness(tmp_path):
    with criterion(10, "32-cell sweep with 2-iteration budget, complete and resumable"):
        out = tmp_path / "sweep"
        cfg = tmp_path / "sweep.yaml"
        cfg.write_text(
            "training:\n  horizon: 8\n  hidden: [16]\n"
            "env:\n  episode_s: 4.0\n"
        )
        argv = ["sweep", "--iterations", "2", "--envs", "8",
                "--eval-seconds", "4", "--seed", "0",
                "--config", str(cfg), "--out", str(out), "--quiet"]
        assert cli_main(list(argv)) == 0
        report = json.loads((out / "report.json").read_text())
        assert len(report["cells"]) == 32
        assert report["n_ok"] == 32
        assert (out / "report.csv").exists()
        assert (out / "report.png").exists()
        for cell in report["cells"]:
            assert cell["status"] == "ok"
            assert not cell["reused"]
            assert "avg_power_w" in cell["metrics"]

        # resumability: identical settings, every cell skipped
        assert cli_main(list(argv)) == 0
        report2 = json.loads((out / "report.json").read_text())
        assert all(cell["reused"] for cell in report2["cells"])
