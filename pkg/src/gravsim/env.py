"""Locomotion and base-pose MDPs over the batched rigid-body simulator.

A ``VecEnv`` owns N independent robots stepped in lockstep at 50 Hz with 4
physics substeps per control tick.  Actions are scaled offsets on the
default joint positions fed to per-joint PD controllers, with the legs'
gravity-compensation torques always added as feedforward.  Episodes
randomize payload mass, ground friction and base disturbances, and can run
on a tiled rough-terrain arena with a difficulty curriculum.

Each instance is single-owner and internally sequential; many instances can
run in parallel since they share nothing mutable.  A per-instance seeded
generator makes trajectories a pure function of (seed, action sequence).
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import dynamics as dyn
from .actuation import ActuatorParams, pd_torque, power_loss
from .contact import ContactParams, contact_forces
from .observations import HISTORY_LEN, assemble_actor_obs, assemble_critic_obs
from .rewards import RewardSpec, StepContext, eval_reward, scale_weights
from .rig import RigSpec
from .robot import EARTH_GRAVITY, GeneralizedState, GravityEnv, RobotModel, reference_model
from .rotations import quat_from_rotvec, quat_to_rot
from .terrain import HeightField, flat_arena, terrain_arena

TASKS = ("locomotion", "base_pose")

# evaluation protocol commands
EVAL_COMMANDS = {
    "loco-0.4": [(0.4, 0.0, 0.0)],
    # start at 0.32 m height and flat pitch, then pitch up, then yaw
    "base-pose-seq": [(0.32, 0.0, 0.0), (0.32, 0.5, 0.0), (0.32, 0.0, 0.5)],
}


@dataclass(frozen=True)
class EnvConfig:
    task: str = "locomotion"
    gravity: float = EARTH_GRAVITY
    rewards: str = "baseline"            # "baseline" | "power"
    scale_gravity: bool = True

    episode_s: float = 20.0
    control_hz: float = 50.0
    decimation: int = 4
    action_scale: float = 0.3

    terrain_kind: str = "flat"           # "flat" | "mixed"
    terrain_levels: int = 5
    terrain_curriculum: bool = True

    randomize: bool = True
    mass_delta_range: tuple[float, float] = (-2.0, 2.0)
    mu_static_range: tuple[float, float] = (0.4, 1.4)
    mu_dynamic_range: tuple[float, float] = (0.1, 1.4)
    push_vel_max: float = 0.7
    push_interval_s: tuple[float, float] = (4.0, 8.0)
    const_force_max: float = 5.0

    loco_cmd_ranges: tuple = ((-0.7, 0.7), (-0.7, 0.7), (-0.7, 0.7))
    pose_cmd_ranges: tuple = ((0.2, 0.45), (-0.5, 0.5), (-0.5, 0.5))
    fixed_command: tuple[float, float, float] | None = None
    command_resample_s: float = 5.0

    init_joint_noise: float = 0.05
    init_yaw_random: bool = True
    tilt_limit: float = 1.2

    contact: ContactParams = field(default_factory=ContactParams)
    actuator: ActuatorParams = field(default_factory=ActuatorParams)
    feedforward: bool = True
    added_mass: float = 0.0              # extra base payload, e.g. a rig plan
    rig: RigSpec | None = None

    def __post_init__(self):
        if self.task not in TASKS:
            raise ValueError(f"unknown task {self.task!r}; options: {TASKS}")
        if self.gravity <= 0:
            raise ValueError("gravity must be positive")
        if self.rewards not in ("baseline", "power"):
            raise ValueError(f"unknown reward set {self.rewards!r}")


def apply_action(action: np.ndarray, q_def: np.ndarray, limits: np.ndarray,
                 scale: float = 0.3) -> np.ndarray:
    """Joint position targets: q* = scale * a + q_def, clamped to limits."""
    target = scale * np.asarray(action, dtype=float) + q_def
    return np.clip(target, limits[:, 0], limits[:, 1])


def sample_command(task: str, rng: np.random.Generator, ranges=None, n: int | None = None) -> np.ndarray:
    """Uniform command draw within the task's training ranges."""
    if ranges is None:
        ranges = EnvConfig().loco_cmd_ranges if task == "locomotion" else EnvConfig().pose_cmd_ranges
    lo = np.array([r[0] for r in ranges])
    hi = np.array([r[1] for r in ranges])
    size = (3,) if n is None else (n, 3)
    return rng.uniform(lo, hi, size=size)


def curriculum_update(level: np.ndarray, traversed: np.ndarray, commanded: np.ndarray,
                      max_level: int) -> np.ndarray:
    """Promote a level on >= 75% of the commanded distance, demote below 25%."""
    level = np.asarray(level).copy()
    promote = traversed >= 0.75 * commanded
    demote = traversed < 0.25 * commanded
    level[promote] += 1
    level[demote & ~promote] -= 1
    return np.clip(level, 0, max_level)


class VecEnv:
    """N synchronized environment instances over one robot model."""

    def __init__(self, cfg: EnvConfig, num_envs: int = 1, seed: int = 0,
                 model: RobotModel | None = None):
        self.cfg = cfg
        self.model = model if model is not None else reference_model()
        self.num_envs = int(num_envs)
        self.rng = np.random.default_rng(seed)
        self.gravity = GravityEnv(cfg.gravity)
        # on the offload rig the dynamics run at Earth gravity
        self.dyn_gravity = GravityEnv(EARTH_GRAVITY) if cfg.rig else self.gravity
        self.reward_spec = scale_weights(
            RewardSpec.build(cfg.task, cfg.rewards, cfg.scale_gravity), cfg.gravity
        )
        self.actuator = cfg.actuator
        self.dt_ctrl = 1.0 / cfg.control_hz
        self.dt = self.dt_ctrl / cfg.decimation
        self.max_steps = int(round(cfg.episode_s * cfg.control_hz))
        self.penalty_progress = 1.0      # trainer ramps this for power rewards

        if cfg.terrain_kind == "mixed":
            self.terrain: HeightField = terrain_arena(levels=cfg.terrain_levels, seed=seed)
        else:
            self.terrain = flat_arena(size=40.0, resolution=0.2)

        m = self.model
        n = self.num_envs
        nj = m.n_joints
        self._q_def = m.q_def
        self._limits = m.joint_limits
        # default stance height: feet touch z=0 when the base sits this high
        if m.feet:
            st = m.default_state(base_pos=(0.0, 0.0, 0.0))
            kin0 = dyn.compute_kinematics(m, st.q)
            self._stand_height = float(-dyn.foot_points(m, kin0)[..., 2].min())
        else:
            self._stand_height = 0.3
        self._hip_anchor_joints = [j for j, jt in enumerate(m.joints) if jt.parent == 0]

        self.q = np.zeros((n, m.nq))
        self.v = np.zeros((n, m.nv))
        self.masses = np.repeat(m.masses[None, :], n, axis=0)
        self.mu_s = np.full(n, cfg.contact.mu_static)
        self.mu_d = np.full(n, cfg.contact.mu_dynamic)
        self.command = np.zeros((n, 3))
        self.action = np.zeros((n, nj))
        self.prev_action = np.zeros((n, nj))
        self.ang_vel_history = np.zeros((n, HISTORY_LEN, 3))
        self.step_count = np.zeros(n, dtype=int)
        self.contact_flags = np.zeros((n, len(m.feet)), dtype=bool)
        self._prev_foot_vel = np.zeros((n, len(m.feet), 3))
        self.level = np.zeros(n, dtype=int)
        self.kind_col = self.rng.integers(0, max(1, self.terrain.cell_kind.shape[1]), size=n)
        self.spawn_xy = np.zeros((n, 2))
        self.const_force = np.zeros((n, 3))
        self.push_at_step = np.full(n, np.iinfo(np.int64).max, dtype=np.int64)
        self.gantry_xy = np.zeros((n, 2))
        self.anchor_z = np.full(n, np.inf)   # rope anchor height when rigged
        self.slack_events = 0
        self.fault = np.zeros(n, dtype=bool)
        self._last_tau = np.zeros((n, nj))

    # ------------------------------------------------------------------
    @property
    def state(self) -> GeneralizedState:
        return GeneralizedState(q=self.q, v=self.v)

    def set_command(self, command) -> None:
        self.command[:] = np.asarray(command, dtype=float)

    def reset(self):
        self._spawn(np.arange(self.num_envs))
        return self._observations()

    def _sample_commands(self, idx) -> None:
        if self.cfg.fixed_command is not None:
            self.command[idx] = np.asarray(self.cfg.fixed_command, dtype=float)
            return
        ranges = (self.cfg.loco_cmd_ranges if self.cfg.task == "locomotion"
                  else self.cfg.pose_cmd_ranges)
        self.command[idx] = sample_command(self.cfg.task, self.rng, ranges, n=len(idx))

    def _spawn(self, idx: np.ndarray) -> None:
        cfg = self.cfg
        n = len(idx)
        if n == 0:
            return
        m = self.model
        base_mass = m.links[0].mass + cfg.added_mass
        if cfg.randomize:
            delta = self.rng.uniform(*cfg.mass_delta_range, size=n)
            self.mu_s[idx] = self.rng.uniform(*cfg.mu_static_range, size=n)
            mu_d = self.rng.uniform(*cfg.mu_dynamic_range, size=n)
            self.mu_d[idx] = np.minimum(mu_d, self.mu_s[idx])
            direction = self.rng.normal(size=(n, 3))
            direction /= np.linalg.norm(direction, axis=-1, keepdims=True)
            self.const_force[idx] = direction * self.rng.uniform(
                0.0, cfg.const_force_max, size=(n, 1)
            )
            self.push_at_step[idx] = self.step_count[idx] * 0 + np.round(
                self.rng.uniform(*cfg.push_interval_s, size=n) / self.dt_ctrl
            ).astype(np.int64)
        else:
            delta = np.zeros(n)
            self.const_force[idx] = 0.0
            self.push_at_step[idx] = np.iinfo(np.int64).max
        self.masses[idx, 0] = base_mass + delta

        if cfg.terrain_kind == "mixed":
            rows, cols = self.terrain.cell_kind.shape
            self.kind_col[idx] = self.rng.integers(0, cols, size=n)
            centers = np.array(
                [self.terrain.cell_origin(int(self.level[i]), int(self.kind_col[i])) for i in idx]
            )
            xy = centers + self.rng.uniform(-0.5, 0.5, size=(n, 2))
        else:
            xy = np.zeros((n, 2))
        ground = self.terrain.height_at(xy[:, 0], xy[:, 1])

        self.q[idx] = 0.0
        self.q[idx, 0:2] = xy
        self.q[idx, 2] = ground + self._stand_height + 0.01
        yaw = (self.rng.uniform(-np.pi, np.pi, size=n)
               if (cfg.init_yaw_random and cfg.randomize) else np.zeros(n))
        self.q[idx, 3:7] = quat_from_rotvec(np.stack([np.zeros(n), np.zeros(n), yaw], axis=-1))
        noise = (self.rng.uniform(-cfg.init_joint_noise, cfg.init_joint_noise, size=(n, m.n_joints))
                 if cfg.randomize else 0.0)
        self.q[idx, 7:] = np.clip(self._q_def + noise, self._limits[:, 0], self._limits[:, 1])
        self.v[idx] = 0.0
        self.action[idx] = 0.0
        self.prev_action[idx] = 0.0
        self.ang_vel_history[idx] = 0.0
        self.step_count[idx] = 0
        self.contact_flags[idx] = False
        self._prev_foot_vel[idx] = 0.0
        self.spawn_xy[idx] = xy
        self.gantry_xy[idx] = xy
        if cfg.rig is not None:
            # gantry anchor rides this high above the attachment at spawn;
            # the rope goes slack only if the base rises past it
            self.anchor_z[idx] = self.q[idx, 2] + cfg.rig.mount_height
        self.fault[idx] = False
        self._sample_commands(idx)

    # ------------------------------------------------------------------
    def _external_wrench(self, kin) -> np.ndarray:
        wrench = np.zeros((self.num_envs, 6))
        if self.cfg.randomize:
            wrench[:, 0:3] += self.const_force
        rig = self.cfg.rig
        if rig is not None:
            base_pos = self.q[:, 0:3]
            rot = kin.link_rot[:, 0]
            attach = base_pos + rot @ np.asarray(rig.attach_offset)
            delta = self.gantry_xy - attach[:, 0:2]
            r = np.linalg.norm(delta, axis=-1)
            denom = np.sqrt(r**2 + rig.mount_height**2)
            f_vert = rig.spring_force * rig.mount_height / denom
            f_rad = rig.spring_force * r / denom
            direction = delta / np.maximum(r, 1e-12)[:, None]
            force = np.concatenate([direction * f_rad[:, None], f_vert[:, None]], axis=-1)
            slack = attach[:, 2] >= self.anchor_z
            if np.any(slack):
                self.slack_events += int(np.sum(slack))
                force[slack] = 0.0
            wrench[:, 0:3] += force
            wrench[:, 3:6] += np.cross(attach - base_pos, force)
        return wrench

    def _update_gantry(self) -> None:
        rig = self.cfg.rig
        if rig is None:
            return
        attach_xy = self.q[:, 0:2]
        lag = self.dt_ctrl / max(rig.gantry_time_constant, self.dt_ctrl)
        self.gantry_xy += (attach_xy - self.gantry_xy) * lag
        delta = self.gantry_xy - attach_xy
        r = np.linalg.norm(delta, axis=-1)
        over = r > rig.max_radius
        if np.any(over):
            self.gantry_xy[over] = (
                attach_xy[over] + delta[over] * (rig.max_radius / r[over])[:, None]
            )

    def _substep(self, q_target: np.ndarray, impacts_sq: np.ndarray):
        m = self.model
        state = self.state
        kin = dyn.compute_kinematics(m, self.q)
        inertia_w = dyn.world_inertia(m, kin)
        foot_jac = dyn.foot_jacobians(m, kin)
        foot_pos = dyn.foot_points(m, kin)
        foot_vel = (foot_jac @ self.v[:, None, :, None])[..., 0]

        grav = dyn.gravity_forces(m, state, self.dyn_gravity, kin=kin, masses=self.masses)
        tau_ff = grav[:, 6:] if self.cfg.feedforward else 0.0
        tau_j = pd_torque(self.actuator, q_target, self.q[:, 7:], self.v[:, 6:], tau_ff)

        M = dyn.mass_matrix(m, state, kin=kin, masses=self.masses, inertia_w=inertia_w)
        bias = dyn.bias_forces(m, state, kin=kin, masses=self.masses, inertia_w=inertia_w)
        tau_full = np.concatenate([self._external_wrench(kin), tau_j], axis=-1)
        rhs0 = tau_full - bias - grav

        # one factorization serves both the pre-contact acceleration and the
        # feet's apparent inertia (contact forces enter the solution linearly)
        n_feet = foot_jac.shape[1]
        jt = foot_jac.reshape(self.num_envs, 3 * n_feet, m.nv)
        sol = np.linalg.solve(
            M, np.concatenate([np.swapaxes(jt, -1, -2), rhs0[..., None]], axis=-1)
        )
        minv_jt = sol[..., : 3 * n_feet]
        acc0 = sol[..., -1]
        delassus_diag = np.einsum("nik,nki->ni", jt, minv_jt).reshape(
            self.num_envs, n_feet, 3
        )
        # friction slope from the feet's apparent inertia: strong stiction,
        # but the impulse cannot reverse the slip within a substep
        m_eff = 2.0 / np.maximum(delassus_diag[..., 0] + delassus_diag[..., 1], 1e-9)
        cst = contact_forces(
            foot_pos, foot_vel, self.terrain, self.cfg.contact,
            prev_contact=self.contact_flags,
            mu_static=self.mu_s[:, None], mu_dynamic=self.mu_d[:, None],
            tangential_slope=m_eff / self.dt,
        )
        if np.any(cst.new_contact):
            impacts_sq += np.sum(
                np.where(cst.new_contact, np.sum(self._prev_foot_vel**2, axis=-1), 0.0),
                axis=-1,
            )
        self.contact_flags = cst.in_contact
        self._prev_foot_vel = foot_vel

        acc = acc0 + (minv_jt @ cst.force.reshape(self.num_envs, 3 * n_feet, 1))[..., 0]
        new_state = dyn.integrate(state, acc, self.dt)
        self.q = new_state.q
        self.v = np.clip(new_state.v, -1e3, 1e3)

        bad = ~np.all(np.isfinite(self.q), axis=-1) | ~np.all(np.isfinite(self.v), axis=-1)
        if np.any(bad):
            self.fault |= bad
            self.q[bad, 0:3] = (0.0, 0.0, self._stand_height + 0.5)
            self.q[bad, 3:7] = (0.0, 0.0, 0.0, 1.0)
            self.q[bad, 7:] = self._q_def
            self.v[bad] = 0.0
        return tau_j, kin

    def step(self, actions: np.ndarray):
        """Advance one 50 Hz control tick (4 physics substeps)."""
        cfg = self.cfg
        actions = np.asarray(actions, dtype=float)
        self.prev_action = self.action
        self.action = actions
        q_target = apply_action(actions, self._q_def, self._limits, cfg.action_scale)

        # scheduled base disturbances at the control rate
        if cfg.randomize:
            push = self.step_count >= self.push_at_step
            if np.any(push):
                k = int(np.sum(push))
                angle = self.rng.uniform(0.0, 2 * np.pi, size=k)
                speed = self.rng.uniform(0.0, cfg.push_vel_max, size=k)
                self.v[push, 0] += speed * np.cos(angle)
                self.v[push, 1] += speed * np.sin(angle)
                self.push_at_step[push] = self.step_count[push] + np.round(
                    self.rng.uniform(*cfg.push_interval_s, size=k) / self.dt_ctrl
                ).astype(np.int64)
        self._update_gantry()

        qd_start = self.v[:, 6:].copy()
        impacts_sq = np.zeros(self.num_envs)
        # non-finite states become fault flags, so arithmetic warnings from
        # a diverging env are expected and handled
        with np.errstate(all="ignore"):
            for _ in range(cfg.decimation):
                tau_j, kin = self._substep(q_target, impacts_sq)
        self._last_tau = tau_j
        self.step_count += 1

        rot = kin.link_rot[:, 0]
        lin_b = np.einsum("nji,nj->ni", rot, self.v[:, 0:3])
        ang_b = np.einsum("nji,nj->ni", rot, self.v[:, 3:6])
        proj_g = -rot[:, 2, :]  # world -z expressed in the base frame
        ground = self.terrain.height_at(self.q[:, 0], self.q[:, 1])
        height = self.q[:, 2] - ground
        pitch = np.arcsin(np.clip(proj_g[:, 0], -1.0, 1.0))

        ctx = StepContext(
            command=self.command,
            base_lin_vel=lin_b,
            base_ang_vel=ang_b,
            joint_torque=tau_j,
            joint_vel=self.v[:, 6:],
            joint_acc=(self.v[:, 6:] - qd_start) / self.dt_ctrl,
            action=self.action,
            prev_action=self.prev_action,
            impact_speed_sq=impacts_sq,
            gravity=cfg.gravity,
            base_height=height,
            base_pitch=pitch,
            actuator=self.actuator,
        )
        reward, breakdown = eval_reward(self.reward_spec, ctx, self.penalty_progress)

        tilted = -proj_g[:, 2] < np.cos(cfg.tilt_limit)
        base_low = self.q[:, 2] - 0.06 < ground
        hip_anchor = kin.joint_anchor[:, self._hip_anchor_joints, :]
        hip_ground = self.terrain.height_at(hip_anchor[..., 0], hip_anchor[..., 1])
        hip_low = np.any(hip_anchor[..., 2] - 0.04 < hip_ground, axis=-1)
        terminated = tilted | base_low | hip_low | self.fault
        timeout = self.step_count >= self.max_steps
        done = terminated | timeout
        reward = np.where(self.fault, 0.0, reward)

        # periodic command resampling inside an episode
        resample_steps = int(round(cfg.command_resample_s / self.dt_ctrl))
        due = (~done) & (self.step_count % resample_steps == 0)
        if np.any(due) and cfg.fixed_command is None:
            self._sample_commands(np.flatnonzero(due))

        task_term = self.reward_spec.terms[0]
        total_power, _, _ = power_loss(tau_j, self.v[:, 6:], self.actuator)
        info = {
            "reward_terms": breakdown,
            "tracking": breakdown[task_term.name] / task_term.weight,
            "timeout": timeout,
            "fall": terminated & ~self.fault,
            "fault": self.fault.copy(),
            "power_w": total_power,
            "terrain_level": self.level.copy(),
            "height": height,
            "lin_vel_b": lin_b,
        }

        done_idx = np.flatnonzero(done)
        if len(done_idx):
            self._curriculum_on_done(done_idx, timeout[done_idx])
            self._spawn(done_idx)

        self.ang_vel_history = np.concatenate(
            [ang_b[:, None, :], self.ang_vel_history[:, :-1, :]], axis=1
        )
        actor_obs, critic_obs = self._observations()
        return actor_obs, critic_obs, reward, done, info

    def _curriculum_on_done(self, idx: np.ndarray, timed_out: np.ndarray) -> None:
        cfg = self.cfg
        if cfg.terrain_kind != "mixed" or not cfg.terrain_curriculum:
            return
        max_level = self.terrain.cell_difficulty.shape[0] - 1
        if cfg.task == "locomotion":
            elapsed = np.maximum(self.step_count[idx], 1) * self.dt_ctrl
            commanded = np.linalg.norm(self.command[idx, 0:2], axis=-1) * elapsed
            traversed = np.linalg.norm(self.q[idx, 0:2] - self.spawn_xy[idx], axis=-1)
            self.level[idx] = curriculum_update(self.level[idx], traversed, commanded, max_level)
        else:
            # no meaningful traversal target: promote on survival, demote on a fall
            lv = self.level[idx] + np.where(timed_out, 1, -1)
            self.level[idx] = np.clip(lv, 0, max_level)

    def _observations(self):
        rot = quat_to_rot(self.q[:, 3:7])
        proj_g = -rot[:, 2, :]
        joint_rel = self.q[:, 7:] - self._q_def
        actor = assemble_actor_obs(
            self.command, self.ang_vel_history, proj_g, joint_rel,
            self.v[:, 6:], self.prev_action,
        )
        lin_b = np.einsum("nji,nj->ni", rot, self.v[:, 0:3])
        ang_b = np.einsum("nji,nj->ni", rot, self.v[:, 3:6])
        critic = assemble_critic_obs(
            self.command, lin_b, ang_b, proj_g, joint_rel,
            self.v[:, 6:], self.prev_action,
        )
        return actor, critic
