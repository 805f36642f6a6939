"""Clipped-surrogate policy-gradient training with an asymmetric critic.

The actor sees the 66-entry proprioceptive observation; the critic sees the
48-entry privileged observation with the ground-truth base twist.  Rollouts
come from a vectorized environment, advantages from GAE, and every batch
can be replicated under the robot's four mirror symmetries before the
update.  Learning rate adapts to hold a target KL step.
"""

from __future__ import annotations

import json
import time
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from . import __version__
from .actuation import power_loss
from .env import EVAL_COMMANDS, EnvConfig, VecEnv
from .mlp import Adam, DenseNet, GaussianPolicy, clip_grad_norm
from .observations import ACTOR_DIM, CRITIC_DIM
from .robot import RobotModel
from .symmetry import SymmetryTransform, symmetry_transforms

CHECKPOINT_FORMAT_VERSION = 1


@dataclass(frozen=True)
class TrainConfig:
    num_envs: int = 256
    horizon: int = 24
    epochs: int = 5
    minibatches: int = 4
    gamma: float = 0.99
    lam: float = 0.95
    clip_eps: float = 0.2
    learning_rate: float = 3e-4
    adaptive_kl: bool = True
    kl_target: float = 0.01
    entropy_coef: float = 0.005
    value_coef: float = 1.0
    max_grad_norm: float = 1.0
    iterations: int = 1000
    augment: bool = True
    hidden: tuple[int, ...] = (256, 128, 64)
    activation: str = "tanh"
    init_std: float = 1.0
    checkpoint_every: int = 200
    seed: int = 0
    # regularization curriculum: engage once tracking clears the threshold,
    # then ramp the penalty weights linearly over this many iterations
    curriculum_tracking_threshold: float = 0.5
    curriculum_ramp_iters: int = 150
    min_std: float = 0.2
    # optional early stop on the rollout tracking-term rolling mean
    stop_tracking_mean: float | None = None
    stop_patience: int = 10

    def __post_init__(self):
        if not (0 < self.gamma <= 1 and 0 < self.lam <= 1):
            raise ValueError("gamma and lam must lie in (0, 1]")
        if not 0 < self.clip_eps < 1:
            raise ValueError("clip_eps must lie in (0, 1)")
        if self.num_envs < 1:
            raise ValueError("need at least one environment")


@dataclass
class RolloutBuffer:
    """Time-major rollout storage: arrays are (horizon, n_envs, ...)."""

    actor_obs: np.ndarray
    critic_obs: np.ndarray
    actions: np.ndarray
    log_prob: np.ndarray
    action_mean: np.ndarray
    rewards: np.ndarray
    dones: np.ndarray
    values: np.ndarray
    last_values: np.ndarray     # (n_envs,) bootstrap at the cut-off
    advantages: np.ndarray | None = None
    returns: np.ndarray | None = None

    def __len__(self) -> int:
        return int(np.prod(self.rewards.shape))


def collect_rollouts(
    policy: GaussianPolicy,
    critic: DenseNet,
    env: VecEnv,
    horizon: int,
    rng: np.random.Generator,
    obs_pair,
    gamma: float = 0.99,
) -> tuple[RolloutBuffer, dict, tuple]:
    """Roll the policy for ``horizon`` control steps across all envs.

    ``obs_pair`` is the (actor_obs, critic_obs) the env currently shows;
    the matching pair after the rollout is returned for the next call.
    Timeout cut-offs are value-bootstrapped so episodes can span rollouts.
    """
    n = env.num_envs
    actor_obs, critic_obs = obs_pair
    buf = RolloutBuffer(
        actor_obs=np.zeros((horizon, n, ACTOR_DIM)),
        critic_obs=np.zeros((horizon, n, CRITIC_DIM)),
        actions=np.zeros((horizon, n, policy.act_dim)),
        log_prob=np.zeros((horizon, n)),
        action_mean=np.zeros((horizon, n, policy.act_dim)),
        rewards=np.zeros((horizon, n)),
        dones=np.zeros((horizon, n)),
        values=np.zeros((horizon, n)),
        last_values=np.zeros(n),
    )
    term_sums: dict[str, float] = {}
    tracking_sum = 0.0
    power_sum = 0.0
    falls = 0
    faults = 0
    episodes = 0
    level_sum = 0.0
    for t in range(horizon):
        action, logp, mu = policy.sample(actor_obs, rng)
        value = critic.forward(critic_obs)[..., 0]
        buf.actor_obs[t] = actor_obs
        buf.critic_obs[t] = critic_obs
        buf.actions[t] = action
        buf.log_prob[t] = logp
        buf.action_mean[t] = mu
        buf.values[t] = value

        actor_obs, critic_obs, reward, done, info = env.step(action)
        # timeouts are not true terminations: bootstrap the cut-off value
        timeout = info["timeout"]
        if np.any(timeout):
            reward = reward + gamma * np.where(timeout, value, 0.0)
        buf.rewards[t] = reward
        buf.dones[t] = done

        for name, arr in info["reward_terms"].items():
            term_sums[name] = term_sums.get(name, 0.0) + float(np.mean(arr))
        tracking_sum += float(np.mean(info["tracking"]))
        power_sum += float(np.mean(info["power_w"]))
        falls += int(np.sum(info["fall"]))
        faults += int(np.sum(info["fault"]))
        episodes += int(np.sum(done))
        level_sum += float(np.mean(info["terrain_level"]))

    buf.last_values = critic.forward(critic_obs)[..., 0]
    stats = {
        "reward_terms": {k: v / horizon for k, v in term_sums.items()},
        "tracking_mean": tracking_sum / horizon,
        "power_w_mean": power_sum / horizon,
        "falls": falls,
        "faults": faults,
        "episodes": episodes,
        "terrain_level_mean": level_sum / horizon,
        "reward_mean": float(buf.rewards.mean()),
    }
    return buf, stats, (actor_obs, critic_obs)


def gae_advantages(buffer: RolloutBuffer, gamma: float, lam: float):
    """Generalized advantage estimation over a time-major buffer."""
    rewards, values, dones = buffer.rewards, buffer.values, buffer.dones
    horizon = rewards.shape[0]
    adv = np.zeros_like(rewards)
    next_adv = 0.0
    next_value = buffer.last_values
    for t in range(horizon - 1, -1, -1):
        not_done = 1.0 - dones[t]
        delta = rewards[t] + gamma * next_value * not_done - values[t]
        next_adv = delta + gamma * lam * not_done * next_adv
        adv[t] = next_adv
        next_value = values[t]
    returns = adv + values
    buffer.advantages = adv
    buffer.returns = returns
    return adv, returns


def augment_symmetry(batch: dict, transforms: tuple[SymmetryTransform, ...]) -> dict:
    """Replicate a flat batch under every mirror transform (4x size).

    Observations and actions are mapped; scalars (advantages, returns) are
    copied unchanged.  Slice 0 is the identity, so ``out[k][:B] == batch[k]``.
    """
    out = {key: [] for key in batch}
    for tr in transforms:
        out["actor_obs"].append(tr.apply_actor(batch["actor_obs"]))
        out["critic_obs"].append(tr.apply_critic(batch["critic_obs"]))
        out["actions"].append(tr.apply_action(batch["actions"]))
        for key in batch:
            if key not in ("actor_obs", "critic_obs", "actions"):
                out[key].append(batch[key])
    return {key: np.concatenate(vals, axis=0) for key, vals in out.items()}


def policy_loss_and_grads(policy: GaussianPolicy, obs, actions, logp_old,
                          advantages, clip_eps: float, entropy_coef: float):
    """Clipped-surrogate loss with exact parameter gradients."""
    n = obs.shape[0]
    mu, cache = policy.net.forward(obs, need_cache=True)
    std = np.exp(policy.log_std)
    z = (actions - mu) / std
    logp = -0.5 * np.sum(z * z, axis=-1) - np.sum(policy.log_std) \
        - 0.5 * policy.act_dim * np.log(2 * np.pi)
    ratio = np.exp(logp - logp_old)
    clipped = np.clip(ratio, 1.0 - clip_eps, 1.0 + clip_eps)
    obj = np.minimum(ratio * advantages, clipped * advantages)
    surrogate = -float(np.mean(obj))
    loss = surrogate - entropy_coef * policy.entropy()

    # gradient flows through the ratio only where the unclipped branch is active
    active = (ratio * advantages) <= (clipped * advantages)
    dlogp = -(advantages * ratio * active) / n
    dmu = dlogp[:, None] * z / std
    dlog_std = np.sum(dlogp[:, None] * (z * z - 1.0), axis=0) - entropy_coef
    grads = policy.net.backward(cache, dmu) + [dlog_std]
    stats = {
        "surrogate": surrogate,
        "clip_fraction": float(np.mean(ratio != clipped)),
        "ratio_mean": float(np.mean(ratio)),
    }
    return loss, grads, stats


def value_loss_and_grads(critic: DenseNet, obs, returns):
    n = obs.shape[0]
    v, cache = critic.forward(obs, need_cache=True)
    err = v[..., 0] - returns
    loss = 0.5 * float(np.mean(err * err))
    grads = critic.backward(cache, (err / n)[:, None])
    return loss, grads


def gaussian_kl(mu_old, log_std_old, mu_new, log_std_new) -> float:
    """Mean analytic KL(old || new) between diagonal Gaussians."""
    var_old = np.exp(2 * log_std_old)
    var_new = np.exp(2 * log_std_new)
    per_dim = (log_std_new - log_std_old
               + (var_old + (mu_old - mu_new) ** 2) / (2 * var_new) - 0.5)
    return float(np.mean(np.sum(per_dim, axis=-1)))


class PPOLearner:
    """Holds the optimizers and runs epochs of minibatch updates."""

    def __init__(self, policy: GaussianPolicy, critic: DenseNet, cfg: TrainConfig):
        self.policy = policy
        self.critic = critic
        self.cfg = cfg
        self.lr = cfg.learning_rate
        self.opt_actor = Adam(policy.params, lr=self.lr)
        self.opt_critic = Adam(critic.params, lr=self.lr)

    def update(self, batch: dict, rng: np.random.Generator) -> dict:
        cfg = self.cfg
        n = batch["actor_obs"].shape[0]
        if not np.all(np.isfinite(batch["advantages"])):
            raise FloatingPointError("non-finite advantages entering the update")
        stats_acc: dict[str, float] = {}
        count = 0
        kl_value = 0.0
        old_log_std = self.policy.log_std.copy()
        for _ in range(cfg.epochs):
            order = rng.permutation(n)
            for chunk in np.array_split(order, cfg.minibatches):
                loss_pi, grads_pi, stats = policy_loss_and_grads(
                    self.policy, batch["actor_obs"][chunk], batch["actions"][chunk],
                    batch["log_prob"][chunk], batch["advantages"][chunk],
                    cfg.clip_eps, cfg.entropy_coef,
                )
                loss_v, grads_v = value_loss_and_grads(
                    self.critic, batch["critic_obs"][chunk], batch["returns"][chunk]
                )
                if not np.isfinite(loss_pi) or not np.isfinite(loss_v):
                    raise FloatingPointError(
                        f"non-finite loss (policy {loss_pi}, value {loss_v})"
                    )
                for g in grads_v:
                    g *= cfg.value_coef
                clip_grad_norm(grads_pi, cfg.max_grad_norm)
                clip_grad_norm(grads_v, cfg.max_grad_norm)

                if cfg.adaptive_kl:
                    mu_new = self.policy.mean(batch["actor_obs"][chunk])
                    kl_value = gaussian_kl(
                        batch["action_mean"][chunk], old_log_std,
                        mu_new, self.policy.log_std,
                    )
                    if kl_value > 2.0 * cfg.kl_target:
                        self.lr = max(1e-5, self.lr / 1.5)
                    elif 0.0 < kl_value < cfg.kl_target / 2.0:
                        self.lr = min(1e-2, self.lr * 1.5)
                    self.opt_actor.lr = self.lr
                    self.opt_critic.lr = self.lr

                self.opt_actor.step(self.policy.params, grads_pi)
                self.opt_critic.step(self.critic.params, grads_v)
                np.maximum(self.policy.log_std, np.log(self.cfg.min_std),
                           out=self.policy.log_std)

                stats["value_loss"] = loss_v
                for k, v in stats.items():
                    stats_acc[k] = stats_acc.get(k, 0.0) + v
                count += 1
        out = {k: v / count for k, v in stats_acc.items()}
        out["kl"] = kl_value
        out["lr"] = self.lr
        out["std_mean"] = float(np.mean(np.exp(self.policy.log_std)))
        return out


def ppo_update(policy: GaussianPolicy, critic: DenseNet, batch: dict,
               cfg: TrainConfig, rng: np.random.Generator,
               learner: PPOLearner | None = None) -> dict:
    """One full PPO update (epochs x minibatches) over a flat batch."""
    if learner is None:
        learner = PPOLearner(policy, critic, cfg)
    return learner.update(batch, rng)


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------

def save_checkpoint(path: str | Path, policy: GaussianPolicy, critic: DenseNet,
                    train_cfg: TrainConfig, env_cfg: EnvConfig, iteration: int,
                    model: RobotModel | None = None) -> Path:
    from .robot import model_to_dict

    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    meta = {
        "format_version": CHECKPOINT_FORMAT_VERSION,
        "gravsim_version": __version__,
        "iteration": iteration,
        "train_config": asdict(train_cfg),
        "env_config": asdict(env_cfg),
        "robot": model_to_dict(model) if model is not None else None,
        "actor_sizes": list(policy.net.sizes),
        "critic_sizes": list(critic.sizes),
        "activation": policy.net.activation,
    }
    arrays = {"meta_json": np.frombuffer(json.dumps(meta).encode(), dtype=np.uint8)}
    for i, (w, b) in enumerate(zip(policy.net.weights, policy.net.biases)):
        arrays[f"actor_w{i}"] = w
        arrays[f"actor_b{i}"] = b
    arrays["actor_log_std"] = policy.log_std
    for i, (w, b) in enumerate(zip(critic.weights, critic.biases)):
        arrays[f"critic_w{i}"] = w
        arrays[f"critic_b{i}"] = b
    np.savez(path, **arrays)
    return path


def load_checkpoint(path: str | Path):
    """Returns (policy, critic, meta dict)."""
    from .config import env_config_from_dict  # local import to stay cycle-free
    from .robot import model_from_dict

    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"checkpoint not found: {path}")
    data = np.load(path)
    meta = json.loads(bytes(data["meta_json"]).decode())
    if meta.get("format_version") != CHECKPOINT_FORMAT_VERSION:
        raise ValueError(
            f"unsupported checkpoint format {meta.get('format_version')!r}"
        )
    rng = np.random.default_rng(0)
    actor_sizes = meta["actor_sizes"]
    policy = GaussianPolicy(actor_sizes[0], actor_sizes[-1], actor_sizes[1:-1], rng,
                            activation=meta["activation"])
    for i in range(len(policy.net.weights)):
        policy.net.weights[i] = data[f"actor_w{i}"]
        policy.net.biases[i] = data[f"actor_b{i}"]
    policy.log_std = data["actor_log_std"]
    critic = DenseNet(meta["critic_sizes"], rng, activation=meta["activation"],
                      out_gain=1.0)
    for i in range(len(critic.weights)):
        critic.weights[i] = data[f"critic_w{i}"]
        critic.biases[i] = data[f"critic_b{i}"]
    meta["env_config_obj"] = env_config_from_dict(meta["env_config"])
    meta["model_obj"] = model_from_dict(meta["robot"]) if meta.get("robot") else None
    return policy, critic, meta


# ---------------------------------------------------------------------------
# training
# ---------------------------------------------------------------------------

@dataclass
class TrainResult:
    checkpoint_path: Path
    metrics_path: Path
    iterations_run: int
    tracking_mean: float
    reward_mean: float
    stopped_early: bool


def train(train_cfg: TrainConfig, env_cfg: EnvConfig, out_dir: str | Path,
          model: RobotModel | None = None, log=None) -> TrainResult:
    """Run the full collect / augment / update loop and write artifacts.

    Writes ``metrics.jsonl`` (one record per iteration), periodic
    ``checkpoint_*.npz`` files, and ``checkpoint_final.npz``.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(train_cfg.seed)
    env = VecEnv(env_cfg, num_envs=train_cfg.num_envs, seed=train_cfg.seed + 1)
    policy = GaussianPolicy(ACTOR_DIM, env.model.n_joints, train_cfg.hidden, rng,
                            activation=train_cfg.activation,
                            init_std=train_cfg.init_std)
    critic = DenseNet((CRITIC_DIM,) + tuple(train_cfg.hidden) + (1,), rng,
                      activation=train_cfg.activation, out_gain=1.0)
    learner = PPOLearner(policy, critic, train_cfg)
    transforms = symmetry_transforms(env_cfg.task) if train_cfg.augment else None

    env.penalty_progress = 0.0
    curriculum_engaged_at: int | None = None

    obs_pair = env.reset()
    metrics_path = out_dir / "metrics.jsonl"
    tracking_window: list[float] = []
    stopped_early = False
    iterations_run = 0
    last_stats = {"tracking_mean": 0.0, "reward_mean": 0.0}

    with open(metrics_path, "w") as metrics_file:
        for it in range(1, train_cfg.iterations + 1):
            t0 = time.time()
            buf, roll_stats, obs_pair = collect_rollouts(
                policy, critic, env, train_cfg.horizon, rng, obs_pair,
                gamma=train_cfg.gamma,
            )
            gae_advantages(buf, train_cfg.gamma, train_cfg.lam)

            flat = {
                "actor_obs": buf.actor_obs.reshape(-1, ACTOR_DIM),
                "critic_obs": buf.critic_obs.reshape(-1, CRITIC_DIM),
                "actions": buf.actions.reshape(-1, policy.act_dim),
                "advantages": buf.advantages.reshape(-1),
                "returns": buf.returns.reshape(-1),
            }
            if transforms is not None:
                flat = augment_symmetry(flat, transforms)
            # (re)compute log-probs and means under the pre-update policy so
            # augmented samples carry their own correct old-policy stats
            mu_old = policy.mean(flat["actor_obs"])
            flat["action_mean"] = mu_old
            flat["log_prob"] = policy.log_prob_given(mu_old, flat["actions"])
            adv = flat["advantages"]
            flat["advantages"] = (adv - adv.mean()) / (adv.std() + 1e-8)

            update_stats = learner.update(flat, rng)

            # regularization-penalty curriculum
            if (curriculum_engaged_at is None
                    and roll_stats["tracking_mean"] > train_cfg.curriculum_tracking_threshold):
                curriculum_engaged_at = it
            if curriculum_engaged_at is None:
                progress = 0.0
            else:
                progress = min(1.0, (it - curriculum_engaged_at)
                               / max(1, train_cfg.curriculum_ramp_iters))
            env.penalty_progress = progress

            record = {
                "iteration": it,
                "time_s": round(time.time() - t0, 4),
                "penalty_progress": progress,
                **{f"loss/{k}": v for k, v in update_stats.items()},
                **{f"rollout/{k}": v for k, v in roll_stats.items()
                   if k != "reward_terms"},
                "reward_terms": roll_stats["reward_terms"],
            }
            metrics_file.write(json.dumps(record) + "\n")
            metrics_file.flush()
            if log:
                log(f"iter {it:5d}  reward {roll_stats['reward_mean']:+.3f}  "
                    f"tracking {roll_stats['tracking_mean']:.3f}  "
                    f"power {roll_stats['power_w_mean']:.1f} W")

            iterations_run = it
            last_stats = roll_stats
            if train_cfg.checkpoint_every and it % train_cfg.checkpoint_every == 0:
                save_checkpoint(out_dir / f"checkpoint_{it:06d}.npz",
                                policy, critic, train_cfg, env_cfg, it,
                                model=env.model)

            tracking_window.append(roll_stats["tracking_mean"])
            if train_cfg.stop_tracking_mean is not None:
                window = tracking_window[-train_cfg.stop_patience:]
                if (len(window) >= train_cfg.stop_patience and progress >= 1.0
                        and float(np.mean(window)) > train_cfg.stop_tracking_mean):
                    stopped_early = True
                    break

    final = save_checkpoint(out_dir / "checkpoint_final.npz",
                            policy, critic, train_cfg, env_cfg, iterations_run,
                            model=env.model)
    return TrainResult(
        checkpoint_path=final,
        metrics_path=metrics_path,
        iterations_run=iterations_run,
        tracking_mean=last_stats["tracking_mean"],
        reward_mean=last_stats["reward_mean"],
        stopped_early=stopped_early,
    )


# ---------------------------------------------------------------------------
# evaluation
# ---------------------------------------------------------------------------

@dataclass
class EvalResult:
    protocol: str
    gravity: float
    seconds: float
    n_envs: int
    tracking_term_mean: float
    tracking_error_mean: float
    fall_rate: float
    avg_power_w: float
    avg_joint_w: float
    avg_winding_w: float
    reward_term_means: dict
    phases: list
    slack_events: int
    trajectory: "object" = field(repr=False, default=None)

    def summary_dict(self) -> dict:
        return {
            "format_version": 1,
            "protocol": self.protocol,
            "gravity": self.gravity,
            "seconds": self.seconds,
            "n_envs": self.n_envs,
            "tracking_term_mean": self.tracking_term_mean,
            "tracking_error_mean": self.tracking_error_mean,
            "fall_rate": self.fall_rate,
            "avg_power_w": self.avg_power_w,
            "avg_joint_w": self.avg_joint_w,
            "avg_winding_w": self.avg_winding_w,
            "reward_term_means": self.reward_term_means,
            "phases": self.phases,
            "slack_events": self.slack_events,
        }


def evaluate(policy: GaussianPolicy, env_cfg: EnvConfig, protocol: str,
             gravity: float | None = None, rig=None, seconds: float = 60.0,
             n_envs: int = 16, seed: int = 123,
             model: RobotModel | None = None) -> EvalResult:
    """Deterministic (mean-action) evaluation under a named protocol."""
    if protocol not in EVAL_COMMANDS:
        raise ValueError(f"unknown protocol {protocol!r}; options: {sorted(EVAL_COMMANDS)}")
    needed_task = "locomotion" if protocol == "loco-0.4" else "base_pose"
    if env_cfg.task != needed_task:
        raise ValueError(
            f"protocol {protocol!r} needs a {needed_task} policy, "
            f"checkpoint was trained for {env_cfg.task!r}"
        )
    phases = EVAL_COMMANDS[protocol]
    cfg = replace(
        env_cfg,
        gravity=gravity if gravity is not None else env_cfg.gravity,
        episode_s=seconds + 1.0,
        randomize=False,
        terrain_kind="flat",
        fixed_command=phases[0],
        init_joint_noise=0.0,
        init_yaw_random=False,
        rig=rig if rig is not None else env_cfg.rig,
    )
    env = VecEnv(cfg, num_envs=n_envs, seed=seed, model=model)
    actor_obs, _ = env.reset()

    steps = int(round(seconds * cfg.control_hz))
    phase_bounds = np.linspace(0, steps, len(phases) + 1).astype(int)
    phase_stats = [dict(err=0.0, term=0.0, count=0) for _ in phases]
    fell = np.zeros(n_envs, dtype=bool)
    power_acc = joint_acc = winding_acc = 0.0
    term_sums: dict[str, float] = {}
    track_term = 0.0
    track_err = 0.0
    rows = []
    phase_idx = 0
    from .actuation import N_JOINTS, TrajectoryLog

    for t in range(steps):
        if phase_idx + 1 < len(phases) and t >= phase_bounds[phase_idx + 1]:
            phase_idx += 1
            env.set_command(phases[phase_idx])
        action = policy.mean(actor_obs)
        actor_obs, _, reward, done, info = env.step(action)
        fell |= info["fall"]

        tau = env._last_tau
        qd = env.v[:, 6:]
        total, joint, winding = power_loss(tau, qd, env.actuator)
        power_acc += float(np.mean(total))
        joint_acc += float(np.mean(joint))
        winding_acc += float(np.mean(winding))
        for name, arr in info["reward_terms"].items():
            term_sums[name] = term_sums.get(name, 0.0) + float(np.mean(arr))
        track_term += float(np.mean(info["tracking"]))

        if cfg.task == "locomotion":
            err = float(np.mean(np.abs(env.command[:, 0] - info["lin_vel_b"][:, 0])))
        else:
            err = float(np.mean(np.abs(env.command[:, 0] - info["height"])))
        track_err += err
        ph = phase_stats[phase_idx]
        ph["err"] += err
        ph["term"] += float(np.mean(info["tracking"]))
        ph["count"] += 1

        rows.append((
            t / cfg.control_hz, env.q[0, 7:].copy(), env.v[0, 6:].copy(),
            tau[0].copy(), env.q[0, 0:7].copy(), env.v[0, 0:6].copy(),
            env.contact_flags[0].astype(float).copy(),
        ))

    log = TrajectoryLog(
        sample_rate_hz=cfg.control_hz,
        t=np.array([r[0] for r in rows]),
        joint_pos=np.stack([r[1] for r in rows]),
        joint_vel=np.stack([r[2] for r in rows]),
        joint_torque=np.stack([r[3] for r in rows]),
        base_pose=np.stack([r[4] for r in rows]),
        base_twist=np.stack([r[5] for r in rows]),
        contact_flags=np.stack([r[6] for r in rows]),
    )
    return EvalResult(
        protocol=protocol,
        gravity=cfg.gravity,
        seconds=seconds,
        n_envs=n_envs,
        tracking_term_mean=track_term / steps,
        tracking_error_mean=track_err / steps,
        fall_rate=float(np.mean(fell)),
        avg_power_w=power_acc / steps,
        avg_joint_w=joint_acc / steps,
        avg_winding_w=winding_acc / steps,
        reward_term_means={k: v / steps for k, v in term_sums.items()},
        phases=[
            {"command": list(phases[i]),
             "tracking_error_mean": s["err"] / max(1, s["count"]),
             "tracking_term_mean": s["term"] / max(1, s["count"])}
            for i, s in enumerate(phase_stats)
        ],
        slack_events=env.slack_events,
        trajectory=log,
    )
