"""Clipped-surrogate PPO with GAE and a KL-adaptive learning rate."""
from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np

from . import numcore as nc
from .numcore import GradientTape, NetworkParams
from .policy import GaussianPolicy, kl as gaussian_kl

log = logging.getLogger(__name__)

METRIC_COLUMNS = (
    "iteration",
    "mean_reward",
    "policy_loss",
    "value_loss",
    "entropy",
    "kl",
    "lr",
    "rmse",
    "rmse_o",
    "cot",
    "cot_o",
)


@dataclass
class TrainerConfig:
    gamma: float = 0.99
    lam: float = 0.95
    clip: float = 0.2
    epochs: int = 4
    minibatches: int = 4
    entropy_coef: float = 0.0
    value_coef: float = 1.0
    lr_init: float = 1e-3
    kl_target: float = 0.01
    lr_min: float = 1e-5
    lr_max: float = 1e-2
    max_grad_norm: float = 1.0
    iterations: int = 100
    num_envs: int = 16
    steps_per_env: int = 32
    seed: int = 0
    eval_interval: int = 0
    eval_episodes: int = 16
    checkpoint_interval: int = 0

    def __post_init__(self):
        if not (0.0 <= self.gamma < 1.0 and 0.0 <= self.lam < 1.0):
            raise ValueError("gamma and lam must lie in [0, 1)")
        if not 0.0 < self.lr_min <= self.lr_max:
            raise ValueError("learning-rate bounds must satisfy 0 < lr_min <= lr_max")
        for name in ("clip", "epochs", "minibatches", "lr_init", "kl_target", "iterations", "num_envs", "steps_per_env"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")

    def to_dict(self) -> dict:
        return asdict(self)


class ActorCritic:
    """Gaussian policy (``actor.*``, ``log_std``) plus critic (``critic.*``) in one parameter set."""

    def __init__(self, policy: GaussianPolicy, critic, arch: str = ""):
        self.policy = policy
        self.critic = critic
        self.arch = arch

    def init(self, rng: np.random.Generator) -> NetworkParams:
        params = self.policy.init(rng)
        params.update(self.critic.init(rng).prefixed("critic."))
        return params

    def value(self, params, obs, priv=None):
        return self.critic.forward(params, obs, priv, prefix="critic.")


# ---------------------------------------------------------------- rollout data


@dataclass
class RolloutBuffer:
    obs: np.ndarray  # (T, N, D)
    priv: np.ndarray | None  # (T, N, P)
    actions: np.ndarray  # (T, N, A)
    log_probs: np.ndarray  # (T, N)
    rewards: np.ndarray
    values: np.ndarray
    dones: np.ndarray
    mu: np.ndarray  # (T, N, A) mean actions under the rollout policy
    log_std: np.ndarray  # (A,)
    last_values: np.ndarray  # (N,)

    @classmethod
    def empty(cls, T: int, N: int, obs_dim: int, act_dim: int, priv_dim: int) -> "RolloutBuffer":
        return cls(
            obs=np.zeros((T, N, obs_dim)),
            priv=np.zeros((T, N, priv_dim)) if priv_dim else None,
            actions=np.zeros((T, N, act_dim)),
            log_probs=np.zeros((T, N)),
            rewards=np.zeros((T, N)),
            values=np.zeros((T, N)),
            dones=np.zeros((T, N)),
            mu=np.zeros((T, N, act_dim)),
            log_std=np.zeros(act_dim),
            last_values=np.zeros(N),
        )

    @property
    def size(self) -> int:
        return self.rewards.size


def compute_gae(rewards, values, dones, last_values, gamma: float, lam: float):
    """Generalized advantage estimates and returns (advantages + values).

    Arrays are (T,) or (T, N); ``dones[t]`` ends the episode after step t.
    """
    rewards = np.asarray(rewards, dtype=np.float64)
    if rewards.size == 0:
        raise ValueError("empty rollout buffer")
    values = np.asarray(values, dtype=np.float64)
    nonterminal = 1.0 - np.asarray(dones, dtype=np.float64)
    adv = np.zeros_like(rewards)
    gae = np.zeros_like(rewards[0])
    next_value = np.asarray(last_values, dtype=np.float64)
    for t in range(rewards.shape[0] - 1, -1, -1):
        delta = rewards[t] + gamma * next_value * nonterminal[t] - values[t]
        gae = delta + gamma * lam * nonterminal[t] * gae
        adv[t] = gae
        next_value = values[t]
    return adv, adv + values


def normalize_advantages(adv: np.ndarray) -> np.ndarray:
    return (adv - adv.mean()) / max(float(adv.std()), 1e-8)


def adapt_lr(current_lr: float, kl_measured: float, kl_target: float, bounds: tuple[float, float]) -> float:
    lr = current_lr
    if kl_measured > 2.0 * kl_target:
        lr = lr / 1.5
    elif kl_measured < 0.5 * kl_target:
        lr = lr * 1.5
    return min(max(lr, bounds[0]), bounds[1])


class Adam:
    def __init__(self, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}
        self.t = 0

    def step(self, params: NetworkParams, grads: dict[str, np.ndarray], lr: float) -> None:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        c1 = 1.0 - b1**self.t
        c2 = 1.0 - b2**self.t
        for name, g in grads.items():
            m = self.m.get(name)
            if m is None:
                m = self.m[name] = np.zeros_like(g)
                self.v[name] = np.zeros_like(g)
            v = self.v[name]
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            params[name] = params[name] - lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def clip_grad_norm(grads: dict[str, np.ndarray], max_norm: float) -> float:
    total = math.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))
    if max_norm > 0 and total > max_norm:
        scale = max_norm / (total + 1e-12)
        for k in grads:
            grads[k] = grads[k] * scale
    return total


def ppo_loss(agent: ActorCritic, P, batch: dict, config: TrainerConfig):
    """Total loss and its parts for one minibatch; ``P`` maps names to tensors."""
    pol = agent.policy
    mu = pol.mean(P, batch["obs"])
    log_std = pol.log_std(P)
    logp = nc.gaussian_log_density(batch["actions"], mu, log_std)
    ratio = nc.exp(nc.sub(logp, batch["log_probs"]))
    adv = batch["advantages"]
    surr = nc.minimum(nc.mul(ratio, adv), nc.mul(nc.clip(ratio, 1.0 - config.clip, 1.0 + config.clip), adv))
    policy_loss = nc.neg(nc.mean(surr))
    value = agent.value(P, batch["obs"], batch["priv"])
    value_loss = nc.mean(nc.square(nc.sub(value, batch["returns"])))
    entropy = pol.entropy(P)
    total = nc.sub(nc.add(policy_loss, nc.mul(value_loss, config.value_coef)), nc.mul(entropy, config.entropy_coef))
    return total, {"policy_loss": policy_loss, "value_loss": value_loss, "entropy": entropy, "mu": mu, "log_std": log_std}


def ppo_update(
    agent: ActorCritic,
    params: NetworkParams,
    optimizer: Adam,
    buffer: RolloutBuffer,
    config: TrainerConfig,
    lr: float,
    rng: np.random.Generator,
):
    """Runs the configured epochs of minibatch updates in place on ``params``.

    Returns (mean losses, mean KL, final learning rate).
    """
    adv, ret = compute_gae(buffer.rewards, buffer.values, buffer.dones, buffer.last_values, config.gamma, config.lam)
    T, N = buffer.rewards.shape
    flat = {
        "obs": buffer.obs.reshape(T * N, -1),
        "priv": None if buffer.priv is None else buffer.priv.reshape(T * N, -1),
        "actions": buffer.actions.reshape(T * N, -1),
        "log_probs": buffer.log_probs.reshape(-1),
        "advantages": normalize_advantages(adv.reshape(-1)),
        "returns": ret.reshape(-1),
        "mu": buffer.mu.reshape(T * N, -1),
    }
    n = T * N
    mb = max(n // config.minibatches, 1)
    sums = {"policy_loss": 0.0, "value_loss": 0.0, "entropy": 0.0, "kl": 0.0}
    count = 0
    for _ in range(config.epochs):
        order = rng.permutation(n)
        for start in range(0, mb * config.minibatches, mb):
            idx = order[start : start + mb]
            batch = {k: (None if v is None else v[idx]) for k, v in flat.items()}
            with GradientTape() as tape:
                P = params.tensors()
                loss, parts = ppo_loss(agent, P, batch, config)
            if not np.isfinite(loss.data):
                raise FloatingPointError(
                    "non-finite PPO loss: "
                    + ", ".join(f"{k}={float(parts[k].data):.4g}" for k in ("policy_loss", "value_loss", "entropy"))
                )
            grads = nc.backward(tape, loss, P)
            clip_grad_norm(grads, config.max_grad_norm)
            kl = float(gaussian_kl(batch["mu"], buffer.log_std, parts["mu"].data, parts["log_std"].data).data)
            lr = adapt_lr(lr, kl, config.kl_target, (config.lr_min, config.lr_max))
            optimizer.step(params, grads, lr)
            for k in ("policy_loss", "value_loss", "entropy"):
                sums[k] += float(parts[k].data)
            sums["kl"] += kl
            count += 1
    means = {k: v / count for k, v in sums.items()}
    return means, means["kl"], lr


# ---------------------------------------------------------------- training


@dataclass
class TrainResult:
    params: NetworkParams
    rows: list[dict] = field(default_factory=list)
    lr: float = 0.0


def collect_rollout(agent: ActorCritic, params, env, obs, priv, config: TrainerConfig, rng: np.random.Generator):
    """Steps ``env`` for ``config.steps_per_env`` steps with a frozen parameter snapshot."""
    T, N = config.steps_per_env, env.num_envs
    buf = RolloutBuffer.empty(T, N, obs.shape[-1], env.act_dim, 0 if priv is None else priv.shape[-1])
    buf.log_std = agent.policy.log_std(params).data.copy()
    for t in range(T):
        mu = agent.policy.mean(params, obs).data
        eps = rng.standard_normal(mu.shape)
        action = mu + np.exp(buf.log_std) * eps
        z = eps
        logp = np.sum(-0.5 * z * z - buf.log_std - 0.5 * np.log(2.0 * np.pi), axis=-1)
        value = agent.value(params, obs, priv).data
        next_obs, next_priv, reward, done, info = env.step(action)
        timeout = info.get("timeout")
        if timeout is not None and np.any(timeout):
            v_term = agent.value(params, info["terminal_obs"], info.get("terminal_priv")).data
            reward = reward + config.gamma * v_term * timeout
        buf.obs[t] = obs
        if priv is not None:
            buf.priv[t] = priv
        buf.actions[t] = action
        buf.log_probs[t] = logp
        buf.rewards[t] = reward
        buf.values[t] = value
        buf.dones[t] = done
        buf.mu[t] = mu
        obs, priv = next_obs, next_priv
    buf.last_values = agent.value(params, obs, priv).data.copy()
    return buf, obs, priv


def train(
    config: TrainerConfig,
    env_factory: Callable[[int, int], object],
    agent: ActorCritic,
    evaluator: Callable[[NetworkParams], dict] | None = None,
    checkpoint_fn: Callable[[int, NetworkParams], None] | None = None,
    check_fn: Callable[[NetworkParams], None] | None = None,
) -> TrainResult:
    """Alternate rollout collection and PPO updates for ``config.iterations`` iterations.

    ``env_factory(num_envs, seed)`` builds the vectorized training environment.
    ``evaluator`` returns rmse/rmse_o/cot/cot_o entries every ``eval_interval``
    iterations, and ``check_fn`` (e.g. a symmetry check) runs at the same points.
    """
    rng = np.random.default_rng(config.seed)
    params = agent.init(rng)
    env = env_factory(config.num_envs, config.seed + 1)
    obs, priv = env.reset()
    optimizer = Adam()
    lr = config.lr_init
    rows = []
    for it in range(1, config.iterations + 1):
        buf, obs, priv = collect_rollout(agent, params, env, obs, priv, config, rng)
        mean_reward = float(np.mean(buf.rewards))
        losses, kl, lr = ppo_update(agent, params, optimizer, buf, config, lr, rng)
        row = {
            "iteration": it,
            "mean_reward": mean_reward,
            "policy_loss": losses["policy_loss"],
            "value_loss": losses["value_loss"],
            "entropy": losses["entropy"],
            "kl": kl,
            "lr": lr,
        }
        at_eval = config.eval_interval and (it % config.eval_interval == 0 or it == config.iterations)
        if at_eval and evaluator is not None:
            row.update(evaluator(params))
        if at_eval and check_fn is not None:
            check_fn(params)
        rows.append(row)
        if checkpoint_fn is not None and config.checkpoint_interval and it % config.checkpoint_interval == 0:
            checkpoint_fn(it, params)
        log.info("iter %d reward %.4f kl %.4g lr %.3g", it, mean_reward, kl, lr)
    return TrainResult(params, rows, lr)


def format_row(row: dict) -> list[str]:
    out = []
    for col in METRIC_COLUMNS:
        v = row.get(col)
        if v is None:
            out.append("")
        elif isinstance(v, (int, np.integer)):
            out.append(str(int(v)))
        else:
            out.append(repr(float(v)))
    return out
