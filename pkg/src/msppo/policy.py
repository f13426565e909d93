"""Diagonal Gaussian policy over an actor's mean action."""
from __future__ import annotations

import numpy as np

from . import numcore as nc
from .numcore import NetworkParams, Tensor
from .symmetry import SpaceAction

_LOG_2PI = float(np.log(2.0 * np.pi))


def mirror_tying(action_space: SpaceAction) -> np.ndarray:
    """Map each action component to a shared log-std slot; mirror partners share one."""
    perm = action_space.permutation
    slots: dict[int, int] = {}
    tie = np.empty(perm.size, dtype=np.intp)
    for i in range(perm.size):
        key = min(i, int(perm[i]))
        tie[i] = slots.setdefault(key, len(slots))
    return tie


class GaussianPolicy:
    """``N(actor(obs), diag(exp(log_std)^2))`` with a state-independent log std.

    ``tie[i]`` selects the free log-std value used by component ``i``. Mirror
    tying makes the covariance invariant under the action-space reflection.
    """

    def __init__(self, actor, tie: np.ndarray | None = None, init_log_std: float = 0.0):
        self.actor = actor
        n = actor.out_dim
        self.tie = np.arange(n, dtype=np.intp) if tie is None else np.asarray(tie, dtype=np.intp)
        if self.tie.shape != (n,):
            raise ValueError(f"tie map must have length {n}")
        self.n_free = int(self.tie.max()) + 1
        self.init_log_std = init_log_std

    @property
    def action_dim(self) -> int:
        return self.tie.size

    def init(self, rng: np.random.Generator) -> NetworkParams:
        params = self.actor.init(rng).prefixed("actor.")
        params["log_std"] = np.full(self.n_free, self.init_log_std)
        return params

    def log_std(self, params) -> Tensor:
        return nc.gather(params["log_std"], self.tie)

    def mean(self, params, obs) -> Tensor:
        return self.actor.forward(params, obs, prefix="actor.")

    def sample(self, params, obs, rng: np.random.Generator | int):
        """Draw ``a = mu + sigma * eps``; returns (action, log_prob) as arrays."""
        if not isinstance(rng, np.random.Generator):
            rng = np.random.default_rng(rng)
        mu = self.mean(params, obs).data
        log_std = self.log_std(params).data
        eps = rng.standard_normal(mu.shape)
        action = mu + np.exp(log_std) * eps
        return action, _log_density(action, mu, log_std)

    def log_prob(self, params, obs, action) -> Tensor:
        return nc.gaussian_log_density(action, self.mean(params, obs), self.log_std(params))

    def entropy(self, params) -> Tensor:
        return nc.tsum(nc.add(self.log_std(params), 0.5 * (1.0 + _LOG_2PI)))


def _log_density(x, mu, log_std) -> np.ndarray:
    z = (x - mu) / np.exp(log_std)
    return np.sum(-0.5 * z * z - log_std - 0.5 * _LOG_2PI, axis=-1)


def log_prob(policy: GaussianPolicy, params, obs, action) -> np.ndarray:
    return policy.log_prob(params, obs, action).data


def entropy(policy: GaussianPolicy, params) -> float:
    return float(policy.entropy(params).data)


def kl(old_mu, old_log_std, new_mu, new_log_std):
    """Batch-mean KL(old || new) between diagonal Gaussians.

    Accepts arrays or tensors; returns a Tensor so it can be differentiated.
    """
    for t in (old_mu, old_log_std, new_mu, new_log_std):
        d = t.data if isinstance(t, Tensor) else np.asarray(t, dtype=np.float64)
        if not np.all(np.isfinite(d)):
            raise ValueError("kl: non-finite input")
    var_ratio = nc.exp(nc.mul(nc.sub(old_log_std, new_log_std), 2.0))
    mean_term = nc.div(nc.square(nc.sub(old_mu, new_mu)), nc.exp(nc.mul(new_log_std, 2.0)))
    per_dim = nc.mul(nc.sub(nc.add(var_ratio, mean_term), nc.add(nc.mul(nc.sub(old_log_std, new_log_std), 2.0), 1.0)), 0.5)
    per_sample = nc.tsum(per_dim, axis=-1)
    return nc.mean(per_sample) if per_sample.ndim else per_sample
