"""Randomized symmetry property suite.

Each check draws ``trials`` independent seeds and reports the largest gap seen.
A failing check records the first offending seed so it can be replayed.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .envs import sympair
from .envs.toyquad import QuadModel
from .morphology import build_graph, go2
from .nets import build_pair_nets, build_quad_nets
from .policy import GaussianPolicy, mirror_tying
from .ppo import ActorCritic, Adam, RolloutBuffer, TrainerConfig, compute_gae, ppo_update
from .symmetry import C2, E, GS, build_action_space, build_observation_action, compose

LEVELS = {"fast": 20, "full": 200}
H_CHECK = 2


@dataclass
class CheckResult:
    name: str
    passed: bool
    gap: float
    tol: float
    seed: int | None = None
    informational: bool = False

    def line(self) -> str:
        if self.informational:
            status = "INFO"
        else:
            status = "PASS" if self.passed else "FAIL"
        where = "" if self.seed is None or self.passed else f" (seed {self.seed})"
        return f"{status} {self.name}: max gap {self.gap:.3e}, tol {self.tol:.0e}{where}"


def _run(name: str, trials: int, tol: float, fn: Callable[[int], float], informational: bool = False) -> CheckResult:
    worst, bad_seed = 0.0, None
    for seed in range(trials):
        gap = float(fn(seed))
        if not np.isfinite(gap) or gap > worst:
            worst = gap if np.isfinite(gap) else np.inf
        if bad_seed is None and not gap <= tol:
            bad_seed = seed
    passed = bad_seed is None
    if informational:
        # baselines are expected to break symmetry; report the gap, never fail
        return CheckResult(name, True, worst, tol, None, True)
    return CheckResult(name, passed, worst, tol, bad_seed)


class _Context:
    def __init__(self):
        self.spec = go2()
        self.graph = build_graph(self.spec)
        self.model = QuadModel(self.spec)
        self.G_obs = build_observation_action(GS, self.spec, H_CHECK)
        self.G_priv = build_observation_action(GS, self.spec, H_CHECK, privileged=True)
        self.G_act = build_action_space(GS, self.spec)
        self.nets = {arch: build_quad_nets(self.graph, H_CHECK, arch, hidden=16, layers=2) for arch in ("ms", "mi")}


def _group_axioms(seed: int) -> float:
    for a in C2:
        if compose(a, E) != a or compose(a, a.inverse) != E:
            return 1.0
        for b in C2:
            for c in C2:
                if compose(compose(a, b), c) != compose(a, compose(b, c)):
                    return 1.0
    spec = go2()
    rng = np.random.default_rng(seed)
    H = int(rng.integers(1, 6))
    gap = 0.0
    for build in (lambda g: build_observation_action(g, spec, H), lambda g: build_action_space(g, spec)):
        if not build(E).is_identity():
            return 1.0
        twice = build(GS).then(build(GS))
        x = rng.standard_normal((4, build(GS).dim))
        gap = max(gap, float(np.max(np.abs(twice(x) - x))))
        if not twice.is_identity():
            return 1.0
    return gap


def _quad_env(ctx: _Context, seed: int) -> float:
    rng = np.random.default_rng(seed)
    m = ctx.model
    n = 8
    s = m.initial(n, rng, one_sided=bool(seed % 2))
    for _ in range(int(rng.integers(0, 20))):
        s, _, _ = m.step(s, rng.standard_normal((n, 12)))
    s.vel = rng.standard_normal((n, 3))
    s.roll, s.pitch = rng.uniform(-0.3, 0.3, n), rng.uniform(-0.3, 0.3, n)
    a = rng.standard_normal((n, 12)) * 2.0
    s1, r1, _ = m.step(s, a)
    s2, r2, _ = m.step(m.mirror_state(s), m.mirror_action(a))
    obs_gap = np.max(np.abs(ctx.model.observe(m.mirror_state(s)) - build_observation_action(GS, ctx.spec, 1)(m.observe(s))))
    return max(m.mirror_state(s1).max_abs_diff(s2), float(np.max(np.abs(r1 - r2))), float(obs_gap))


def _pair_env(seed: int) -> float:
    rng = np.random.default_rng(seed)
    p = sympair.SymPairParams()
    s = rng.standard_normal((16, 3)) * 2.0
    a = rng.standard_normal((16, 2))
    ds = np.max(np.abs(sympair.dynamics(sympair.mirror_state(s), sympair.mirror_action(a), p) - sympair.mirror_state(sympair.dynamics(s, a, p))))
    dr = np.max(np.abs(sympair.reward(sympair.mirror_state(s), sympair.mirror_action(a), p) - sympair.reward(s, a, p)))
    return float(max(ds, dr))


def _actor_gap(ctx: _Context, arch: str, seed: int) -> float:
    rng = np.random.default_rng(seed)
    actor, _ = ctx.nets[arch]
    params = actor.init(rng).randomized(rng, 0.5)
    obs = rng.standard_normal((4, ctx.G_obs.dim))
    out = actor.forward(params, obs).data
    out_m = actor.forward(params, ctx.G_obs(obs)).data
    return float(np.max(np.abs(ctx.G_act(out) - out_m)))


def _critic_gap(ctx: _Context, arch: str, seed: int) -> float:
    rng = np.random.default_rng(seed)
    _, critic = ctx.nets[arch]
    params = critic.init(rng).randomized(rng, 0.5)
    obs = rng.standard_normal((4, ctx.G_obs.dim))
    priv = rng.uniform(0.0, 1.0, (4, 2))
    v = critic.forward(params, obs, priv).data
    v_m = critic.forward(params, ctx.G_obs(obs), priv).data
    return float(np.max(np.abs(v - v_m)))


def _critic_embedding_gap(ctx: _Context, seed: int) -> float:
    """Embeddings of the mirrored input equal the node-permuted embeddings."""
    rng = np.random.default_rng(seed)
    _, critic = ctx.nets["ms"]
    params = critic.init(rng).randomized(rng, 0.5)
    obs = rng.standard_normal((4, ctx.G_obs.dim))
    priv = rng.uniform(0.0, 1.0, (4, 2))
    z = critic.embeddings(params, obs, priv).data
    z_m = critic.embeddings(params, ctx.G_obs(obs), priv).data
    return float(np.max(np.abs(z[..., critic.layout.node_perm, :] - z_m)))


def _log_prob_gap(ctx: _Context, seed: int) -> float:
    rng = np.random.default_rng(seed)
    actor, _ = ctx.nets["ms"]
    pol = GaussianPolicy(actor, mirror_tying(ctx.G_act))
    params = pol.init(rng).randomized(rng, 0.5)
    obs = rng.standard_normal((4, ctx.G_obs.dim))
    act = rng.standard_normal((4, 12))
    lp = pol.log_prob(params, obs, act).data
    lp_m = pol.log_prob(params, ctx.G_obs(obs), ctx.G_act(act)).data
    return float(np.max(np.abs(lp - lp_m)))


def brute_force_gae(rewards, values, dones, last_value, gamma: float, lam: float) -> np.ndarray:
    """Direct double sum of discounted TD residuals within each episode."""
    T = len(rewards)
    adv = np.zeros(T)
    for t in range(T):
        total, weight = 0.0, 1.0
        for k in range(t, T):
            nxt = last_value if k == T - 1 else values[k + 1]
            delta = rewards[k] + gamma * nxt * (1.0 - dones[k]) - values[k]
            total += weight * delta
            if dones[k]:
                break
            weight *= gamma * lam
        adv[t] = total
    return adv


def _gae_gap(seed: int) -> float:
    rng = np.random.default_rng(seed)
    T = int(rng.integers(1, 11))
    r, v = rng.standard_normal(T), rng.standard_normal(T)
    d = (rng.uniform(size=T) < 0.3).astype(float)
    last = float(rng.standard_normal())
    gamma, lam = rng.uniform(0.5, 0.999), rng.uniform(0.0, 1.0)
    adv, _ = compute_gae(r, v, d, last, gamma, lam)
    return float(np.max(np.abs(adv - brute_force_gae(r, v, d, last, gamma, lam))))


def _post_update_gap(seed: int) -> float:
    """One PPO update on random data, then re-check the pair networks."""
    rng = np.random.default_rng(seed)
    actor, critic = build_pair_nets("ms", hidden=8)
    agent = ActorCritic(GaussianPolicy(actor, mirror_tying(sympair.action_space_action(GS))), critic, "ms")
    params = agent.init(rng)
    T, N = 6, 4
    buf = RolloutBuffer.empty(T, N, 3, 2, 0)
    buf.obs = rng.standard_normal((T, N, 3))
    buf.actions = rng.standard_normal((T, N, 2))
    buf.mu = agent.policy.mean(params, buf.obs).data
    buf.log_std = agent.policy.log_std(params).data
    buf.log_probs = agent.policy.log_prob(params, buf.obs, buf.actions).data
    buf.rewards = rng.standard_normal((T, N))
    buf.values = agent.value(params, buf.obs).data
    cfg = TrainerConfig(epochs=2, minibatches=2, lr_init=1e-2, kl_target=1.0, seed=seed)
    ppo_update(agent, params, Adam(), buf, cfg, cfg.lr_init, rng)
    obs = rng.standard_normal((8, 3))
    G_o, G_a = sympair.observation_action(GS), sympair.action_space_action(GS)
    eq = np.max(np.abs(G_a(agent.policy.mean(params, obs).data) - agent.policy.mean(params, G_o(obs)).data))
    inv = np.max(np.abs(agent.value(params, obs).data - agent.value(params, G_o(obs)).data))
    return float(max(eq, inv))


def run_suite(level: str = "fast") -> list[CheckResult]:
    if level not in LEVELS:
        raise ValueError(f"level must be one of {sorted(LEVELS)}")
    n = LEVELS[level]
    ctx = _Context()
    return [
        _run("group axioms", n, 0.0, _group_axioms),
        _run("toyquad step/reward/observation commutation", n, 1e-12, lambda s: _quad_env(ctx, s)),
        _run("sympair step/reward commutation", n, 1e-12, _pair_env),
        _run("ms actor equivariance", n, 1e-9, lambda s: _actor_gap(ctx, "ms", s)),
        _run("ms critic invariance", n, 1e-9, lambda s: _critic_gap(ctx, "ms", s)),
        _run("ms critic embeddings permute with the mirror", n, 1e-9, lambda s: _critic_embedding_gap(ctx, s)),
        _run("log-prob symmetry with tied std", n, 1e-9, lambda s: _log_prob_gap(ctx, s)),
        _run("gae matches brute force", n, 1e-10, _gae_gap),
        _run("symmetry after a ppo update", n, 1e-9, _post_update_gap),
        _run("mi actor equivariance gap", n, 1e-9, lambda s: _actor_gap(ctx, "mi", s), informational=True),
        _run("mi critic invariance gap", n, 1e-9, lambda s: _critic_gap(ctx, "mi", s), informational=True),
    ]

