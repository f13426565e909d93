"""Glue between environments, networks and the trainer."""
from __future__ import annotations

import numpy as np

from .envs.sympair import SymPairEnv, SymPairParams
from .envs.toyquad import ToyQuadEnv, ToyQuadParams
from .evaluation import evaluate_pair, evaluate_quad
from .morphology import MorphologySpec, build_graph
from .nets import ARCHS, build_pair_nets, build_quad_nets
from .policy import GaussianPolicy, mirror_tying
from .ppo import ActorCritic
from .symmetry import GS


class SymmetryError(AssertionError):
    pass


class QuadTask:
    name = "toyquad"

    def __init__(
        self,
        spec: MorphologySpec,
        H: int = 5,
        gait: str = "trot",
        params: ToyQuadParams | None = None,
        hidden: int = 64,
        layers: int = 2,
        init_log_std: float = -1.0,
    ):
        self.spec = spec
        self.graph = build_graph(spec)
        self.H, self.gait = H, gait
        self.params = params or ToyQuadParams()
        self.hidden, self.layers = hidden, layers
        self.init_log_std = init_log_std
        self.template = ToyQuadEnv(spec, 1, H, gait, self.params)

    def make_env(self, num_envs: int, seed: int, commands: str = "one_sided") -> ToyQuadEnv:
        return ToyQuadEnv(self.spec, num_envs, self.H, self.gait, self.params, seed, commands)

    def build_agent(self, arch: str) -> ActorCritic:
        if arch not in ARCHS:
            raise ValueError(f"unknown arch {arch!r}; expected one of {ARCHS}")
        actor, critic = build_quad_nets(self.graph, self.H, arch, self.hidden, self.layers)
        tie = mirror_tying(self.template.action_space_action(GS)) if arch == "ms" else None
        return ActorCritic(GaussianPolicy(actor, tie, self.init_log_std), critic, arch)

    def evaluate(self, agent, params, episodes: int, seed: int = 0, mirrored: bool = False, record_episode: bool = False):
        return evaluate_quad(self.template, agent, params, episodes, seed, mirrored, record_episode=record_episode)

    def train_metrics(self, agent, params, episodes: int, seed: int) -> dict:
        straight = self.evaluate(agent, params, episodes, seed)
        mirrored = self.evaluate(agent, params, episodes, seed, mirrored=True)
        return {
            "rmse": float(np.mean(straight.rmse)),
            "rmse_o": float(np.mean(mirrored.rmse)),
            "cot": float(np.nanmean(straight.cot)),
            "cot_o": float(np.nanmean(mirrored.cot)),
        }

    def symmetry_gaps(self, agent, params, rng: np.random.Generator, n: int = 8) -> tuple[float, float]:
        obs = rng.standard_normal((n, self.template.obs_dim))
        priv = rng.uniform(0.0, 1.0, (n, self.template.priv_dim))
        G_o = self.template.observation_action(GS)
        G_a = self.template.action_space_action(GS)
        mu = agent.policy.mean(params, obs).data
        mu_m = agent.policy.mean(params, G_o(obs)).data
        v = agent.value(params, obs, priv).data
        v_m = agent.value(params, G_o(obs), priv).data
        return float(np.max(np.abs(G_a(mu) - mu_m))), float(np.max(np.abs(v - v_m)))


class PairTask:
    name = "sympair"

    def __init__(self, params: SymPairParams | None = None, hidden: int = 32, layers: int = 2, init_log_std: float = 0.0):
        self.params = params or SymPairParams()
        self.hidden, self.layers = hidden, layers
        self.init_log_std = init_log_std
        self.template = SymPairEnv(1, self.params)

    def make_env(self, num_envs: int, seed: int, commands: str = "one_sided") -> SymPairEnv:
        return SymPairEnv(num_envs, self.params, seed)

    def build_agent(self, arch: str) -> ActorCritic:
        if arch not in ARCHS:
            raise ValueError(f"unknown arch {arch!r}; expected one of {ARCHS}")
        actor, critic = build_pair_nets(arch, hidden=self.hidden, layers=self.layers)
        tie = mirror_tying(self.template.action_space_action(GS)) if arch == "ms" else None
        return ActorCritic(GaussianPolicy(actor, tie, self.init_log_std), critic, arch)

    def evaluate(self, agent, params, episodes: int, seed: int = 0, mirrored: bool = False):
        return evaluate_pair(agent, params, episodes, seed, mirrored, self.params)

    def train_metrics(self, agent, params, episodes: int, seed: int) -> dict:
        return {}

    def symmetry_gaps(self, agent, params, rng: np.random.Generator, n: int = 8) -> tuple[float, float]:
        obs = rng.standard_normal((n, 3))
        G_o = self.template.observation_action(GS)
        G_a = self.template.action_space_action(GS)
        mu = agent.policy.mean(params, obs).data
        mu_m = agent.policy.mean(params, G_o(obs)).data
        v = agent.value(params, obs).data
        v_m = agent.value(params, G_o(obs)).data
        return float(np.max(np.abs(G_a(mu) - mu_m))), float(np.max(np.abs(v - v_m)))


def symmetry_check(task, agent, seed: int = 0, tol: float = 1e-9):
    """Callback for ``ppo.train`` that raises if an ms agent lost its symmetry."""

    def check(params) -> None:
        if agent.arch != "ms":
            return
        eq, inv = task.symmetry_gaps(agent, params, np.random.default_rng(seed))
        if eq > tol or inv > tol:
            raise SymmetryError(f"symmetry lost during training: equivariance gap {eq:.3e}, invariance gap {inv:.3e}")

    return check
