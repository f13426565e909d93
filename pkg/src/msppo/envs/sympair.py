"""One-dimensional lateral task with two mirror actuators.

State ``(y, yd, y_cmd)``, action ``(a_L, a_R)``. The left actuator pushes
towards +y and the right one towards -y; a passive spring-damper pulls the
body back to the origin::

    ydd = k * (a_L - a_R) - c * y - c * yd

integrated with semi-implicit Euler. Reflection maps
``(y, yd, y_cmd, a_L, a_R) -> (-y, -yd, -y_cmd, a_R, a_L)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..symmetry import E, GroupElement, SpaceAction


def symmetric_grid(limit: float, n: int) -> np.ndarray:
    """``n`` (odd) points on [-limit, limit] with exact negation symmetry."""
    if n % 2 == 0:
        raise ValueError("symmetric grid needs an odd number of points")
    half = np.linspace(0.0, limit, n // 2 + 1)
    return np.concatenate([-half[:0:-1], half])


@dataclass(frozen=True)
class SymPairParams:
    k: float = 1.0
    c: float = 0.5
    dt: float = 0.1
    beta: float = 0.01
    horizon: int = 100
    action_limit: float = 1.0
    y_init: float = 1.5
    yd_init: float = 0.5
    commands: np.ndarray = field(default_factory=lambda: symmetric_grid(1.0, 11))


OBS_DIM = 3
ACT_DIM = 2


def observation_action(g: GroupElement) -> SpaceAction:
    return SpaceAction.identity(3) if g is E else SpaceAction(np.arange(3), -np.ones(3))


def action_space_action(g: GroupElement) -> SpaceAction:
    return SpaceAction.identity(2) if g is E else SpaceAction(np.array([1, 0]), np.ones(2))


def mirror_state(state: np.ndarray) -> np.ndarray:
    return -np.asarray(state, dtype=np.float64)


def mirror_action(action: np.ndarray) -> np.ndarray:
    return np.asarray(action, dtype=np.float64)[..., ::-1].copy()


def reward(state: np.ndarray, action: np.ndarray, p: SymPairParams) -> np.ndarray:
    a = np.clip(action, -p.action_limit, p.action_limit)
    err = state[..., 0] - state[..., 2]
    return -(err * err) - p.beta * (a[..., 0] * a[..., 0] + a[..., 1] * a[..., 1])


def dynamics(state: np.ndarray, action: np.ndarray, p: SymPairParams) -> np.ndarray:
    state = np.asarray(state, dtype=np.float64)
    a = np.clip(np.asarray(action, dtype=np.float64), -p.action_limit, p.action_limit)
    y, yd, cmd = state[..., 0], state[..., 1], state[..., 2]
    acc = p.k * (a[..., 0] - a[..., 1]) - p.c * y - p.c * yd
    yd_next = yd + p.dt * acc
    y_next = y + p.dt * yd_next
    return np.stack([y_next, yd_next, cmd], axis=-1)


class SymPairEnv:
    """``num_envs`` independent copies with automatic reset at the horizon."""

    obs_dim = OBS_DIM
    act_dim = ACT_DIM
    priv_dim = 0

    def __init__(self, num_envs: int = 1, params: SymPairParams | None = None, seed: int = 0):
        self.num_envs = num_envs
        self.params = params or SymPairParams()
        self.rng = np.random.default_rng(seed)
        self.state = np.zeros((num_envs, 3))
        self.t = np.zeros(num_envs, dtype=np.int64)
        self.done = np.zeros(num_envs, dtype=bool)

    def observation_action(self, g: GroupElement) -> SpaceAction:
        return observation_action(g)

    def action_space_action(self, g: GroupElement) -> SpaceAction:
        return action_space_action(g)

    def sample_initial(self, n: int, rng: np.random.Generator) -> np.ndarray:
        p = self.params
        y = rng.uniform(-p.y_init, p.y_init, n)
        yd = rng.uniform(-p.yd_init, p.yd_init, n)
        cmd = p.commands[rng.integers(0, p.commands.size, n)]
        return np.stack([y, yd, cmd], axis=-1)

    def reset(self, states: np.ndarray | None = None):
        self.state = self.sample_initial(self.num_envs, self.rng) if states is None else np.array(states, dtype=np.float64)
        self.t[:] = 0
        self.done[:] = False
        return self.state.copy(), None

    def privileged(self):
        return None

    def step(self, action, auto_reset: bool = True):
        if not auto_reset and np.any(self.done):
            raise RuntimeError("step() called on a terminated episode; call reset() first")
        action = np.asarray(action, dtype=np.float64).reshape(self.num_envs, 2)
        r = reward(self.state, action, self.params)
        self.state = dynamics(self.state, action, self.params)
        self.t += 1
        done = self.t >= self.params.horizon
        info = {"terminal_obs": self.state.copy(), "timeout": done.copy()}
        if auto_reset and np.any(done):
            fresh = self.sample_initial(int(done.sum()), self.rng)
            self.state[done] = fresh
            self.t[done] = 0
        else:
            self.done = done
        return self.state.copy(), None, r, done, info
