"""Tabular value iteration on a mirror-symmetric discretization of SymPairEnv.

Next states are evaluated by bilinear interpolation in (y, yd). Both interpolation
weights are computed directly from the cell bounds (never as ``1 - w``), so a
mirrored query reproduces the same products and sums in swapped order and the
value table stays exactly symmetric under negation.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .sympair import SymPairParams, dynamics, reward, symmetric_grid


class ConvergenceError(RuntimeError):
    pass


@dataclass(frozen=True)
class Grid:
    y: np.ndarray
    yd: np.ndarray
    cmd: np.ndarray
    actions: np.ndarray  # (A, 2)

    @classmethod
    def default(
        cls,
        n_y: int = 41,
        n_yd: int = 41,
        n_cmd: int = 11,
        y_limit: float = 2.0,
        yd_limit: float = 2.0,
        n_action: int = 9,
        params: SymPairParams | None = None,
    ) -> "Grid":
        p = params or SymPairParams()
        a = symmetric_grid(p.action_limit, n_action)
        aa = np.stack(np.meshgrid(a, a, indexing="ij"), axis=-1).reshape(-1, 2)
        cmd = p.commands if n_cmd == p.commands.size else symmetric_grid(float(np.max(p.commands)), n_cmd)
        return cls(symmetric_grid(y_limit, n_y), symmetric_grid(yd_limit, n_yd), cmd, aa)

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.y.size, self.yd.size, self.cmd.size

    def states(self) -> np.ndarray:
        Y, V, C = np.meshgrid(self.y, self.yd, self.cmd, indexing="ij")
        return np.stack([Y, V, C], axis=-1)

    def mirror_index(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        return self.y.size - 1 - np.arange(self.y.size), self.yd.size - 1 - np.arange(self.yd.size), self.cmd.size - 1 - np.arange(self.cmd.size)

    def mirror_action_index(self) -> np.ndarray:
        n = int(round(np.sqrt(len(self.actions))))
        i, j = np.divmod(np.arange(len(self.actions)), n)
        return j * n + i


def _cell(axis: np.ndarray, x: np.ndarray):
    x = np.clip(x, axis[0], axis[-1])
    lo = np.clip(np.searchsorted(axis, x, side="right") - 1, 0, axis.size - 2)
    hi = lo + 1
    width = axis[hi] - axis[lo]
    return lo, hi, (axis[hi] - x) / width, (x - axis[lo]) / width


class _Interpolator:
    def __init__(self, grid: Grid, next_states: np.ndarray):
        ylo, yhi, self.wy_lo, self.wy_hi = _cell(grid.y, next_states[..., 0])
        vlo, vhi, self.wv_lo, self.wv_hi = _cell(grid.yd, next_states[..., 1])
        c = np.searchsorted(grid.cmd, next_states[..., 2])
        shape = grid.shape
        self.corners = [np.ravel_multi_index((yi, vi, c), shape) for yi in (ylo, yhi) for vi in (vlo, vhi)]

    def __call__(self, V: np.ndarray) -> np.ndarray:
        flat = V.ravel()
        ll, lh, hl, hh = (flat[ix] for ix in self.corners)
        row_lo = self.wv_lo * ll + self.wv_hi * lh
        row_hi = self.wv_lo * hl + self.wv_hi * hh
        return self.wy_lo * row_lo + self.wy_hi * row_hi


@dataclass
class OracleResult:
    grid: Grid
    V: np.ndarray  # (n_y, n_yd, n_cmd)
    policy: np.ndarray  # (n_y, n_yd, n_cmd) action index
    Q: np.ndarray  # (n_y, n_yd, n_cmd, A)
    iterations: int
    residual: float
    gamma: float
    params: SymPairParams

    def action_table(self) -> np.ndarray:
        return self.grid.actions[self.policy]

    def value_at(self, states: np.ndarray) -> np.ndarray:
        return _Interpolator(self.grid, np.asarray(states, dtype=np.float64))(self.V)

    def greedy_action(self, states: np.ndarray) -> np.ndarray:
        """One-step lookahead on the interpolated value table at arbitrary states."""
        states = np.asarray(states, dtype=np.float64)
        A = self.grid.actions
        s = np.broadcast_to(states[:, None, :], (states.shape[0], len(A), 3))
        a = np.broadcast_to(A[None], s.shape[:2] + (2,))
        q = reward(s, a, self.params) + self.gamma * _Interpolator(self.grid, dynamics(s, a, self.params))(self.V)
        return A[_select(q, states, A)]


def _select(q: np.ndarray, states: np.ndarray, actions: np.ndarray) -> np.ndarray:
    """Argmax over the last axis with mirror-consistent tie breaking.

    Ties are resolved by (u * side, |u|, a_L + a_R) with u = a_L - a_R and side the
    sign of the first nonzero state coordinate; all three keys are invariant under
    reflecting both state and action, so the choice commutes with the reflection.
    """
    best = q.max(axis=-1, keepdims=True)
    tied = q == best
    out = np.argmax(tied, axis=-1)
    multi = tied.sum(axis=-1) > 1
    if not np.any(multi):
        return out
    u = actions[:, 0] - actions[:, 1]
    total = actions[:, 0] + actions[:, 1]
    for idx in zip(*np.nonzero(multi)):
        s = states[idx]
        nz = s[np.nonzero(s)[0]]
        side = np.sign(nz[0]) if nz.size else 0.0
        cands = np.flatnonzero(tied[idx])
        keys = sorted(cands, key=lambda a: (u[a] * side, abs(u[a]), total[a]))
        out[idx] = keys[0]
    return out


def value_iteration(
    params: SymPairParams | None = None,
    grid: Grid | None = None,
    gamma: float = 0.95,
    tol: float = 1e-8,
    max_iter: int = 5000,
    reward_fn=None,
) -> OracleResult:
    """Synchronous value iteration until the sup-norm update falls below ``tol``."""
    p = params or SymPairParams()
    grid = grid or Grid.default(params=p)
    reward_fn = reward_fn or reward
    S = grid.states()[..., None, :]
    A = grid.actions
    s = np.broadcast_to(S, grid.shape + (len(A), 3))
    a = np.broadcast_to(A, grid.shape + (len(A), 2))
    R = reward_fn(s, a, p)
    interp = _Interpolator(grid, dynamics(s, a, p))

    V = np.zeros(grid.shape)
    residual = np.inf
    for it in range(1, max_iter + 1):
        Q = R + gamma * interp(V)
        V_new = Q.max(axis=-1)
        residual = float(np.max(np.abs(V_new - V)))
        V = V_new
        if residual <= tol:
            break
    else:
        raise ConvergenceError(f"value iteration did not reach residual {tol} in {max_iter} iterations (last {residual:.3e})")
    Q = R + gamma * interp(V)
    policy = _select(Q, grid.states(), A)
    return OracleResult(grid, V, policy, Q, it, residual, gamma, p)


def rollout_return(policy_fn, states: np.ndarray, params: SymPairParams, gamma: float, steps: int | None = None) -> np.ndarray:
    """Discounted return of a deterministic state-feedback policy from each start state."""
    s = np.array(states, dtype=np.float64)
    total = np.zeros(len(s))
    disc = 1.0
    for _ in range(steps or params.horizon):
        a = policy_fn(s)
        total += disc * reward(s, a, params)
        s = dynamics(s, a, params)
        disc *= gamma
    return total
