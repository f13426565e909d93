"""Deterministic evaluation of trained policies in straight and mirrored directions."""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

from .envs.metrics import MetricAccumulator, cot, mae_x, mae_yaw, rmse
from .envs.sympair import SymPairEnv, SymPairParams
from .envs.toyquad import ToyQuadEnv

# steps discarded before metrics accumulate, so the start-up transient is not scored
WARMUP_STEPS = 50

EPISODE_LOG_COLUMNS = (
    "step",
    "c_x",
    "c_y",
    "c_yaw",
    "v_x",
    "v_y",
    "v_yaw",
    "reward",
    "sq_err",
    "work",
    "path",
)


@dataclass
class EvalReport:
    mirrored: bool
    rmse: np.ndarray  # per episode
    cot: np.ndarray
    mae_x: np.ndarray
    mae_yaw: np.ndarray
    episode_return: np.ndarray
    episode_log: str = ""

    @property
    def episodes(self) -> int:
        return self.rmse.size

    def summary(self) -> dict[str, tuple[float, float]]:
        out = {}
        for key in ("rmse", "cot", "mae_x", "mae_yaw", "episode_return"):
            v = getattr(self, key)
            out[key] = (float(np.nanmean(v)), float(np.nanstd(v)))
        return out

    def format(self) -> str:
        suffix = "-O" if self.mirrored else ""
        s = self.summary()
        lines = [f"episodes: {self.episodes}"]
        for key, label in (("rmse", "RMSE"), ("cot", "CoT"), ("mae_x", "MAE_x"), ("mae_yaw", "MAE_yaw"), ("episode_return", "Return")):
            m, sd = s[key]
            lines.append(f"{label}{suffix if key in ('rmse', 'cot') else ''}: {m:.4f} ± {sd:.4f}")
        return "\n".join(lines)


def evaluate_quad(
    env_template: ToyQuadEnv,
    agent,
    params,
    episodes: int,
    seed: int = 0,
    mirrored: bool = False,
    warmup: int = WARMUP_STEPS,
    record_episode: bool = False,
) -> EvalReport:
    """Roll out the mean action for a full horizon from seeded start states.

    Mirrored evaluation starts from the reflection of the same start states, so
    commands come from the mirrored box while everything else is matched.
    """
    if episodes < 1:
        raise ValueError("episodes must be at least 1")
    model = env_template.model
    horizon = model.p.horizon
    if warmup >= horizon:
        raise ValueError("warm-up must be shorter than the episode horizon")
    env = ToyQuadEnv(env_template.spec, episodes, env_template.H, model.gait, model.p, seed)
    start = model.initial(episodes, np.random.default_rng(seed), one_sided=True)
    if mirrored:
        start = model.mirror_state(start)
    obs, _ = env.reset(start)
    acc = MetricAccumulator(episodes)
    ret = np.zeros(episodes)
    rows = []
    for t in range(horizon):
        action = agent.policy.mean(params, obs).data
        obs, _, r, _, info = env.step(action, auto_reset=False)
        ret += r
        if t >= warmup:
            acc.add(info["velocity"], info["command"], info["torque"], info["joint_vel"])
        if record_episode:
            c, v = info["command"][0], info["velocity"][0]
            rows.append([t, *c, *v, r[0], acc.sq_err[0], acc.work[0], acc.path[0]])
    log = _csv(EPISODE_LOG_COLUMNS, rows) if record_episode else ""
    return EvalReport(mirrored, rmse(acc), cot(acc), mae_x(acc), mae_yaw(acc), ret, log)


def evaluate_pair(agent, params, episodes: int, seed: int = 0, mirrored: bool = False, pair_params: SymPairParams | None = None) -> np.ndarray:
    """Undiscounted return of the mean action per episode on SymPairEnv."""
    p = pair_params or SymPairParams()
    env = SymPairEnv(episodes, p, seed)
    start = env.sample_initial(episodes, np.random.default_rng(seed))
    if mirrored:
        start = -start
    obs, _ = env.reset(start)
    total = np.zeros(episodes)
    for _ in range(p.horizon):
        obs, _, r, _, _ = env.step(agent.policy.mean(params, obs).data, auto_reset=False)
        total += r
    return total


def _csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([str(int(x)) if i == 0 else repr(float(x)) for i, x in enumerate(row)])
    return buf.getvalue()
