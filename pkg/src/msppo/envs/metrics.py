"""Tracking-error and cost-of-transport accumulators."""
from __future__ import annotations

import math

import numpy as np

# below this command magnitude the tracking error is left unnormalized
ZERO_COMMAND_GUARD = 0.05


def normalized_error(v, c, guard: float = ZERO_COMMAND_GUARD) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    c = np.asarray(c, dtype=np.float64)
    err = v - c
    small = np.abs(c) < guard
    return np.where(small, err, err / np.where(small, 1.0, c))


class MetricAccumulator:
    """Running sums over one evaluation window; arrays carry one entry per environment."""

    def __init__(self, num_envs: int = 1):
        self.sq_err = np.zeros(num_envs)
        self.abs_x = np.zeros(num_envs)
        self.abs_yaw = np.zeros(num_envs)
        self.work = np.zeros(num_envs)
        self.path = np.zeros(num_envs)
        self.steps = 0

    def add(self, velocity, command, torque=None, joint_vel=None, mask=None) -> None:
        """Accumulate one step. ``velocity``/``command`` are (..., 3) as (x, y, yaw)."""
        v = np.asarray(velocity, dtype=np.float64).reshape(-1, 3)
        c = np.asarray(command, dtype=np.float64).reshape(-1, 3)
        e = normalized_error(v, c)
        self.sq_err += e[:, 0] ** 2 + e[:, 1] ** 2 + e[:, 2] ** 2
        self.abs_x += np.abs(v[:, 0] - c[:, 0])
        self.abs_yaw += np.abs(v[:, 2] - c[:, 2])
        if torque is not None:
            power = np.asarray(torque, dtype=np.float64) * np.asarray(joint_vel, dtype=np.float64)
            self.work += np.maximum(power, 0.0).reshape(v.shape[0], -1).sum(axis=-1)
        self.path += np.hypot(v[:, 0], v[:, 1])
        self.steps += 1


def _check(acc: MetricAccumulator) -> None:
    if acc.steps <= 0:
        raise ValueError("no steps accumulated")


def rmse(acc: MetricAccumulator) -> np.ndarray:
    _check(acc)
    return np.sqrt(acc.sq_err / acc.steps)


def mae_x(acc: MetricAccumulator) -> np.ndarray:
    _check(acc)
    return acc.abs_x / acc.steps


def mae_yaw(acc: MetricAccumulator) -> np.ndarray:
    _check(acc)
    return acc.abs_yaw / acc.steps


def cot(acc: MetricAccumulator) -> np.ndarray:
    """Positive mechanical work over horizontal distance; NaN where nothing moved."""
    _check(acc)
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(acc.path > 0.0, acc.work / np.where(acc.path > 0.0, acc.path, 1.0), math.nan)
