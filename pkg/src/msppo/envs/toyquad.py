"""Kinematic quadruped abstraction with the 58-dim per-step observation.

Joints follow a unit-inertia PD model. The base velocity relaxes toward a
target produced by the legs in stance (weight +1); swing legs contribute with
``swing_weight`` (0 by default). A gait term rewards lifting the calf in swing
and keeping it neutral in stance, so good policies are phase dependent.

* forward speed from the sum of weighted thigh deviations,
* lateral speed from the sum of weighted hip deviations,
* yaw rate from the right-minus-left difference of weighted thigh deviations.

Every sum over legs is evaluated as ``(left + right)`` per mirror pair, and every
difference as ``right - left``, so reflecting the state reproduces the same
floating-point operations with swapped operands.
"""
from __future__ import annotations

from dataclasses import dataclass, fields

import numpy as np

from .. import layout
from ..morphology import MorphologySpec
from ..symmetry import GS, GroupElement, SpaceAction, build_action_space, build_observation_action

TROT = (0.0, 0.5, 0.5, 0.0)
PRONK = (0.0, 0.0, 0.0, 0.0)
GAITS = {"trot": TROT, "pronk": PRONK}
# gait offsets are listed for legs ordered (FL, FR, RL, RR)
_GAIT_LEG_ORDER = (("left", "front"), ("right", "front"), ("left", "rear"), ("right", "rear"))

NOMINAL = {"hip": 0.0, "thigh": 0.8, "calf": -1.5}

CMD_X = (-1.0, 1.0)
CMD_Y = (0.0, 0.6)
CMD_YAW = (0.0, 1.0)


def sample_command(rng: np.random.Generator, one_sided: bool = True, size: int | None = None) -> np.ndarray:
    """Uniform (c_x, c_y, c_yaw) from the one-sided box, or its mirror image."""
    n = 1 if size is None else size
    c = np.stack(
        [rng.uniform(*CMD_X, n), rng.uniform(*CMD_Y, n), rng.uniform(*CMD_YAW, n)],
        axis=-1,
    )
    if not one_sided:
        c[:, 1:] = -c[:, 1:]
    return c[0] if size is None else c


@dataclass(frozen=True)
class ToyQuadParams:
    dt: float = 0.02
    kp: float = 900.0
    kd: float = 60.0
    action_scale: float = 0.5
    action_clip: float = 4.0
    gait_period: float = 0.8
    k_x: float = 1.0
    k_y: float = 0.6
    k_yaw: float = 1.2
    swing_weight: float = 0.0
    vel_rate: float = 10.0
    tilt_rate: float = 5.0
    track_sigma: float = 0.25
    w_track: float = 1.0
    w_yaw: float = 0.5
    w_gait: float = 0.5
    swing_calf: float = -0.6
    beta: float = 0.005
    qd_obs_scale: float = 0.1
    reward_scale: float = 0.05
    horizon: int = 250
    friction: tuple[float, float] = (0.4, 1.0)
    restitution: tuple[float, float] = (0.0, 0.5)
    init_joint_noise: float = 0.1


@dataclass
class QuadState:
    pos: np.ndarray  # (N, 2) world frame
    yaw: np.ndarray  # (N,)
    vel: np.ndarray  # (N, 3) body-frame v_x, v_y, yaw rate
    roll: np.ndarray
    pitch: np.ndarray
    q: np.ndarray  # (N, 12) deviation from nominal pose
    qd: np.ndarray
    a1: np.ndarray  # previous action
    a2: np.ndarray  # action before that
    clock: np.ndarray  # (N, 4) in [0, 1)
    cmd: np.ndarray  # (N, 3)
    priv: np.ndarray  # (N, 2) friction, restitution
    t: np.ndarray  # (N,) int

    def copy(self) -> "QuadState":
        return QuadState(**{f.name: getattr(self, f.name).copy() for f in fields(self)})

    def select(self, mask) -> "QuadState":
        return QuadState(**{f.name: getattr(self, f.name)[mask] for f in fields(self)})

    def assign(self, mask, other: "QuadState") -> None:
        for f in fields(self):
            getattr(self, f.name)[mask] = getattr(other, f.name)

    def allclose(self, other: "QuadState", atol: float) -> bool:
        return all(np.allclose(getattr(self, f.name), getattr(other, f.name), rtol=0.0, atol=atol) for f in fields(self))

    def max_abs_diff(self, other: "QuadState") -> float:
        return max(float(np.max(np.abs(getattr(self, f.name) - getattr(other, f.name)), initial=0.0)) for f in fields(self))


class QuadModel:
    """Pure transition/reward/observation functions for a given morphology."""

    def __init__(self, spec: MorphologySpec, params: ToyQuadParams | None = None, gait: str = "trot"):
        if gait not in GAITS:
            raise ValueError(f"unknown gait {gait!r}; expected one of {sorted(GAITS)}")
        self.spec = spec
        self.p = params or ToyQuadParams()
        self.gait = gait
        legs = spec.legs
        self.pairs = [(spec.leg_index(a), spec.leg_index(b)) for a, b in spec.mirror_pairs]
        self.pairs = [(l, r) if legs[l].side == "left" else (r, l) for l, r in self.pairs]
        offsets = dict(zip(_GAIT_LEG_ORDER, GAITS[gait]))
        self.offsets = np.array([offsets[(leg.side, leg.position)] for leg in legs])
        self.leg_perm = spec.leg_permutation()
        self.joint_action = build_action_space(GS, spec)
        nominal = np.array([NOMINAL[k] for _ in legs for k in layout.JOINT_KINDS])
        lo, hi = spec.joint_bounds()
        self.dev_lo, self.dev_hi = lo - nominal, hi - nominal
        self.hip = np.arange(0, layout.N_JOINTS, 3)
        self.thigh = self.hip + 1
        self.calf = self.hip + 2

    # -- symmetry ------------------------------------------------------------

    def mirror_state(self, s: QuadState) -> QuadState:
        B = self.joint_action
        flip_y = np.array([1.0, -1.0])
        flip_cmd = np.array([1.0, -1.0, -1.0])
        return QuadState(
            pos=s.pos * flip_y,
            yaw=-s.yaw,
            vel=s.vel * flip_cmd,
            roll=-s.roll,
            pitch=s.pitch.copy(),
            q=B(s.q),
            qd=B(s.qd),
            a1=B(s.a1),
            a2=B(s.a2),
            clock=s.clock[:, self.leg_perm],
            cmd=s.cmd * flip_cmd,
            priv=s.priv.copy(),
            t=s.t.copy(),
        )

    def mirror_action(self, a: np.ndarray) -> np.ndarray:
        return self.joint_action(a)

    # -- helpers -------------------------------------------------------------

    def _pair_sum(self, per_leg: np.ndarray) -> np.ndarray:
        (l0, r0), (l1, r1) = self.pairs
        return (per_leg[:, l0] + per_leg[:, r0]) + (per_leg[:, l1] + per_leg[:, r1])

    def _pair_diff(self, per_leg: np.ndarray) -> np.ndarray:
        (l0, r0), (l1, r1) = self.pairs
        return (per_leg[:, r0] - per_leg[:, l0]) + (per_leg[:, r1] - per_leg[:, l1])

    def _leg_sum(self, per_joint: np.ndarray) -> np.ndarray:
        x = per_joint.reshape(per_joint.shape[0], layout.N_LEGS, layout.JOINTS_PER_LEG)
        return self._pair_sum((x[..., 0] + x[..., 1]) + x[..., 2])

    def stance(self, clock: np.ndarray) -> np.ndarray:
        return clock < 0.5

    def phase(self, clock: np.ndarray) -> np.ndarray:
        return np.sin(2.0 * np.pi * clock)

    def gravity(self, s: QuadState) -> np.ndarray:
        cp = np.cos(s.pitch)
        return np.stack([-np.sin(s.pitch), np.sin(s.roll) * cp, -np.cos(s.roll) * cp], axis=-1)

    # -- model ---------------------------------------------------------------

    def observe(self, s: QuadState) -> np.ndarray:
        """Current 58-dim frame for every environment."""
        return np.concatenate(
            [self.gravity(s), s.cmd, s.q, self.p.qd_obs_scale * s.qd, s.a1, s.a2, self.phase(s.clock)],
            axis=-1,
        )

    def initial(self, n: int, rng: np.random.Generator, one_sided: bool = True) -> QuadState:
        p = self.p
        phase0 = rng.uniform(0.0, 1.0, (n, 1))
        return QuadState(
            pos=np.zeros((n, 2)),
            yaw=np.zeros(n),
            vel=np.zeros((n, 3)),
            roll=np.zeros(n),
            pitch=np.zeros(n),
            q=rng.uniform(-p.init_joint_noise, p.init_joint_noise, (n, layout.N_JOINTS)),
            qd=np.zeros((n, layout.N_JOINTS)),
            a1=np.zeros((n, layout.N_JOINTS)),
            a2=np.zeros((n, layout.N_JOINTS)),
            clock=np.mod(phase0 + self.offsets, 1.0),
            cmd=sample_command(rng, one_sided, n),
            priv=np.stack([rng.uniform(*p.friction, n), rng.uniform(*p.restitution, n)], axis=-1),
            t=np.zeros(n, dtype=np.int64),
        )

    def step(self, s: QuadState, action: np.ndarray):
        """Returns (next_state, reward, info) with joint torques and velocities in ``info``."""
        p = self.p
        a = np.clip(np.asarray(action, dtype=np.float64), -p.action_clip, p.action_clip)
        target = np.clip(p.action_scale * a, self.dev_lo, self.dev_hi)
        torque = p.kp * (target - s.q) - p.kd * s.qd
        qd = s.qd + p.dt * torque
        q = s.q + p.dt * qd

        w = np.where(self.stance(s.clock), 1.0, p.swing_weight)
        gain = 0.5 + 0.5 * s.priv[:, 0]
        drive = np.stack(
            [
                p.k_x * self._pair_sum(w * q[:, self.thigh]),
                p.k_y * self._pair_sum(w * q[:, self.hip]),
                p.k_yaw * self._pair_diff(w * q[:, self.thigh]),
            ],
            axis=-1,
        )
        rate = p.vel_rate * (1.0 - 0.5 * s.priv[:, 1])
        vel = s.vel + (p.dt * rate)[:, None] * (gain[:, None] * drive - s.vel)
        roll = s.roll + p.dt * p.tilt_rate * (0.15 * vel[:, 1] - s.roll)
        pitch = s.pitch + p.dt * p.tilt_rate * (0.1 * vel[:, 0] - s.pitch)
        yaw = s.yaw + p.dt * vel[:, 2]
        c, sn = np.cos(yaw), np.sin(yaw)
        pos = s.pos + p.dt * np.stack([vel[:, 0] * c - vel[:, 1] * sn, vel[:, 0] * sn + vel[:, 1] * c], axis=-1)
        clock = np.mod(s.clock + p.dt / p.gait_period, 1.0)

        nxt = QuadState(pos, yaw, vel, roll, pitch, q, qd, a, s.a1.copy(), clock, s.cmd.copy(), s.priv.copy(), s.t + 1)
        r = self.reward(s, nxt, a)
        return nxt, r, {"torque": torque, "joint_vel": qd, "velocity": vel.copy()}

    def reward(self, s: QuadState, nxt: QuadState, a: np.ndarray) -> np.ndarray:
        p = self.p
        dv = nxt.vel - s.cmd
        lin = dv[:, 0] * dv[:, 0] + dv[:, 1] * dv[:, 1]
        track = p.w_track * np.exp(-lin / p.track_sigma) + p.w_yaw * np.exp(-(dv[:, 2] * dv[:, 2]) / p.track_sigma)
        calf_target = np.where(self.stance(s.clock), 0.0, p.swing_calf)
        calf_err = nxt.q[:, self.calf] - calf_target
        gait = -p.w_gait * 0.25 * self._pair_sum(calf_err * calf_err)
        cost = p.beta * self._leg_sum(a * a)
        return p.reward_scale * (track + gait - cost)


class ToyQuadEnv:
    """Vectorized ToyQuad with an H-step observation history and auto-reset.

    ``commands`` selects the command box: ``"one_sided"`` (training) or
    ``"mirrored"`` (out-of-distribution evaluation).
    """

    priv_dim = layout.PRIV_DIM
    act_dim = layout.N_JOINTS

    def __init__(
        self,
        spec: MorphologySpec,
        num_envs: int = 1,
        H: int = 5,
        gait: str = "trot",
        params: ToyQuadParams | None = None,
        seed: int = 0,
        commands: str = "one_sided",
    ):
        if H < 1:
            raise ValueError("history length H must be at least 1")
        if commands not in ("one_sided", "mirrored"):
            raise ValueError(f"unknown command mode {commands!r}")
        self.model = QuadModel(spec, params, gait)
        self.spec = spec
        self.num_envs = num_envs
        self.H = H
        self.obs_dim = H * layout.OBS_DIM
        self.one_sided = commands == "one_sided"
        self.rng = np.random.default_rng(seed)
        self.state: QuadState | None = None
        self.history = np.zeros((num_envs, H, layout.OBS_DIM))
        self.done = np.zeros(num_envs, dtype=bool)

    @property
    def params(self) -> ToyQuadParams:
        return self.model.p

    def observation_action(self, g: GroupElement, privileged: bool = False) -> SpaceAction:
        return build_observation_action(g, self.spec, self.H, privileged)

    def action_space_action(self, g: GroupElement) -> SpaceAction:
        return build_action_space(g, self.spec)

    def _obs(self) -> np.ndarray:
        return self.history.reshape(self.num_envs, -1).copy()

    def privileged(self) -> np.ndarray:
        return self.state.priv.copy()

    def reset(self, state: QuadState | None = None):
        self.state = self.model.initial(self.num_envs, self.rng, self.one_sided) if state is None else state.copy()
        self.history[:] = self.model.observe(self.state)[:, None, :]
        self.done[:] = False
        return self._obs(), self.privileged()

    def step(self, action, auto_reset: bool = True):
        if self.state is None:
            raise RuntimeError("call reset() before step()")
        if not auto_reset and np.any(self.done):
            raise RuntimeError("step() called on a terminated episode; call reset() first")
        action = np.asarray(action, dtype=np.float64).reshape(self.num_envs, layout.N_JOINTS)
        self.state, r, info = self.model.step(self.state, action)
        self.history = np.concatenate([self.history[:, 1:], self.model.observe(self.state)[:, None, :]], axis=1)
        done = self.state.t >= self.params.horizon
        info["terminal_obs"] = self._obs()
        info["terminal_priv"] = self.privileged()
        info["timeout"] = done.copy()
        info["command"] = self.state.cmd.copy()
        if auto_reset and np.any(done):
            fresh = self.model.initial(int(done.sum()), self.rng, self.one_sided)
            self.state.assign(done, fresh)
            self.history[done] = self.model.observe(fresh)[:, None, :]
        else:
            self.done = done
        return self._obs(), self.privileged(), r, done, info

