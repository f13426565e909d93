import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from msppo import layout
from msppo.envs import metrics, oracle, sympair
from msppo.envs.metrics import MetricAccumulator, cot, mae_x, mae_yaw, rmse
from msppo.envs.toyquad import GAITS, QuadModel, ToyQuadEnv, sample_command
from msppo.symmetry import GS, build_observation_action

# ---------------------------------------------------------------- SymPair


def test_sympair_zero_fixed_point():
    p = sympair.SymPairParams()
    s, a = np.zeros(3), np.zeros(2)
    assert np.array_equal(sympair.dynamics(s, a, p), s)
    assert sympair.reward(s, a, p) == 0.0


def test_sympair_one_step_by_hand():
    p = sympair.SymPairParams(k=1.0, c=0.5, dt=0.1)
    y, yd, _ = sympair.dynamics(np.array([1.0, 0.0, 0.0]), np.zeros(2), p)
    assert yd == pytest.approx(-0.05, abs=1e-15)
    assert y == pytest.approx(1.0 + 0.1 * -0.05, abs=1e-15)


def test_sympair_actuators_push_opposite_ways():
    p = sympair.SymPairParams()
    left = sympair.dynamics(np.zeros(3), np.array([1.0, 0.0]), p)
    right = sympair.dynamics(np.zeros(3), np.array([0.0, 1.0]), p)
    assert left[1] > 0 and right[1] < 0


def test_sympair_commutation():
    p = sympair.SymPairParams()
    r = np.random.default_rng(0)
    s, a = r.standard_normal((100, 3)) * 2, r.standard_normal((100, 2))
    ms, ma = sympair.mirror_state(s), sympair.mirror_action(a)
    np.testing.assert_allclose(sympair.dynamics(ms, ma, p), sympair.mirror_state(sympair.dynamics(s, a, p)), rtol=0, atol=1e-12)
    np.testing.assert_allclose(sympair.reward(ms, ma, p), sympair.reward(s, a, p), rtol=0, atol=1e-12)


def test_sympair_env_terminates_and_refuses_to_continue():
    env = sympair.SymPairEnv(2, sympair.SymPairParams(horizon=3), seed=0)
    env.reset()
    for _ in range(3):
        _, _, _, done, _ = env.step(np.zeros((2, 2)), auto_reset=False)
    assert done.all()
    with pytest.raises(RuntimeError, match="terminated"):
        env.step(np.zeros((2, 2)), auto_reset=False)
    env.reset()
    env.step(np.zeros((2, 2)), auto_reset=False)


def test_symmetric_grid():
    g = sympair.symmetric_grid(2.0, 9)
    assert np.array_equal(g, -g[::-1]) and g[4] == 0.0
    with pytest.raises(ValueError):
        sympair.symmetric_grid(1.0, 4)


# ---------------------------------------------------------------- ToyQuad


@pytest.fixture(scope="module")
def model(spec):
    return QuadModel(spec)


def _random_state(model, r, n=8):
    s = model.initial(n, r, one_sided=bool(r.integers(2)))
    for _ in range(int(r.integers(0, 15))):
        s, _, _ = model.step(s, r.standard_normal((n, 12)))
    s.vel = r.standard_normal((n, 3))
    s.roll, s.pitch = r.uniform(-0.3, 0.3, n), r.uniform(-0.3, 0.3, n)
    s.yaw = r.uniform(-1, 1, n)
    s.pos = r.standard_normal((n, 2))
    return s


@pytest.mark.parametrize("gait", sorted(GAITS))
def test_toyquad_commutation(spec, gait):
    m = QuadModel(spec, gait=gait)
    G1 = build_observation_action(GS, spec, 1)
    for seed in range(100):
        r = np.random.default_rng(seed)
        s = _random_state(m, r)
        a = r.standard_normal((8, 12)) * 2
        s1, r1, i1 = m.step(s, a)
        s2, r2, i2 = m.step(m.mirror_state(s), m.mirror_action(a))
        assert m.mirror_state(s1).max_abs_diff(s2) <= 1e-12
        assert np.max(np.abs(r1 - r2)) <= 1e-12
        assert np.max(np.abs(G1(m.observe(s)) - m.observe(m.mirror_state(s)))) <= 1e-12
        # torque and joint velocity transform like joints, so per-step power is unchanged
        assert np.max(np.abs((i1["torque"] * i1["joint_vel"]).sum(-1) - (i2["torque"] * i2["joint_vel"]).sum(-1))) <= 1e-9


def test_mirror_state_is_involution(model):
    s = _random_state(model, np.random.default_rng(3))
    assert model.mirror_state(model.mirror_state(s)).max_abs_diff(s) == 0.0


def test_observation_layout(model, rng):
    s = model.initial(2, rng)
    o = model.observe(s)
    assert o.shape == (2, layout.OBS_DIM) == (2, 58)
    np.testing.assert_array_equal(o[:, 3:6], s.cmd)
    np.testing.assert_array_equal(o[:, 6:18], s.q)
    np.testing.assert_allclose(o[:, 0:3], [[0.0, 0.0, -1.0]] * 2)
    np.testing.assert_allclose(o[:, 54:58], np.sin(2 * np.pi * s.clock))


def test_trot_offsets(model, rng):
    s = model.initial(1, rng)
    c = s.clock[0]
    # FL/RR in phase, FR/RL half a period later
    assert c[0] == c[3] and c[1] == c[2]
    assert math.isclose((c[1] - c[0]) % 1.0, 0.5, abs_tol=1e-12)


def test_toyquad_env_history_and_termination(spec):
    env = ToyQuadEnv(spec, num_envs=3, H=4, seed=1)
    obs, priv = env.reset()
    assert obs.shape == (3, 4 * 58) and priv.shape == (3, 2)
    assert np.all((priv[:, 0] >= 0.4) & (priv[:, 0] <= 1.0) & (priv[:, 1] >= 0.0) & (priv[:, 1] <= 0.5))
    first = obs[:, :58]
    obs2, _, r, done, info = env.step(np.zeros((3, 12)), auto_reset=False)
    assert np.array_equal(obs2[:, 58 * 2 : 58 * 3], first)
    assert {"torque", "joint_vel", "velocity"} <= set(info)
    for _ in range(env.params.horizon - 1):
        _, _, _, done, _ = env.step(np.zeros((3, 12)), auto_reset=False)
    assert done.all()
    with pytest.raises(RuntimeError, match="terminated"):
        env.step(np.zeros((3, 12)), auto_reset=False)


def test_toyquad_env_requires_reset(spec):
    with pytest.raises(RuntimeError, match="reset"):
        ToyQuadEnv(spec).step(np.zeros(12))
    with pytest.raises(ValueError, match="gait"):
        ToyQuadEnv(spec, gait="gallop")


def test_sample_command_one_sided():
    c = sample_command(np.random.default_rng(0), True, 5000)
    assert np.all(c[:, 1] >= 0) and np.all(c[:, 2] >= 0)
    assert c[:, 0].min() < -0.9 and c[:, 0].max() > 0.9 and c[:, 1].max() <= 0.6 and c[:, 2].max() <= 1.0


def test_sample_command_mirrored_is_reflected_draw():
    one = sample_command(np.random.default_rng(4), True, 100)
    mir = sample_command(np.random.default_rng(4), False, 100)
    np.testing.assert_array_equal(mir, one * [1.0, -1.0, -1.0])


def test_sample_command_seeded():
    a = sample_command(np.random.default_rng(9))
    b = sample_command(np.random.default_rng(9))
    assert a.shape == (3,) and np.array_equal(a, b)


# ---------------------------------------------------------------- metrics


def test_rmse_single_step_example():
    acc = MetricAccumulator()
    # commands are 1.0 so normalized errors are (0.3, 0.4, 0)
    acc.add([1.3, 1.4, 1.0], [1.0, 1.0, 1.0])
    assert rmse(acc)[0] == pytest.approx(0.5, abs=1e-12)


def test_perfect_tracking_gives_zero():
    acc = MetricAccumulator(2)
    v = np.array([[0.5, 0.2, -0.3], [0.0, 0.0, 0.0]])
    for _ in range(5):
        acc.add(v, v)
    assert np.array_equal(rmse(acc), [0.0, 0.0])
    assert np.array_equal(mae_x(acc), [0.0, 0.0]) and np.array_equal(mae_yaw(acc), [0.0, 0.0])


def test_cot_negative_power_clipped():
    acc = MetricAccumulator()
    torque = np.zeros(12)
    qd = np.zeros(12)
    torque[0], qd[0] = 2.0, -3.0
    acc.add([0.5, 0.0, 0.0], [0.5, 0.0, 0.0], torque, qd)
    assert cot(acc)[0] == 0.0


def test_cot_by_hand_and_zero_path():
    acc = MetricAccumulator()
    torque, qd = np.zeros(12), np.zeros(12)
    torque[:2], qd[:2] = [2.0, 1.0], [3.0, -1.0]
    acc.add([0.3, 0.4, 0.0], [0.3, 0.4, 0.0], torque, qd)
    assert cot(acc)[0] == pytest.approx(6.0 / 0.5, abs=1e-12)
    still = MetricAccumulator()
    still.add([0.0, 0.0, 0.2], [0.0, 0.0, 0.2], torque, qd)
    assert math.isnan(cot(still)[0])


def test_zero_command_guard():
    e = metrics.normalized_error([0.1, 0.4, 0.03], [0.0, 0.2, 0.04])
    np.testing.assert_allclose(e, [0.1, 1.0, -0.01], rtol=0, atol=1e-15)


def test_metrics_need_steps():
    with pytest.raises(ValueError, match="no steps"):
        rmse(MetricAccumulator())


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 2**31))
def test_metrics_invariant_under_mirrored_trajectory(seed):
    r = np.random.default_rng(seed)
    flip = np.array([1.0, -1.0, -1.0])
    a, b = MetricAccumulator(), MetricAccumulator()
    for _ in range(5):
        v, c = r.standard_normal(3), r.standard_normal(3)
        tau, qd = r.standard_normal(12), r.standard_normal(12)
        a.add(v, c, tau, qd)
        b.add(v * flip, c * flip, tau[::-1], qd[::-1])
    assert rmse(a)[0] == pytest.approx(rmse(b)[0], abs=1e-12)
    assert cot(a)[0] == pytest.approx(cot(b)[0], abs=1e-12)
    assert mae_x(a)[0] == mae_x(b)[0] and mae_yaw(a)[0] == mae_yaw(b)[0]
    assert rmse(a)[0] >= 0 and a.work[0] >= 0 and a.path[0] >= 0


# ---------------------------------------------------------------- oracle


@pytest.fixture(scope="module")
def small_oracle():
    grid = oracle.Grid.default(n_y=21, n_yd=21, n_cmd=11, n_action=5)
    return oracle.value_iteration(grid=grid)


def test_oracle_converges(small_oracle):
    assert small_oracle.residual <= 1e-8
    assert np.all(np.isfinite(small_oracle.V)) and np.all(small_oracle.V <= 0)


def test_oracle_value_symmetric(small_oracle):
    iy, iv, ic = small_oracle.grid.mirror_index()
    V = small_oracle.V
    assert np.array_equal(V, V[iy][:, iv][:, :, ic])


def test_oracle_policy_equivariant(small_oracle):
    iy, iv, ic = small_oracle.grid.mirror_index()
    pi = small_oracle.policy
    mirrored = small_oracle.grid.mirror_action_index()[pi]
    assert np.array_equal(pi[iy][:, iv][:, :, ic], mirrored)
    acts = small_oracle.action_table()
    assert np.array_equal(acts[iy][:, iv][:, :, ic], acts[..., ::-1])


def test_oracle_full_grid_symmetry():
    res = oracle.value_iteration()
    assert res.grid.shape == (41, 41, 11)
    iy, iv, ic = res.grid.mirror_index()
    assert np.array_equal(res.V, res.V[iy][:, iv][:, :, ic])


def test_oracle_zero_reward():
    grid = oracle.Grid.default(n_y=11, n_yd=11, n_cmd=3, n_action=3)
    res = oracle.value_iteration(grid=grid, reward_fn=lambda s, a, p: np.zeros(s.shape[:-1]))
    assert np.array_equal(res.V, np.zeros(grid.shape))


def test_oracle_nonconvergence():
    grid = oracle.Grid.default(n_y=11, n_yd=11, n_cmd=3, n_action=3)
    with pytest.raises(oracle.ConvergenceError):
        oracle.value_iteration(grid=grid, max_iter=3)


def test_oracle_greedy_beats_zero_policy(small_oracle):
    r = np.random.default_rng(0)
    env = sympair.SymPairEnv(1)
    s0 = env.sample_initial(64, r)
    p = small_oracle.params
    greedy = oracle.rollout_return(small_oracle.greedy_action, s0, p, 0.95)
    zero = oracle.rollout_return(lambda s: np.zeros((len(s), 2)), s0, p, 0.95)
    assert greedy.mean() > zero.mean()
    mirrored = oracle.rollout_return(small_oracle.greedy_action, -s0, p, 0.95)
    np.testing.assert_allclose(mirrored, greedy, rtol=0, atol=1e-9)
