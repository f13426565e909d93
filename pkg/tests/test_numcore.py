import numpy as np
import pytest
from fdcheck import REL_TOL, max_rel_err

from msppo import numcore as nc
from msppo.numcore import (
    CheckpointError,
    GradientTape,
    MLPArch,
    NetworkParams,
    Tensor,
    backward,
    graph_conv,
    init_graph_conv,
    init_mlp,
    load_checkpoint,
    mlp_forward,
    save_checkpoint,
)

PROBES = 50


def _weighted(out, w):
    return nc.tsum(nc.mul(out, w))


def _away_from_zero(r, shape, margin=0.1):
    x = r.uniform(margin, 2.0, shape)
    return x * r.choice([-1.0, 1.0], shape)


def _primitive_cases():
    """name -> builder(rng) returning (loss_fn, arrays)."""

    def unary(op, positive=False, kink=False):
        def build(r):
            shape = (3, 4)
            if positive:
                x = r.uniform(0.2, 3.0, shape)
            elif kink:
                x = _away_from_zero(r, shape)
            else:
                x = r.standard_normal(shape)
            w = r.standard_normal(shape)
            return (lambda t: _weighted(op(t["x"]), w)), {"x": x}

        return build

    def binary(op, b_positive=False, broadcast=False):
        def build(r):
            a = r.standard_normal((3, 4))
            b_shape = (4,) if broadcast else (3, 4)
            b = r.uniform(0.5, 2.0, b_shape) if b_positive else r.standard_normal(b_shape)
            w = r.standard_normal((3, 4))
            return (lambda t: _weighted(op(t["a"], t["b"]), w)), {"a": a, "b": b}

        return build

    def affine(r):
        x, W, b = r.standard_normal((2, 3, 4)), r.standard_normal((4, 5)), r.standard_normal(5)
        w = r.standard_normal((2, 3, 5))
        return (lambda t: _weighted(nc.add(nc.matmul(t["x"], t["W"]), t["b"]), w)), {"x": x, "W": W, "b": b}

    def minimum(r):
        a = r.standard_normal((3, 4))
        b = a + _away_from_zero(r, (3, 4))
        w = r.standard_normal((3, 4))
        return (lambda t: _weighted(nc.minimum(t["a"], t["b"]), w)), {"a": a, "b": b}

    def clip(r):
        x = r.uniform(-2, 2, (3, 4))
        x = np.where(np.abs(np.abs(x) - 1.0) < 0.1, 0.0, x)
        w = r.standard_normal((3, 4))
        return (lambda t: _weighted(nc.clip(t["x"], -1.0, 1.0), w)), {"x": x}

    def reductions(r):
        x = r.standard_normal((3, 4, 2))
        w = r.standard_normal(4)
        return (lambda t: nc.add(_weighted(nc.mean(nc.tsum(t["x"], axis=-1), axis=0), w), nc.mean(t["x"]))), {"x": x}

    def reshape_concat(r):
        a, b = r.standard_normal((2, 3)), r.standard_normal((2, 2))
        w = r.standard_normal(10)
        return (lambda t: _weighted(nc.reshape(nc.concat([t["a"], t["b"]], axis=-1), (10,)), w)), {"a": a, "b": b}

    def gather(r):
        x = r.standard_normal((2, 5, 3))
        idx = r.integers(0, 5, 7)
        w = r.standard_normal((2, 7, 3))
        return (lambda t: _weighted(nc.gather(t["x"], idx, axis=-2), w)), {"x": x}

    def sum_aggregate(r):
        x = r.standard_normal((2, 7, 3))
        idx = r.integers(0, 4, 7)
        w = r.standard_normal((2, 4, 3))
        return (lambda t: _weighted(nc.scatter_add(t["x"], idx, 4, axis=-2), w)), {"x": x}

    def gauss(r):
        x, mu = r.standard_normal((4, 3)), r.standard_normal((4, 3))
        ls = r.uniform(-1.0, 0.5, 3)
        w = r.standard_normal(4)
        return (lambda t: _weighted(nc.gaussian_log_density(t["x"], t["mu"], t["ls"]), w)), {"x": x, "mu": mu, "ls": ls}

    def conv(r):
        n, width = 5, 3
        edges = np.array([[0, 1], [1, 2], [2, 3], [1, 4]])
        p = init_graph_conv(r, "c.", width).randomized(r, 0.6)
        h = r.standard_normal((2, n, width))
        w = r.standard_normal((2, n, width))
        arrays = dict(p)
        arrays["h"] = h
        return (lambda t: _weighted(graph_conv(t, t["h"], edges, prefix="c."), w)), arrays

    def mlp(r):
        arch = MLPArch((4, 6, 3))
        p = init_mlp(r, "m.", arch).randomized(r, 0.5)
        x = r.standard_normal((3, 4))
        w = r.standard_normal((3, 3))
        arrays = dict(p)
        arrays["x"] = x
        return (lambda t: _weighted(mlp_forward(t, t["x"], arch, "m."), w)), arrays

    return {
        "affine": affine,
        "add": binary(nc.add, broadcast=True),
        "sub": binary(nc.sub),
        "mul": binary(nc.mul, broadcast=True),
        "div": binary(nc.div, b_positive=True),
        "neg": unary(nc.neg),
        "tanh": unary(nc.tanh),
        "relu": unary(nc.relu, kink=True),
        "exp": unary(nc.exp),
        "log": unary(nc.log, positive=True),
        "softplus": unary(nc.softplus),
        "square": unary(nc.square),
        "absolute": unary(nc.absolute, kink=True),
        "minimum": minimum,
        "clip": clip,
        "sum_mean": reductions,
        "reshape_concat": reshape_concat,
        "gather": gather,
        "sum_aggregate": sum_aggregate,
        "gaussian_log_density": gauss,
        "graph_conv": conv,
        "mlp": mlp,
    }


CASES = _primitive_cases()


@pytest.mark.parametrize("name", sorted(CASES))
def test_finite_difference_agreement(name):
    worst = 0.0
    for seed in range(PROBES):
        fn, arrays = CASES[name](np.random.default_rng(seed))
        worst = max(worst, max_rel_err(fn, arrays))
    assert worst <= REL_TOL, f"{name}: relative error {worst:.2e}"


def test_constant_loss_gives_zero_gradients():
    p = {"w": Tensor(np.ones(3), requires_grad=True)}
    with GradientTape() as tape:
        loss = nc.add(nc.mul(nc.tsum(p["w"]), 0.0), 3.0)
    g = backward(tape, loss, p)
    assert np.array_equal(g["w"], np.zeros(3))


def test_sum_of_parameter_gives_ones():
    p = {"w": Tensor(np.arange(6.0).reshape(2, 3), requires_grad=True), "unused": Tensor(np.ones(4), requires_grad=True)}
    with GradientTape() as tape:
        loss = nc.tsum(p["w"])
    g = backward(tape, loss, p)
    assert np.array_equal(g["w"], np.ones((2, 3)))
    assert np.array_equal(g["unused"], np.zeros(4))


def test_backward_rejects_unrecorded_and_non_scalar_loss():
    p = {"w": Tensor(np.ones(3), requires_grad=True)}
    stray = nc.tsum(p["w"])
    with GradientTape() as tape:
        vec = nc.mul(p["w"], 2.0)
    with pytest.raises(ValueError, match="not recorded"):
        backward(tape, stray, p)
    with pytest.raises(ValueError, match="scalar"):
        backward(tape, vec, p)


def test_shared_subexpression_visited_once():
    # y = x*x used twice; d/dx (y + y) = 4x
    p = {"x": Tensor(np.array([1.5, -2.0]), requires_grad=True)}
    with GradientTape() as tape:
        y = nc.mul(p["x"], p["x"])
        loss = nc.tsum(nc.add(y, y))
    assert np.array_equal(backward(tape, loss, p)["x"], [6.0, -8.0])


def test_nested_tapes_rejected():
    with GradientTape():
        with pytest.raises(RuntimeError):
            with GradientTape():
                pass


def test_no_recording_outside_tape():
    t = Tensor(np.ones(2), requires_grad=True)
    out = nc.mul(t, 3.0)
    assert not out.requires_grad


def test_mlp_zero_params_give_zero_output(rng):
    arch = MLPArch((5, 8, 3))
    p = init_mlp(rng, "", arch)
    zero = NetworkParams((k, np.zeros_like(v)) for k, v in p.items())
    out = mlp_forward(zero, rng.standard_normal((4, 5)), arch)
    assert np.array_equal(out.data, np.zeros((4, 3)))


def test_identity_linear_layer(rng):
    arch = MLPArch((4, 4))
    p = NetworkParams({"0.weight": np.eye(4), "0.bias": np.zeros(4)})
    x = rng.standard_normal((3, 4))
    assert np.array_equal(mlp_forward(p, x, arch).data, x)


def test_mlp_matches_straight_line_evaluation(rng):
    arch = MLPArch((6, 10, 7, 2))
    p = init_mlp(rng, "net.", arch).randomized(rng, 0.7)
    x = rng.standard_normal((5, 6))
    h1 = np.tanh(x @ p["net.0.weight"] + p["net.0.bias"])
    h2 = np.tanh(h1 @ p["net.1.weight"] + p["net.1.bias"])
    y = h2 @ p["net.2.weight"] + p["net.2.bias"]
    np.testing.assert_allclose(mlp_forward(p, x, arch, "net.").data, y, rtol=0, atol=1e-12)


def test_mlp_width_mismatch(rng):
    arch = MLPArch((4, 3))
    p = init_mlp(rng, "", arch)
    with pytest.raises(ValueError, match="width mismatch"):
        mlp_forward(p, np.zeros((2, 5)), arch)


def test_init_gains(rng):
    arch = MLPArch((8, 8, 8))
    p = init_mlp(rng, "", arch)
    w0, w1 = p["0.weight"], p["1.weight"]
    np.testing.assert_allclose(w0.T @ w0, 2.0 * np.eye(8), atol=1e-12)
    np.testing.assert_allclose(w1.T @ w1, 1e-4 * np.eye(8), atol=1e-15)


def test_graph_conv_two_nodes_by_hand():
    p = NetworkParams(
        {
            "self": np.array([[1.0, 2.0], [0.0, -1.0]]),
            "nbr": np.array([[0.5, 0.0], [1.0, 1.0]]),
            "bias": np.array([0.1, -0.2]),
        }
    )
    h = np.array([[1.0, 2.0], [-1.0, 0.5]])
    out = graph_conv(p, h, np.array([[0, 1]])).data
    # node 0: h0 W_self + h1 W_nbr + b = (1, 0) + (0, 0.5) + (0.1, -0.2)
    # node 1: h1 W_self + h0 W_nbr + b = (-1, -2.5) + (2.5, 2) + (0.1, -0.2)
    expected = np.tanh(np.array([[1.1, 0.3], [1.6, -0.7]]))
    np.testing.assert_allclose(out, expected, rtol=0, atol=1e-15)


def test_graph_conv_isolated_node_uses_self_path_only(rng):
    p = init_graph_conv(rng, "", 3).randomized(rng)
    h = rng.standard_normal((4, 3))
    edges = np.array([[0, 1], [1, 2]])
    out = graph_conv(p, h, edges).data
    np.testing.assert_array_equal(out[3], np.tanh(h[3] @ p["self"] + p["bias"]))
    h2 = h.copy()
    h2[:3] = rng.standard_normal((3, 3))
    np.testing.assert_array_equal(graph_conv(p, h2, edges).data[3], out[3])


def test_graph_conv_permutation_equivariance():
    for seed in range(20):
        r = np.random.default_rng(seed)
        n = int(r.integers(2, 12))
        m = int(r.integers(0, 2 * n))
        edges = r.integers(0, n, (m, 2))
        width = int(r.integers(1, 6))
        p = init_graph_conv(r, "", width).randomized(r)
        h = r.standard_normal((3, n, width))
        perm = r.permutation(n)
        inv = np.argsort(perm)
        # node i of the permuted graph is node perm[i] of the original
        out = graph_conv(p, h, edges).data
        out_p = graph_conv(p, h[:, perm], inv[edges]).data
        np.testing.assert_allclose(out_p, out[:, perm], rtol=0, atol=1e-9)


def test_graph_conv_edge_out_of_range(rng):
    p = init_graph_conv(rng, "", 2)
    with pytest.raises(IndexError, match="out of range"):
        graph_conv(p, np.zeros((3, 2)), np.array([[0, 3]]))


def test_checkpoint_roundtrip_is_bit_exact(tmp_path, rng):
    p = NetworkParams()
    p["b.weight"] = rng.standard_normal((3, 4))
    p["a.bias"] = np.array([np.nextafter(0.0, 1.0), -0.0, 1e308])
    p["scalar"] = np.array(2.5)
    path = tmp_path / "x.ckpt"
    save_checkpoint(path, p, "meta text")
    q, meta = load_checkpoint(path)
    assert meta == "meta text"
    assert list(q) == list(p)
    for k in p:
        assert q[k].shape == p[k].shape
        assert q[k].tobytes() == p[k].tobytes()
    path2 = tmp_path / "y.ckpt"
    save_checkpoint(path2, q, meta)
    assert path.read_bytes() == path2.read_bytes()


def test_checkpoint_errors(tmp_path, rng):
    good = tmp_path / "g.ckpt"
    save_checkpoint(good, NetworkParams({"w": rng.standard_normal(4)}))
    raw = good.read_bytes()
    cases = {
        "not a checkpoint": b"garbage!" + raw[8:],
        "truncated": raw[:-3],
        "trailing": raw + b"\0",
        "version": raw[:8] + (99).to_bytes(4, "little") + raw[12:],
    }
    for msg, data in cases.items():
        bad = tmp_path / "bad.ckpt"
        bad.write_bytes(data)
        with pytest.raises(CheckpointError, match=msg):
            load_checkpoint(bad)


def test_determinism():
    def run():
        r = np.random.default_rng(7)
        arch = MLPArch((4, 16, 2))
        p = init_mlp(r, "", arch)
        conv = init_graph_conv(r, "", 4)
        x = r.standard_normal((3, 5, 4))
        h = graph_conv(conv, x, np.array([[0, 1], [1, 2], [3, 4]]))
        return p, mlp_forward(p, h, arch).data

    (p1, y1), (p2, y2) = run(), run()
    assert all(p1[k].tobytes() == p2[k].tobytes() for k in p1)
    assert y1.tobytes() == y2.tobytes()
