"""Dense float64 tensors with tape-based reverse-mode differentiation.

Only the primitives the networks and the PPO loss need are provided. Every
primitive records a vector-Jacobian product on the active :class:`GradientTape`
when at least one input requires a gradient; outside a tape the same functions
are plain numpy evaluations.
"""
from __future__ import annotations

import struct
from collections import OrderedDict
from dataclasses import dataclass
from typing import Callable, Iterable, Iterator, Mapping, Sequence

import numpy as np

__all__ = [
    "Tensor",
    "GradientTape",
    "NetworkParams",
    "MLPArch",
    "backward",
    "constant",
    "add",
    "sub",
    "mul",
    "div",
    "neg",
    "matmul",
    "tanh",
    "relu",
    "exp",
    "log",
    "softplus",
    "square",
    "absolute",
    "tsum",
    "mean",
    "reshape",
    "concat",
    "gather",
    "scatter_add",
    "minimum",
    "clip",
    "gaussian_log_density",
    "init_mlp",
    "mlp_forward",
    "init_graph_conv",
    "graph_conv",
    "save_checkpoint",
    "load_checkpoint",
    "CheckpointError",
]


class Tensor:
    __slots__ = ("data", "requires_grad", "name")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def numpy(self) -> np.ndarray:
        return self.data

    def __repr__(self) -> str:
        tag = f", name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}{tag})"

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __truediv__(self, other):
        return div(self, other)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)


_Node = tuple[Tensor, tuple, Callable[[np.ndarray], tuple]]
_ACTIVE: list["GradientTape"] = []


class GradientTape:
    """Records primitive applications in execution (= topological) order.

    Use as a context manager; nested tapes are not supported.
    """

    def __init__(self):
        self.nodes: list[_Node] = []

    def __enter__(self) -> "GradientTape":
        if _ACTIVE:
            raise RuntimeError("a GradientTape is already recording")
        _ACTIVE.append(self)
        return self

    def __exit__(self, *exc) -> None:
        _ACTIVE.remove(self)

    def __len__(self) -> int:
        return len(self.nodes)


def constant(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _record(out: Tensor, inputs: tuple, vjp) -> Tensor:
    if _ACTIVE and any(t.requires_grad for t in inputs):
        out.requires_grad = True
        _ACTIVE[-1].nodes.append((out, inputs, vjp))
    return out


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def backward(tape: GradientTape, loss: Tensor, params: Mapping[str, Tensor]) -> dict[str, np.ndarray]:
    """Gradients of the scalar ``loss`` with respect to every tensor in ``params``.

    Parameters that the loss does not depend on receive zero gradients.
    """
    if loss.data.size != 1:
        raise ValueError(f"loss must be a scalar, got shape {loss.shape}")
    recorded = any(out is loss for out, _, _ in tape.nodes)
    is_param = any(p is loss for p in params.values())
    if not (recorded or is_param):
        raise ValueError("loss was not recorded on this tape")

    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    for out, inputs, vjp in reversed(tape.nodes):
        g = grads.pop(id(out), None)
        if g is None:
            continue
        for t, gi in zip(inputs, vjp(g)):
            if gi is None or not t.requires_grad:
                continue
            key = id(t)
            if key in grads:
                grads[key] = grads[key] + gi
            else:
                grads[key] = gi
    return {
        name: grads.get(id(p), np.zeros_like(p.data)).reshape(p.shape)
        for name, p in params.items()
    }


# ---------------------------------------------------------------- primitives


def add(a, b) -> Tensor:
    a, b = constant(a), constant(b)
    out = Tensor(a.data + b.data)
    return _record(out, (a, b), lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))


def sub(a, b) -> Tensor:
    a, b = constant(a), constant(b)
    out = Tensor(a.data - b.data)
    return _record(out, (a, b), lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)))


def mul(a, b) -> Tensor:
    a, b = constant(a), constant(b)
    out = Tensor(a.data * b.data)
    return _record(
        out,
        (a, b),
        lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)),
    )


def div(a, b) -> Tensor:
    a, b = constant(a), constant(b)
    out = Tensor(a.data / b.data)
    return _record(
        out,
        (a, b),
        lambda g: (
            _unbroadcast(g / b.data, a.shape),
            _unbroadcast(-g * a.data / (b.data * b.data), b.shape),
        ),
    )


def neg(a) -> Tensor:
    a = constant(a)
    return _record(Tensor(-a.data), (a,), lambda g: (-g,))


def matmul(a, b) -> Tensor:
    """``a @ b`` where ``b`` is a 2-D weight matrix and ``a`` has any leading dims."""
    a, b = constant(a), constant(b)
    if b.ndim != 2:
        raise ValueError("matmul expects a 2-D right operand")
    if a.shape[-1] != b.shape[0]:
        raise ValueError(f"width mismatch: input has {a.shape[-1]} features, weight expects {b.shape[0]}")
    out = Tensor(a.data @ b.data)

    def vjp(g):
        ga = g @ b.data.T
        gb = a.data.reshape(-1, a.shape[-1]).T @ g.reshape(-1, g.shape[-1])
        return ga, gb

    return _record(out, (a, b), vjp)


def tanh(a) -> Tensor:
    a = constant(a)
    y = np.tanh(a.data)
    return _record(Tensor(y), (a,), lambda g: (g * (1.0 - y * y),))


def relu(a) -> Tensor:
    a = constant(a)
    mask = a.data > 0
    return _record(Tensor(np.where(mask, a.data, 0.0)), (a,), lambda g: (g * mask,))


def exp(a) -> Tensor:
    a = constant(a)
    y = np.exp(a.data)
    return _record(Tensor(y), (a,), lambda g: (g * y,))


def log(a) -> Tensor:
    a = constant(a)
    return _record(Tensor(np.log(a.data)), (a,), lambda g: (g / a.data,))


def softplus(a) -> Tensor:
    a = constant(a)
    y = np.logaddexp(0.0, a.data)
    sig = np.exp(a.data - y)
    return _record(Tensor(y), (a,), lambda g: (g * sig,))


def square(a) -> Tensor:
    a = constant(a)
    return _record(Tensor(a.data * a.data), (a,), lambda g: (2.0 * g * a.data,))


def absolute(a) -> Tensor:
    a = constant(a)
    return _record(Tensor(np.abs(a.data)), (a,), lambda g: (g * np.sign(a.data),))


def tsum(a, axis=None, keepdims: bool = False) -> Tensor:
    a = constant(a)
    out = Tensor(a.data.sum(axis=axis, keepdims=keepdims))

    def vjp(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.shape).copy(),)

    return _record(out, (a,), vjp)


def mean(a, axis=None, keepdims: bool = False) -> Tensor:
    a = constant(a)
    n = a.data.size if axis is None else np.prod([a.shape[i] for i in np.atleast_1d(axis)])
    return mul(tsum(a, axis=axis, keepdims=keepdims), 1.0 / float(n))


def reshape(a, shape) -> Tensor:
    a = constant(a)
    return _record(Tensor(a.data.reshape(shape)), (a,), lambda g: (g.reshape(a.shape),))


def concat(tensors: Sequence, axis: int = -1) -> Tensor:
    ts = tuple(constant(t) for t in tensors)
    out = Tensor(np.concatenate([t.data for t in ts], axis=axis))
    bounds = np.cumsum([t.shape[axis] for t in ts])[:-1]
    return _record(out, ts, lambda g: tuple(np.split(g, bounds, axis=axis)))


def gather(a, index, axis: int = -1) -> Tensor:
    """``np.take(a, index, axis)``; repeated indices accumulate in the gradient."""
    a = constant(a)
    index = np.asarray(index, dtype=np.intp)
    out = Tensor(np.take(a.data, index, axis=axis))
    ax = axis % a.ndim

    def vjp(g):
        return (_scatter(g, index, a.shape[ax], ax),)

    return _record(out, (a,), vjp)


def _scatter(values: np.ndarray, index: np.ndarray, size: int, axis: int) -> np.ndarray:
    moved = np.moveaxis(values, axis, 0)
    flat = moved.reshape((index.size,) + moved.shape[index.ndim:])
    idx = index.reshape(-1)
    if size * idx.size <= 1 << 16:
        # one-hot product; much faster than ufunc.at for the small graphs used here
        onehot = (np.arange(size)[:, None] == idx[None, :]).astype(np.float64)
        out = (onehot @ flat.reshape(idx.size, -1)).reshape((size,) + flat.shape[1:])
    else:
        out = np.zeros((size,) + flat.shape[1:])
        np.add.at(out, idx, flat)
    return np.moveaxis(out, 0, axis)


def scatter_add(a, index, size: int, axis: int = -1) -> Tensor:
    """Sum slices of ``a`` along ``axis`` into ``size`` buckets given by ``index``."""
    a = constant(a)
    index = np.asarray(index, dtype=np.intp)
    if index.size and (index.min() < 0 or index.max() >= size):
        raise IndexError(f"scatter index out of range for {size} buckets")
    ax = axis % a.ndim
    out = Tensor(_scatter(a.data, index, size, ax))
    return _record(out, (a,), lambda g: (np.take(g, index, axis=ax),))


def minimum(a, b) -> Tensor:
    a, b = constant(a), constant(b)
    pick_a = a.data <= b.data
    out = Tensor(np.where(pick_a, a.data, b.data))
    return _record(
        out,
        (a, b),
        lambda g: (_unbroadcast(g * pick_a, a.shape), _unbroadcast(g * ~pick_a, b.shape)),
    )


def clip(a, lo: float, hi: float) -> Tensor:
    a = constant(a)
    inside = (a.data >= lo) & (a.data <= hi)
    return _record(Tensor(np.clip(a.data, lo, hi)), (a,), lambda g: (g * inside,))


_LOG_2PI = float(np.log(2.0 * np.pi))


def gaussian_log_density(x, mu, log_std) -> Tensor:
    """Diagonal Gaussian log-density summed over the last axis."""
    z = div(sub(x, mu), exp(log_std))
    per_dim = sub(mul(square(z), -0.5), add(log_std, 0.5 * _LOG_2PI))
    return tsum(per_dim, axis=-1)


# ---------------------------------------------------------------- parameters


class NetworkParams(Mapping[str, np.ndarray]):
    """Named float64 arrays kept in insertion order."""

    def __init__(self, items: Iterable[tuple[str, np.ndarray]] | Mapping[str, np.ndarray] = ()):
        if isinstance(items, Mapping):
            items = items.items()
        self._data: OrderedDict[str, np.ndarray] = OrderedDict(
            (k, np.array(v, dtype=np.float64)) for k, v in items
        )

    def __getitem__(self, key: str) -> np.ndarray:
        return self._data[key]

    def __setitem__(self, key: str, value) -> None:
        self._data[key] = np.array(value, dtype=np.float64)

    def __iter__(self) -> Iterator[str]:
        return iter(self._data)

    def __len__(self) -> int:
        return len(self._data)

    def copy(self) -> "NetworkParams":
        return NetworkParams((k, v.copy()) for k, v in self._data.items())

    def update(self, other: Mapping[str, np.ndarray]) -> None:
        for k, v in other.items():
            self[k] = v

    def prefixed(self, prefix: str) -> "NetworkParams":
        return NetworkParams((prefix + k, v) for k, v in self._data.items())

    def strip(self, prefix: str) -> "NetworkParams":
        n = len(prefix)
        return NetworkParams((k[n:], v) for k, v in self._data.items() if k.startswith(prefix))

    def count(self) -> int:
        return int(sum(v.size for v in self._data.values()))

    def tensors(self) -> "OrderedDict[str, Tensor]":
        """Fresh leaf tensors that require gradients, one per parameter."""
        return OrderedDict((k, Tensor(v, requires_grad=True, name=k)) for k, v in self._data.items())

    def randomized(self, rng: np.random.Generator, scale: float = 0.5) -> "NetworkParams":
        return NetworkParams((k, rng.normal(0.0, scale, v.shape)) for k, v in self._data.items())


@dataclass(frozen=True)
class MLPArch:
    widths: tuple[int, ...]
    activation: str = "tanh"
    activate_output: bool = False

    @property
    def n_layers(self) -> int:
        return len(self.widths) - 1


_ACTIVATIONS = {"tanh": tanh, "relu": relu, "softplus": softplus}


def _orthogonal(rng: np.random.Generator, n_in: int, n_out: int, gain: float) -> np.ndarray:
    a = rng.normal(size=(max(n_in, n_out), min(n_in, n_out)))
    q, r = np.linalg.qr(a)
    q = q * np.sign(np.diag(r))
    w = q if n_in >= n_out else q.T
    return gain * w[:n_in, :n_out]


def init_mlp(
    rng: np.random.Generator,
    prefix: str,
    arch: MLPArch,
    hidden_gain: float = np.sqrt(2.0),
    output_gain: float = 0.01,
) -> NetworkParams:
    params = NetworkParams()
    for i, (n_in, n_out) in enumerate(zip(arch.widths[:-1], arch.widths[1:])):
        last = i == arch.n_layers - 1
        gain = output_gain if last and not arch.activate_output else hidden_gain
        params[f"{prefix}{i}.weight"] = _orthogonal(rng, n_in, n_out, gain)
        params[f"{prefix}{i}.bias"] = np.zeros(n_out)
    return params


def mlp_forward(params: Mapping, x, arch: MLPArch, prefix: str = "") -> Tensor:
    x = constant(x)
    if x.shape[-1] != arch.widths[0]:
        raise ValueError(f"width mismatch: input has {x.shape[-1]} features, arch expects {arch.widths[0]}")
    act = _ACTIVATIONS[arch.activation]
    for i in range(arch.n_layers):
        x = add(matmul(x, params[f"{prefix}{i}.weight"]), params[f"{prefix}{i}.bias"])
        if i < arch.n_layers - 1 or arch.activate_output:
            x = act(x)
    return x


def init_graph_conv(rng: np.random.Generator, prefix: str, width: int, gain: float = 1.0) -> NetworkParams:
    return NetworkParams(
        [
            (f"{prefix}self", _orthogonal(rng, width, width, gain)),
            (f"{prefix}nbr", _orthogonal(rng, width, width, gain)),
            (f"{prefix}bias", np.zeros(width)),
        ]
    )


def graph_conv(
    params: Mapping,
    h,
    edges: np.ndarray,
    prefix: str = "",
    activation: str = "tanh",
) -> Tensor:
    """One sum-aggregation message-passing layer over nodes on axis -2.

    ``edges`` is an (E, 2) array of undirected index pairs.
    """
    h = constant(h)
    n = h.shape[-2]
    edges = np.asarray(edges, dtype=np.intp).reshape(-1, 2)
    if edges.size and (edges.min() < 0 or edges.max() >= n):
        raise IndexError(f"edge index out of range for {n} nodes")
    src = np.concatenate([edges[:, 0], edges[:, 1]])
    dst = np.concatenate([edges[:, 1], edges[:, 0]])
    pre = matmul(h, params[f"{prefix}self"])
    if src.size:
        agg = scatter_add(gather(h, src, axis=-2), dst, n, axis=-2)
        pre = add(pre, matmul(agg, params[f"{prefix}nbr"]))
    pre = add(pre, params[f"{prefix}bias"])
    return _ACTIVATIONS[activation](pre)


# ---------------------------------------------------------------- checkpoints

_MAGIC = b"MSPPOCKP"
_VERSION = 1


class CheckpointError(ValueError):
    pass


def _pack_str(s: str) -> bytes:
    raw = s.encode("utf-8")
    return struct.pack("<I", len(raw)) + raw


def save_checkpoint(path, params: Mapping[str, np.ndarray], meta: str = "") -> None:
    """Write ``params`` as (name, shape, little-endian float64 data) records."""
    chunks = [_MAGIC, struct.pack("<I", _VERSION), _pack_str(meta), struct.pack("<I", len(params))]
    for name, value in params.items():
        arr = np.asarray(value, dtype="<f8")
        chunks.append(_pack_str(name))
        chunks.append(struct.pack("<I", arr.ndim))
        chunks.append(struct.pack(f"<{arr.ndim}Q", *arr.shape))
        chunks.append(arr.tobytes(order="C"))
    with open(path, "wb") as fh:
        fh.write(b"".join(chunks))


def load_checkpoint(path) -> tuple[NetworkParams, str]:
    with open(path, "rb") as fh:
        buf = fh.read()
    pos = 0

    def take(n: int) -> bytes:
        nonlocal pos
        if pos + n > len(buf):
            raise CheckpointError(f"{path}: truncated checkpoint")
        out = buf[pos : pos + n]
        pos += n
        return out

    def take_str() -> str:
        (n,) = struct.unpack("<I", take(4))
        return take(n).decode("utf-8")

    if take(len(_MAGIC)) != _MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint file")
    (version,) = struct.unpack("<I", take(4))
    if version != _VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {version}")
    meta = take_str()
    (count,) = struct.unpack("<I", take(4))
    params = NetworkParams()
    for _ in range(count):
        name = take_str()
        (ndim,) = struct.unpack("<I", take(4))
        shape = struct.unpack(f"<{ndim}Q", take(8 * ndim))
        n = int(np.prod(shape, dtype=np.int64))
        params[name] = np.frombuffer(take(8 * n), dtype="<f8").reshape(shape)
    if pos != len(buf):
        raise CheckpointError(f"{path}: trailing bytes after {count} entries")
    return params, meta
