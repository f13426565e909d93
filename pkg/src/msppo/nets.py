"""Graph actor/critic networks and the MLP baseline.

A :class:`GraphLayout` says which observation entries feed each node, which
sign mask each node's encoder applies, how nodes are wired, and which node
decodes into which action component. The same network code then yields

* the symmetric actor ``l(z_G(h(x)))`` and invariant critic ``l_I(z_G(h(x)))``
  when the layout carries the C2 encoder/decoder masks, and
* the morphology-informed (MI) baseline when the masks are all +1.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import layout as obs_layout
from . import numcore as nc
from .morphology import MorphologyGraph
from .numcore import MLPArch, NetworkParams, Tensor

ARCHS = ("ms", "mi", "mlp")


@dataclass(frozen=True, eq=False)
class GraphLayout:
    in_dim: int
    kinds: tuple[str, ...]
    input_index: tuple[np.ndarray, ...]
    input_sign: tuple[np.ndarray, ...]
    edges: np.ndarray
    node_perm: np.ndarray
    out_nodes: np.ndarray
    out_sign: np.ndarray
    kind_order: tuple[str, ...] = field(init=False)

    def __post_init__(self):
        order = tuple(dict.fromkeys(self.kinds))
        object.__setattr__(self, "kind_order", order)
        for k in order:
            widths = {self.input_index[i].size for i in self.nodes_of(k)}
            if len(widths) != 1:
                raise ValueError(f"nodes of kind {k!r} have differing input widths {sorted(widths)}")

    @property
    def n_nodes(self) -> int:
        return len(self.kinds)

    @property
    def n_out(self) -> int:
        return self.out_nodes.size

    def nodes_of(self, kind: str) -> np.ndarray:
        return np.array([i for i, k in enumerate(self.kinds) if k == kind], dtype=np.intp)

    def width_of(self, kind: str) -> int:
        return self.input_index[self.nodes_of(kind)[0]].size

    def out_kinds(self) -> tuple[str, ...]:
        return tuple(dict.fromkeys(self.kinds[n] for n in self.out_nodes))


def quad_layout(graph: MorphologyGraph, H: int, privileged: bool = False, symmetric: bool = True) -> GraphLayout:
    n = graph.n_nodes
    idx = tuple(graph.feature_index(i, H, privileged) for i in range(n))
    if symmetric:
        sign = tuple(graph.encoder_mask(i, H, privileged) for i in range(n))
    else:
        sign = tuple(np.ones(ix.size) for ix in idx)
    out_nodes = np.array([2 + j for j in range(obs_layout.N_JOINTS)], dtype=np.intp)
    out_sign = np.ones(obs_layout.N_JOINTS)
    if symmetric:
        for j in range(obs_layout.N_JOINTS):
            node = graph.nodes[2 + j]
            if node.kind == "hip" and node.side == "right":
                out_sign[j] = -1.0
    in_dim = H * obs_layout.OBS_DIM + (obs_layout.PRIV_DIM if privileged else 0)
    return GraphLayout(
        in_dim=in_dim,
        kinds=tuple(nd.kind for nd in graph.nodes),
        input_index=idx,
        input_sign=sign,
        edges=graph.edges,
        node_perm=graph.node_permutation(),
        out_nodes=out_nodes,
        out_sign=out_sign,
    )


def pair_layout(obs_dim: int = 3, symmetric: bool = True) -> GraphLayout:
    """Two mirror nodes for the lateral toy task; reflection negates the whole observation."""
    idx = np.arange(obs_dim)
    return GraphLayout(
        in_dim=obs_dim,
        kinds=("side", "side"),
        input_index=(idx, idx),
        input_sign=(np.ones(obs_dim), -np.ones(obs_dim) if symmetric else np.ones(obs_dim)),
        edges=np.array([[0, 1]], dtype=np.intp),
        node_perm=np.array([1, 0], dtype=np.intp),
        out_nodes=np.array([0, 1], dtype=np.intp),
        out_sign=np.ones(2),
    )


def _batched(obs) -> tuple[Tensor, bool]:
    t = nc.constant(obs)
    if t.ndim == 1:
        return nc.reshape(t, (1, -1)), True
    return t, False


class GraphTrunk:
    """Encoder h followed by L sum-aggregation graph convolutions."""

    def __init__(self, layout: GraphLayout, hidden: int, layers: int):
        self.layout = layout
        self.hidden = hidden
        self.layers = layers
        self._enc_arch = {k: MLPArch((layout.width_of(k), hidden, hidden), activate_output=True) for k in layout.kind_order}
        self._index = {k: np.stack([layout.input_index[i] for i in layout.nodes_of(k)]) for k in layout.kind_order}
        self._sign = {k: np.stack([layout.input_sign[i] for i in layout.nodes_of(k)]) for k in layout.kind_order}
        grouped = np.concatenate([layout.nodes_of(k) for k in layout.kind_order])
        self._ungroup = np.argsort(grouped)

    def init(self, rng: np.random.Generator) -> NetworkParams:
        params = NetworkParams()
        for k in self.layout.kind_order:
            params.update(nc.init_mlp(rng, f"enc.{k}.", self._enc_arch[k], output_gain=np.sqrt(2.0)))
        for l in range(self.layers):
            params.update(nc.init_graph_conv(rng, f"conv.{l}.", self.hidden))
        return params

    def encode(self, params, x: Tensor, prefix: str = "") -> Tensor:
        """Node embeddings h(x) of shape (B, N, hidden), nodes in layout order."""
        if x.shape[-1] != self.layout.in_dim:
            raise ValueError(f"length mismatch: observation has {x.shape[-1]} entries, network expects {self.layout.in_dim}")
        parts = []
        for k in self.layout.kind_order:
            feats = nc.mul(nc.gather(x, self._index[k], axis=-1), self._sign[k])
            parts.append(nc.mlp_forward(params, feats, self._enc_arch[k], prefix=f"{prefix}enc.{k}."))
        return nc.gather(nc.concat(parts, axis=-2), self._ungroup, axis=-2)

    def __call__(self, params, x: Tensor, prefix: str = "") -> Tensor:
        z = self.encode(params, x, prefix)
        for l in range(self.layers):
            z = nc.graph_conv(params, z, self.layout.edges, prefix=f"{prefix}conv.{l}.")
        return z


class GraphActor:
    """Mean-action network: trunk plus per-joint-kind decoders and output signs."""

    def __init__(self, layout: GraphLayout, hidden: int = 64, layers: int = 2):
        self.layout = layout
        self.trunk = GraphTrunk(layout, hidden, layers)
        self._dec_arch = MLPArch((hidden, hidden, 1))
        self._dec_nodes = {k: layout.out_nodes[[layout.kinds[n] == k for n in layout.out_nodes]] for k in layout.out_kinds()}
        out_pos = np.concatenate([np.flatnonzero([layout.kinds[n] == k for n in layout.out_nodes]) for k in layout.out_kinds()])
        self._unorder = np.argsort(out_pos)

    @property
    def in_dim(self) -> int:
        return self.layout.in_dim

    @property
    def out_dim(self) -> int:
        return self.layout.n_out

    def init(self, rng: np.random.Generator) -> NetworkParams:
        params = self.trunk.init(rng)
        for k in self.layout.out_kinds():
            params.update(nc.init_mlp(rng, f"dec.{k}.", self._dec_arch, output_gain=0.01))
        return params

    def embeddings(self, params, obs, prefix: str = "") -> Tensor:
        x, _ = _batched(obs)
        return self.trunk(params, x, prefix)

    def forward(self, params, obs, prefix: str = "") -> Tensor:
        x, squeeze = _batched(obs)
        z = self.trunk(params, x, prefix)
        outs = []
        for k, nodes in self._dec_nodes.items():
            y = nc.mlp_forward(params, nc.gather(z, nodes, axis=-2), self._dec_arch, prefix=f"{prefix}dec.{k}.")
            outs.append(nc.reshape(y, y.shape[:-2] + (nodes.size,)))
        mu = nc.mul(nc.gather(nc.concat(outs, axis=-1), self._unorder, axis=-1), self.layout.out_sign)
        return nc.reshape(mu, (-1,)) if squeeze else mu


class GraphCritic:
    """Scalar value network on the graph trunk.

    ``head="invariant"`` pools ``z + Pz``, ``|z - Pz|`` and ``(z - Pz)^2`` over
    nodes, where P is the mirror node permutation; ``head="mean"`` pools ``z``.
    """

    def __init__(self, layout: GraphLayout, hidden: int = 64, layers: int = 2, head: str = "invariant"):
        if head not in ("invariant", "mean"):
            raise ValueError(f"unknown critic head {head!r}")
        self.layout = layout
        self.head = head
        self.trunk = GraphTrunk(layout, hidden, layers)
        pooled = 3 * hidden if head == "invariant" else hidden
        self._head_arch = MLPArch((pooled, hidden, 1))

    @property
    def in_dim(self) -> int:
        return self.layout.in_dim

    def init(self, rng: np.random.Generator) -> NetworkParams:
        params = self.trunk.init(rng)
        params.update(nc.init_mlp(rng, "head.", self._head_arch, output_gain=1.0))
        return params

    def embeddings(self, params, obs, priv=None, prefix: str = "") -> Tensor:
        x, _ = _batched(_with_priv(obs, priv))
        return self.trunk(params, x, prefix)

    def pool(self, z: Tensor) -> Tensor:
        if self.head == "mean":
            return nc.mean(z, axis=-2)
        pz = nc.gather(z, self.layout.node_perm, axis=-2)
        diff = nc.sub(z, pz)
        channels = [nc.add(z, pz), nc.absolute(diff), nc.square(diff)]
        return nc.concat([nc.mean(c, axis=-2) for c in channels], axis=-1)

    def forward(self, params, obs, priv=None, prefix: str = "") -> Tensor:
        x, squeeze = _batched(_with_priv(obs, priv))
        z = self.trunk(params, x, prefix)
        v = nc.mlp_forward(params, self.pool(z), self._head_arch, prefix=f"{prefix}head.")
        v = nc.reshape(v, v.shape[:-1])
        return nc.reshape(v, ()) if squeeze else v


def _with_priv(obs, priv):
    if priv is None:
        return obs
    if isinstance(obs, Tensor) or isinstance(priv, Tensor):
        return nc.concat([obs, priv], axis=-1)
    return np.concatenate([np.asarray(obs, dtype=np.float64), np.asarray(priv, dtype=np.float64)], axis=-1)


class MLPActor:
    def __init__(self, in_dim: int, out_dim: int, hidden: int = 64, layers: int = 2):
        self.arch = MLPArch((in_dim,) + (hidden,) * layers + (out_dim,))

    @property
    def in_dim(self) -> int:
        return self.arch.widths[0]

    @property
    def out_dim(self) -> int:
        return self.arch.widths[-1]

    def init(self, rng: np.random.Generator) -> NetworkParams:
        return nc.init_mlp(rng, "mlp.", self.arch, output_gain=0.01)

    def forward(self, params, obs, prefix: str = "") -> Tensor:
        x, squeeze = _batched(obs)
        if x.shape[-1] != self.in_dim:
            raise ValueError(f"length mismatch: observation has {x.shape[-1]} entries, network expects {self.in_dim}")
        y = nc.mlp_forward(params, x, self.arch, prefix=f"{prefix}mlp.")
        return nc.reshape(y, (-1,)) if squeeze else y


class MLPCritic:
    def __init__(self, in_dim: int, hidden: int = 64, layers: int = 2):
        self.arch = MLPArch((in_dim,) + (hidden,) * layers + (1,))

    @property
    def in_dim(self) -> int:
        return self.arch.widths[0]

    def init(self, rng: np.random.Generator) -> NetworkParams:
        return nc.init_mlp(rng, "mlp.", self.arch, output_gain=1.0)

    def forward(self, params, obs, priv=None, prefix: str = "") -> Tensor:
        x, squeeze = _batched(_with_priv(obs, priv))
        if x.shape[-1] != self.in_dim:
            raise ValueError(f"length mismatch: input has {x.shape[-1]} entries, network expects {self.in_dim}")
        v = nc.mlp_forward(params, x, self.arch, prefix=f"{prefix}mlp.")
        v = nc.reshape(v, v.shape[:-1])
        return nc.reshape(v, ()) if squeeze else v


def actor_forward(net, params, obs) -> np.ndarray:
    return net.forward(params, obs).data


def critic_forward(net, params, obs, priv=None):
    v = net.forward(params, obs, priv).data
    return float(v) if v.ndim == 0 else v


def build_quad_nets(graph: MorphologyGraph, H: int, arch: str, hidden: int = 64, layers: int = 2):
    """(actor, critic) for the quadruped task; ``arch`` is one of ms, mi, mlp."""
    if arch == "ms":
        return (
            GraphActor(quad_layout(graph, H, symmetric=True), hidden, layers),
            GraphCritic(quad_layout(graph, H, privileged=True, symmetric=True), hidden, layers, "invariant"),
        )
    if arch == "mi":
        return (
            GraphActor(quad_layout(graph, H, symmetric=False), hidden, layers),
            GraphCritic(quad_layout(graph, H, privileged=True, symmetric=False), hidden, layers, "mean"),
        )
    if arch == "mlp":
        d = H * obs_layout.OBS_DIM
        return MLPActor(d, obs_layout.N_JOINTS, hidden, layers), MLPCritic(d + obs_layout.PRIV_DIM, hidden, layers)
    raise ValueError(f"unknown arch {arch!r}; expected one of {ARCHS}")


def build_pair_nets(arch: str, obs_dim: int = 3, hidden: int = 32, layers: int = 2):
    if arch == "ms":
        return GraphActor(pair_layout(obs_dim, True), hidden, layers), GraphCritic(pair_layout(obs_dim, True), hidden, layers)
    if arch == "mi":
        return (
            GraphActor(pair_layout(obs_dim, False), hidden, layers),
            GraphCritic(pair_layout(obs_dim, False), hidden, layers, "mean"),
        )
    if arch == "mlp":
        return MLPActor(obs_dim, 2, hidden, layers), MLPCritic(obs_dim, hidden, layers)
    raise ValueError(f"unknown arch {arch!r}; expected one of {ARCHS}")
