"""Kinematic description of a 4-legged robot and the graph built from it.

Morphology files are INI-style (``configparser``) with these sections::

    [robot]
    name = go2

    [leg FL]                      # one section per leg, file order = joint order
    side = left                   # left | right
    position = front              # front | rear
    joints = FL_hip, FL_thigh, FL_calf   # hip, thigh, calf in that order

    [joint FL_hip]                # one section per joint (12 total)
    lower = -1.0472               # radians
    upper = 1.0472

    [mirror_pairs]
    front = FL, FR                # any key; value is a left/right leg pair
    rear = RL, RR

Unknown sections or keys are rejected.
"""
from __future__ import annotations

import configparser
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

from . import layout
from .symmetry import BASE_MASK_SAGITTAL, E, GS, JOINT_MASK_SAGITTAL, GroupElement


class MorphologyError(ValueError):
    pass


@dataclass(frozen=True)
class LegSpec:
    name: str
    side: str
    position: str
    joints: tuple[str, str, str]


@dataclass(frozen=True)
class MorphologySpec:
    name: str
    legs: tuple[LegSpec, ...]
    mirror_pairs: tuple[tuple[str, str], ...]
    joint_limits: dict[str, tuple[float, float]]

    def __post_init__(self):
        _validate(self)

    @property
    def joint_names(self) -> list[str]:
        return [j for leg in self.legs for j in leg.joints]

    def leg_index(self, name: str) -> int:
        return [leg.name for leg in self.legs].index(name)

    def leg_permutation(self) -> np.ndarray:
        perm = np.arange(len(self.legs))
        for a, b in self.mirror_pairs:
            i, j = self.leg_index(a), self.leg_index(b)
            perm[i], perm[j] = j, i
        return perm

    def joint_permutation(self) -> np.ndarray:
        lp = self.leg_permutation()
        k = layout.JOINTS_PER_LEG
        return np.array([lp[j // k] * k + j % k for j in range(layout.N_JOINTS)])

    def joint_signs(self) -> np.ndarray:
        """Sign of each joint coordinate under the sagittal reflection (hips flip)."""
        return np.array([-1.0 if kind == "hip" else 1.0 for _ in self.legs for kind in layout.JOINT_KINDS])

    def joint_bounds(self) -> tuple[np.ndarray, np.ndarray]:
        lo = np.array([self.joint_limits[j][0] for j in self.joint_names])
        hi = np.array([self.joint_limits[j][1] for j in self.joint_names])
        return lo, hi

    def swapped_sides(self) -> "MorphologySpec":
        flip = {"left": "right", "right": "left"}
        legs = tuple(LegSpec(l.name, flip[l.side], l.position, l.joints) for l in self.legs)
        pairs = tuple((b, a) for a, b in self.mirror_pairs)
        return MorphologySpec(self.name, legs, pairs, dict(self.joint_limits))


def _validate(spec: MorphologySpec) -> None:
    if len(spec.legs) != layout.N_LEGS:
        raise MorphologyError(f"legs: expected {layout.N_LEGS} legs, got {len(spec.legs)}")
    names = [leg.name for leg in spec.legs]
    if len(set(names)) != len(names):
        raise MorphologyError(f"legs: duplicate leg names {names}")
    for leg in spec.legs:
        if leg.side not in ("left", "right"):
            raise MorphologyError(f"leg {leg.name}.side: must be left or right, got {leg.side!r}")
        if leg.position not in ("front", "rear"):
            raise MorphologyError(f"leg {leg.name}.position: must be front or rear, got {leg.position!r}")
        if len(leg.joints) != layout.JOINTS_PER_LEG:
            raise MorphologyError(f"leg {leg.name}.joints: expected 3 joints (hip, thigh, calf), got {len(leg.joints)}")
    joints = spec.joint_names
    if len(set(joints)) != layout.N_JOINTS:
        raise MorphologyError(f"joints: expected {layout.N_JOINTS} distinct joints, got {len(set(joints))}")
    for j in joints:
        if j not in spec.joint_limits:
            raise MorphologyError(f"joint {j}: missing limits section")
        lo, hi = spec.joint_limits[j]
        if not lo < hi:
            raise MorphologyError(f"joint {j}: lower ({lo}) must be below upper ({hi})")
    extra = set(spec.joint_limits) - set(joints)
    if extra:
        raise MorphologyError(f"joint {sorted(extra)[0]}: not attached to any leg")

    by_name = {leg.name: leg for leg in spec.legs}
    seen: list[str] = []
    for a, b in spec.mirror_pairs:
        for n in (a, b):
            if n not in by_name:
                raise MorphologyError(f"mirror_pairs: unknown leg {n!r}")
        la, lb = by_name[a], by_name[b]
        if {la.side, lb.side} != {"left", "right"}:
            raise MorphologyError(f"mirror_pairs: ({a}, {b}) does not pair a left leg with a right leg")
        if la.position != lb.position:
            raise MorphologyError(f"mirror_pairs: ({a}, {b}) pairs a {la.position} leg with a {lb.position} leg")
        seen += [a, b]
    if sorted(seen) != sorted(names):
        raise MorphologyError("mirror_pairs: must pair every leg exactly once")


_LEG_KEYS = {"side", "position", "joints"}
_JOINT_KEYS = {"lower", "upper"}


def parse_morphology(text: str, source: str = "<string>") -> MorphologySpec:
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    cp.optionxform = str
    try:
        cp.read_string(text, source=source)
    except configparser.Error as exc:
        raise MorphologyError(f"{source}: parse error: {exc}") from exc

    name = None
    legs: list[LegSpec] = []
    limits: dict[str, tuple[float, float]] = {}
    pairs: list[tuple[str, str]] = []
    for section in cp.sections():
        items = dict(cp.items(section))
        kind, _, label = section.partition(" ")
        label = label.strip()
        if section == "robot":
            _check_keys(section, items, {"name"})
            name = items.get("name")
        elif kind == "leg" and label:
            _check_keys(section, items, _LEG_KEYS, required=True)
            joints = tuple(s.strip() for s in items["joints"].split(","))
            legs.append(LegSpec(label, items["side"].strip(), items["position"].strip(), joints))
        elif kind == "joint" and label:
            _check_keys(section, items, _JOINT_KEYS, required=True)
            try:
                limits[label] = (float(items["lower"]), float(items["upper"]))
            except ValueError as exc:
                raise MorphologyError(f"joint {label}: limits must be numbers ({exc})") from exc
        elif section == "mirror_pairs":
            for key, value in items.items():
                parts = [s.strip() for s in value.split(",")]
                if len(parts) != 2:
                    raise MorphologyError(f"mirror_pairs.{key}: expected two leg names, got {value!r}")
                pairs.append((parts[0], parts[1]))
        else:
            raise MorphologyError(f"unknown section [{section}]")
    if not name:
        raise MorphologyError("robot.name: missing")
    return MorphologySpec(name, tuple(legs), tuple(pairs), limits)


def _check_keys(section: str, items: dict, allowed: set[str], required: bool = False) -> None:
    unknown = set(items) - allowed
    if unknown:
        raise MorphologyError(f"[{section}]: unknown key {sorted(unknown)[0]!r}")
    if required:
        missing = allowed - set(items)
        if missing:
            raise MorphologyError(f"[{section}]: missing key {sorted(missing)[0]!r}")


def load_morphology(path) -> MorphologySpec:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise MorphologyError(f"cannot read morphology file {path}: {exc.strerror}") from exc
    return parse_morphology(text, source=str(path))


def bundled_path(name: str = "go2") -> Path:
    return Path(str(resources.files("msppo") / "data" / f"{name}.morph"))


def go2() -> MorphologySpec:
    return load_morphology(bundled_path("go2"))


# ---------------------------------------------------------------- graph


@dataclass(frozen=True)
class Node:
    name: str
    kind: str  # base | hip | thigh | calf
    side: str
    leg: int | None
    joint: int | None
    encoder: GroupElement


@dataclass(frozen=True, eq=False)
class MorphologyGraph:
    spec: MorphologySpec
    nodes: tuple[Node, ...]
    edges: np.ndarray  # (E, 2) undirected

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    def leg_permutation(self) -> np.ndarray:
        return self.spec.leg_permutation()

    def joint_permutation(self) -> np.ndarray:
        return self.spec.joint_permutation()

    def joint_signs(self) -> np.ndarray:
        return self.spec.joint_signs()

    def node_permutation(self) -> np.ndarray:
        """Mirror map on node indices (base_L <-> base_R, joints by mirror pairs)."""
        jp = self.spec.joint_permutation()
        perm = np.empty(self.n_nodes, dtype=np.intp)
        for i, node in enumerate(self.nodes):
            if node.kind == "base":
                perm[i] = 1 - i
            else:
                perm[i] = 2 + jp[node.joint]
        return perm

    def edge_set(self) -> set[frozenset]:
        return {frozenset(map(int, e)) for e in self.edges}

    def is_connected(self) -> bool:
        adj = {i: set() for i in range(self.n_nodes)}
        for a, b in self.edges:
            adj[int(a)].add(int(b))
            adj[int(b)].add(int(a))
        seen, stack = {0}, [0]
        while stack:
            for nb in adj[stack.pop()] - seen:
                seen.add(nb)
                stack.append(nb)
        return len(seen) == self.n_nodes

    def node_feature_dims(self, H: int, privileged: bool = False) -> list[int]:
        extra = layout.PRIV_DIM if privileged else 0
        return [(6 * H if n.kind == "base" else 5 * H) + extra for n in self.nodes]

    def feature_index(self, node: int, H: int, privileged: bool = False) -> np.ndarray:
        """Indices into the flattened observation (priv appended last) gathered by ``node``."""
        n = self.nodes[node]
        if n.kind == "base":
            step = np.arange(layout.BASE_FEATURES.start, layout.BASE_FEATURES.stop)
        else:
            j = n.joint
            step = np.array([b.start + j for b in layout.JOINT_BLOCKS] + [layout.PHASE.start + n.leg])
        idx = [step + k * layout.OBS_DIM for k in range(H)]
        if privileged:
            idx.append(H * layout.OBS_DIM + np.arange(layout.PRIV_DIM))
        return np.concatenate(idx)

    def encoder_mask(self, node: int, H: int, privileged: bool = False) -> np.ndarray:
        """Element-wise sign mask applied by the node's encoder element."""
        n = self.nodes[node]
        if n.encoder is E:
            mask = np.ones(6 if n.kind == "base" else 5)
        else:
            mask = BASE_MASK_SAGITTAL if n.kind == "base" else JOINT_MASK_SAGITTAL
        parts = [np.tile(mask, H)]
        if privileged:
            parts.append(np.ones(layout.PRIV_DIM))
        return np.concatenate(parts)


def build_graph(spec: MorphologySpec) -> MorphologyGraph:
    nodes = [
        Node("base_left", "base", "left", None, None, E),
        Node("base_right", "base", "right", None, None, GS),
    ]
    edges = [(0, 1)]
    for li, leg in enumerate(spec.legs):
        for ki, (kind, jname) in enumerate(zip(layout.JOINT_KINDS, leg.joints)):
            idx = len(nodes)
            enc = GS if (kind == "hip" and leg.side == "right") else E
            nodes.append(Node(jname, kind, leg.side, li, li * layout.JOINTS_PER_LEG + ki, enc))
            if kind == "hip":
                edges.append((0 if leg.side == "left" else 1, idx))
            else:
                edges.append((idx - 1, idx))
    return MorphologyGraph(spec, tuple(nodes), np.array(edges, dtype=np.intp))


def assemble_node_features(
    graph: MorphologyGraph, obs_history, H: int | None = None, priv=None
) -> list[np.ndarray]:
    """Raw per-node feature vectors from an H-step history (before encoder masks).

    ``obs_history`` is a sequence of 58-dim frames (oldest first) or an already
    flattened vector of length 58*H.
    """
    frames = np.asarray(obs_history, dtype=np.float64)
    if frames.ndim == 2:
        if frames.shape[1] != layout.OBS_DIM:
            raise ValueError(f"each frame must have {layout.OBS_DIM} entries, got {frames.shape[1]}")
        flat = frames.reshape(-1)
    else:
        flat = frames
    if flat.size % layout.OBS_DIM:
        raise ValueError(f"history length mismatch: {flat.size} values is not a multiple of {layout.OBS_DIM}")
    if H is not None and flat.size != H * layout.OBS_DIM:
        raise ValueError(f"history length mismatch: expected {H} steps, got {flat.size // layout.OBS_DIM}")
    H = flat.size // layout.OBS_DIM
    privileged = priv is not None
    if privileged:
        flat = np.concatenate([flat, np.asarray(priv, dtype=np.float64)])
    return [flat[graph.feature_index(i, H, privileged)] for i in range(graph.n_nodes)]
