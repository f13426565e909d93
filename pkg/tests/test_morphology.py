import re

import numpy as np
import pytest

from msppo import layout
from msppo.morphology import (
    MorphologyError,
    assemble_node_features,
    build_graph,
    bundled_path,
    load_morphology,
    parse_morphology,
)
from msppo.symmetry import BASE_MASK_SAGITTAL, E, GS, JOINT_MASK_SAGITTAL, build_observation_action

GO2_TEXT = bundled_path("go2").read_text()


def _drop_leg(text: str, leg: str) -> str:
    text = re.sub(rf"\[leg {leg}\]\n(?:[^\[]*\n)", "", text)
    for j in ("hip", "thigh", "calf"):
        text = re.sub(rf"\[joint {leg}_{j}\]\n(?:[^\[]*\n)", "", text)
    return text


def test_bundled_go2(spec):
    assert spec.name == "go2"
    assert len(spec.legs) == 4
    assert len(spec.joint_names) == 12
    lo, hi = spec.joint_bounds()
    assert np.all(lo < hi)


def test_three_legs_rejected():
    text = _drop_leg(GO2_TEXT, "RR").replace("rear = RL, RR", "")
    with pytest.raises(MorphologyError, match="4 legs"):
        parse_morphology(text)


def test_front_rear_pair_rejected():
    text = GO2_TEXT.replace("front = FL, FR", "front = FL, RR").replace("rear = RL, RR", "rear = RL, FR")
    with pytest.raises(MorphologyError, match="mirror_pairs"):
        parse_morphology(text)


def test_same_side_pair_rejected():
    text = GO2_TEXT.replace("front = FL, FR", "front = FL, RL").replace("rear = RL, RR", "rear = FR, RR")
    with pytest.raises(MorphologyError, match="left leg with a right leg"):
        parse_morphology(text)


def test_inverted_limits_rejected():
    text = GO2_TEXT.replace("[joint FL_hip]\nlower = -1.0472\nupper = 1.0472", "[joint FL_hip]\nlower = 1.0\nupper = -1.0")
    with pytest.raises(MorphologyError, match="FL_hip"):
        parse_morphology(text)


def test_unknown_key_rejected():
    text = GO2_TEXT.replace("[robot]\nname = go2", "[robot]\nname = go2\ncolour = grey")
    with pytest.raises(MorphologyError, match="colour"):
        parse_morphology(text)


def test_missing_file_names_path(tmp_path):
    missing = tmp_path / "nowhere.morph"
    with pytest.raises(MorphologyError, match="nowhere.morph"):
        load_morphology(missing)


def test_graph_shape(graph):
    assert graph.n_nodes == 14
    kinds = [n.kind for n in graph.nodes]
    assert kinds.count("base") == 2 and kinds.count("hip") == 4
    # base-base, 4 base-hip, 4 hip-thigh, 4 thigh-calf
    assert len(graph.edges) == 13
    assert len(graph.edge_set()) == 13
    assert graph.is_connected()


def test_graph_topology(graph):
    names = [n.name for n in graph.nodes]
    idx = {n: i for i, n in enumerate(names)}
    expected = {frozenset((idx["base_left"], idx["base_right"]))}
    for leg, side in (("FL", "left"), ("FR", "right"), ("RL", "left"), ("RR", "right")):
        expected.add(frozenset((idx[f"base_{side}"], idx[f"{leg}_hip"])))
        expected.add(frozenset((idx[f"{leg}_hip"], idx[f"{leg}_thigh"])))
        expected.add(frozenset((idx[f"{leg}_thigh"], idx[f"{leg}_calf"])))
    assert graph.edge_set() == expected


def test_mirror_permutation_is_automorphism(graph):
    P = graph.node_permutation()
    assert np.array_equal(P[P], np.arange(graph.n_nodes))
    mapped = {frozenset((int(P[a]), int(P[b]))) for a, b in graph.edges}
    assert mapped == graph.edge_set()


def test_encoder_elements(graph):
    for n in graph.nodes:
        right_base_or_hip = n.side == "right" and n.kind in ("base", "hip")
        assert n.encoder is (GS if right_base_or_hip else E)


def test_swapped_sides_gives_isomorphic_graph(spec, graph):
    g2 = build_graph(spec.swapped_sides())
    # legs change side, so the two base nodes trade neighbours
    swap = {0: 1, 1: 0}
    relabelled = {frozenset(swap.get(i, i) for i in e) for e in g2.edge_set()}
    assert relabelled == graph.edge_set()
    for a, b in zip(graph.nodes, g2.nodes):
        if a.kind == "hip":
            assert {a.encoder, b.encoder} == {E, GS}
        elif a.kind != "base":
            assert a.encoder is b.encoder is E


def test_node_feature_dims(graph):
    dims = graph.node_feature_dims(5)
    assert dims[:2] == [30, 30] and set(dims[2:]) == {25}
    dims = graph.node_feature_dims(2, privileged=True)
    assert dims[:2] == [14, 14] and set(dims[2:]) == {12}


def test_assemble_zero_observation(graph):
    feats = assemble_node_features(graph, np.zeros((1, layout.OBS_DIM)))
    assert all(np.array_equal(f, np.zeros_like(f)) for f in feats)


def test_assemble_lengths_and_content(graph, rng):
    frames = rng.standard_normal((2, layout.OBS_DIM))
    feats = assemble_node_features(graph, frames, H=2)
    assert feats[0].size == 12
    assert np.array_equal(feats[0], feats[1])
    assert np.array_equal(feats[0][:6], frames[0, :6])
    frames5 = rng.standard_normal((5, layout.OBS_DIM))
    feats5 = assemble_node_features(graph, frames5)
    assert feats5[2].size == 25
    # FL_hip node: q, qd, a1, a2 of joint 0 and the FL phase, per step
    q, qd, a1, a2 = (frames5[0, b.start] for b in layout.JOINT_BLOCKS)
    assert np.array_equal(feats5[2][:5], [q, qd, a1, a2, frames5[0, layout.PHASE.start]])


def test_assemble_history_mismatch(graph):
    with pytest.raises(ValueError, match="history length mismatch"):
        assemble_node_features(graph, np.zeros((3, layout.OBS_DIM)), H=2)


def test_assembly_commutes_with_mirror(spec, graph, rng):
    # node i of the mirrored observation holds node P[i]'s raw features under the sagittal mask
    H = 3
    G = build_observation_action(GS, spec, H)
    P = graph.node_permutation()
    o = rng.standard_normal(H * layout.OBS_DIM)
    raw = assemble_node_features(graph, o)
    mirrored = assemble_node_features(graph, G(o))
    masks = {"base": BASE_MASK_SAGITTAL, "hip": JOINT_MASK_SAGITTAL, "thigh": np.ones(5), "calf": np.ones(5)}
    for i, node in enumerate(graph.nodes):
        expected = np.tile(masks[node.kind], H) * raw[int(P[i])]
        assert np.array_equal(mirrored[i], expected), node.name
