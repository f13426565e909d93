"""Walk through the mirror symmetry on the go2 description.

Builds the graph, reflects an observation, and shows that the symmetric actor
and critic respect the reflection while the MI baseline does not.

    python demos/mirror_walkthrough.py
"""
import numpy as np

from msppo.morphology import build_graph, go2
from msppo.nets import build_quad_nets
from msppo.symmetry import GS, build_action_space, build_observation_action

H = 2

spec = go2()
graph = build_graph(spec)
print(f"{graph.n_nodes} nodes, {len(graph.edges)} edges")
P = graph.node_permutation()
for i, node in enumerate(graph.nodes):
    print(f"  {node.name:<11} <-> {graph.nodes[P[i]].name:<11} encoder {node.encoder.name}")

G = build_observation_action(GS, spec, H)
B = build_action_space(GS, spec)
rng = np.random.default_rng(0)
obs = rng.standard_normal(G.dim)
priv = np.array([0.7, 0.2])

for arch in ("ms", "mi"):
    actor, critic = build_quad_nets(graph, H, arch, hidden=32)
    pa = actor.init(rng).randomized(rng, 0.5)
    pc = critic.init(rng).randomized(rng, 0.5)
    eq = np.max(np.abs(B(actor.forward(pa, obs).data) - actor.forward(pa, G(obs)).data))
    inv = abs(float(critic.forward(pc, obs, priv).data) - float(critic.forward(pc, G(obs), priv).data))
    print(f"{arch}: actor equivariance gap {eq:.2e}, critic invariance gap {inv:.2e}")
