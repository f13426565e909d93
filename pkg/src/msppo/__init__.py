"""Morphology-symmetric PPO: C2-equivariant graph policies for legged locomotion."""
from .morphology import MorphologySpec, build_graph, go2, load_morphology
from .nets import build_pair_nets, build_quad_nets
from .policy import GaussianPolicy
from .ppo import ActorCritic, TrainerConfig, train
from .symmetry import C2, E, GS, GroupElement, SpaceAction, build_action_space, build_observation_action

__version__ = "0.1.0"

__all__ = [
    "ActorCritic",
    "C2",
    "E",
    "GS",
    "GaussianPolicy",
    "GroupElement",
    "MorphologySpec",
    "SpaceAction",
    "TrainerConfig",
    "build_action_space",
    "build_graph",
    "build_observation_action",
    "build_pair_nets",
    "build_quad_nets",
    "go2",
    "load_morphology",
    "train",
]
