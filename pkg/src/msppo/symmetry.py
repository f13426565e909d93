"""The reflection group C2 = {e, g_s} and its actions on observation/action vectors."""
from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from . import layout

# sign of (g, c) components under the sagittal reflection: g_y, c_y and c_yaw flip
BASE_MASK_SAGITTAL = np.array([1.0, -1.0, 1.0, 1.0, -1.0, -1.0])
# encoder mask for a right-side hip node: q, qd, a_prev, a_prev2 flip; phase does not
JOINT_MASK_SAGITTAL = np.array([-1.0, -1.0, -1.0, -1.0, 1.0])


class GroupElement(enum.IntEnum):
    IDENTITY = 0
    SAGITTAL = 1

    @property
    def inverse(self) -> "GroupElement":
        return self


E = GroupElement.IDENTITY
GS = GroupElement.SAGITTAL
C2 = (E, GS)


def compose(a: GroupElement, b: GroupElement) -> GroupElement:
    return GroupElement(int(a) ^ int(b))


@dataclass(frozen=True, eq=False)
class SpaceAction:
    """``x -> sign_mask * x[..., permutation]``, applied to the last axis."""

    permutation: np.ndarray
    sign_mask: np.ndarray

    def __post_init__(self):
        perm = np.asarray(self.permutation, dtype=np.intp)
        sign = np.asarray(self.sign_mask, dtype=np.float64)
        if perm.shape != sign.shape or perm.ndim != 1:
            raise ValueError("permutation and sign_mask must be 1-D of equal length")
        if not np.array_equal(np.sort(perm), np.arange(perm.size)):
            raise ValueError("permutation is not a bijection")
        if not np.all(np.abs(sign) == 1.0):
            raise ValueError("sign_mask entries must be +1 or -1")
        perm.setflags(write=False)
        sign.setflags(write=False)
        object.__setattr__(self, "permutation", perm)
        object.__setattr__(self, "sign_mask", sign)

    @property
    def dim(self) -> int:
        return self.permutation.size

    @classmethod
    def identity(cls, dim: int) -> "SpaceAction":
        return cls(np.arange(dim), np.ones(dim))

    def is_identity(self) -> bool:
        return bool(np.array_equal(self.permutation, np.arange(self.dim)) and np.all(self.sign_mask == 1.0))

    def __call__(self, x) -> np.ndarray:
        return act(self, x)

    def then(self, other: "SpaceAction") -> "SpaceAction":
        """The action ``x -> other(self(x))``."""
        if other.dim != self.dim:
            raise ValueError(f"cannot compose actions on spaces of dimension {self.dim} and {other.dim}")
        perm = self.permutation[other.permutation]
        sign = other.sign_mask * self.sign_mask[other.permutation]
        return SpaceAction(perm, sign)

    def matrix(self) -> np.ndarray:
        m = np.zeros((self.dim, self.dim))
        m[np.arange(self.dim), self.permutation] = self.sign_mask
        return m

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, SpaceAction)
            and np.array_equal(self.permutation, other.permutation)
            and np.array_equal(self.sign_mask, other.sign_mask)
        )

    def __hash__(self) -> int:
        return hash((self.permutation.tobytes(), self.sign_mask.tobytes()))


def act(action: SpaceAction, x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != action.dim:
        raise ValueError(f"dimension mismatch: vector has length {x.shape[-1]}, action acts on length {action.dim}")
    return action.sign_mask * x[..., action.permutation]


def _joint_action(g: GroupElement, morphology) -> tuple[np.ndarray, np.ndarray]:
    if g is E:
        return np.arange(layout.N_JOINTS), np.ones(layout.N_JOINTS)
    return morphology.joint_permutation(), morphology.joint_signs()


def build_action_space(g: GroupElement, morphology) -> SpaceAction:
    """Action of ``g`` on the 12-dim joint-target vector."""
    perm, sign = _joint_action(g, morphology)
    return SpaceAction(perm, sign)


def build_observation_action(g: GroupElement, morphology, H: int, privileged: bool = False) -> SpaceAction:
    """Action of ``g`` on a flattened H-step observation (plus ``[c_f, c_r]`` if privileged)."""
    if H < 1:
        raise ValueError("history length must be at least 1")
    jperm, jsign = _joint_action(g, morphology)
    if g is E:
        lperm = np.arange(layout.N_LEGS)
        base = np.ones(6)
    else:
        lperm = morphology.leg_permutation()
        base = BASE_MASK_SAGITTAL
    perm = np.arange(layout.OBS_DIM)
    sign = np.ones(layout.OBS_DIM)
    sign[layout.BASE_FEATURES] = base
    for block in layout.JOINT_BLOCKS:
        perm[block] = block.start + jperm
        sign[block] = jsign
    perm[layout.PHASE] = layout.PHASE.start + lperm
    perms = [perm + k * layout.OBS_DIM for k in range(H)]
    signs = [sign] * H
    if privileged:
        perms.append(np.arange(2) + H * layout.OBS_DIM)
        signs.append(np.ones(2))
    return SpaceAction(np.concatenate(perms), np.concatenate(signs))
