"""Per-step observation layout of the quadruped tasks.

One step is ``[g(3), c(3), q(12), qd(12), a_prev(12), a_prev2(12), psi(4)]``;
a history of H steps is stored oldest first.
"""
N_LEGS = 4
JOINTS_PER_LEG = 3
N_JOINTS = N_LEGS * JOINTS_PER_LEG
OBS_DIM = 58
PRIV_DIM = 2

GRAVITY = slice(0, 3)
COMMAND = slice(3, 6)
JOINT_POS = slice(6, 18)
JOINT_VEL = slice(18, 30)
PREV_ACTION = slice(30, 42)
PREV_ACTION2 = slice(42, 54)
PHASE = slice(54, 58)

BASE_FEATURES = slice(0, 6)
JOINT_BLOCKS = (JOINT_POS, JOINT_VEL, PREV_ACTION, PREV_ACTION2)

JOINT_KINDS = ("hip", "thigh", "calf")
