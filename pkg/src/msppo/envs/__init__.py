from .metrics import MetricAccumulator, cot, mae_x, mae_yaw, normalized_error, rmse
from .oracle import ConvergenceError, Grid, OracleResult, value_iteration
from .sympair import SymPairEnv, SymPairParams
from .toyquad import QuadModel, QuadState, ToyQuadEnv, ToyQuadParams, sample_command

__all__ = [
    "MetricAccumulator",
    "cot",
    "mae_x",
    "mae_yaw",
    "normalized_error",
    "rmse",
    "ConvergenceError",
    "Grid",
    "OracleResult",
    "value_iteration",
    "SymPairEnv",
    "SymPairParams",
    "QuadModel",
    "QuadState",
    "ToyQuadEnv",
    "ToyQuadParams",
    "sample_command",
]
