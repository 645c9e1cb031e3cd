"""Cycle-level simulator and resource model for Strassen multisystolic arrays."""

from .fxp import (
    ConfigurationError,
    DatapathOverflowError,
    FxpScalar,
    Matrix,
    fxp_add,
    fxp_mul,
    fxp_sub,
    matrix_from_rows,
    random_matrix,
)
from .mxu import CycleReport, Mxu, MxuConfig, MxuError, build_mxu, mxu_run_tile
from .reference import matmul_blocked, matmul_naive, matmul_strassen

__version__ = "0.1.0"
