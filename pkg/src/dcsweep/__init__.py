"""Derivative compressive sampling: surface recovery from compressed gradient
measurements and brute-force tuning of its two hyperparameters."""

__version__ = "0.1.0"

from .errors import (
    ConfigurationError,
    ContractViolation,
    EmptyResultError,
    NumericalFailure,
    UndefinedMetricError,
)
from .grid import GradientField, GridDims, SurfaceGrid
from .operators import (
    LinearOp,
    assemble_system,
    haar_forward,
    haar_inverse,
    make_diff_ops,
    make_sensing,
)
from .sparse_solver import SolverParams, fista_solve, kkt_residual, soft_threshold
from .dcs import DcsParams, dcs_solve, recover_gradients
from .poisson import align_mean, integrate
from .noise import NoiseSpec, apply_noise, laplace_sample
from .metrics import Score, score, snr_db
