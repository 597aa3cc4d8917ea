"""Linear algebra, autodiff, layers and random streams."""

from .autodiff import NonFiniteGradientError, Param, Tensor, backward, grad_check, stop_gradient
from .linalg import (
    ConvergenceError,
    RankDeficiencyWarning,
    SvdResult,
    lstsq_min_norm,
    matrix_rank_estimate,
    orthogonal_init,
    pinv,
    pinv_solve,
    svd,
)
from .rng import Rng, as_generator, as_rng

__all__ = [
    "ConvergenceError", "NonFiniteGradientError", "Param", "RankDeficiencyWarning", "Rng",
    "SvdResult", "Tensor", "as_generator", "as_rng", "backward", "grad_check", "lstsq_min_norm",
    "matrix_rank_estimate", "orthogonal_init", "pinv", "pinv_solve", "stop_gradient", "svd",
]
