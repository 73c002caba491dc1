"""Kernel Audio Distance (KAD) and Frechet Audio Distance (FAD) on embedding sets."""

__version__ = "0.1.0"

from .errors import (DegenerateBandwidthError, InputError, KadError, NumericalError,
                     ResourceError)
from .embedmat import (DistanceBlockPlan, EmbeddingSet, GaussianStats, covariance,
                       mean_vector, pairwise_sq_dists, set_num_threads, sym_eigendecompose,
                       trace_sqrt_product)
from .kernel import KernelSpec, bandwidth_scale_grid, median_bandwidth, rbf_kernel_matrix
from .metric import (ScoreRecord, fad_bias_estimate, fad_inf_extrapolate, fad_score,
                     kad_score, mmd2_unbiased)

__all__ = [
    "__version__",
    "KadError", "InputError", "DegenerateBandwidthError", "NumericalError", "ResourceError",
    "EmbeddingSet", "GaussianStats", "DistanceBlockPlan", "set_num_threads",
    "pairwise_sq_dists", "mean_vector", "covariance", "sym_eigendecompose",
    "trace_sqrt_product",
    "KernelSpec", "rbf_kernel_matrix", "median_bandwidth", "bandwidth_scale_grid",
    "ScoreRecord", "mmd2_unbiased", "kad_score", "fad_score", "fad_bias_estimate",
    "fad_inf_extrapolate",
]
