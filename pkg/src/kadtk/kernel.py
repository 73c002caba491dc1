"""Gaussian RBF kernel and bandwidth selection."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .embedmat import (DistanceBlockPlan, as_matrix, map_distance_blocks)
from .errors import DegenerateBandwidthError, InputError

__all__ = [
    "KernelSpec",
    "rbf_kernel_matrix",
    "median_bandwidth",
    "bandwidth_scale_grid",
    "MAX_MEDIAN_N",
]

FAMILIES = ("gaussian_rbf",)

# Exact median needs all N(N-1)/2 distances in memory (8 bytes each).
MAX_MEDIAN_N = 16384


@dataclass(frozen=True)
class KernelSpec:
    """Kernel family with bandwidth ``sigma`` and a multiplier ``scale``.

    The kernel actually evaluated uses ``sigma * scale``.
    """

    sigma: float
    scale: float = 1.0
    family: str = "gaussian_rbf"

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise InputError(f"unknown kernel family {self.family!r}")
        for name in ("sigma", "scale"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise InputError(f"kernel {name} must be a positive finite number, got {v}")
        object.__setattr__(self, "sigma", float(self.sigma))
        object.__setattr__(self, "scale", float(self.scale))

    @property
    def bandwidth(self) -> float:
        return self.sigma * self.scale


def rbf_values(sq_dists: np.ndarray, bandwidth: float) -> np.ndarray:
    """exp(-D / (2 * bandwidth^2)) elementwise, no validation."""
    return np.exp(-sq_dists / (2.0 * bandwidth * bandwidth))


def rbf_kernel_matrix(sq_dists, spec: KernelSpec) -> np.ndarray:
    """Kernel matrix from squared distances: ``exp(-D / (2 (sigma*scale)^2))``."""
    d = np.asarray(sq_dists, dtype=np.float64)
    if np.any(d < 0):
        raise InputError("squared distances must be non-negative")
    if not np.all(np.isfinite(d)):
        raise InputError("squared distances contain non-finite values")
    return rbf_values(d, spec.bandwidth)


def _condensed(d: np.ndarray, diag: bool) -> np.ndarray:
    if diag:
        return d[np.triu_indices(d.shape[0], 1)]
    return d.ravel()


def median_bandwidth(reference, plan: DistanceBlockPlan | None = None,
                     threads: int | None = None, blocks=None) -> float:
    """Median pairwise Euclidean distance within ``reference``.

    Uses all N(N-1)/2 distinct pairs; an even count averages the two middle
    distances. ``blocks`` may carry a precomputed ``self_distance_blocks``
    result for the same set.

    Raises
    ------
    InputError
        Fewer than two rows, or more than ``MAX_MEDIAN_N`` rows.
    DegenerateBandwidthError
        The median distance is zero (most points coincide).
    """
    n = as_matrix(reference).shape[0]
    if n < 2:
        raise InputError(f"median bandwidth needs at least 2 reference samples, got {n}")
    if n > MAX_MEDIAN_N:
        raise InputError(
            f"reference has {n} rows; the exact median is limited to {MAX_MEDIAN_N}. "
            "Subsample the reference explicitly or pass sigma directly.")
    if blocks is None:
        segments = map_distance_blocks(reference, reference, _condensed, plan, threads,
                                       symmetric=True)
    else:
        segments = [_condensed(d, diag) for d, diag in blocks]
    total = n * (n - 1) // 2
    flat = np.empty(total, dtype=np.float64)
    pos = 0
    for seg in segments:
        flat[pos:pos + seg.size] = seg
        pos += seg.size
    assert pos == total
    lo, hi = (total - 1) // 2, total // 2
    part = np.partition(flat, (lo, hi))
    med = (math.sqrt(part[lo]) + math.sqrt(part[hi])) / 2.0
    if med <= 0.0:
        raise DegenerateBandwidthError(
            "median pairwise distance of the reference is 0 (points coincide); "
            "supply the bandwidth sigma explicitly")
    return med


def bandwidth_scale_grid(min_exp: int = -3, max_exp: int = 3) -> list[float]:
    """Powers of ten ``10**k`` for ``min_exp <= k <= max_exp``."""
    if min_exp > max_exp:
        raise InputError(f"min_exp {min_exp} exceeds max_exp {max_exp}")
    return [10.0 ** k for k in range(int(min_exp), int(max_exp) + 1)]
