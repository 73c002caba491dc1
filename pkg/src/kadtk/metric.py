"""KAD, FAD and the supporting estimators.

KAD is ``alpha`` times the unbiased MMD^2 estimate under a Gaussian RBF
kernel. FAD is the squared Frechet distance between Gaussian fits.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from .embedmat import (DistanceBlockPlan, EmbeddingSet, GaussianStats, as_matrix,
                       covariance, map_distance_blocks, trace_sqrt_product)
from .errors import InputError
from .kernel import KernelSpec, median_bandwidth, rbf_values

__all__ = [
    "ScoreRecord",
    "DEFAULT_ALPHA",
    "self_kernel_mean",
    "cross_kernel_mean",
    "mmd2_from_terms",
    "mmd2_unbiased",
    "kad_score",
    "resolve_kernel",
    "fad_score",
    "fad_bias_estimate",
    "FadInfFit",
    "fad_inf_extrapolate",
]

DEFAULT_ALPHA = 100.0
METRICS = ("kad", "fad", "mmd2")


@dataclass(frozen=True)
class ScoreRecord:
    """One metric value plus every parameter needed to reproduce it."""

    metric: str
    value: float
    reference_label: str
    eval_label: str
    n_ref: int
    n_eval: int
    dim: int
    kernel: KernelSpec | None = None
    alpha: float | None = None
    wall_ms: float | None = None

    def __post_init__(self):
        if self.metric not in METRICS:
            raise InputError(f"unknown metric {self.metric!r}")
        if (self.kernel is not None) != (self.metric in ("kad", "mmd2")):
            raise InputError(f"kernel must be set exactly for kad/mmd2 records ({self.metric})")
        if (self.alpha is not None) != (self.metric == "kad"):
            raise InputError(f"alpha must be set exactly for kad records ({self.metric})")
        if self.alpha is not None and not self.alpha > 0:
            raise InputError(f"alpha must be positive, got {self.alpha}")
        if self.metric == "fad" and self.value < 0:
            raise InputError(f"FAD must be non-negative, got {self.value}")
        if self.wall_ms is not None and self.wall_ms < 0:
            raise InputError("wall_ms must be non-negative")


def _label(x) -> str:
    return getattr(x, "label", "") or ""


def _need_two(n: int, which: str):
    if n < 2:
        raise InputError(f"unbiased estimator undefined: {which} set has N={n} (need >= 2)")


def self_kernel_mean(x, bandwidth: float, plan: DistanceBlockPlan | None = None,
                     threads: int | None = None, blocks=None) -> float:
    """Mean of k(x_i, x_j) over ordered pairs i != j."""
    n = as_matrix(x).shape[0]
    _need_two(n, "one")

    def tile_sum(d, diag):
        k = rbf_values(d, bandwidth)
        if diag:
            return float(np.sum(np.triu(k, 1)))
        return float(np.sum(k))

    if blocks is None:
        partials = map_distance_blocks(x, x, tile_sum, plan, threads, symmetric=True)
    else:
        partials = [tile_sum(d, diag) for d, diag in blocks]
    return 2.0 * math.fsum(partials) / (n * (n - 1))


def _swap_needed(x: np.ndarray, y: np.ndarray) -> bool:
    kx, ky = (x.shape, x.dtype.str), (y.shape, y.dtype.str)
    if kx != ky:
        return ky < kx
    if x is y:
        return False
    hx = hashlib.blake2b(x.tobytes(), digest_size=16).digest()
    hy = hashlib.blake2b(y.tobytes(), digest_size=16).digest()
    return hy < hx


def cross_kernel_mean(x, y, bandwidth: float, plan: DistanceBlockPlan | None = None,
                      threads: int | None = None) -> float:
    """Mean of k(x_i, y_j) over all pairs.

    The two sets are put in a canonical order first so that swapping the
    arguments reproduces the same bits.
    """
    X, Y = as_matrix(x), as_matrix(y)
    if X.shape[1] != Y.shape[1]:
        raise InputError(f"dimension mismatch: {X.shape[1]} vs {Y.shape[1]}")
    if _swap_needed(X, Y):
        X, Y = Y, X
    partials = map_distance_blocks(X, Y, lambda d, diag: float(np.sum(rbf_values(d, bandwidth))),
                                   plan, threads)
    return math.fsum(partials) / (X.shape[0] * Y.shape[0])


def mmd2_from_terms(kxx: float, kyy: float, kxy: float) -> float:
    return (kxx + kyy) - 2.0 * kxy


def mmd2_unbiased(x, y, spec: KernelSpec, plan: DistanceBlockPlan | None = None,
                  threads: int | None = None, x_blocks=None) -> float:
    """Unbiased MMD^2 estimate between two sample sets.

    Diagonal self-similarities are excluded, so the value can be negative
    when the distributions match; it is returned unclamped.
    """
    X, Y = as_matrix(x), as_matrix(y)
    if X.shape[1] != Y.shape[1]:
        raise InputError(f"dimension mismatch: {X.shape[1]} vs {Y.shape[1]}")
    _need_two(X.shape[0], "first")
    _need_two(Y.shape[0], "second")
    bw = spec.bandwidth
    kxx = self_kernel_mean(X, bw, plan, threads, blocks=x_blocks)
    kyy = self_kernel_mean(Y, bw, plan, threads)
    kxy = cross_kernel_mean(X, Y, bw, plan, threads)
    return mmd2_from_terms(kxx, kyy, kxy)


def resolve_kernel(reference, kernel: KernelSpec | float | None = None,
                   plan: DistanceBlockPlan | None = None, threads: int | None = None,
                   blocks=None) -> KernelSpec:
    """Turn ``None`` (median heuristic), a number, or a KernelSpec into a KernelSpec."""
    if isinstance(kernel, KernelSpec):
        return kernel
    if kernel is None:
        return KernelSpec(sigma=median_bandwidth(reference, plan, threads, blocks=blocks))
    return KernelSpec(sigma=float(kernel))


def kad_score(x, y, spec: KernelSpec | float | None = None, alpha: float = DEFAULT_ALPHA,
              plan: DistanceBlockPlan | None = None, threads: int | None = None,
              x_blocks=None) -> ScoreRecord:
    """Kernel Audio Distance of evaluation set ``y`` against reference ``x``.

    ``spec=None`` applies the median heuristic to the reference; the
    resolved bandwidth is stored in the returned record.
    """
    if not alpha > 0:
        raise InputError(f"alpha must be positive, got {alpha}")
    spec = resolve_kernel(x, spec, plan, threads, blocks=x_blocks)
    value = float(alpha) * mmd2_unbiased(x, y, spec, plan, threads, x_blocks=x_blocks)
    X, Y = as_matrix(x), as_matrix(y)
    return ScoreRecord("kad", value, _label(x), _label(y), X.shape[0], Y.shape[0], X.shape[1],
                       kernel=spec, alpha=float(alpha))


def _moments(x) -> GaussianStats:
    if isinstance(x, GaussianStats):
        return x
    return covariance(x)


def fad_value(sx: GaussianStats, sy: GaussianStats) -> float:
    """Squared Frechet distance between two Gaussians (unclamped)."""
    if sx.d != sy.d:
        raise InputError(f"dimension mismatch: {sx.d} vs {sy.d}")
    diff = sx.mean - sy.mean
    return (float(diff @ diff) + (float(np.trace(sx.cov)) + float(np.trace(sy.cov)))
            - 2.0 * trace_sqrt_product(sx.cov, sy.cov))


def fad_score(x: EmbeddingSet | GaussianStats, y: EmbeddingSet | GaussianStats) -> ScoreRecord:
    """Frechet Audio Distance, reported in squared form.

    Either argument may be an embedding set (moments are estimated with
    divisor N - 1) or precomputed :class:`GaussianStats`. Round-off
    negatives are reported as 0.
    """
    sx, sy = _moments(x), _moments(y)
    value = max(fad_value(sx, sy), 0.0)
    return ScoreRecord("fad", value, _label(x), _label(y), sx.n, sy.n, sx.d)


def fad_bias_estimate(sx: GaussianStats, sy: GaussianStats, n: int) -> float:
    """First-order finite-sample bias of FAD: (tr Sx + tr Sy) / n.

    The derivation behind it treats covariance estimates as having
    expectation (n-1)/n times the truth, i.e. divisor-n estimates.
    """
    if n < 2:
        raise InputError(f"sample count must be >= 2, got {n}")
    sx, sy = _as_stats(sx), _as_stats(sy)
    return (float(np.trace(sx.cov)) + float(np.trace(sy.cov))) / n


def _as_stats(s) -> GaussianStats:
    if isinstance(s, GaussianStats):
        return s
    cov = np.atleast_2d(np.asarray(s, dtype=np.float64))
    return GaussianStats(np.zeros(cov.shape[0]), cov)


class FadInfFit(NamedTuple):
    intercept: float
    slope: float
    r_squared: float


def fad_inf_extrapolate(points: Sequence[tuple[float, float]], min_points: int = 2) -> FadInfFit:
    """Least-squares line of score against 1/n; the intercept estimates the n -> inf score.

    >>> fad_inf_extrapolate([(100, 1.5), (200, 1.25), (400, 1.125)]).intercept
    1.0
    """
    if min_points < 2:
        raise InputError("min_points must be >= 2")
    pts = [(float(n), float(v)) for n, v in points]
    if any(n < 2 for n, _ in pts):
        raise InputError("all sample counts must be >= 2")
    distinct = len({n for n, _ in pts})
    if distinct < min_points:
        raise InputError(f"need at least {min_points} distinct sample sizes, got {distinct}")
    u = np.array([1.0 / n for n, _ in pts])
    f = np.array([v for _, v in pts])
    uc = u - u.mean()
    sxx = float(uc @ uc)
    if sxx == 0.0:
        raise InputError("sample sizes have zero spread in 1/n")
    slope = float(uc @ (f - f.mean())) / sxx
    intercept = float(f.mean() - slope * u.mean())
    resid = f - (intercept + slope * u)
    ss_tot = float(np.sum((f - f.mean()) ** 2))
    ss_res = float(resid @ resid)
    r2 = 1.0 if ss_tot == 0.0 else min(max(1.0 - ss_res / ss_tot, 0.0), 1.0)
    return FadInfFit(intercept, slope, r2)
