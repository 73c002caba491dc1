"""Embedding-matrix container and the dense linear algebra behind both metrics.

Everything here works on row-major ``(N, d)`` matrices. Inputs keep their
native precision (float32 or float64); every reduction runs in float64.

Pairwise work is split into a fixed grid of blocks. Blocks may be evaluated
by a thread pool, but results are always combined in grid order, so the
output does not depend on the number of workers.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence, TypeVar

import numpy as np

from .errors import InputError, NumericalError

__all__ = [
    "EmbeddingSet",
    "GaussianStats",
    "DistanceBlockPlan",
    "set_num_threads",
    "get_num_threads",
    "as_matrix",
    "map_distance_blocks",
    "self_distance_blocks",
    "pairwise_sq_dists",
    "mean_vector",
    "covariance",
    "sym_eigendecompose",
    "trace_sqrt_product",
]

T = TypeVar("T")

_NUM_THREADS = max(1, int(os.environ.get("KADTK_THREADS", 0) or os.cpu_count() or 1))

# Relative tolerances used by the eigen routines.
SYMMETRY_RTOL = 1e-8
PSD_RTOL = 1e-8


def set_num_threads(n: int) -> None:
    """Set the default worker count for block-parallel routines."""
    global _NUM_THREADS
    if int(n) < 1:
        raise InputError(f"thread count must be >= 1, got {n}")
    _NUM_THREADS = int(n)


def get_num_threads() -> int:
    return _NUM_THREADS


def _check_label(text: str, what: str) -> str:
    text = str(text)
    if any(c in text for c in ",\n\r"):
        raise InputError(f"{what} {text!r} must not contain commas or line breaks")
    return text


@dataclass(frozen=True)
class EmbeddingSet:
    """An ``(N, d)`` matrix of embedding vectors plus provenance.

    ``data`` is stored read-only at float32 or float64 precision; other real
    dtypes are promoted to float64.
    """

    data: np.ndarray
    label: str = ""
    source: str = ""

    def __post_init__(self):
        arr = np.asarray(self.data)
        if arr.ndim != 2:
            raise InputError(f"embedding matrix must be 2-D, got shape {arr.shape}")
        if arr.shape[0] < 1 or arr.shape[1] < 1:
            raise InputError(f"embedding matrix must be non-empty, got shape {arr.shape}")
        if arr.dtype not in (np.float32, np.float64):
            if not np.issubdtype(arr.dtype, np.number) or np.iscomplexobj(arr):
                raise InputError(f"unsupported embedding dtype {arr.dtype}")
            arr = arr.astype(np.float64)
        if not np.all(np.isfinite(arr)):
            bad = np.argwhere(~np.isfinite(arr))[0]
            raise InputError(f"non-finite entry at row {bad[0]}, column {bad[1]}")
        if arr.flags.writeable or not arr.flags.c_contiguous:
            arr = np.array(arr, order="C", copy=True)
            arr.flags.writeable = False
        object.__setattr__(self, "data", arr)
        object.__setattr__(self, "label", _check_label(self.label, "label"))
        object.__setattr__(self, "source", str(self.source))

    @property
    def n(self) -> int:
        return self.data.shape[0]

    @property
    def d(self) -> int:
        return self.data.shape[1]

    def subset(self, rows, label: str | None = None) -> "EmbeddingSet":
        return EmbeddingSet(self.data[rows], label=self.label if label is None else label,
                            source=self.source)


@dataclass(frozen=True)
class GaussianStats:
    """Mean and covariance of an embedding set (the moments FAD compares)."""

    mean: np.ndarray
    cov: np.ndarray
    n: int = 0
    label: str = ""

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=np.float64).reshape(-1)
        cov = np.atleast_2d(np.asarray(self.cov, dtype=np.float64))
        d = mean.shape[0]
        if cov.shape != (d, d):
            raise InputError(f"covariance shape {cov.shape} does not match mean length {d}")
        if not (np.all(np.isfinite(mean)) and np.all(np.isfinite(cov))):
            raise InputError("Gaussian moments contain non-finite values")
        cov = (cov + cov.T) / 2.0
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)
        object.__setattr__(self, "n", int(self.n))
        object.__setattr__(self, "label", _check_label(self.label, "label"))

    @property
    def d(self) -> int:
        return self.mean.shape[0]


@dataclass(frozen=True)
class DistanceBlockPlan:
    """Cache-blocking layout for the pairwise stage.

    Symmetric (self) passes use square ``block_rows`` tiles so that only
    the upper triangle of the tile grid is evaluated.
    """

    block_rows: int = 256
    block_cols: int = 256
    accumulate_wide: bool = True

    def __post_init__(self):
        if self.block_rows < 1 or self.block_cols < 1:
            raise InputError("block sizes must be >= 1")


DEFAULT_PLAN = DistanceBlockPlan()


def as_matrix(x) -> np.ndarray:
    """Return the raw 2-D array behind an EmbeddingSet (or array-like)."""
    if isinstance(x, EmbeddingSet):
        return x.data
    arr = np.asarray(x)
    if arr.ndim != 2:
        raise InputError(f"expected a 2-D matrix, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise InputError("matrix contains non-finite entries")
    return arr


def _ranges(n: int, size: int) -> list[tuple[int, int]]:
    return [(s, min(s + size, n)) for s in range(0, n, size)]


def _run_ordered(fn: Callable[..., T], tasks: Sequence[tuple], threads: int | None) -> list[T]:
    threads = get_num_threads() if threads is None else int(threads)
    if threads <= 1 or len(tasks) <= 1:
        return [fn(*t) for t in tasks]
    with ThreadPoolExecutor(max_workers=min(threads, len(tasks))) as pool:
        return list(pool.map(lambda t: fn(*t), tasks))


def map_distance_blocks(
    a,
    b,
    fn: Callable[[np.ndarray, bool], T],
    plan: DistanceBlockPlan | None = None,
    threads: int | None = None,
    symmetric: bool = False,
) -> list[T]:
    """Evaluate ``fn(block, is_diagonal)`` over tiles of squared distances.

    With ``symmetric=True`` only ``a`` is used and only tiles on or above the
    diagonal are visited; diagonal tiles are exactly symmetric with a zero
    diagonal. Results come back in row-major tile order regardless of
    ``threads``.
    """
    plan = plan or DEFAULT_PLAN
    A = as_matrix(a)
    B = A if symmetric else as_matrix(b)
    if A.shape[1] != B.shape[1]:
        raise InputError(f"dimension mismatch: {A.shape[1]} vs {B.shape[1]}")
    dtype = np.float64 if plan.accumulate_wide else np.result_type(A.dtype, B.dtype)

    # Translation does not change distances; centering on A's mean limits
    # cancellation in |x|^2 + |y|^2 - 2 x.y for embeddings far from the origin.
    shift = A.mean(axis=0, dtype=np.float64).astype(dtype)
    A = A.astype(dtype, copy=False) - shift
    B = A if symmetric else B.astype(dtype, copy=False) - shift
    na = np.einsum("ij,ij->i", A, A)
    nb = na if symmetric else np.einsum("ij,ij->i", B, B)

    def tile(r0, r1, c0, c1, diag):
        d = (na[r0:r1, None] + nb[None, c0:c1]) - 2.0 * (A[r0:r1] @ B[c0:c1].T)
        np.maximum(d, 0.0, out=d)
        if diag:
            d = np.triu(d, 1)
            d = d + d.T
        return fn(d, diag)

    if symmetric:
        rows = _ranges(A.shape[0], plan.block_rows)
        tasks = [(r0, r1, c0, c1, i == j)
                 for i, (r0, r1) in enumerate(rows)
                 for j, (c0, c1) in enumerate(rows) if j >= i]
    else:
        tasks = [(r0, r1, c0, c1, False)
                 for r0, r1 in _ranges(A.shape[0], plan.block_rows)
                 for c0, c1 in _ranges(B.shape[0], plan.block_cols)]
    return _run_ordered(tile, tasks, threads)


def self_distance_blocks(x, plan: DistanceBlockPlan | None = None,
                         threads: int | None = None) -> list[tuple[np.ndarray, bool]]:
    """Materialize the upper tile grid of ``pairwise_sq_dists(x, x)``.

    The result can be handed to ``median_bandwidth`` and the metric
    self-terms so one pass over the reference serves both.
    """
    return map_distance_blocks(x, x, lambda d, diag: (d, diag), plan, threads, symmetric=True)


def pairwise_sq_dists(a, b, plan: DistanceBlockPlan | None = None,
                      threads: int | None = None) -> np.ndarray:
    """Full ``(n, m)`` matrix of squared Euclidean distances, clamped at 0.

    Passing the same object twice takes the symmetric path: the result is
    exactly symmetric with an exactly-zero diagonal.
    """
    plan = plan or DEFAULT_PLAN
    A = as_matrix(a)
    same = a is b or (isinstance(a, EmbeddingSet) and isinstance(b, EmbeddingSet)
                      and a.data is b.data)
    B = A if same else as_matrix(b)
    if A.shape[1] != B.shape[1]:
        raise InputError(f"dimension mismatch: {A.shape[1]} vs {B.shape[1]}")
    out = np.empty((A.shape[0], B.shape[0]), dtype=np.float64)
    if same:
        rows = _ranges(A.shape[0], plan.block_rows)
        tiles = map_distance_blocks(A, A, lambda d, diag: d, plan, threads, symmetric=True)
        it = iter(tiles)
        for i, (r0, r1) in enumerate(rows):
            for j, (c0, c1) in enumerate(rows[i:], start=i):
                d = next(it)
                out[r0:r1, c0:c1] = d
                if j != i:
                    out[c0:c1, r0:r1] = d.T
    else:
        tiles = map_distance_blocks(A, B, lambda d, diag: d, plan, threads)
        it = iter(tiles)
        for r0, r1 in _ranges(A.shape[0], plan.block_rows):
            for c0, c1 in _ranges(B.shape[0], plan.block_cols):
                out[r0:r1, c0:c1] = next(it)
    return out


def mean_vector(x) -> np.ndarray:
    """Column means, accumulated in float64."""
    return as_matrix(x).mean(axis=0, dtype=np.float64)


def covariance(x) -> GaussianStats:
    """Sample mean and covariance (divisor N - 1) of an embedding set."""
    X = as_matrix(x)
    n = X.shape[0]
    if n < 2:
        raise InputError(f"covariance undefined for N={n} (need at least 2 samples)")
    mu = mean_vector(X)
    xc = X.astype(np.float64) - mu
    cov = (xc.T @ xc) / (n - 1)
    label = x.label if isinstance(x, EmbeddingSet) else ""
    return GaussianStats(mean=mu, cov=cov, n=n, label=label)


def _check_symmetric(m: np.ndarray, rtol: float = SYMMETRY_RTOL) -> np.ndarray:
    m = np.asarray(m, dtype=np.float64)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise InputError(f"expected a square matrix, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise InputError("matrix contains non-finite entries")
    scale = np.linalg.norm(m)
    if np.linalg.norm(m - m.T) > rtol * max(scale, np.finfo(float).tiny):
        raise InputError("matrix is not symmetric")
    return m


def sym_eigendecompose(m) -> tuple[np.ndarray, np.ndarray]:
    """Eigenvalues (descending) and orthonormal eigenvectors of a symmetric matrix.

    Backed by LAPACK's symmetric driver. Only the lower triangle is read
    after the symmetry check.
    """
    m = _check_symmetric(m)
    try:
        w, v = np.linalg.eigh(m)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"symmetric eigendecomposition failed: {exc}") from exc
    return w[::-1].copy(), v[:, ::-1].copy()


def _clamp_psd(w: np.ndarray, what: str) -> np.ndarray:
    scale = float(np.max(np.abs(w))) if w.size else 0.0
    worst = float(np.min(w)) if w.size else 0.0
    if worst < -PSD_RTOL * scale:
        raise NumericalError(
            f"{what} is not positive semi-definite: eigenvalue {worst:.6g} "
            f"(tolerance {-PSD_RTOL * scale:.3g})")
    return np.clip(w, 0.0, None)


def trace_sqrt_product(sx, sy) -> float:
    """tr((Sx^1/2 Sy Sx^1/2)^1/2), which equals tr(sqrt(Sx Sy)) for PSD inputs.

    Small negative eigenvalues from round-off are clamped to zero; anything
    below ``-1e-8 * ||matrix||`` raises :class:`NumericalError`.
    """
    sx = _check_symmetric(sx)
    sy = _check_symmetric(sy)
    if sx.shape != sy.shape:
        raise InputError(f"covariance shapes differ: {sx.shape} vs {sy.shape}")
    w, v = sym_eigendecompose(sx)
    w = _clamp_psd(w, "first covariance")
    root = (v * np.sqrt(w)) @ v.T
    inner = root @ sy @ root
    inner = (inner + inner.T) / 2.0
    try:
        lam = np.linalg.eigvalsh(inner)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"eigenvalues of the covariance product failed: {exc}") from exc
    lam = _clamp_psd(lam, "covariance product")
    return float(np.sum(np.sqrt(lam)))
