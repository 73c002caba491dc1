"""Experimental procedures built on the metrics.

* ``convergence_study``: score vs evaluation sample size, normalized by the
  extrapolated infinite-sample value.
* ``degrade_embeddings`` / ``bandwidth_sweep``: score monotonicity under
  increasing degradation for a grid of bandwidth multipliers.
* ``spearman_correlation``: rank agreement between scores and ratings.
* ``timing_benchmark``: wall-clock cost of KAD and FAD across (d, N).
"""

from __future__ import annotations

import itertools
import logging
import math
import time
import warnings
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np
from scipy import stats as sps

from .embedmat import EmbeddingSet, GaussianStats, covariance, mean_vector
from .errors import InputError, ResourceError
from .kernel import KernelSpec, median_bandwidth
from .metric import (DEFAULT_ALPHA, cross_kernel_mean, fad_inf_extrapolate, fad_score,
                     kad_score, mmd2_from_terms, mmd2_unbiased, resolve_kernel,
                     self_kernel_mean)
from .synth import rng_stream

log = logging.getLogger(__name__)

__all__ = [
    "SeriesPoint",
    "StudySeries",
    "RatingsTable",
    "SpearmanResult",
    "convergence_study",
    "normalized",
    "degrade_embeddings",
    "bandwidth_sweep",
    "spearman_correlation",
    "timing_benchmark",
    "loglog_slope",
]

EXACT_PERMUTATION_MAX_N = 8
SWEEP_EPS = 1e-12


class SeriesPoint(NamedTuple):
    x: float
    mean: float
    lo: float
    hi: float


def _fmt(v: float) -> str:
    return format(float(v), ".17g")


@dataclass
class StudySeries:
    """Ordered ``(x, mean, lo, hi)`` points with free-form text metadata."""

    x_label: str
    y_label: str
    points: list[SeriesPoint]
    meta: dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        self.points = [SeriesPoint(*map(float, p)) for p in self.points]
        for p in self.points:
            if not (p.lo <= p.mean <= p.hi):
                raise InputError(f"series point violates lo <= mean <= hi: {p}")
        xs = [p.x for p in self.points]
        if any(b <= a for a, b in zip(xs, xs[1:])):
            raise InputError("series x values must be strictly increasing")
        self.meta = {str(k): str(v) for k, v in self.meta.items()}

    @property
    def xs(self) -> np.ndarray:
        return np.array([p.x for p in self.points])

    @property
    def means(self) -> np.ndarray:
        return np.array([p.mean for p in self.points])


@dataclass(frozen=True)
class RatingsTable:
    """Per-system (metric score, human rating) pairs."""

    rows: tuple[tuple[str, float, float], ...]

    def __post_init__(self):
        rows = tuple((str(s), float(m), float(h)) for s, m, h in self.rows)
        if len(rows) < 3:
            raise InputError(f"need at least 3 systems for a rank correlation, got {len(rows)}")
        ids = [r[0] for r in rows]
        dup = sorted({i for i in ids if ids.count(i) > 1})
        if dup:
            raise InputError(f"duplicate system ids: {', '.join(dup)}")
        if not all(math.isfinite(m) and math.isfinite(h) for _, m, h in rows):
            raise InputError("ratings table contains non-finite values")
        object.__setattr__(self, "rows", rows)

    @property
    def scores(self) -> np.ndarray:
        return np.array([r[1] for r in self.rows])

    @property
    def ratings(self) -> np.ndarray:
        return np.array([r[2] for r in self.rows])


# --------------------------------------------------------------------------
# convergence with sample size

def _subsample_indices(n_pool: int, size: int, seed: int, trial: int) -> np.ndarray:
    rng = rng_stream(seed, "subsample", size, trial)
    return np.sort(rng.choice(n_pool, size=size, replace=False))


def convergence_study(reference: EmbeddingSet, evaluation: EmbeddingSet, sizes: Sequence[int],
                      trials: int = 20, seed: int = 42, metric: str = "kad",
                      kernel: KernelSpec | float | None = None,
                      alpha: float = DEFAULT_ALPHA) -> StudySeries:
    """Score of evaluation subsamples against the full reference, per sample size.

    For each size, ``trials`` subsamples are drawn without replacement from
    ``evaluation`` (one RNG stream per (seed, size, trial)). The bandwidth
    is resolved once from the reference. Points are mean +/- one sample
    standard deviation. ``meta`` holds the least-squares extrapolation to
    N = inf (``inf_value``) and the normalized means.
    """
    sizes = [int(s) for s in sizes]
    if not sizes:
        raise InputError("sizes must be non-empty")
    if any(b <= a for a, b in zip(sizes, sizes[1:])):
        raise InputError("sizes must be strictly increasing")
    if sizes[0] < 2:
        raise InputError("sample sizes must be >= 2")
    if sizes[-1] > evaluation.n:
        raise InputError(f"sample size {sizes[-1]} exceeds evaluation set size {evaluation.n}")
    if trials < 2:
        raise InputError("trials must be >= 2")
    if reference.d != evaluation.d:
        raise InputError(f"dimension mismatch: {reference.d} vs {evaluation.d}")

    meta = {"seed": seed, "trials": trials, "metric": metric}
    if metric == "kad":
        spec = resolve_kernel(reference, kernel)
        bw = spec.bandwidth
        kxx = self_kernel_mean(reference, bw)
        meta.update(sigma=_fmt(spec.sigma), scale=_fmt(spec.scale), alpha=_fmt(alpha),
                    sigma_policy="median" if kernel is None else "fixed")

        def score(sub: EmbeddingSet) -> float:
            kyy = self_kernel_mean(sub, bw)
            kxy = cross_kernel_mean(reference, sub, bw)
            return float(alpha) * mmd2_from_terms(kxx, kyy, kxy)
    elif metric == "fad":
        ref_stats = covariance(reference)

        def score(sub: EmbeddingSet) -> float:
            return fad_score(ref_stats, sub).value
    else:
        raise InputError(f"convergence metric must be 'kad' or 'fad', got {metric!r}")

    points = []
    for size in sizes:
        vals = np.array([score(evaluation.subset(_subsample_indices(evaluation.n, size, seed, t)))
                         for t in range(trials)])
        mu, sd = float(np.mean(vals)), float(np.std(vals, ddof=1))
        points.append(SeriesPoint(size, mu, mu - sd, mu + sd))
        log.debug("convergence %s N=%d mean=%.6g std=%.6g", metric, size, mu, sd)

    if len(sizes) >= 2:
        fit = fad_inf_extrapolate([(p.x, p.mean) for p in points])
        meta.update(inf_value=_fmt(fit.intercept), inf_slope=_fmt(fit.slope),
                    inf_r_squared=_fmt(fit.r_squared), inf_method="ols_1_over_n")
        inf = fit.intercept
    else:
        inf = points[-1].mean
        meta.update(inf_value=_fmt(inf), inf_method="largest_size")
    if inf != 0.0:
        meta["normalized_mean"] = ";".join(_fmt(p.mean / inf) for p in points)
    return StudySeries("N", metric, points, meta)


def normalized(series: StudySeries) -> StudySeries:
    """Divide a convergence series by its ``inf_value``."""
    inf = float(series.meta["inf_value"])
    if inf == 0.0:
        raise InputError("cannot normalize by a zero extrapolated value")
    pts = []
    for p in series.points:
        lo, hi = sorted((p.lo / inf, p.hi / inf))
        pts.append(SeriesPoint(p.x, p.mean / inf, lo, hi))
    return StudySeries(series.x_label, f"{series.y_label}/inf", pts, dict(series.meta))


# --------------------------------------------------------------------------
# degradations and bandwidth sweep

DEGRADATIONS = ("gaussian_noise", "mean_shrink")


def degrade_embeddings(clean: EmbeddingSet, kind: str, level: float, seed: int,
                       bandwidth: float | None = None) -> EmbeddingSet:
    """Embedding-space stand-in for an audio degradation.

    ``gaussian_noise`` adds N(0, s^2) per coordinate with
    ``s = level * median_bandwidth(clean) / sqrt(d)``; the noise draw depends
    only on (seed, kind), so levels of one seed are nested rescalings.
    ``mean_shrink`` moves each row toward the set mean by fraction ``level``.
    """
    if kind not in DEGRADATIONS:
        raise InputError(f"unknown degradation {kind!r}")
    if not (math.isfinite(level) and level >= 0):
        raise InputError(f"degradation level must be >= 0, got {level}")
    if kind == "mean_shrink" and level > 1:
        raise InputError(f"mean_shrink level must be in [0, 1], got {level}")
    label = f"{clean.label}+{kind}@{level:g}"
    if level == 0:
        return EmbeddingSet(clean.data.copy(), label=label, source=clean.source)
    x = clean.data.astype(np.float64)
    if kind == "gaussian_noise":
        bw = median_bandwidth(clean) if bandwidth is None else float(bandwidth)
        z = rng_stream(seed, f"degrade:{kind}").standard_normal(x.shape)
        out = x + (level * bw / math.sqrt(clean.d)) * z
    else:
        out = (1.0 - level) * x + level * mean_vector(clean)
    return EmbeddingSet(out.astype(clean.data.dtype, copy=False), label=label,
                        source=f"{clean.source}|{kind}:{level!r}:seed={seed}")


def bandwidth_sweep(reference: EmbeddingSet, degraded_series: Sequence[EmbeddingSet],
                    scales: Sequence[float], eps: float = SWEEP_EPS,
                    levels: Sequence[float] | None = None,
                    sigma: float | None = None) -> list[StudySeries]:
    """MMD^2 of each degraded set against the reference, one series per bandwidth scale.

    Each series is clipped below at ``eps`` and then divided by its maximum.
    ``meta['monotone']`` records whether the normalized series is
    nondecreasing; ``meta['clipped']`` counts eps-floored entries.
    """
    if not degraded_series:
        raise InputError("degraded series is empty")
    if not scales:
        raise InputError("scales must be non-empty")
    xs = list(range(len(degraded_series))) if levels is None else [float(v) for v in levels]
    if len(xs) != len(degraded_series):
        raise InputError("levels and degraded series differ in length")
    base = median_bandwidth(reference) if sigma is None else float(sigma)
    out = []
    for scale in scales:
        spec = KernelSpec(sigma=base, scale=float(scale))
        raw = np.array([mmd2_unbiased(reference, y, spec) for y in degraded_series])
        clipped = np.maximum(raw, eps)
        norm = clipped / clipped.max()
        monotone = bool(np.all(np.diff(norm) >= 0))
        meta = {
            "scale": _fmt(scale), "sigma": _fmt(base), "monotone": str(monotone).lower(),
            "clipped": int(np.sum(raw < eps)), "eps": _fmt(eps),
            "raw": ";".join(_fmt(v) for v in raw),
            "labels": ";".join(y.label for y in degraded_series),
        }
        pts = [SeriesPoint(x, v, v, v) for x, v in zip(xs, norm)]
        out.append(StudySeries("level", "normalized_mmd2", pts, meta))
    return out


# --------------------------------------------------------------------------
# rank correlation

class SpearmanResult(NamedTuple):
    rho: float
    p_value: float
    method: str  # "exact" or "t-approx"
    n: int


def _pearson_rows(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    ac = a - a.mean(axis=-1, keepdims=True)
    bc = b - b.mean(axis=-1, keepdims=True)
    num = np.sum(ac * bc, axis=-1)
    den = np.sqrt(np.sum(ac * ac, axis=-1) * np.sum(bc * bc, axis=-1))
    return num / den


def spearman_correlation(table: RatingsTable) -> SpearmanResult:
    """Spearman's rho with mid-ranks for ties and a two-sided p-value.

    For n <= 8 the p-value is exact (all n! orderings of the ratings); above
    that it uses the t distribution with n - 2 degrees of freedom. A perfect
    correlation on the t path reports p = 0.
    """
    a, b = table.scores, table.ratings
    n = len(a)
    if np.ptp(a) == 0 or np.ptp(b) == 0:
        raise InputError("rank correlation undefined: a column is constant")
    ra, rb = sps.rankdata(a), sps.rankdata(b)
    rho = float(np.clip(_pearson_rows(ra, rb), -1.0, 1.0))
    if n <= EXACT_PERMUTATION_MAX_N:
        perms = np.array(list(itertools.permutations(range(n))))
        null = _pearson_rows(ra[None, :], rb[perms])
        p = float(np.mean(np.abs(null) >= abs(rho) - 1e-12))
        return SpearmanResult(rho, min(p, 1.0), "exact", n)
    if abs(rho) >= 1.0:
        return SpearmanResult(rho, 0.0, "t-approx", n)
    t = rho * math.sqrt((n - 2) / (1.0 - rho * rho))
    p = float(2.0 * sps.t.sf(abs(t), n - 2))
    return SpearmanResult(rho, min(p, 1.0), "t-approx", n)


# --------------------------------------------------------------------------
# timing

def loglog_slope(xs: Sequence[float], ys: Sequence[float]) -> float:
    """Least-squares slope of log(y) against log(x)."""
    lx, ly = np.log(np.asarray(xs, float)), np.log(np.asarray(ys, float))
    return float(np.polyfit(lx, ly, 1)[0])


def _time_ms(fn) -> float:
    t0 = time.perf_counter()
    fn()
    return (time.perf_counter() - t0) * 1e3


def timing_benchmark(dims: Sequence[int], sizes: Sequence[int], trials: int = 200,
                     warmup: int = 10, seed: int = 42, dtype=np.float32) -> list[StudySeries]:
    """Wall-clock milliseconds of KAD and FAD, one series per (metric, d) over N.

    For each cell two standard-Gaussian sets are synthesized. KAD uses a
    median bandwidth resolved outside the timed region; both metrics are
    otherwise timed end to end from the embeddings. Points are
    (N, mean, p5, p95); the band is widened to contain the mean when a
    skewed run puts the mean outside the 5th-95th percentile range, and the
    raw percentiles are kept in ``meta``.
    """
    if not dims or not sizes:
        raise InputError("dims and sizes must be non-empty")
    if trials < 1 or warmup < 0:
        raise InputError("trials must be >= 1 and warmup >= 0")
    if trials < 10:
        warnings.warn(f"only {trials} timing trials; percentiles will be unreliable",
                      stacklevel=2)
    dims, sizes = sorted({int(d) for d in dims}), sorted({int(n) for n in sizes})
    if dims[0] < 1 or sizes[0] < 2:
        raise InputError("dims must be >= 1 and sizes >= 2")
    results: dict[tuple[str, int], list[SeriesPoint]] = {}
    raw: dict[tuple[str, int], list[str]] = {}
    for d in dims:
        for n in sizes:
            try:
                x = EmbeddingSet(rng_stream(seed, "bench", d, n, 0)
                                 .standard_normal((n, d)).astype(dtype), label="bench_ref")
                y = EmbeddingSet(rng_stream(seed, "bench", d, n, 1)
                                 .standard_normal((n, d)).astype(dtype), label="bench_eval")
                spec = KernelSpec(sigma=median_bandwidth(x))
                jobs = {"kad": lambda: kad_score(x, y, spec),
                        "fad": lambda: fad_score(x, y)}
                for name, job in jobs.items():
                    for _ in range(warmup):
                        job()
                    ms = np.array([_time_ms(job) for _ in range(trials)])
                    mean = float(ms.mean())
                    p5, p95 = (float(v) for v in np.percentile(ms, [5, 95]))
                    results.setdefault((name, d), []).append(
                        SeriesPoint(n, mean, min(p5, mean), max(p95, mean)))
                    raw.setdefault((name, d), []).append(f"{n}:{_fmt(p5)}:{_fmt(p95)}")
                    log.info("bench %s d=%d N=%d mean=%.3f ms", name, d, n, mean)
            except MemoryError as exc:
                raise ResourceError(f"out of memory at d={d}, N={n}") from exc
    out = []
    for (name, d), pts in results.items():
        meta = {"metric": name, "d": d, "trials": trials, "warmup": warmup, "seed": seed,
                "percentiles": ";".join(raw[(name, d)])}
        out.append(StudySeries("N", "wall_ms", pts, meta))
    return out
