"""Seeded synthetic embedding generators.

Random streams are keyed by ``(seed, tag, *index)`` through numpy's
``SeedSequence`` and the counter-based Philox bit generator, so every
consumer (a subsample trial, a degradation, a benchmark cell) draws from
its own reproducible stream.
"""

from __future__ import annotations

import configparser
import math
import zlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .embedmat import EmbeddingSet
from .errors import InputError

__all__ = [
    "rng_stream",
    "Component",
    "DistributionSpec",
    "gaussian",
    "mixture",
    "sample",
    "moments",
    "moment_matched_gaussian",
    "analytic_fad",
    "parse_spec",
    "load_spec",
]

KINDS = ("gaussian", "gaussian_mixture")


def rng_stream(seed: int, tag: str, *index: int) -> np.random.Generator:
    """Independent generator for one (seed, purpose, index...) key."""
    key = (zlib.crc32(tag.encode("utf-8")),) + tuple(int(i) % 2**63 for i in index)
    ss = np.random.SeedSequence(entropy=int(seed) % 2**64, spawn_key=key)
    return np.random.Generator(np.random.Philox(ss))


@dataclass(frozen=True)
class Component:
    weight: float
    mean: np.ndarray
    scale: np.ndarray


@dataclass(frozen=True)
class DistributionSpec:
    """Diagonal Gaussian or mixture of diagonal Gaussians."""

    kind: str
    dim: int
    components: tuple[Component, ...] = field(default_factory=tuple)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InputError(f"unknown distribution kind {self.kind!r}")
        if int(self.dim) < 1:
            raise InputError(f"dim must be >= 1, got {self.dim}")
        comps = []
        for c in self.components:
            mean = np.broadcast_to(np.asarray(c.mean, dtype=np.float64), (self.dim,)).copy()
            scale = np.broadcast_to(np.asarray(c.scale, dtype=np.float64), (self.dim,)).copy()
            if not (math.isfinite(c.weight) and c.weight > 0):
                raise InputError(f"component weight must be positive, got {c.weight}")
            if not (np.all(np.isfinite(mean)) and np.all(np.isfinite(scale))):
                raise InputError("component mean/scale must be finite")
            if np.any(scale < 0):
                raise InputError("component scales must be non-negative")
            comps.append(Component(float(c.weight), mean, scale))
        if not comps:
            raise InputError("distribution needs at least one component")
        if self.kind == "gaussian" and len(comps) != 1:
            raise InputError("gaussian kind takes exactly one component")
        total = math.fsum(c.weight for c in comps)
        if abs(total - 1.0) > 1e-12:
            raise InputError(f"component weights must sum to 1, got {total:.12g}")
        object.__setattr__(self, "dim", int(self.dim))
        object.__setattr__(self, "components", tuple(comps))


def gaussian(mean, scale, dim: int | None = None) -> DistributionSpec:
    mean = np.atleast_1d(np.asarray(mean, dtype=np.float64))
    dim = dim or max(mean.size, np.atleast_1d(scale).size)
    return DistributionSpec("gaussian", dim, (Component(1.0, mean, np.asarray(scale, float)),))


def mixture(weights, means, scales, dim: int | None = None) -> DistributionSpec:
    means = [np.atleast_1d(np.asarray(m, dtype=np.float64)) for m in means]
    dim = dim or max(m.size for m in means)
    comps = tuple(Component(float(w), m, np.asarray(s, float))
                  for w, m, s in zip(weights, means, scales))
    return DistributionSpec("gaussian_mixture", dim, comps)


def sample(spec: DistributionSpec, n: int, seed: int, label: str = "",
           dtype=np.float64) -> EmbeddingSet:
    """Draw ``n`` i.i.d. rows: pick a component by weight, then a diagonal Gaussian."""
    if int(n) < 1:
        raise InputError(f"sample count must be >= 1, got {n}")
    rng = rng_stream(seed, "sample")
    weights = np.array([c.weight for c in spec.components])
    if len(weights) == 1:
        which = np.zeros(n, dtype=np.intp)
    else:
        which = rng.choice(len(weights), size=n, p=weights / weights.sum())
    z = rng.standard_normal((n, spec.dim))
    means = np.stack([c.mean for c in spec.components])
    scales = np.stack([c.scale for c in spec.components])
    data = means[which] + scales[which] * z
    return EmbeddingSet(data.astype(dtype, copy=False), label=label,
                        source=f"synth:{spec.kind}:dim={spec.dim}:n={n}:seed={seed}")


def moments(spec: DistributionSpec) -> tuple[np.ndarray, np.ndarray]:
    """Population mean vector and covariance matrix."""
    w = np.array([c.weight for c in spec.components])
    means = np.stack([c.mean for c in spec.components])
    mu = w @ means
    cov = np.zeros((spec.dim, spec.dim))
    for c in spec.components:
        dev = c.mean - mu
        cov += c.weight * (np.diag(c.scale ** 2) + np.outer(dev, dev))
    return mu, cov


def moment_matched_gaussian(spec: DistributionSpec) -> DistributionSpec:
    """The Gaussian with the same mean and covariance; needs a diagonal covariance."""
    mu, cov = moments(spec)
    off = cov - np.diag(np.diag(cov))
    if np.any(np.abs(off) > 1e-12 * max(1.0, float(np.max(np.abs(cov))))):
        raise InputError("moment-matched Gaussian has a non-diagonal covariance; "
                         "only diagonal Gaussians can be generated")
    return gaussian(mu, np.sqrt(np.diag(cov)), dim=spec.dim)


def analytic_fad(spec_x: DistributionSpec, spec_y: DistributionSpec) -> float:
    """Closed-form squared Frechet distance between two diagonal Gaussians."""
    if spec_x.kind != "gaussian" or spec_y.kind != "gaussian":
        raise InputError("analytic FAD needs two single-Gaussian specs (mixtures have no closed form)")
    if spec_x.dim != spec_y.dim:
        raise InputError(f"dimension mismatch: {spec_x.dim} vs {spec_y.dim}")
    cx, cy = spec_x.components[0], spec_y.components[0]
    return float(np.sum((cx.mean - cy.mean) ** 2) + np.sum((cx.scale - cy.scale) ** 2))


def _floats(text: str) -> np.ndarray:
    try:
        return np.array([float(t) for t in text.replace(",", " ").split()], dtype=np.float64)
    except ValueError as exc:
        raise InputError(f"cannot parse number list {text!r}") from exc


def parse_spec(text: str) -> DistributionSpec:
    """Parse the declarative spec format::

        [distribution]
        kind = gaussian_mixture
        dim = 2

        [component.1]
        weight = 0.5
        mean = 5, 0
        scale = 1

    A single number in ``mean`` or ``scale`` is broadcast to every dimension.
    """
    cp = configparser.ConfigParser()
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise InputError(f"malformed distribution spec: {exc}") from exc
    if "distribution" not in cp:
        raise InputError("distribution spec needs a [distribution] section")
    top = cp["distribution"]
    kind = top.get("kind", "gaussian").strip()
    try:
        dim = int(top.get("dim", "0"))
    except ValueError as exc:
        raise InputError(f"dim must be an integer, got {top.get('dim')!r}") from exc
    comps = []
    for name in cp.sections():
        if not name.startswith("component"):
            continue
        sec = cp[name]
        try:
            weight = float(sec.get("weight", "1"))
        except ValueError as exc:
            raise InputError(f"[{name}] weight is not a number") from exc
        mean = _floats(sec.get("mean", "0"))
        scale = _floats(sec.get("scale", "1"))
        for label, v in (("mean", mean), ("scale", scale)):
            if v.size not in (1, dim):
                raise InputError(f"[{name}] {label} has {v.size} values, expected 1 or {dim}")
        comps.append(Component(weight, mean, scale))
    return DistributionSpec(kind, dim, tuple(comps))


def load_spec(path) -> DistributionSpec:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise InputError(f"cannot read distribution spec {path}: {exc}") from exc
    return parse_spec(text)
