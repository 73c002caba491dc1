"""Command-line interface: ``kadtk {score,sweep,convergence,correlate,bench,synth}``.

Exit codes: 0 success, 2 input/validation error, 3 numerical/resource error.
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import math
import os
import shlex
import sys
import time
import warnings
from pathlib import Path

import numpy as np

from . import __version__
from .embedmat import self_distance_blocks, set_num_threads
from .errors import InputError, NumericalError, ResourceError
from .io import (RunManifest, fmt17, load_embeddings, read_ratings, write_embeddings,
                 write_rows, write_scores)
from .kernel import KernelSpec, bandwidth_scale_grid, median_bandwidth
from .metric import DEFAULT_ALPHA, fad_score, kad_score
from .study import (bandwidth_sweep, convergence_study, degrade_embeddings,
                    spearman_correlation, timing_benchmark)
from .synth import load_spec, moments, sample

log = logging.getLogger("kadtk")

# Keep the reference self-distance tiles in memory (for median + self term)
# up to this many rows: ~N^2/2 float64 values.
SHARE_BLOCKS_MAX_N = 8192


def _g6(v: float) -> str:
    return format(float(v), ".6g")


def _int_list(text: str) -> list[int]:
    try:
        return [int(t) for t in text.split(",") if t.strip()]
    except ValueError as exc:
        raise InputError(f"expected a comma-separated list of integers, got {text!r}") from exc


def _float_list(text: str) -> list[float]:
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError as exc:
        raise InputError(f"expected a comma-separated list of numbers, got {text!r}") from exc


def _exp_range(text: str) -> list[float]:
    try:
        lo, hi = (int(t) for t in text.split(":"))
    except ValueError as exc:
        raise InputError(f"scales must look like 'MIN:MAX' exponents, got {text!r}") from exc
    return bandwidth_scale_grid(lo, hi)


def _bandwidth(text: str) -> float | None:
    if text == "median":
        return None
    try:
        v = float(text)
    except ValueError as exc:
        raise InputError(f"bandwidth must be 'median' or a positive number, got {text!r}") from exc
    if not (math.isfinite(v) and v > 0):
        raise InputError(f"bandwidth must be positive, got {text!r}")
    return v


def _metrics(choice: str) -> list[str]:
    return ["kad", "fad"] if choice == "both" else [choice]


def _manifest(args, inputs, **config) -> RunManifest:
    config.setdefault("threads", args.threads)
    return RunManifest.for_inputs(args.command_line, args.seed, inputs, **config)


# --------------------------------------------------------------------------
# subcommands

def cmd_score(args) -> int:
    ref = load_embeddings(args.ref, frame_level=args.frame_level)
    ev = load_embeddings(args.eval, frame_level=args.frame_level)
    if ref.d != ev.d:
        raise InputError(f"dimension mismatch: reference d={ref.d}, eval d={ev.d}")
    sigma = _bandwidth(args.bandwidth)
    records = []
    for metric in _metrics(args.metric):
        t0 = time.perf_counter()
        if metric == "kad":
            blocks = None
            if sigma is None and ref.n <= SHARE_BLOCKS_MAX_N:
                blocks = self_distance_blocks(ref)
            spec = None if sigma is None else KernelSpec(sigma=sigma)
            rec = kad_score(ref, ev, spec, alpha=args.alpha, x_blocks=blocks)
        else:
            rec = fad_score(ref, ev)
        if args.timing:
            rec = dataclasses.replace(rec, wall_ms=(time.perf_counter() - t0) * 1e3)
        records.append(rec)

    write_scores(records, args.output)
    _manifest(args, [args.ref, args.eval], metric=args.metric, bandwidth=args.bandwidth,
              alpha=fmt17(args.alpha), frame_level=args.frame_level).write(args.output)
    for r in records:
        if r.metric == "kad":
            print(f"KAD  {_g6(r.value)}  (sigma={_g6(r.kernel.sigma)}, alpha={_g6(r.alpha)}, "
                  f"n_ref={r.n_ref}, n_eval={r.n_eval}, d={r.dim})")
        else:
            print(f"FAD  {_g6(r.value)}  (n_ref={r.n_ref}, n_eval={r.n_eval}, d={r.dim})")
    if any(r.metric == "kad" and r.value < 0 for r in records):
        print("note: negative KAD is expected from the unbiased estimator when the sets "
              "are statistically indistinguishable; it is reported unclamped.")
    return 0


def cmd_sweep(args) -> int:
    ref = load_embeddings(args.ref, frame_level=args.frame_level)
    scales = _exp_range(args.scales)
    sigma = median_bandwidth(ref)
    levels = None
    if args.degraded:
        degraded = [load_embeddings(p, frame_level=args.frame_level) for p in args.degraded]
    elif args.recipe:
        levels = _float_list(args.levels)
        if not levels:
            raise InputError("no degradation levels given")
        degraded = [degrade_embeddings(ref, args.recipe, lv, args.seed, bandwidth=sigma)
                    for lv in levels]
    else:
        raise InputError("nothing to sweep: give degraded embedding paths or --recipe")
    series = bandwidth_sweep(ref, degraded, scales, levels=levels, sigma=sigma)

    rows, summary = [], []
    for s in series:
        raw = s.meta["raw"].split(";")
        labels = s.meta["labels"].split(";")
        for p, r, lab in zip(s.points, raw, labels):
            rows.append([s.meta["scale"], fmt17(p.x), lab, r, fmt17(p.mean),
                         str(float(r) < float(s.meta["eps"])).lower()])
        summary.append([s.meta["scale"], s.meta["monotone"], s.meta["clipped"]])
    out = Path(args.output)
    write_rows(out, ["scale", "level", "label", "mmd2", "normalized", "clipped"], rows)
    summary_path = out.with_name(out.stem + "_monotonicity.csv")
    write_rows(summary_path, ["scale", "monotone", "clipped"], summary)
    _manifest(args, [args.ref, *args.degraded], scales=args.scales, sigma=fmt17(sigma),
              recipe=args.recipe or "", levels=args.levels if levels else "").write(out)

    print(f"median sigma = {_g6(sigma)}")
    print(f"{'scale':>10}  {'monotone':>8}  {'clipped':>7}")
    for scale, mono, clipped in summary:
        print(f"{_g6(float(scale)):>10}  {mono:>8}  {clipped:>7}")
    return 0


def _default_sizes(n_eval: int) -> list[int]:
    sizes, s = [], 100
    while s <= n_eval:
        sizes.append(s)
        s *= 2
    if not sizes:
        raise InputError(f"evaluation set has only {n_eval} rows; pass --sizes explicitly")
    return sizes


def cmd_convergence(args) -> int:
    ref = load_embeddings(args.ref, frame_level=args.frame_level)
    ev = load_embeddings(args.eval, frame_level=args.frame_level)
    sizes = _int_list(args.sizes) if args.sizes else _default_sizes(ev.n)
    sigma = _bandwidth(args.bandwidth)
    rows, config = [], {}
    for metric in _metrics(args.metric):
        s = convergence_study(ref, ev, sizes, trials=args.trials, seed=args.seed, metric=metric,
                              kernel=sigma, alpha=args.alpha)
        inf = float(s.meta["inf_value"])
        for p in s.points:
            norm = fmt17(p.mean / inf) if inf != 0 else ""
            rows.append([metric, str(int(p.x)), fmt17(p.mean), fmt17((p.hi - p.lo) / 2), norm])
        config[f"{metric}_inf"] = s.meta["inf_value"]
        config[f"{metric}_inf_r_squared"] = s.meta.get("inf_r_squared", "")
        if metric == "kad":
            config["sigma"] = s.meta["sigma"]
        print(f"{metric.upper()}_inf = {_g6(inf)}")
    write_rows(args.output, ["metric", "N", "mean", "std", "normalized_mean"], rows)
    _manifest(args, [args.ref, args.eval], sizes=",".join(map(str, sizes)), trials=args.trials,
              metric=args.metric, alpha=fmt17(args.alpha), **config).write(args.output)
    for r in rows:
        print(f"{r[0]:>4} N={r[1]:>6}  mean={_g6(float(r[2]))}  std={_g6(float(r[3]))}"
              + (f"  normalized={_g6(float(r[4]))}" if r[4] else ""))
    return 0


def cmd_correlate(args) -> int:
    table = read_ratings(args.ratings, args.scores, metric=args.metric)
    res = spearman_correlation(table)
    significant = res.p_value <= 0.05
    write_rows(args.output, ["rho", "p_value", "method", "n", "significant"],
               [[fmt17(res.rho), fmt17(res.p_value), res.method, res.n, str(significant).lower()]])
    inputs = [args.ratings] + ([args.scores] if args.scores else [])
    _manifest(args, inputs, metric=args.metric).write(args.output)
    print(f"Spearman rho = {_g6(res.rho)}, p = {_g6(res.p_value)} ({res.method}, n = {res.n})")
    if res.method == "t-approx" and res.p_value == 0.0:
        print("note: |rho| = 1, the t statistic diverges; p is below the smallest representable value")
    if not significant:
        print("not significant (p > 0.05)")
    return 0


def cmd_bench(args) -> int:
    dims, sizes = _int_list(args.dims), _int_list(args.sizes)
    if args.trials < 10:
        print(f"warning: only {args.trials} trials; percentiles will be unreliable",
              file=sys.stderr)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        series = timing_benchmark(dims, sizes, trials=args.trials, warmup=args.warmup,
                                  seed=args.seed)
    rows = []
    for s in series:
        pct = dict((int(n), (p5, p95)) for n, p5, p95 in
                   (item.split(":") for item in s.meta["percentiles"].split(";")))
        for p in s.points:
            p5, p95 = pct[int(p.x)]
            rows.append([s.meta["metric"], s.meta["d"], str(int(p.x)), fmt17(p.mean), p5, p95])
    rows.sort(key=lambda r: (int(r[1]), int(r[2]), r[0]))
    write_rows(args.output, ["metric", "d", "N", "mean_ms", "p5_ms", "p95_ms"], rows)
    _manifest(args, [], dims=args.dims, sizes=args.sizes, trials=args.trials,
              warmup=args.warmup).write(args.output)
    print(f"{'d':>6} {'N':>7} {'metric':>6} {'mean_ms':>12} {'p5_ms':>12} {'p95_ms':>12}")
    for m, d, n, mean, p5, p95 in rows:
        print(f"{d:>6} {n:>7} {m:>6} {float(mean):>12.3f} {float(p5):>12.3f} {float(p95):>12.3f}")
    return 0


def cmd_synth(args) -> int:
    spec = load_spec(args.spec)
    out = Path(args.output)
    dtype = np.float32 if args.dtype == "f32le" else np.float64
    emb = sample(spec, args.n, args.seed, label=out.stem, dtype=dtype)
    write_embeddings(emb, out, dtype=args.dtype)
    _manifest(args, [args.spec], n=args.n, dtype=args.dtype).write(out)
    mu, cov = moments(spec)
    print(f"wrote {emb.n} x {emb.d} {args.dtype} to {out}")
    print("mean:     " + " ".join(_g6(v) for v in mu))
    print("variance: " + " ".join(_g6(v) for v in np.diag(cov)))
    print(f"trace(cov) = {_g6(np.trace(cov))}")
    return 0


# --------------------------------------------------------------------------

def _default_threads() -> int:
    env = os.environ.get("KADTK_THREADS")
    if env:
        try:
            return int(env)
        except ValueError:
            pass
    return os.cpu_count() or 1


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=42)
    common.add_argument("--threads", type=int, default=_default_threads(),
                        help="worker threads (default: $KADTK_THREADS or all cores)")
    common.add_argument("-v", "--verbose", action="count", default=0)

    parser = argparse.ArgumentParser(prog="kadtk", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"kadtk {__version__}")
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p = sub.add_parser("score", parents=[common], help="KAD and/or FAD between two embedding sets")
    p.add_argument("ref", help="reference embeddings (file or directory)")
    p.add_argument("eval", help="evaluation embeddings (file or directory)")
    p.add_argument("--metric", choices=["kad", "fad", "both"], default="both")
    p.add_argument("--bandwidth", default="median", help="'median' or an explicit sigma")
    p.add_argument("--alpha", type=float, default=DEFAULT_ALPHA)
    p.add_argument("--frame-level", action="store_true",
                   help="treat every frame of per-clip files as a sample instead of mean-pooling")
    p.add_argument("--timing", action="store_true", help="record wall_ms in the CSV")
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("sweep", parents=[common], help="bandwidth sweep over a degradation series")
    p.add_argument("ref")
    p.add_argument("degraded", nargs="*", help="degraded embedding sets, mildest first")
    p.add_argument("--recipe", choices=["gaussian_noise", "mean_shrink"],
                   help="synthesize the degradation series from the reference")
    p.add_argument("--levels", default="0.05,0.1,0.2,0.4,0.8")
    p.add_argument("--scales", default="-3:3", help="exponent range, e.g. --scales=-3:3")
    p.add_argument("--frame-level", action="store_true")
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("convergence", parents=[common], help="score vs evaluation sample size")
    p.add_argument("ref")
    p.add_argument("eval")
    p.add_argument("--sizes", default=None, help="comma list (default: 100, 200, ... <= N)")
    p.add_argument("--trials", type=int, default=20)
    p.add_argument("--metric", choices=["kad", "fad", "both"], default="both")
    p.add_argument("--bandwidth", default="median")
    p.add_argument("--alpha", type=float, default=DEFAULT_ALPHA)
    p.add_argument("--frame-level", action="store_true")
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_convergence)

    p = sub.add_parser("correlate", parents=[common], help="Spearman correlation with ratings")
    p.add_argument("--scores", default=None,
                   help="score CSV (joined on its eval column) or 'system_id,metric_score' CSV")
    p.add_argument("--ratings", required=True)
    p.add_argument("--metric", choices=["kad", "fad", "mmd2"], default="kad")
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_correlate)

    p = sub.add_parser("bench", parents=[common], help="wall-clock benchmark of KAD vs FAD")
    p.add_argument("--dims", default="128,512,2048")
    p.add_argument("--sizes", default="100,5000,10000")
    p.add_argument("--trials", type=int, default=200)
    p.add_argument("--warmup", type=int, default=10)
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("synth", parents=[common], help="sample embeddings from a distribution spec")
    p.add_argument("spec")
    p.add_argument("-n", type=int, required=True)
    p.add_argument("--dtype", choices=["f32le", "f64le"], default="f64le")
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_synth)
    return parser


def main(argv: list[str] | None = None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    args.command_line = "kadtk " + " ".join(shlex.quote(a) for a in argv)
    try:
        set_num_threads(args.threads)
        return args.func(args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (NumericalError, ResourceError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except MemoryError as exc:
        print(f"error: out of memory: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
