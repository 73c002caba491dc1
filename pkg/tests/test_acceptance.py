"""Acceptance criteria, one PASS/FAIL line each (see the terminal summary).

Every test measures its own wall-clock time and folds the runtime budget
into the verdict. Timing-sensitive criteria (9) depend on the host.
"""

import contextlib
import io as _stdio
import math
import time

import numpy as np
import pytest

from kadtk import io as kio
from kadtk import synth
from kadtk.cli import main
from kadtk.embedmat import EmbeddingSet, GaussianStats
from kadtk.kernel import KernelSpec, median_bandwidth
from kadtk.metric import fad_inf_extrapolate, fad_score, kad_score, mmd2_unbiased
from kadtk.study import (RatingsTable, bandwidth_sweep, convergence_study, degrade_embeddings,
                         loglog_slope, spearman_correlation, timing_benchmark)

from oracles import naive_mmd2, spearman_brute

pytestmark = pytest.mark.acceptance


class Clock:
    def __enter__(self):
        self.t0 = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.seconds = time.perf_counter() - self.t0


def _mixture(d, a=2.0, s=1.0):
    m = np.zeros(d)
    m[0] = a
    return synth.mixture([0.5, 0.5], [m, -m], [np.full(d, s)] * 2)


@pytest.fixture(scope="module")
def mixture_pools():
    spec = _mixture(16)
    ref = synth.sample(spec, 2000, seed=1001, label="ref")
    ev = synth.sample(spec, 3200, seed=1002, label="eval")
    return ref, ev


SIZES = [100, 200, 400, 800, 1600]


def test_c01_mmd_oracle(acceptance_report):
    rng = np.random.default_rng(1)
    worst = 0.0
    with Clock() as c:
        for _ in range(100):
            n, m, d = rng.integers(2, 51), rng.integers(2, 51), rng.integers(1, 9)
            sigma = rng.uniform(0.5, 5.0)
            x = rng.standard_normal((n, d))
            y = rng.standard_normal((m, d)) * rng.uniform(0.5, 2) + rng.uniform(-1, 1)
            got = mmd2_unbiased(x, y, KernelSpec(sigma))
            ref = naive_mmd2(x, y, sigma)
            worst = max(worst, abs(got - ref) / max(abs(ref), 1e-300))
    ok = acceptance_report("1 MMD oracle equivalence", worst <= 1e-10 and c.seconds < 5,
                           f"max rel err {worst:.2e} (<= 1e-10), {c.seconds:.2f} s (< 5 s)")
    assert ok


def test_c02_fad_oracle(acceptance_report):
    rng = np.random.default_rng(2)
    worst_rel = 0.0
    with Clock() as c:
        for _ in range(100):
            d = int(rng.integers(1, 9))
            a = synth.gaussian(rng.normal(size=d), rng.uniform(0.1, 3, d))
            b = synth.gaussian(rng.normal(size=d), rng.uniform(0.1, 3, d))
            sa, sb = (GaussianStats(*synth.moments(s)) for s in (a, b))
            truth = synth.analytic_fad(a, b)
            worst_rel = max(worst_rel, abs(fad_score(sa, sb).value - truth) / truth)
        # sampled: unit-scale fixtures, d = 1..8, N = 20000 per side
        worst_abs = 0.0
        for i, d in enumerate((1, 2, 4, 8, 8)):
            a = synth.gaussian(rng.uniform(-0.5, 0.5, d), rng.uniform(0.75, 1.25, d))
            b = synth.gaussian(rng.uniform(-0.5, 0.5, d), rng.uniform(0.75, 1.25, d))
            est = fad_score(synth.sample(a, 20000, seed=10 * i), synth.sample(b, 20000, seed=10 * i + 1))
            worst_abs = max(worst_abs, abs(est.value - synth.analytic_fad(a, b)))
    ok = acceptance_report(
        "2 FAD oracle equivalence",
        worst_rel <= 1e-10 and worst_abs <= 0.05 and c.seconds < 30,
        f"moments max rel err {worst_rel:.2e} (<= 1e-10), sampled max abs err "
        f"{worst_abs:.4f} (<= 0.05), {c.seconds:.2f} s (< 30 s)")
    assert ok


def test_c03_kad_unbiased(acceptance_report, mixture_pools):
    with Clock() as c:
        s = convergence_study(*mixture_pools, SIZES, trials=20, seed=3, metric="kad")
    last = s.points[-1]
    sd_last = (last.hi - last.lo) / 2
    worst = 0.0
    for p in s.points:
        sd = (p.hi - p.lo) / 2
        pooled = math.sqrt((sd * sd + sd_last * sd_last) / 2)
        worst = max(worst, abs(p.mean - last.mean) / pooled)
    ok = acceptance_report("3 KAD unbiasedness", worst < 1.0 and c.seconds < 120,
                           f"max |mean(N) - mean(1600)| / pooled sd = {worst:.3f} (< 1), "
                           f"{c.seconds:.1f} s (< 120 s)")
    assert ok


def test_c04_fad_bias_law(acceptance_report, mixture_pools):
    with Clock() as c:
        s = convergence_study(*mixture_pools, SIZES, trials=20, seed=4, metric="fad")
    fit = fad_inf_extrapolate([(p.x, p.mean) for p in s.points])
    bias = s.means - fit.intercept
    ratio = float(np.mean(bias[1:] / bias[:-1]))
    ok = acceptance_report(
        "4 FAD bias law",
        fit.r_squared >= 0.9 and 0.35 <= ratio <= 0.65 and c.seconds < 120,
        f"r^2 = {fit.r_squared:.4f} (>= 0.9), mean doubling ratio {ratio:.3f} "
        f"(in [0.35, 0.65]), {c.seconds:.1f} s (< 120 s)")
    assert ok


def test_c05_normality_failure(acceptance_report):
    with Clock() as c:
        mix = _mixture(2, a=2.0, s=0.5)
        gauss = synth.moment_matched_gaussian(mix)
        n = 2000
        x = synth.sample(mix, n, seed=51, label="mixture")
        y = synth.sample(gauss, n, seed=52, label="gaussian")
        spec = KernelSpec(median_bandwidth(x))
        fad = fad_score(x, y).value
        kad = kad_score(x, y, spec).value
        pool = synth.sample(mix, 2 * n, seed=53).data
        null = []
        for i in range(50):
            perm = synth.rng_stream(53, "null-split", i).permutation(2 * n)
            null.append(kad_score(pool[perm[:n]], pool[perm[n:]], spec).value)
        null_sd = float(np.std(null, ddof=1))
    ok = acceptance_report(
        "5 normality-assumption failure",
        fad <= 0.05 and kad >= 10 * null_sd and c.seconds < 120,
        f"FAD = {fad:.4f} (<= 0.05), KAD = {kad:.4f} = {kad / null_sd:.1f} x null sd "
        f"(>= 10), {c.seconds:.1f} s (< 120 s)")
    assert ok


def test_c06_bandwidth_sweep(acceptance_report):
    with Clock() as c:
        clean = synth.sample(synth.gaussian(np.zeros(32), np.ones(32)), 2000, seed=61, label="clean")
        levels = [0.05, 0.1, 0.2, 0.4, 0.8]
        sigma = median_bandwidth(clean)
        series = [degrade_embeddings(clean, "gaussian_noise", lv, 62, bandwidth=sigma)
                  for lv in levels]
        scales = [10.0 ** k for k in range(-3, 4)]
        out = dict(zip(scales, bandwidth_sweep(clean, series, scales, levels=levels, sigma=sigma)))
    mono = {k: out[k].meta["monotone"] == "true" for k in (1.0, 10.0, 100.0)}
    # clipping alone makes an all-negative series "monotone", so also require
    # the unclipped estimates to be nondecreasing
    raw_mono = {k: bool(np.all(np.diff([float(v) for v in out[k].meta["raw"].split(";")]) >= 0))
                for k in (1.0, 10.0, 100.0)}
    clipped = {k: int(out[k].meta["clipped"]) for k in (0.001, 0.01, 0.1)}
    ok = acceptance_report(
        "6 bandwidth sweep",
        all(mono.values()) and all(raw_mono.values()) and all(v >= 1 for v in clipped.values())
        and c.seconds < 60,
        f"monotone at 1x/10x/100x: {list(mono.values())} (unclipped: {list(raw_mono.values())}), "
        f"clipped counts at 0.001x/0.01x/0.1x: {list(clipped.values())}, {c.seconds:.1f} s (< 60 s)")
    assert ok


def test_c07_fad_inf(acceptance_report):
    with Clock() as c:
        a, b = 3.7, 123.4
        fit = fad_inf_extrapolate([(n, a + b / n) for n in (50, 100, 200, 400, 800)])
    ea, eb = abs(fit.intercept - a) / a, abs(fit.slope - b) / b
    ok = acceptance_report("7 FAD-inf extrapolation", max(ea, eb) <= 1e-9 and c.seconds < 1,
                           f"rel err intercept {ea:.1e}, slope {eb:.1e} (<= 1e-9), "
                           f"{c.seconds * 1e3:.1f} ms (< 1 s)")
    assert ok


def _table(a, b):
    return RatingsTable(tuple((f"s{i}", x, y) for i, (x, y) in enumerate(zip(a, b))))


def test_c08_spearman(acceptance_report):
    with Clock() as c:
        up = spearman_correlation(_table([1, 2, 3, 4, 5], [10, 20, 30, 40, 50]))
        down = spearman_correlation(_table([1, 2, 3, 4, 5], [50, 40, 30, 20, 10]))
        tie = spearman_correlation(_table([1, 2, 2, 4], [1, 2, 3, 4]))
    tie_err = abs(tie.rho - spearman_brute([1, 2, 2, 4], [1, 2, 3, 4]))
    p_err = abs(down.p_value - 2 / 120)
    ok = acceptance_report(
        "8 Spearman fixtures",
        up.rho == 1.0 and down.rho == -1.0 and p_err <= 1e-15 and tie_err <= 1e-12
        and c.seconds < 1,
        f"rho = {up.rho:g}/{down.rho:g}, |p - 2/120| = {p_err:.1e}, tie err {tie_err:.1e} "
        f"(<= 1e-12), {c.seconds * 1e3:.1f} ms (< 1 s)")
    assert ok


def test_c09_complexity_gap(acceptance_report):
    dims = [128, 512, 2048]
    with Clock() as c:
        series = timing_benchmark(dims, [1000], trials=10, warmup=1, seed=9)
    t = {(s.meta["metric"], int(s.meta["d"])): s.points[0].mean for s in series}
    fad_slope = loglog_slope(dims, [t[("fad", d)] for d in dims])
    kad_slope = loglog_slope(dims, [t[("kad", d)] for d in dims])
    ratio = t[("fad", 2048)] / t[("kad", 2048)]
    ok = acceptance_report(
        "9 complexity gap",
        fad_slope - kad_slope >= 1.0 and ratio >= 10 and c.seconds < 300,
        f"slope FAD {fad_slope:.2f} - KAD {kad_slope:.2f} = {fad_slope - kad_slope:.2f} (>= 1), "
        f"FAD/KAD at d=2048 = {ratio:.1f}x (>= 10), {c.seconds:.1f} s (< 300 s)")
    assert ok


def _run_cli(argv):
    err = _stdio.StringIO()
    with contextlib.redirect_stdout(_stdio.StringIO()), contextlib.redirect_stderr(err):
        code = main(argv)
    return code, err.getvalue()


def test_c10_io_round_trips(acceptance_report, tmp_path):
    rng = np.random.default_rng(10)
    failures = []
    with Clock() as c:
        for i in range(50):
            n, d = int(rng.integers(1, 200)), int(rng.integers(1, 64))
            dtype = (np.float32, np.float64)[i % 2]
            e = EmbeddingSet((rng.standard_normal((n, d)) * 10 ** rng.uniform(-6, 6)).astype(dtype))
            for suffix in (".npy", ".csv"):
                p = tmp_path / f"rt{i}{suffix}"
                kio.write_embeddings(e, p)
                back = kio.read_embeddings(p).data.astype(dtype)
                if back.tobytes() != e.data.tobytes():
                    failures.append(p.name)

        good = tmp_path / "good.npy"
        kio.write_embeddings(EmbeddingSet(rng.standard_normal((10, 3))), good)
        header = good.read_bytes()[:64]
        nan = np.ones((3, 2))
        nan[1, 1] = np.nan
        np.save(tmp_path / "nan.npy", nan)
        corrupt = {
            "truncated.npy": header + b"\x00" * 20,
            "badmagic.npy": b"\x00NUMPX\x01\x00" + header[8:],
            "badheader.npy": header[:10] + b"{'descr': nonsense" + b" " * 35 + b"\n",
            "nan.npy": (tmp_path / "nan.npy").read_bytes(),
            "nosidecar.f32": b"\x00" * 24,
            "garbage.csv": b"1.0,2.0\nthree,4.0\n",
        }
        codes = {}
        for name, payload in corrupt.items():
            p = tmp_path / "bad" / name
            p.parent.mkdir(exist_ok=True)
            p.write_bytes(payload)
            code, err = _run_cli(["score", str(good), str(p), "-o", str(tmp_path / "o.csv")])
            codes[name] = (code, str(p) in err or p.name in err)
    bad_codes = {k: v for k, v in codes.items() if v != (2, True)}
    ok = acceptance_report(
        "10 I/O round-trips", not failures and not bad_codes and c.seconds < 10,
        f"{100 - len(failures)}/100 bit-exact round-trips, {len(codes) - len(bad_codes)}/"
        f"{len(codes)} corrupt fixtures exit 2 with diagnostics, {c.seconds:.2f} s (< 10 s)")
    assert ok


def test_c11_determinism(acceptance_report, tmp_path, mixture_pools):
    ref, ev = mixture_pools
    rp, ep = tmp_path / "ref.npy", tmp_path / "eval.npy"
    kio.write_embeddings(ref.subset(np.arange(600)), rp)
    kio.write_embeddings(ev.subset(np.arange(800)), ep)
    ratings = tmp_path / "ratings.csv"
    ratings.write_text("system_id,metric_score,human_rating\n"
                       + "".join(f"s{i},{(i * 7) % 11},{i}\n" for i in range(10)))
    commands = {
        "score": ["score", str(rp), str(ep)],
        "sweep": ["sweep", str(rp), "--recipe", "gaussian_noise"],
        "convergence": ["convergence", str(rp), str(ep), "--sizes", "100,200,400", "--trials", "5"],
        "correlate": ["correlate", "--ratings", str(ratings)],
    }
    mismatched = []
    with Clock() as c:
        for name, argv in commands.items():
            outputs = []
            for k, threads in enumerate(("1", "8", "8")):
                out = tmp_path / f"{name}_{k}.csv"
                code, err = _run_cli(argv + ["--threads", threads, "-o", str(out)])
                assert code == 0, err
                blob = out.read_bytes()
                extra = out.with_name(out.stem + "_monotonicity.csv")
                if extra.exists():
                    blob += extra.read_bytes()
                outputs.append(blob)
            if len(set(outputs)) != 1:
                mismatched.append(name)
    ok = acceptance_report(
        "11 determinism", not mismatched and c.seconds < 60,
        f"{len(commands) - len(mismatched)}/{len(commands)} commands byte-identical across "
        f"--threads 1/8 and repeat runs, {c.seconds:.1f} s (< 60 s)")
    assert ok
