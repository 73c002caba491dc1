"""Wall-clock KAD vs FAD over embedding dimension and sample size.

Writes ``timing.csv`` (metric, d, N, mean_ms, p5_ms, p95_ms) and prints the
log-log slope of time against d for each metric at every N. Absolute times
depend on the host; the slopes and ratios are what carry over.

    python3 scripts/timing.py --dims 128,512,2048 --sizes 1000 --trials 20
"""

from __future__ import annotations

from dataclasses import dataclass

from kadtk.io import fmt17, write_rows
from kadtk.study import loglog_slope, timing_benchmark

from _common import out_dir, parse_config


@dataclass
class TimingConfig:
    dims: tuple = (128, 512, 2048)
    sizes: tuple = (100, 1000)
    trials: int = 20
    warmup: int = 2
    seed: int = 42
    out: str = "results"


def main(cfg: TimingConfig) -> None:
    series = timing_benchmark(cfg.dims, cfg.sizes, trials=cfg.trials, warmup=cfg.warmup,
                              seed=cfg.seed)
    table = {}
    rows = []
    for s in series:
        metric, d = s.meta["metric"], int(s.meta["d"])
        for p in s.points:
            table[(metric, d, int(p.x))] = p.mean
            rows.append([metric, d, int(p.x), fmt17(p.mean), fmt17(p.lo), fmt17(p.hi)])
    rows.sort(key=lambda r: (r[1], r[2], r[0]))
    dims = sorted(set(cfg.dims))
    for n in sorted(set(cfg.sizes)):
        slopes = {m: loglog_slope(dims, [table[(m, d, n)] for d in dims]) for m in ("kad", "fad")}
        ratio = table[("fad", dims[-1], n)] / table[("kad", dims[-1], n)]
        print(f"N={n:>6}: slope vs d  FAD {slopes['fad']:.2f}  KAD {slopes['kad']:.2f}; "
              f"FAD/KAD at d={dims[-1]}: {ratio:.1f}x")
    path = out_dir(cfg.out) / "timing.csv"
    write_rows(path, ["metric", "d", "N", "mean_ms", "p5_ms", "p95_ms"], rows)
    print(f"wrote {path}")


if __name__ == "__main__":
    main(parse_config(TimingConfig, __doc__.splitlines()[0]))
