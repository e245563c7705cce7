"""Wall time of pyramid selection against the maximal level.

Fits ``t = c log(L) L**2 2**L`` in log space and prints each ratio to the fit.

    python3 scripts/selection_timing.py --levels 6 7 8 9 10 11 12
"""

import argparse
import time

import numpy as np

from hypyr.frameworks import CoefficientTable
from hypyr.pyramid_models import SparsitySchedule
from hypyr.selection import PenaltyConfig, select_pyramid
from hypyr.uniwavelet import HaarBasis


def time_level(L, d, rng, repeats):
    schedule = SparsitySchedule.combinatorial(HaarBasis(), d, L)
    layout = schedule.layout
    table = CoefficientTable(layout, rng.normal(0, 0.3, layout.size), rng.uniform(0, 2, layout.size))
    cfg = PenaltyConfig(1000.0)
    best = np.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        select_pyramid(table, schedule, cfg)
        best = min(best, time.perf_counter() - t0)
    return best, layout.size


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--levels", nargs="+", type=int, default=list(range(6, 13)))
    p.add_argument("--d", type=int, default=2)
    p.add_argument("--repeats", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    args = p.parse_args(argv)

    rng = np.random.default_rng(args.seed)
    levels = np.array(args.levels)
    rows = [time_level(int(L), args.d, rng, args.repeats) for L in levels]
    times = np.array([t for t, _ in rows])
    model = np.log(levels) * levels**2 * 2.0**levels
    c = np.exp(np.mean(np.log(times / model)))
    for L, (t, size), ratio in zip(levels, rows, times / (c * model)):
        print(f"L={L:2d}  indices {size:7d}  time {t * 1e3:8.2f} ms  ratio to fit {ratio:.2f}")


if __name__ == "__main__":
    main()
