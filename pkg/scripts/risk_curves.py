"""Monte Carlo risk against sample size for built-in scenarios.

Replication seeds are shared across sample sizes, so curves are paired.

    python3 scripts/risk_curves.py --scenarios uniform2d mixture4 --n 500 2000 8000
"""

import argparse
import json

import numpy as np

from hypyr.simlab import PipelineConfig, get_scenario, loglog_slope, risk_curve


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--scenarios", nargs="+", default=["uniform2d", "mixture4"])
    p.add_argument("--n", nargs="+", type=int, default=[500, 2000, 8000])
    p.add_argument("--reps", type=int, default=50)
    p.add_argument("--seed", type=int, default=11)
    p.add_argument("--lmode", choices=["theory", "practice"], default="practice")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out")
    args = p.parse_args(argv)

    cfg = PipelineConfig(lmode=args.lmode)
    results = {}
    for name in args.scenarios:
        reports = risk_curve(get_scenario(name), cfg, args.n, args.reps, args.seed, args.workers)
        r = np.array([rep.risks for rep in reports])
        means = [rep.mean_risk for rep in reports]
        results[name] = {
            "n": args.n,
            "mean_risk": means,
            "std_error": [rep.std_error for rep in reports],
            "strictly_decreasing_pairs": float(np.mean(np.all(r[:-1] > r[1:], axis=0))),
            "zero_risk_fraction": float(np.mean(r == 0.0)),
            "loglog_slope": loglog_slope(args.n, means) if min(means) > 0 else None,
        }
        print(name)
        for n, m, s in zip(args.n, means, results[name]["std_error"]):
            print(f"  n={n:6d}  risk {m:.3e} +- {s:.1e}")
        print(f"  strictly decreasing pairs {results[name]['strictly_decreasing_pairs']:.0%}, "
              f"slope {results[name]['loglog_slope']}")
    if args.out:
        with open(args.out, "w") as fh:
            json.dump({"config": vars(args), "results": results}, fh, indent=2, sort_keys=True)


if __name__ == "__main__":
    main()
