"""Command-line interface.

Commands: ``estimate``, ``simulate``, ``risk-curve``, ``inspect-models``,
``selftest``. Exit codes: 0 success, 2 configuration error, 3 data error,
4 self-test failure.

Every artifact embeds the resolved run configuration and the library
version. JSON artifacts carry them inline; CSV artifacts get a sidecar
``<file>.meta.json``. The worker count is left out of the echoed
configuration because results do not depend on it.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
from dataclasses import asdict, dataclass, fields
from typing import Optional

import numpy as np

from . import __version__
from .frameworks import KINDS, IngestionError, default_max_level, empirical_coefficients, ingest, read_csv, write_csv
from .frameworks import sup_norm_proxy
from .hyperbolic import Domain
from .pyramid_models import SparsitySchedule, inspect_rows
from .selection import PenaltyConfig, assemble_estimator, select_pyramid
from .uniwavelet import HaarBasis

log = logging.getLogger("hypyr")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_SELFTEST = 0, 2, 3, 4

# total grid rows are kept below 2**MAX_GRID_BITS
MAX_GRID_BITS = 18


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    command: str
    input: Optional[str] = None
    framework: Optional[str] = None
    domain: Optional[list] = None
    dim: Optional[int] = None
    j0: int = 0
    lmode: str = "practice"
    L: Optional[int] = None
    c1: float = 1.5
    c2: float = 0.5
    rbar: Optional[float] = None
    per_axis_level: Optional[int] = None
    T: Optional[float] = None
    delta: Optional[float] = None
    path: bool = False
    grid_level: Optional[int] = None
    scenario: Optional[str] = None
    n: Optional[list] = None
    replications: Optional[int] = None
    estimator: str = "selected"
    seed: int = 0
    out: Optional[str] = None

    @classmethod
    def from_dict(cls, obj: dict) -> "RunConfig":
        names = {f.name for f in fields(cls)}
        unknown = set(obj) - names
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**obj)


def parse_domain(text: str) -> Domain:
    try:
        vals = [float(v) for v in text.split(",")]
    except ValueError:
        raise ConfigError(f"--domain expects comma-separated numbers, got {text!r}") from None
    if len(vals) < 2 or len(vals) % 2:
        raise ConfigError("--domain expects pairs a1,b1,a2,b2,...")
    try:
        return Domain(tuple(vals[0::2]), tuple(vals[1::2]))
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def _threads(arg: Optional[int]) -> int:
    if arg is not None:
        return max(1, arg)
    env = os.environ.get("HYPYR_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ConfigError(f"HYPYR_THREADS must be an integer, got {env!r}") from None
    return 1


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _write_text(path: Optional[str], text: str) -> None:
    if path is None or path == "-":
        sys.stdout.write(text)
    else:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)


def _meta(cfg: RunConfig, **extra) -> dict:
    return {"version": __version__, "config": asdict(cfg), **extra}


def _stem(out: str) -> str:
    return out[:-5] if out.endswith(".json") else out


# --- estimate ---------------------------------------------------------------


def grid_level_for(L: int, d: int, requested: Optional[int] = None) -> int:
    """``2**g`` cells per axis, ``g = min(max(L, 6), 8)`` unless requested."""
    g = min(max(L, 6), 8) if requested is None else requested
    return max(0, min(g, MAX_GRID_BITS // d))


def run_estimate(cfg: RunConfig, threads: int) -> tuple[dict, list]:
    if cfg.input is None:
        raise ConfigError("estimate needs an input CSV")
    if cfg.framework not in KINDS:
        raise ConfigError(f"--framework must be one of {KINDS}")
    raw = read_csv(cfg.input)
    d = raw.shape[1]
    if cfg.dim is not None and cfg.dim != d:
        raise ConfigError(f"--dim {cfg.dim} but the CSV has {d} columns")
    domain = None
    if cfg.domain is not None:
        if cfg.framework == "copula":
            raise ConfigError("copula data live on the unit cube; drop --domain")
        domain = parse_domain(",".join(str(v) for v in cfg.domain))
        if domain.dim != d and not (cfg.path and domain.dim == d):
            raise ConfigError(f"--domain has dimension {domain.dim}, the CSV has {d} columns")
    elif cfg.framework != "copula":
        domain = Domain.unit(d)
    data = ingest(cfg.framework, raw, domain, T=cfg.T, delta=cfg.delta, path=cfg.path)
    basis = HaarBasis(j0=cfg.j0)
    if cfg.L is not None:
        L = cfg.L
        if L < d * cfg.j0:
            raise ConfigError(f"--L {L} below d*j0")
    else:
        if cfg.lmode not in ("theory", "practice"):
            raise ConfigError("--lmode must be theory or practice")
        try:
            L = default_max_level(data, cfg.lmode, cfg.j0)
        except ValueError as exc:
            raise ConfigError(f"{exc}; pass --L explicitly") from None
    table = empirical_coefficients(data, basis, L, threads=threads)
    schedule = SparsitySchedule.combinatorial(basis, d, L)
    if cfg.rbar is not None:
        rbar = cfg.rbar
    else:
        rbar = sup_norm_proxy(table, basis, data.domain, cfg.per_axis_level)
    try:
        pen = PenaltyConfig(data.n_bar, max(rbar, 1.0), cfg.c1, cfg.c2)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    result = select_pyramid(table, schedule, pen, data.kind, data.domain)
    est = assemble_estimator(result, basis, data.domain, table.layout)
    g = grid_level_for(L, d, cfg.grid_level)
    cells = 2**g
    vals = est.cell_values(cells).ravel()
    axes = [lo + (hi - lo) * (np.arange(cells) + 0.5) / cells for lo, hi in zip(data.domain.lower, data.domain.upper)]
    pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, d)
    rows = [list(p) + [v] for p, v in zip(pts.tolist(), vals.tolist())]
    report = _meta(
        cfg,
        kind=data.kind,
        n_points=data.n_points,
        dropped=data.dropped,
        n_bar=data.n_bar,
        L_bullet=L,
        R_hat=rbar,
        grid_level=g,
        result=result.to_json(),
    )
    return report, rows


def cmd_estimate(cfg: RunConfig, threads: int) -> int:
    report, rows = run_estimate(cfg, threads)
    if cfg.out:
        stem = _stem(cfg.out)
        _write_text(stem + ".json", _dump(report))
        header = [f"x{i + 1}" for i in range(len(rows[0]) - 1)] + ["value"]
        write_csv(stem + "_grid.csv", rows, header)
        _write_text(stem + "_grid.csv.meta.json", _dump(_meta(cfg, grid_level=report["grid_level"])))
    else:
        _write_text(None, _dump(report))
    return EXIT_OK


# --- simulate ---------------------------------------------------------------


def cmd_simulate(cfg: RunConfig) -> int:
    from .simlab import get_scenario, sample

    try:
        sc = get_scenario(cfg.scenario)
    except KeyError as exc:
        raise ConfigError(exc.args[0]) from None
    if not cfg.n or len(cfg.n) != 1:
        raise ConfigError("simulate takes a single n")
    n = cfg.n[0]
    if cfg.path and sc.kind != "levy-discrete":
        raise ConfigError("--path only applies to levy-discrete scenarios")
    pts = sample(sc, n, cfg.seed, path=cfg.path)
    header = [f"x{i + 1}" for i in range(sc.dim)]
    meta = _meta(cfg, scenario=sc.to_json(), rows=int(pts.shape[0]))
    if cfg.out:
        write_csv(cfg.out, pts.tolist(), header)
        _write_text(cfg.out + ".meta.json", _dump(meta))
    else:
        sys.stdout.write(",".join(header) + "\n")
        for row in pts.tolist():
            sys.stdout.write(",".join(repr(v) for v in row) + "\n")
    return EXIT_OK


# --- risk curve -------------------------------------------------------------


def cmd_risk_curve(cfg: RunConfig, threads: int) -> int:
    from .simlab import PipelineConfig, get_scenario, risk_curve

    try:
        sc = get_scenario(cfg.scenario)
    except KeyError as exc:
        raise ConfigError(exc.args[0]) from None
    if not cfg.n:
        raise ConfigError("risk-curve needs --n")
    pcfg = PipelineConfig(j0=cfg.j0, lmode=cfg.lmode, L=cfg.L, c1=cfg.c1, c2=cfg.c2, rbar=cfg.rbar,
                          per_axis_level=cfg.per_axis_level, estimator=cfg.estimator)
    reps = cfg.replications or 20
    reports = risk_curve(sc, pcfg, cfg.n, reps, cfg.seed, workers=threads)
    rows = [[r.n, r.mean_risk, r.std_error] for r in reports]
    meta = _meta(cfg, scenario=sc.to_json(), reports=[r.to_json() for r in reports])
    if cfg.out:
        write_csv(cfg.out, rows, ["n", "mean_risk", "std_error"])
        _write_text(cfg.out + ".meta.json", _dump(meta))
    else:
        sys.stdout.write("n,mean_risk,std_error\n")
        for n, m, s in rows:
            sys.stdout.write(f"{n},{m!r},{s!r}\n")
    return EXIT_OK


# --- inspect ----------------------------------------------------------------


def cmd_inspect(cfg: RunConfig) -> int:
    if cfg.dim is None or cfg.L is None:
        raise ConfigError("inspect-models needs --dim and --L")
    if cfg.dim < 2:
        raise ConfigError("the dimension bounds need d >= 2")
    basis = HaarBasis(j0=cfg.j0)
    try:
        schedule = SparsitySchedule.combinatorial(basis, cfg.dim, cfg.L)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    _write_text(cfg.out, _dump(_meta(cfg, rows=inspect_rows(schedule))))
    return EXIT_OK


# --- selftest ---------------------------------------------------------------


def _selftest_checks():
    from math import comb

    from .frameworks import pairwise_variance_bruteforce
    from .hyperbolic import enumerate_level_vectors, resolution_slab_size
    from .pyramid_models import model_count
    from .selection import exhaustive_select
    from .uniwavelet import gram

    b = HaarBasis()

    def biorthogonality():
        for a in range(0, 5):
            for c in range(0, 5):
                g = gram(b, a, c)
                ref = np.eye(g.shape[0]) if a == c else np.zeros(g.shape)
                if not np.allclose(g, ref, atol=1e-12):
                    return False
        return True

    def combinatorics():
        ok = all(len(enumerate_level_vectors(d, 0, e)) == comb(e + d - 1, d - 1) for d in (2, 3, 4) for e in range(13))
        sizes = [resolution_slab_size(b, 2, 0, e) for e in (2, 4, 8)]
        s = SparsitySchedule.combinatorial(b, 2, 9)
        return ok and sizes == [5, 28, 704] and (s.budget(8, 0), s.budget(8, 1)) == (22, 4)

    def greedy_equals_exhaustive():
        from .frameworks import CoefficientTable

        rng = np.random.default_rng(0)
        s = SparsitySchedule.custom(b, 2, 3, {(1, 0): 1, (1, 1): 2, (1, 2): 1})
        if model_count(s) != 243:
            return False
        for _ in range(5):
            t = CoefficientTable(s.layout, rng.normal(0, 0.3, s.layout.size), rng.uniform(0, 1, s.layout.size))
            cfg = PenaltyConfig(50.0)
            greedy = select_pyramid(t, s, cfg)
            model, crit = exhaustive_select(t, s, cfg)
            if model != greedy.selected or crit != greedy.crit:
                return False
        return True

    def u_statistic():
        rng = np.random.default_rng(1)
        a = rng.normal(size=120)
        n = a.size
        fast = (n * np.sum(a * a) - np.sum(a) ** 2) / (n * (n - 1))
        return math.isclose(fast, pairwise_variance_bruteforce(a), rel_tol=1e-10, abs_tol=1e-10)

    return [("biorthogonality", biorthogonality), ("combinatorics", combinatorics),
            ("greedy_equals_exhaustive", greedy_equals_exhaustive), ("u_statistic_identity", u_statistic)]


def cmd_selftest() -> int:
    failed = 0
    for name, fn in _selftest_checks():
        try:
            ok = bool(fn())
        except Exception as exc:  # report every failure, then exit nonzero
            ok = False
            log.error("%s raised %r", name, exc)
        print(f"{'PASS' if ok else 'FAIL'} {name}")
        failed += not ok
    return EXIT_OK if not failed else EXIT_SELFTEST


# --- argument parsing -------------------------------------------------------


def _int_list(text: str) -> list:
    try:
        return [int(float(v)) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _add_common(p):
    p.add_argument("--j0", type=int, default=0)
    p.add_argument("--lmode", choices=("theory", "practice"), default="practice")
    p.add_argument("--L", type=int, default=None, help="explicit maximal level, overrides --lmode")
    p.add_argument("--c1", type=float, default=1.5)
    p.add_argument("--c2", type=float, default=0.5)
    p.add_argument("--rbar", type=float, default=None, help="sup-norm bound; default is the proxy")
    p.add_argument("--per-axis-level", type=int, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=None, help="worker cap (env HYPYR_THREADS)")
    p.add_argument("--out", default=None)
    p.add_argument("--config", default=None, help="re-run from a config echoed in an earlier output")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hypyr", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"hypyr {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("estimate", help="select and evaluate an estimator from a CSV sample")
    p.add_argument("input", nargs="?")
    p.add_argument("--framework", choices=KINDS, default=None)
    p.add_argument("--domain", default=None, help="a1,b1,a2,b2,...")
    p.add_argument("--dim", type=int, default=None)
    p.add_argument("--T", type=float, default=None, help="observation horizon (levy-continuous)")
    p.add_argument("--delta", type=float, default=None, help="sampling step (levy-discrete)")
    p.add_argument("--path", action="store_true", help="rows are positions to difference (levy-discrete)")
    p.add_argument("--grid-level", type=int, default=None)
    _add_common(p)

    p = sub.add_parser("simulate", help="draw a sample from a built-in scenario")
    p.add_argument("scenario", nargs="?")
    p.add_argument("n", nargs="?", type=float)
    p.add_argument("--path", action="store_true")
    _add_common(p)

    p = sub.add_parser("risk-curve", help="Monte Carlo risk over sample sizes")
    p.add_argument("scenario", nargs="?")
    p.add_argument("--n", type=_int_list, default=None, help="comma-separated sizes")
    p.add_argument("--replications", type=int, default=20)
    p.add_argument("--estimator", default="selected")
    _add_common(p)

    p = sub.add_parser("inspect-models", help="dimensions, budgets and bound checks per cut level")
    p.add_argument("--dim", type=int, default=None)
    _add_common(p)

    sub.add_parser("selftest", help="run the fast invariant checks")
    return parser


def config_from_args(args) -> RunConfig:
    if getattr(args, "config", None):
        try:
            with open(args.config, encoding="utf-8") as fh:
                obj = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from None
        cfg = RunConfig.from_dict(obj.get("config", obj))
        if cfg.command != args.command:
            raise ConfigError(f"config is for {cfg.command!r}, not {args.command!r}")
        if args.out is not None:
            cfg.out = args.out
        return cfg
    cfg = RunConfig(command=args.command)
    for f in fields(RunConfig):
        if f.name in ("command", "domain", "n", "input"):
            continue
        if hasattr(args, f.name):
            setattr(cfg, f.name, getattr(args, f.name))
    if args.command == "estimate":
        cfg.input = args.input
        if args.domain is not None:
            dom = parse_domain(args.domain)
            cfg.domain = [v for pair in zip(dom.lower, dom.upper) for v in pair]
    elif args.command == "simulate":
        if args.scenario is None or args.n is None:
            raise ConfigError("simulate needs a scenario name and n")
        cfg.n = [int(args.n) if float(args.n).is_integer() else args.n]
    elif args.command == "risk-curve":
        if args.scenario is None:
            raise ConfigError("risk-curve needs a scenario name")
        cfg.n = args.n
    return cfg


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "selftest":
        return cmd_selftest()
    try:
        threads = _threads(args.threads)
        cfg = config_from_args(args)
        if cfg.command == "estimate":
            return cmd_estimate(cfg, threads)
        if cfg.command == "simulate":
            return cmd_simulate(cfg)
        if cfg.command == "risk-curve":
            return cmd_risk_curve(cfg, threads)
        return cmd_inspect(cfg)
    except ConfigError as exc:
        print(f"hypyr: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except IngestionError as exc:
        print(f"hypyr: data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
