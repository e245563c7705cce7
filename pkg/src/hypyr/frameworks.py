"""Data ingestion and empirical coefficients for the five frameworks.

Every framework reduces to a weighted point measure ``weight * sum delta_y``
on the domain Q, with ``weight = 1 / n_bar``:

============== ============================ ===================
kind           points                       n_bar
============== ============================ ===================
density        the sample                   n
copula         rank pseudo-observations     n
poisson        the process points           Vol(Q)
levy-cont      jump sizes falling in Q      T
levy-discrete  increments falling in Q      n * delta
============== ============================ ===================
"""

from __future__ import annotations

import csv
import logging
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .hyperbolic import Domain, IndexLayout, WaveletIndex, active_positions, layout_for
from .uniwavelet import UnivariateBasis

log = logging.getLogger(__name__)

KINDS = ("density", "copula", "poisson", "levy-continuous", "levy-discrete")
PAIRWISE_KINDS = ("density", "copula")

# fixed so that partial sums, and hence results, do not depend on the worker count
CHUNK_SIZE = 4096


class IngestionError(ValueError):
    pass


@dataclass(frozen=True)
class FrameworkData:
    kind: str
    points: np.ndarray = field(repr=False)
    weight: float
    n_bar: float
    domain: Domain
    extras: dict = field(default_factory=dict)
    dropped: int = 0

    @property
    def dim(self) -> int:
        return self.domain.dim

    @property
    def n_points(self) -> int:
        return self.points.shape[0]


def ingest(kind: str, raw, domain: Domain | None = None, *, T: float | None = None,
           delta: float | None = None, path: bool = False) -> FrameworkData:
    """Turn raw observations into a :class:`FrameworkData`.

    For ``levy-discrete`` pass ``path=True`` when rows are positions
    ``X_{i delta}`` (including ``X_0``) rather than increments.
    """
    if kind not in KINDS:
        raise IngestionError(f"unknown framework {kind!r}; expected one of {KINDS}")
    raw = np.asarray(raw, dtype=float)
    if raw.ndim == 1:
        raw = raw[:, None]
    if raw.size == 0 or raw.shape[0] == 0:
        raise IngestionError("no observations")
    if not np.all(np.isfinite(raw)):
        raise IngestionError("observations must be finite")
    d = raw.shape[1]

    if kind == "copula":
        if domain is not None and domain != Domain.unit(d):
            raise IngestionError("copula data live on the unit cube; do not pass a domain")
        n = raw.shape[0]
        return FrameworkData(kind, pseudo_observations(raw), 1.0 / n, float(n), Domain.unit(d), {"n": n})

    if domain is None:
        raise IngestionError(f"{kind} data need a domain")
    if domain.dim != d:
        raise IngestionError(f"domain has dimension {domain.dim}, data have {d} columns")

    extras = {}
    if kind == "levy-discrete":
        if delta is None or delta <= 0:
            raise IngestionError("levy-discrete data need a positive time step delta")
        if path:
            if raw.shape[0] < 2:
                raise IngestionError("a path needs at least two positions")
            raw = np.diff(raw, axis=0)
        n = raw.shape[0]
        n_bar = n * delta
        extras = {"n": n, "delta": delta}
        if n * delta**2 > 1:
            warnings.warn(
                f"n * delta**2 = {n * delta ** 2:.3g} > 1: outside the high-frequency regime, "
                "the discretization bias may dominate",
                stacklevel=2,
            )
    elif kind == "levy-continuous":
        if T is None or T <= 0:
            raise IngestionError("levy-continuous data need a positive horizon T")
        n_bar = float(T)
        extras = {"T": float(T)}
    elif kind == "poisson":
        n_bar = domain.volume
    else:
        n_bar = 0.0  # density: set from the retained points below

    inside = domain.contains(raw)
    dropped = int(np.count_nonzero(~inside))
    points = raw[inside]
    if dropped:
        if kind.startswith("levy"):
            log.info("dropped %d jumps outside Q", dropped)
        else:
            warnings.warn(f"dropped {dropped} observations outside the domain", stacklevel=2)
    if kind == "density":
        n_bar = float(points.shape[0])
        extras = {"n": points.shape[0]}
        if not points.shape[0]:
            raise IngestionError("no observations inside the domain")
    return FrameworkData(kind, points, 1.0 / n_bar, float(n_bar), domain, extras, dropped)


def pseudo_observations(x: np.ndarray) -> np.ndarray:
    """Coordinatewise ``rank / n`` with 1-based ranks; ties by first appearance."""
    x = np.asarray(x, dtype=float)
    n, d = x.shape
    out = np.empty_like(x)
    for j in range(d):
        col = x[:, j]
        if np.unique(col).size < n:
            warnings.warn(f"ties in copula coordinate {j}; ranking in order of appearance", stacklevel=3)
        order = np.argsort(col, kind="stable")
        ranks = np.empty(n)
        ranks[order] = np.arange(1, n + 1)
        out[:, j] = ranks / n
    return out


def default_max_level(data: FrameworkData, mode: str = "practice", j0: int = 0) -> int:
    """Default maximal global level ``L_bullet``.

    ``theory`` takes floor(log2) of the framework-specific choice of
    ``2**L``; ``practice`` uses ``2**L = n_bar / (log(n_bar)/d)**2``.
    Both are clamped below at ``d*j0 + 1``.
    """
    n_bar, d = data.n_bar, data.dim
    if n_bar < 8:
        raise ValueError(f"n_bar = {n_bar:g} < 8: pass an explicit maximal level")
    base = n_bar * (math.log(n_bar) / d) ** (-2 * d)
    if mode == "practice":
        target = n_bar / (math.log(n_bar) / d) ** 2
    elif mode == "theory":
        if data.kind == "copula":
            target = min(n_bar ** (1 / 8) * math.log(n_bar) ** (-1 / 4), base)
        elif data.kind == "levy-discrete":
            target = min(n_bar ** (1 / 4), base)
        else:
            target = base
    else:
        raise ValueError(f"unknown level mode {mode!r}")
    level = math.floor(math.log2(target)) if target > 0 else 0
    return max(level, d * j0 + 1)


@dataclass(frozen=True)
class CoefficientTable:
    """Empirical coefficients and variance estimates over every index up to ``L_bullet``.

    Arrays are flat in the order of ``layout``.
    """

    layout: IndexLayout
    beta: np.ndarray = field(repr=False)
    sigma2: np.ndarray = field(repr=False)

    def __post_init__(self):
        for name in ("beta", "sigma2"):
            arr = np.asarray(getattr(self, name), dtype=float)
            if arr.shape != (self.layout.size,):
                raise ValueError(f"{name} must have one entry per index ({self.layout.size})")
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if not np.all(np.isfinite(self.sigma2)) or np.any(self.sigma2 < 0):
            raise ValueError("variance estimates must be finite and nonnegative")

    @property
    def L_bullet(self) -> int:
        return self.layout.L

    def __len__(self):
        return self.layout.size

    def __getitem__(self, idx: WaveletIndex) -> tuple[float, float]:
        p = self.layout.position(idx)
        return float(self.beta[p]), float(self.sigma2[p])

    def items(self):
        for p, idx in enumerate(self.layout.indices()):
            yield idx, (float(self.beta[p]), float(self.sigma2[p]))

    def restrict(self, L: int) -> "CoefficientTable":
        """Table over the smaller index set of levels <= L."""
        sub = layout_for(self.layout.basis, self.layout.d, L)
        if L > self.layout.L:
            raise ValueError("cannot extend a table")
        return CoefficientTable(sub, self.beta[: sub.size], self.sigma2[: sub.size])


def _neumaier_merge(parts: list) -> np.ndarray:
    """Compensated elementwise sum of partial arrays, in list order."""
    total = np.zeros_like(parts[0])
    comp = np.zeros_like(parts[0])
    for p in parts:
        t = total + p
        big = np.abs(total) >= np.abs(p)
        comp += np.where(big, (total - t) + p, (p - t) + total)
        total = t
    return total + comp


def _power_sums(layout: IndexLayout, u: np.ndarray, scale: float) -> tuple[np.ndarray, np.ndarray]:
    s1 = np.zeros(layout.size)
    s2 = np.zeros(layout.size)
    for off, shape, flat, val in active_positions(layout, u):
        n_block = math.prod(shape)
        v = val.ravel() * scale
        f = flat.ravel()
        s1[off:off + n_block] = np.bincount(f, weights=v, minlength=n_block)
        s2[off:off + n_block] = np.bincount(f, weights=v * v, minlength=n_block)
    return s1, s2


def power_sums(data: FrameworkData, basis: UnivariateBasis, L_bullet: int, threads: int = 1):
    """Per-index sums of Psi(y) and Psi(y)**2 over the data points.

    Points are processed in fixed chunks whose partial sums are merged in
    chunk order with compensation, so the result is bit-identical for any
    number of worker threads.
    """
    layout = layout_for(basis, data.dim, L_bullet)
    u = data.domain.to_unit(data.points) if data.n_points else np.zeros((0, data.dim))
    scale = 1.0 / math.sqrt(data.domain.volume)
    chunks = [u[i:i + CHUNK_SIZE] for i in range(0, max(len(u), 1), CHUNK_SIZE)]
    if threads > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(lambda c: _power_sums(layout, c, scale), chunks))
    else:
        parts = [_power_sums(layout, c, scale) for c in chunks]
    s1 = _neumaier_merge([p[0] for p in parts])
    s2 = _neumaier_merge([p[1] for p in parts])
    return layout, s1, s2


def empirical_coefficients(data: FrameworkData, basis: UnivariateBasis, L_bullet: int,
                           threads: int = 1) -> CoefficientTable:
    """Empirical coefficients and variance estimates on every index up to ``L_bullet``.

    Density and copula data use the pairwise U-statistic
    ``1/(n(n-1)) sum_{i<j} (Psi(Y_i) - Psi(Y_j))**2``, evaluated through
    ``(n S2 - S1**2) / (n (n-1))``. Point-process kinds use
    ``weight * sum Psi(y)**2``.
    """
    if L_bullet < data.dim * basis.j0:
        raise ValueError("L_bullet below d*j0")
    layout, s1, s2 = power_sums(data, basis, L_bullet, threads)
    beta = data.weight * s1
    if data.kind in PAIRWISE_KINDS:
        n = data.n_points
        if n < 2:
            raise ValueError("the pairwise variance estimator needs at least two observations")
        sigma2 = np.maximum((n * s2 - s1 * s1) / (n * (n - 1.0)), 0.0)
    else:
        sigma2 = data.weight * s2
    return CoefficientTable(layout, beta, sigma2)


def pairwise_variance_bruteforce(values) -> float:
    """Literal double sum ``1/(n(n-1)) sum_{i<j} (a_i - a_j)**2``."""
    a = np.asarray(values, dtype=float)
    n = a.size
    total = 0.0
    for i in range(1, n):
        total += float(np.sum((a[i] - a[:i]) ** 2))
    return total / (n * (n - 1))


def sup_norm_proxy(table: CoefficientTable, basis: UnivariateBasis, domain: Domain,
                   per_axis_level: int | None = None) -> float:
    """``max(sup |s_hat|, 1)`` for the tensor-product estimator with per-axis level J.

    The preliminary estimator keeps every index whose coordinate levels
    are all at most ``J`` (default ``floor(L / d)``). For piecewise-constant
    bases it is constant on the ``2**J`` dyadic cells per axis, so the sup
    over cell midpoints is exact.
    """
    from .selection import Estimator

    layout = table.layout
    d = layout.d
    J = layout.L // d if per_axis_level is None else per_axis_level
    if J * d > layout.L or J < basis.j0:
        raise ValueError(f"per-axis level {J} not covered by the table (L={layout.L}, d={d})")
    keep = np.zeros(layout.size, dtype=bool)
    for jv, off, shape in zip(layout.level_vectors, layout.offsets, layout.shapes):
        if max(jv) <= J:
            keep[off:off + int(np.prod(shape))] = True
    est = Estimator(basis, domain, layout, np.where(keep, table.beta, 0.0))
    if not basis.piecewise_constant:
        raise NotImplementedError("exact sup only for piecewise-constant bases")
    vals = est.cell_values(basis.fine_cells(J))
    return max(float(np.max(np.abs(vals))), 1.0)


def read_csv(path, dim: int | None = None) -> np.ndarray:
    """Read one observation per row; an optional single header row is skipped.

    Raises :class:`IngestionError` naming the offending line.
    """
    rows = []
    width = None
    with open(path, newline="", encoding="utf-8") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or all(not c.strip() for c in row):
                continue
            try:
                vals = [float(c) for c in row]
            except ValueError:
                if lineno == 1 and not rows:
                    continue
                raise IngestionError(f"{path}:{lineno}: non-numeric field in {row!r}") from None
            if width is None:
                width = len(vals)
            elif len(vals) != width:
                raise IngestionError(f"{path}:{lineno}: expected {width} columns, got {len(vals)}")
            rows.append(vals)
    if not rows:
        raise IngestionError(f"{path}: no observations")
    arr = np.array(rows, dtype=np.float64)
    if dim is not None and arr.shape[1] != dim:
        raise IngestionError(f"{path}: expected {dim} columns, got {arr.shape[1]}")
    return arr


def write_csv(path, rows, header=None) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        if header:
            w.writerow(header)
        for r in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in r])
