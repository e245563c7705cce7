"""Penalized pyramid selection.

With an additive penalty ``pen(m) = sum_{lambda in m} v2_lambda`` the
penalized least-squares criterion of a model is ``-crit(m)`` with
``crit(m) = sum_{lambda in m} (beta_lambda**2 - v2_lambda)``. Since the
criterion is additive and each deep slab contributes a fixed-size subset,
the best model for a cut level keeps the top-scoring indices of each slab;
the selected model is the best of these over the cut levels.

Ties are broken by index order, and between cut levels towards the smaller
one. Criterion values are exactly rounded sums (``math.fsum``), so they do
not depend on summation order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .frameworks import CoefficientTable
from .hyperbolic import Domain, IndexLayout, active_positions
from .pyramid_models import (
    ModelCountError,
    PyramidModel,
    SparsitySchedule,
    model_count,
    model_from_positions,
    sparse_position_choices,
)
from .uniwavelet import UnivariateBasis


@dataclass(frozen=True)
class PenaltyConfig:
    """Penalty ``(c1 * sigma2 + c2 * R_bar) / n_bar`` per kept index.

    ``known_sup`` replaces every variance estimate by a known upper bound
    on the sup norm of the target.
    """

    n_bar: float
    R_bar: float = 1.0
    c1: float = 1.5
    c2: float = 0.5
    known_sup: Optional[float] = None

    def __post_init__(self):
        if self.c1 <= 0 or self.c2 <= 0:
            raise ValueError("c1 and c2 must be positive")
        if self.R_bar < 1:
            raise ValueError("R_bar must be at least 1")
        if self.n_bar <= 0:
            raise ValueError("n_bar must be positive")


def penalty_weight(entry, config: PenaltyConfig) -> float:
    _, sigma2 = entry
    if config.known_sup is not None:
        sigma2 = config.known_sup
    return (config.c1 * sigma2 + config.c2 * config.R_bar) / config.n_bar


def penalty_weights(table: CoefficientTable, config: PenaltyConfig) -> np.ndarray:
    sigma2 = table.sigma2 if config.known_sup is None else np.full(table.layout.size, config.known_sup)
    return (config.c1 * sigma2 + config.c2 * config.R_bar) / config.n_bar


def scores(table: CoefficientTable, config: PenaltyConfig) -> np.ndarray:
    return table.beta**2 - penalty_weights(table, config)


@dataclass(frozen=True)
class EstimateResult:
    selected: PyramidModel
    crit_trace: dict
    positions: tuple = field(repr=False)
    coefficients: tuple = field(repr=False)
    kind: Optional[str] = None
    domain: Optional[Domain] = None

    @property
    def ell_hat(self) -> int:
        return self.selected.ell1

    @property
    def crit(self) -> float:
        return self.crit_trace[self.ell_hat]

    def to_json(self) -> dict:
        out = {
            "ell_hat": self.ell_hat,
            "crit_trace": [[e, c] for e, c in sorted(self.crit_trace.items())],
            "model": self.selected.to_json(),
            "coefficients": [[list(i.level_vector), list(i.translations), b] for i, b in self.coefficients],
        }
        if self.kind is not None:
            out["kind"] = self.kind
        if self.domain is not None:
            out["domain"] = self.domain.to_json()
        return out


class _SlabOrder:
    """Per-slab positions sorted by decreasing key, ties by position."""

    def __init__(self, layout: IndexLayout, key: np.ndarray, lo: int):
        self.key = key
        self.order = {}
        for ell in range(lo, layout.L + 1):
            a, b = layout.slab_range(ell)
            self.order[ell] = a + np.argsort(-key[a:b], kind="stable")

    def top(self, ell: int, n: int) -> np.ndarray:
        return np.sort(self.order[ell][:n])


def _best_for_cut(schedule: SparsitySchedule, sc: np.ndarray, order: _SlabOrder, ell1: int):
    layout = schedule.layout
    mandatory = _mandatory_size(schedule, ell1)
    sparse = [order.top(ell1 + k, n) for k, n in enumerate(schedule.sparse_budgets(ell1))]
    kept = np.concatenate([np.arange(mandatory)] + sparse) if sparse else np.arange(mandatory)
    crit = math.fsum(sc[kept].tolist())
    return sparse, kept, crit


def _mandatory_size(schedule: SparsitySchedule, ell1: int) -> int:
    lo = schedule.d * schedule.basis.j0
    return schedule.layout.slab_range(ell1 - 1)[1] if ell1 - 1 >= lo else 0


def _check_table(table: CoefficientTable, schedule: SparsitySchedule) -> None:
    if table.layout != schedule.layout:
        raise ValueError("coefficient table and schedule cover different index sets")


def select_within(ell1: int, table: CoefficientTable, schedule: SparsitySchedule, config: PenaltyConfig):
    """Best model with cut level ``ell1`` and its criterion value."""
    _check_table(table, schedule)
    sc = scores(table, config)
    order = _SlabOrder(schedule.layout, sc, ell1)
    sparse, _, crit = _best_for_cut(schedule, sc, order, ell1)
    return model_from_positions(schedule, ell1, sparse), crit


def select_pyramid(table: CoefficientTable, schedule: SparsitySchedule, config: PenaltyConfig,
                   kind: str | None = None, domain: Domain | None = None) -> EstimateResult:
    _check_table(table, schedule)
    layout = schedule.layout
    sc = scores(table, config)
    order = _SlabOrder(layout, sc, schedule.d * schedule.basis.j0)
    trace = {}
    best = None
    for ell1 in schedule.ell1_range:
        sparse, kept, crit = _best_for_cut(schedule, sc, order, ell1)
        trace[ell1] = crit
        if best is None or crit > best[2]:
            best = (ell1, sparse, crit, kept)
    ell1, sparse, _, kept = best
    model = model_from_positions(schedule, ell1, sparse)
    kept = tuple(int(p) for p in kept)
    coefs = tuple((layout.index_at(p), float(table.beta[p])) for p in kept)
    return EstimateResult(model, trace, kept, coefs, kind, domain)


def penalized_value(table: CoefficientTable, model: PyramidModel, config: PenaltyConfig) -> float:
    """Empirical contrast plus penalty, ``-sum beta**2 + pen(m)``."""
    pos = model.positions(table.layout)
    w = penalty_weights(table, config)
    return math.fsum((-table.beta[pos] ** 2 + w[pos]).tolist())


def model_crit(table: CoefficientTable, model: PyramidModel, config: PenaltyConfig) -> float:
    pos = model.positions(table.layout)
    return math.fsum(scores(table, config)[pos].tolist())


def exhaustive_select(table: CoefficientTable, schedule: SparsitySchedule, config: PenaltyConfig,
                      cap: int = 10**6):
    """Brute-force argmax of the criterion over the whole collection."""
    _check_table(table, schedule)
    total = model_count(schedule)
    if total > cap:
        raise ModelCountError(f"collection holds {total} models, above the cap of {cap}")
    sc = scores(table, config).tolist()
    best = None
    for ell1 in schedule.ell1_range:
        mand = sc[:_mandatory_size(schedule, ell1)]
        for choice in sparse_position_choices(schedule, ell1):
            vals = list(mand)
            for level in choice:
                vals.extend(sc[p] for p in level)
            crit = math.fsum(vals)
            if best is None or crit > best[0]:
                best = (crit, ell1, choice)
    crit, ell1, choice = best
    return model_from_positions(schedule, ell1, choice), crit


def exhaustive_projection(true_beta, schedule: SparsitySchedule, ell1: int):
    """Brute-force smallest within-span projection error over cut level ``ell1``."""
    beta = np.asarray(getattr(true_beta, "beta", true_beta), dtype=float)
    sq = (beta**2).tolist()
    mand = _mandatory_size(schedule, ell1)
    best = None
    for choice in sparse_position_choices(schedule, ell1):
        kept = sq[:mand]
        for level in choice:
            kept.extend(sq[p] for p in level)
        # energy outside the model; fsum rounds the exact difference once
        err = math.fsum(sq + [-v for v in kept])
        if best is None or err < best[0]:
            best = (err, choice)
    err, choice = best
    return model_from_positions(schedule, ell1, choice), err


def oracle_approximation(true_table, ell1: int, schedule: SparsitySchedule):
    """Keep the largest true coefficients (in magnitude) per deep slab.

    Returns the model and the energy of the dropped coefficients of the
    full index set.
    """
    beta = np.asarray(getattr(true_table, "beta", true_table), dtype=float)
    layout = schedule.layout
    if beta.shape != (layout.size,):
        raise ValueError("true coefficients do not cover the schedule's index set")
    order = _SlabOrder(layout, np.abs(beta), ell1)
    sparse = [order.top(ell1 + k, n) for k, n in enumerate(schedule.sparse_budgets(ell1))]
    keep = np.zeros(layout.size, dtype=bool)
    keep[:_mandatory_size(schedule, ell1)] = True
    for s in sparse:
        keep[s] = True
    err = math.fsum((beta[~keep] ** 2).tolist())
    return model_from_positions(schedule, ell1, sparse), err


def psi_norm_sq_distance(table_a, table_b) -> float:
    a = getattr(table_a, "beta", table_a)
    b = getattr(table_b, "beta", table_b)
    la, lb = getattr(table_a, "layout", None), getattr(table_b, "layout", None)
    if la is not None and lb is not None and la != lb:
        raise ValueError("tables cover different index sets")
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise ValueError("tables cover different index sets")
    return math.fsum(((a - b) ** 2).tolist())


class Estimator:
    """Evaluable ``sum_lambda coef_lambda Psi*_lambda`` on the domain."""

    def __init__(self, basis: UnivariateBasis, domain: Domain, layout: IndexLayout, coef: np.ndarray):
        self.basis, self.domain, self.layout = basis, domain, layout
        self.coef = np.asarray(coef, dtype=float)
        self._scale = 1.0 / math.sqrt(domain.volume)
        self._active_lvs = [
            jv for jv, off, shape in zip(layout.level_vectors, layout.offsets, layout.shapes)
            if np.any(self.coef[off:off + math.prod(shape)] != 0.0)
        ]

    def __call__(self, points) -> np.ndarray:
        u = self.domain.to_unit(points)
        return self._eval_unit(u)

    def _eval_unit(self, u: np.ndarray) -> np.ndarray:
        out = np.zeros(u.shape[0])
        for off, _, flat, val in active_positions(self.layout, u, dual=True, level_vectors=self._active_lvs):
            out += np.sum(self.coef[off + flat] * val, axis=1)
        return out * self._scale

    def cell_values(self, cells_per_axis: int) -> np.ndarray:
        """Values at the midpoints of a regular grid, shape ``(c,) * d``."""
        d = self.layout.d
        mid = (np.arange(cells_per_axis) + 0.5) / cells_per_axis
        grid = np.stack(np.meshgrid(*([mid] * d), indexing="ij"), axis=-1).reshape(-1, d)
        return self._eval_unit(grid).reshape((cells_per_axis,) * d)

    def integral(self) -> float:
        """Exact integral over Q for piecewise-constant bases."""
        if not self.basis.piecewise_constant:
            raise NotImplementedError
        finest = max((max(jv) for jv in self._active_lvs), default=self.basis.j0)
        c = self.basis.fine_cells(finest)
        return float(np.mean(self.cell_values(c))) * self.domain.volume


def assemble_estimator(result: EstimateResult, basis: UnivariateBasis, domain: Domain,
                       layout: IndexLayout) -> Estimator:
    coef = np.zeros(layout.size)
    for p, (_, b) in zip(result.positions, result.coefficients):
        coef[p] = b
    return Estimator(basis, domain, layout, coef)


def model_estimator(table: CoefficientTable, model: PyramidModel, basis: UnivariateBasis,
                    domain: Domain) -> Estimator:
    coef = np.zeros(table.layout.size)
    pos = model.positions(table.layout)
    coef[pos] = table.beta[pos]
    return Estimator(basis, domain, table.layout, coef)
