"""The pyramidal model collection.

A model with cut level ``ell1`` keeps every index of global level below
``ell1`` and, for each deeper level ``ell1 + k <= L``, a subset of exactly
``N(ell1, k)`` indices of that slab.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from itertools import combinations, product
from typing import Iterator, Mapping

import mpmath

from .hyperbolic import IndexLayout, WaveletIndex, layout_for, size_constant
from .uniwavelet import UnivariateBasis


class ModelCountError(RuntimeError):
    """Raised when exhaustive enumeration would exceed its cap."""


@dataclass(frozen=True)
class SparsitySchedule:
    """Budgets ``N(ell1, k)`` over a fixed maximal level ``L_bullet``.

    Build with :meth:`combinatorial` for the default schedule or
    :meth:`custom` to inject budgets; missing custom entries are zero.
    """

    basis: UnivariateBasis
    d: int
    L_bullet: int
    budgets: Mapping = field(repr=False)
    mode: str = "combinatorial"

    @classmethod
    def combinatorial(cls, basis: UnivariateBasis, d: int, L_bullet: int) -> "SparsitySchedule":
        layout = layout_for(basis, d, L_bullet)
        M = size_constant(basis)
        budgets = {}
        for ell1 in range(d * basis.j0 + 1, L_bullet + 2):
            for k in range(L_bullet - ell1 + 1):
                budgets[(ell1, k)] = combinatorial_budget(layout.slab_size(ell1 + k), k, d, M)
        return cls(basis, d, L_bullet, budgets, "combinatorial")

    @classmethod
    def custom(cls, basis: UnivariateBasis, d: int, L_bullet: int, budgets: Mapping) -> "SparsitySchedule":
        layout = layout_for(basis, d, L_bullet)
        full = {}
        for ell1 in range(d * basis.j0 + 1, L_bullet + 2):
            for k in range(L_bullet - ell1 + 1):
                n = int(budgets.get((ell1, k), 0))
                if not 0 <= n <= layout.slab_size(ell1 + k):
                    raise ValueError(f"budget N({ell1},{k}) = {n} outside [0, slab size]")
                full[(ell1, k)] = n
        extra = set(budgets) - set(full)
        if extra:
            raise IndexError(f"budget keys out of range: {sorted(extra)}")
        return cls(basis, d, L_bullet, full, "custom")

    def __hash__(self):
        return hash((self.basis, self.d, self.L_bullet, tuple(sorted(self.budgets.items()))))

    @property
    def layout(self) -> IndexLayout:
        return layout_for(self.basis, self.d, self.L_bullet)

    @property
    def ell1_range(self) -> range:
        return range(self.d * self.basis.j0 + 1, self.L_bullet + 2)

    def budget(self, ell1: int, k: int) -> int:
        try:
            return self.budgets[(ell1, k)]
        except KeyError:
            raise IndexError(f"(ell1={ell1}, k={k}) outside the schedule") from None

    def sparse_budgets(self, ell1: int) -> list:
        if ell1 not in self.ell1_range:
            raise IndexError(f"ell1={ell1} outside {self.ell1_range}")
        return [self.budgets[(ell1, k)] for k in range(self.L_bullet - ell1 + 1)]

    def is_nested(self) -> bool:
        """True when N(ell1+1, k) >= N(ell1, k+1) wherever both exist.

        Under this condition the best projection error is nonincreasing
        in ``ell1``.
        """
        for (ell1, k), n in self.budgets.items():
            nxt = self.budgets.get((ell1 + 1, k - 1)) if k >= 1 else None
            if nxt is not None and nxt < n:
                return False
        return True


def combinatorial_budget(slab: int, k: int, d: int, M: Fraction) -> int:
    """floor(2 slab (k+2)**-(d+2) 2**-k M**-d), in exact arithmetic."""
    return math.floor(Fraction(2 * slab) / (Fraction(k + 2) ** (d + 2) * 2**k * M**d))


def budget(schedule: SparsitySchedule, ell1: int, k: int) -> int:
    return schedule.budget(ell1, k)


def model_dimension(schedule: SparsitySchedule, ell1: int) -> int:
    layout = schedule.layout
    full = layout.slab_range(ell1 - 1)[1] if ell1 - 1 >= schedule.d * schedule.basis.j0 else 0
    return full + sum(schedule.sparse_budgets(ell1))


def full_index_set(schedule: SparsitySchedule) -> list:
    return schedule.layout.indices()


@dataclass(frozen=True)
class PyramidModel:
    """A member of the pyramidal collection.

    ``sparse_levels[k]`` is the sorted tuple of kept indices of slab
    ``ell1 + k``. Equality is structural.
    """

    ell1: int
    L_bullet: int
    sparse_levels: tuple

    def index_set(self, layout: IndexLayout) -> list:
        out = layout.indices(range(self.mandatory_size(layout)))
        for level in self.sparse_levels:
            out.extend(level)
        return out

    def mandatory_size(self, layout: IndexLayout) -> int:
        lo = layout.d * layout.basis.j0
        return layout.slab_range(self.ell1 - 1)[1] if self.ell1 - 1 >= lo else 0

    def positions(self, layout: IndexLayout) -> list:
        pos = list(range(self.mandatory_size(layout)))
        for level in self.sparse_levels:
            pos.extend(layout.position(i) for i in level)
        return pos

    def dimension(self, layout: IndexLayout) -> int:
        return self.mandatory_size(layout) + sum(len(s) for s in self.sparse_levels)

    def to_json(self) -> dict:
        return {
            "ell1": self.ell1,
            "L_bullet": self.L_bullet,
            "sparse_levels": [
                {"level": self.ell1 + k, "indices": [[list(i.level_vector), list(i.translations)] for i in level]}
                for k, level in enumerate(self.sparse_levels)
            ],
        }

    @classmethod
    def from_json(cls, obj) -> "PyramidModel":
        if isinstance(obj, str):
            obj = json.loads(obj)
        levels = tuple(
            tuple(WaveletIndex(tuple(lv), tuple(tr)) for lv, tr in entry["indices"]) for entry in obj["sparse_levels"]
        )
        return cls(int(obj["ell1"]), int(obj["L_bullet"]), levels)


def model_from_positions(schedule: SparsitySchedule, ell1: int, sparse_positions) -> PyramidModel:
    layout = schedule.layout
    levels = tuple(tuple(layout.index_at(p) for p in sorted(level)) for level in sparse_positions)
    return PyramidModel(ell1, schedule.L_bullet, levels)


def log_model_count(schedule: SparsitySchedule, ell1: int) -> float:
    """log of the number of models with cut level ``ell1``."""
    layout = schedule.layout
    total = 0.0
    for k, n in enumerate(schedule.sparse_budgets(ell1)):
        total += _log_binom(layout.slab_size(ell1 + k), n)
    return total


def model_count(schedule: SparsitySchedule, ell1: int | None = None) -> int:
    layout = schedule.layout
    ell1s = schedule.ell1_range if ell1 is None else [ell1]
    total = 0
    for e in ell1s:
        total += math.prod(math.comb(layout.slab_size(e + k), n) for k, n in enumerate(schedule.sparse_budgets(e)))
    return total


def _log_binom(n: int, k: int) -> float:
    return math.lgamma(n + 1) - math.lgamma(k + 1) - math.lgamma(n - k + 1)


def sparse_position_choices(schedule: SparsitySchedule, ell1: int) -> Iterator[tuple]:
    """Every choice of sparse position sets for cut level ``ell1``, lexicographic."""
    layout = schedule.layout
    per_level = []
    for k, n in enumerate(schedule.sparse_budgets(ell1)):
        a, b = layout.slab_range(ell1 + k)
        per_level.append(combinations(range(a, b), n))
    # product() materializes its inputs; fine at the capped sizes
    return product(*per_level)


def enumerate_models(schedule: SparsitySchedule, cap: int = 10**6) -> Iterator[PyramidModel]:
    total = model_count(schedule)
    if total > cap:
        raise ModelCountError(f"collection holds {total} models, above the cap of {cap}")
    for ell1 in schedule.ell1_range:
        for choice in sparse_position_choices(schedule, ell1):
            yield model_from_positions(schedule, ell1, choice)


# --- constants of the dimension and cardinality bounds ---------------------


def kappa1(d: int) -> float:
    return 2.0 ** -(d + 1) * (d - 1) ** -(d - 1)


def _c1(M: float, d: int) -> float:
    return (M / 2) ** d * (math.e / (d - 1)) ** (d - 1)


@lru_cache(maxsize=None)
def _s1(d: int) -> float:
    return float(mpmath.nsum(lambda k: (1 + k / (d - 1)) ** (d - 1) / (2 + k) ** (d + 2), [0, mpmath.inf]))


# s2 = zeta(3) - 1, s3 = -zeta'(3), s4 = zeta(2) - 1
S2 = float(mpmath.zeta(3) - 1)
S3 = float(-mpmath.zeta(3, derivative=1))
S4 = float(mpmath.zeta(2) - 1)


def kappa2(basis: UnivariateBasis, d: int) -> float:
    M = float(size_constant(basis))
    c1 = _c1(M, d)
    return c1 * (1 + 2 * M**-d * c1 * _s1(d))


def kappa3(basis: UnivariateBasis, d: int) -> float:
    M = float(size_constant(basis))
    return (math.log(math.e / 2) + d * math.log(M)) * S2 + (d + 2) * S3 + math.log(2) * S4


def dimension_bounds(schedule: SparsitySchedule, ell1: int) -> tuple[float, float]:
    d, j0 = schedule.d, schedule.basis.j0
    base = (ell1 - d * j0 + d - 2) ** (d - 1) * 2.0**ell1
    return kappa1(d) * base, kappa2(schedule.basis, d) * base


def inspect_rows(schedule: SparsitySchedule) -> list:
    """Per cut level: dimension, budgets, model count and bound checks."""
    rows = []
    k3 = kappa3(schedule.basis, schedule.d)
    for ell1 in schedule.ell1_range:
        D = model_dimension(schedule, ell1)
        lo, hi = dimension_bounds(schedule, ell1)
        logc = log_model_count(schedule, ell1)
        rows.append(
            {
                "ell1": ell1,
                "dimension": D,
                "budgets": {str(ell1 + k): n for k, n in enumerate(schedule.sparse_budgets(ell1))},
                "log_model_count": logc,
                "dimension_lower_ok": lo <= D,
                "dimension_upper_ok": D <= hi,
                "log_count_ok": logc <= k3 * D,
            }
        )
    return rows
