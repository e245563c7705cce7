"""Hyperbolic (tensor-product) wavelet indexing on a box Q.

Wavelets on Q are the unit-cube tensor wavelets composed with the affine
map Q -> [0, 1]^d and multiplied by ``Vol(Q)**-0.5`` so they keep unit L2
norm. All iteration follows the total order (global level, level vector,
translations), lexicographic at each stage.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from itertools import product
from typing import NamedTuple, Sequence

import numpy as np

from .uniwavelet import UniIndex, UnivariateBasis

LevelVector = tuple  # tuple[int, ...], one level per coordinate


class WaveletIndex(NamedTuple):
    level_vector: tuple
    translations: tuple

    @property
    def global_level(self) -> int:
        return sum(self.level_vector)


@dataclass(frozen=True)
class Domain:
    lower: tuple
    upper: tuple

    def __post_init__(self):
        lower = tuple(float(a) for a in self.lower)
        upper = tuple(float(b) for b in self.upper)
        if len(lower) != len(upper) or not lower:
            raise ValueError("domain bounds must have equal, nonzero length")
        if any(b <= a for a, b in zip(lower, upper)):
            raise ValueError("domain needs upper > lower on every axis")
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)

    @classmethod
    def unit(cls, d: int) -> "Domain":
        return cls((0.0,) * d, (1.0,) * d)

    @property
    def dim(self) -> int:
        return len(self.lower)

    @property
    def volume(self) -> float:
        return math.prod(b - a for a, b in zip(self.lower, self.upper))

    def contains(self, points) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        lo, hi = np.array(self.lower), np.array(self.upper)
        return np.all((pts >= lo) & (pts <= hi), axis=1)

    def to_unit(self, points) -> np.ndarray:
        """Map points of Q to the unit cube; raises on points outside Q."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        if pts.shape[1] != self.dim:
            raise ValueError(f"expected {self.dim} coordinates, got {pts.shape[1]}")
        if not np.all(self.contains(pts)):
            raise ValueError("point outside the domain")
        lo, hi = np.array(self.lower), np.array(self.upper)
        u = (pts - lo) / (hi - lo)
        return np.clip(u, 0.0, 1.0)

    def from_unit(self, u) -> np.ndarray:
        lo, hi = np.array(self.lower), np.array(self.upper)
        return lo + np.asarray(u, dtype=float) * (hi - lo)

    def to_json(self) -> dict:
        return {"lower": list(self.lower), "upper": list(self.upper)}


def enumerate_level_vectors(d: int, j0: int, ell: int) -> list:
    """All level vectors with ``sum == ell`` and entries >= j0, lexicographic."""
    excess = ell - d * j0
    if excess < 0:
        raise ValueError(f"global level {ell} below d*j0 = {d * j0}")
    return [tuple(j0 + e for e in comp) for comp in _compositions(excess, d)]


@lru_cache(maxsize=None)
def _compositions(total: int, parts: int) -> tuple:
    if parts == 1:
        return ((total,),)
    out = []
    for first in range(total + 1):
        out.extend((first,) + rest for rest in _compositions(total - first, parts - 1))
    return tuple(out)


def slice_cardinality(basis: UnivariateBasis, jvec: Sequence[int]) -> int:
    return math.prod(basis.count(j) for j in jvec)


def resolution_slab_size(basis: UnivariateBasis, d: int, j0: int, ell: int) -> int:
    return sum(slice_cardinality(basis, jv) for jv in enumerate_level_vectors(d, j0, ell))


def size_constant(basis: UnivariateBasis) -> Fraction:
    """M = 2 + B * 2**(1 - j0), kept exact."""
    return 2 + Fraction(basis.B) * Fraction(2) ** (1 - basis.j0)


def tensor_eval(basis: UnivariateBasis, idx: WaveletIndex, domain: Domain, point, side: str = "primal") -> float:
    if side not in ("primal", "dual"):
        raise ValueError("side must be 'primal' or 'dual'")
    u = domain.to_unit(point)[0]
    val = 1.0
    for j, k, x in zip(idx.level_vector, idx.translations, u):
        ui = UniIndex(j, k)
        val *= basis.eval_primal(ui, x) if side == "primal" else basis.eval_dual(ui, x)
    return val / math.sqrt(domain.volume)


def locate_active_indices(basis: UnivariateBasis, jvec: Sequence[int], domain: Domain, point) -> list:
    """Indices at level vector ``jvec`` whose wavelet is nonzero at ``point``."""
    u = domain.to_unit(point)[0]
    per_axis = []
    for j, x in zip(jvec, u):
        k, v = basis.active(j, np.array([x]))
        per_axis.append([int(kk) for kk, vv in zip(k[0], v[0]) if vv != 0.0])
    return [WaveletIndex(tuple(jvec), t) for t in product(*per_axis)]


def localization_bound(d: int, j0: int, L: int, kappa: float) -> float:
    """Sup-norm amplification bound ``kappa**(2d) (2 + sqrt 2) D(L)``.

    ``D(L) = (e (L - d j0 + d - 1) / (d - 1))**(d - 1) * 2**(L/2)``.
    """
    if d < 2:
        raise ValueError("the bound is stated for d >= 2")
    if L < d * j0:
        raise ValueError("L below d*j0")
    core = (math.e * (L - d * j0 + d - 1) / (d - 1)) ** (d - 1) * 2.0 ** (L / 2)
    return kappa ** (2 * d) * (2 + math.sqrt(2)) * core


class IndexLayout:
    """Flat positions for every hyperbolic index with global level <= L.

    Each level vector owns a contiguous block laid out in C order over its
    translations; blocks follow the module-wide index order, so slab ``ell``
    is the contiguous range ``slab_range(ell)``.
    """

    def __init__(self, basis: UnivariateBasis, d: int, L: int):
        j0 = basis.j0
        if L < d * j0:
            raise ValueError(f"L = {L} below d*j0 = {d * j0}")
        self.basis, self.d, self.L = basis, d, L
        self.level_vectors = []
        self.shapes = []
        self.offsets = []
        self._slab_bounds = {}
        pos = 0
        for ell in range(d * j0, L + 1):
            start = pos
            for jv in enumerate_level_vectors(d, j0, ell):
                shape = tuple(basis.count(j) for j in jv)
                self.level_vectors.append(jv)
                self.shapes.append(shape)
                self.offsets.append(pos)
                pos += math.prod(shape)
            self._slab_bounds[ell] = (start, pos)
        self.size = pos
        self._block_of = {jv: i for i, jv in enumerate(self.level_vectors)}
        self.global_level = np.empty(self.size, dtype=np.int64)
        for ell, (a, b) in self._slab_bounds.items():
            self.global_level[a:b] = ell

    def __eq__(self, other):
        return isinstance(other, IndexLayout) and (self.basis, self.d, self.L) == (other.basis, other.d, other.L)

    def __hash__(self):
        return hash((self.basis, self.d, self.L))

    def slab_range(self, ell: int) -> tuple[int, int]:
        return self._slab_bounds[ell]

    def slab_size(self, ell: int) -> int:
        a, b = self._slab_bounds[ell]
        return b - a

    def block(self, jvec) -> tuple[int, tuple]:
        i = self._block_of[tuple(jvec)]
        return self.offsets[i], self.shapes[i]

    def position(self, idx: WaveletIndex) -> int:
        off, shape = self.block(idx.level_vector)
        for k, n in zip(idx.translations, shape):
            if not 0 <= k < n:
                raise IndexError(f"translation {idx.translations} invalid for {idx.level_vector}")
        return off + int(np.ravel_multi_index(idx.translations, shape))

    def index_at(self, pos: int) -> WaveletIndex:
        if not 0 <= pos < self.size:
            raise IndexError(pos)
        i = int(np.searchsorted(self.offsets, pos, side="right")) - 1
        trans = np.unravel_index(pos - self.offsets[i], self.shapes[i])
        return WaveletIndex(self.level_vectors[i], tuple(int(t) for t in trans))

    def indices(self, positions=None) -> list:
        if positions is None:
            positions = range(self.size)
        return [self.index_at(int(p)) for p in positions]

    def axis_levels(self, j_max: int | None = None) -> range:
        j_max = self.L - (self.d - 1) * self.basis.j0 if j_max is None else j_max
        return range(self.basis.j0, j_max + 1)


@lru_cache(maxsize=64)
def layout_for(basis: UnivariateBasis, d: int, L: int) -> IndexLayout:
    return IndexLayout(basis, d, L)


def active_positions(layout: IndexLayout, u: np.ndarray, dual: bool = False, level_vectors=None):
    """Yield ``(offset, shape, flat_within_block, values)`` per level vector.

    ``u`` holds points already mapped to the unit cube, shape ``(n, d)``.
    ``flat_within_block`` and ``values`` have shape ``(n, r)`` with
    ``r = max_active**d``; values exclude the ``Vol**-0.5`` factor.
    """
    basis = layout.basis
    n = u.shape[0]
    cache = {}

    def axis_active(axis, j):
        key = (axis, j)
        if key not in cache:
            cache[key] = basis.active(j, u[:, axis], dual=dual)
        return cache[key]

    lvs = layout.level_vectors if level_vectors is None else level_vectors
    for jv in lvs:
        off, shape = layout.block(jv)
        flat = np.zeros((n, 1), dtype=np.int64)
        val = np.ones((n, 1))
        stride = 1
        for axis in range(layout.d - 1, -1, -1):
            k, v = axis_active(axis, jv[axis])
            flat = (flat[:, :, None] + stride * k[:, None, :]).reshape(n, -1)
            val = (val[:, :, None] * v[:, None, :]).reshape(n, -1)
            stride *= shape[axis]
        yield off, shape, flat, val
