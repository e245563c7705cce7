"""Univariate biorthogonal wavelet bases on [0, 1].

A basis is described by an immutable descriptor. Level ``j0`` carries the
scaling functions (``nabla_{j0} = Delta_{j0}``), every finer level ``j``
carries the wavelets spanning ``W_j``. Only the Haar basis is shipped; new
bases subclass :class:`UnivariateBasis` and implement ``count``,
``_eval`` and ``active``. Bases that are piecewise constant on a dyadic
grid also implement the ``fine_cells``/``apply_cells`` pair, which the
simulation lab uses to compute exact inner products from cell masses.

Haar does not satisfy the Lipschitz assumption on analysis wavelets, so the
residual bounds for copula and discretely observed Levy data are heuristic
with this basis.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np


class UniIndex(NamedTuple):
    level: int
    translation: int


@dataclass(frozen=True)
class UnivariateBasis:
    """Abstract descriptor of a biorthogonal basis on [0, 1].

    Attributes
    ----------
    j0 : int
        Coarsest level.
    B : int
        Dimension offset, ``dim V_j = 2**j + B``.
    kappa : float
        Localization constant used in sup-norm and overlap bounds.
    orthonormal : bool
        True when the dual family equals the primal one.
    """

    j0: int = 0
    B: int = 0
    kappa: float = 1.0
    orthonormal: bool = False

    # number of functions of one level that can be nonzero at a point
    max_active: int = 1
    piecewise_constant: bool = False

    def scaling_count(self, j: int) -> int:
        """Cardinality of Delta_j."""
        return 2**j + self.B

    def count(self, j: int) -> int:
        """Cardinality of nabla_j (Delta_{j0} at the coarsest level)."""
        raise NotImplementedError

    def check_index(self, idx: UniIndex) -> None:
        j, k = idx
        if j < self.j0:
            raise IndexError(f"level {j} below coarsest level {self.j0}")
        if not 0 <= k < self.count(j):
            raise IndexError(f"translation {k} out of range for level {j}")

    def eval_primal(self, idx: UniIndex, x):
        self.check_index(idx)
        return self._eval(idx.level, idx.translation, _checked_unit(x), dual=False)

    def eval_dual(self, idx: UniIndex, x):
        self.check_index(idx)
        return self._eval(idx.level, idx.translation, _checked_unit(x), dual=True)

    def _eval(self, j: int, k: int, x: np.ndarray, dual: bool):
        raise NotImplementedError

    def active(self, j: int, x: np.ndarray, dual: bool = False) -> tuple[np.ndarray, np.ndarray]:
        """Translations and values of the level-``j`` functions nonzero at ``x``.

        Returns two arrays of shape ``(len(x), max_active)``. Unused slots
        carry value 0 and a valid translation.
        """
        raise NotImplementedError


def _checked_unit(x):
    arr = np.asarray(x, dtype=float)
    if np.any(arr < 0.0) or np.any(arr > 1.0) or np.any(np.isnan(arr)):
        raise ValueError("evaluation point outside [0, 1]")
    return arr


@dataclass(frozen=True)
class HaarBasis(UnivariateBasis):
    """Orthonormal Haar basis on [0, 1].

    Level ``j0`` holds ``2**j0`` box functions of height ``2**(j0/2)``.
    The wavelet of level ``j > j0`` and translation ``k`` lives on
    ``[k h, (k + 1) h)`` with ``h = 2**-(j-1)``, equals ``+2**((j-1)/2)`` on
    the left half and the negative value on the right half. Functions are
    right-continuous and the point ``x = 1`` belongs to the last cell.
    """

    j0: int = 0
    B: int = 0
    kappa: float = 1.0
    orthonormal: bool = True
    max_active: int = 1
    piecewise_constant: bool = True

    def __post_init__(self):
        if self.j0 < 0:
            raise ValueError("j0 must be nonnegative")
        if self.B != 0:
            raise ValueError("Haar has B = 0")

    def count(self, j: int) -> int:
        if j < self.j0:
            raise IndexError(f"level {j} below coarsest level {self.j0}")
        if j == self.j0:
            return 2**self.j0
        return 2 ** (j - 1)

    def amplitude(self, j: int) -> float:
        if j == self.j0:
            return 2.0 ** (self.j0 / 2)
        return 2.0 ** ((j - 1) / 2)

    def support(self, j: int, k: int) -> tuple[float, float]:
        width = 2.0 ** -(j if j == self.j0 else j - 1)
        return k * width, (k + 1) * width

    def fine_cells(self, j: int) -> int:
        """Number of dyadic cells on which level-``j`` functions are constant."""
        return 2**j

    def _fine_position(self, j: int, x: np.ndarray) -> np.ndarray:
        # x * 2**j is exact in binary floating point
        cells = 2**j
        pos = np.floor(x * cells).astype(np.int64)
        return np.minimum(pos, cells - 1)

    def _eval(self, j, k, x, dual):
        k_act, val = self.active(j, np.atleast_1d(x))
        out = np.where(k_act[:, 0] == k, val[:, 0], 0.0)
        return float(out[0]) if np.ndim(x) == 0 else out.reshape(np.shape(x))

    def active(self, j, x, dual=False):
        x = np.asarray(x, dtype=float)
        pos = self._fine_position(j, x)
        amp = self.amplitude(j)
        if j == self.j0:
            k = pos
            val = np.full(x.shape, amp)
        else:
            k = pos >> 1
            val = np.where(pos & 1, -amp, amp)
        return k[:, None], val[:, None]

    def apply_cells(self, j: int, arr: np.ndarray, axis: int, square: bool = False) -> np.ndarray:
        """Contract cell masses along ``axis`` against level-``j`` functions.

        ``arr`` holds, along ``axis``, the measure of the ``fine_cells(j)``
        dyadic cells. The result holds the integrals of each level-``j``
        function (or of its square) against that measure.
        """
        arr = np.moveaxis(np.asarray(arr, dtype=float), axis, -1)
        if arr.shape[-1] != self.fine_cells(j):
            raise ValueError("cell array does not match the level resolution")
        amp = self.amplitude(j)
        if j == self.j0:
            out = amp**2 * arr if square else amp * arr
        else:
            pairs = arr.reshape(arr.shape[:-1] + (-1, 2))
            if square:
                out = amp**2 * (pairs[..., 0] + pairs[..., 1])
            else:
                out = amp * (pairs[..., 0] - pairs[..., 1])
        return np.moveaxis(out, -1, axis)


def gram(basis: UnivariateBasis, level_a: int, level_b: int) -> np.ndarray:
    """Exact inner products ``<psi_a, psi*_b>`` between two levels.

    Uses midpoint evaluation on the common dyadic grid, which is exact for
    piecewise-constant bases.
    """
    if not basis.piecewise_constant:
        raise NotImplementedError("exact Gram matrices need a piecewise-constant basis")
    res = max(basis.fine_cells(level_a), basis.fine_cells(level_b))
    mid = (np.arange(res) + 0.5) / res
    rows = np.array([basis.eval_primal(UniIndex(level_a, k), mid) for k in range(basis.count(level_a))])
    cols = np.array([basis.eval_dual(UniIndex(level_b, k), mid) for k in range(basis.count(level_b))])
    return rows @ cols.T / res
