import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from hypyr.uniwavelet import HaarBasis, UniIndex, gram


def test_scaling_is_constant(haar):
    assert haar.eval_primal(UniIndex(0, 0), 0.7) == 1.0


def test_mother_wavelet_signs(haar):
    assert haar.eval_primal(UniIndex(1, 0), 0.25) == 1.0
    assert haar.eval_primal(UniIndex(1, 0), 0.75) == -1.0


def test_level3_translation1(haar):
    assert haar.eval_primal(UniIndex(3, 1), 0.3) == 2.0
    assert haar.support(3, 1) == (0.25, 0.5)


def test_right_closed_at_one(haar):
    for j in range(1, 6):
        last = haar.count(j) - 1
        assert haar.eval_primal(UniIndex(j, last), 1.0) == -haar.amplitude(j)


@given(j=st.integers(0, 10), x=st.floats(0.0, 1.0), data=st.data())
def test_dual_equals_primal(j, x, data):
    b = HaarBasis()
    k = data.draw(st.integers(0, b.count(j) - 1))
    assert b.eval_dual(UniIndex(j, k), x) == b.eval_primal(UniIndex(j, k), x)


@pytest.mark.parametrize("a,b,shape", [(1, 1, (1, 1)), (2, 2, (2, 2)), (1, 2, (1, 2))])
def test_gram_examples(haar, a, b, shape):
    g = gram(haar, a, b)
    assert g.shape == shape
    np.testing.assert_allclose(g, np.eye(*shape) if a == b else 0.0, atol=1e-12)


def test_wavelet_orthogonal_to_scaling(haar):
    assert abs(gram(haar, 1, 0)[0, 0]) < 1e-15


@pytest.mark.parametrize("j0", [0, 1, 2])
def test_gram_all_levels(j0):
    b = HaarBasis(j0=j0)
    for a in range(j0, j0 + 6):
        for c in range(j0, j0 + 6):
            ref = np.eye(b.count(a)) if a == c else np.zeros((b.count(a), b.count(c)))
            np.testing.assert_allclose(gram(b, a, c), ref, atol=1e-12)


def test_counts(haar):
    for j in range(0, 13):
        assert haar.scaling_count(j) == 2**j
        assert haar.count(j + 1) == 2**j


def test_sup_norm_and_support(haar):
    for j in range(1, 10):
        grid = (np.arange(2**j) + 0.5) / 2**j
        for k in (0, haar.count(j) - 1):
            vals = haar.eval_primal(UniIndex(j, k), grid)
            assert np.max(np.abs(vals)) == pytest.approx(2 ** ((j - 1) / 2))
            assert np.max(np.abs(vals)) <= haar.kappa * 2 ** (j / 2)
            lo, hi = haar.support(j, k)
            assert hi - lo == 2.0 ** -(j - 1)
            # exact L2 norm: constant on each fine cell
            assert np.sum(vals**2) / 2**j == pytest.approx(1.0, abs=1e-12)


def test_index_errors(haar):
    with pytest.raises(IndexError):
        haar.eval_primal(UniIndex(2, 2), 0.5)
    with pytest.raises(IndexError):
        haar.eval_primal(UniIndex(0, 1), 0.5)
    with pytest.raises(IndexError):
        HaarBasis(j0=2).eval_primal(UniIndex(1, 0), 0.5)


@pytest.mark.parametrize("x", [-0.1, 1.0000001, math.nan])
def test_domain_errors(haar, x):
    with pytest.raises(ValueError):
        haar.eval_primal(UniIndex(1, 0), x)


def test_haar_rejects_offset():
    with pytest.raises(ValueError):
        HaarBasis(B=1)


@given(j=st.integers(0, 7), seed=st.integers(0, 2**32 - 1), square=st.booleans())
def test_apply_cells_matches_direct_integration(j, seed, square):
    b = HaarBasis()
    rng = np.random.default_rng(seed)
    masses = rng.uniform(0, 1, 2**j)
    got = b.apply_cells(j, masses, axis=0, square=square)
    mid = (np.arange(2**j) + 0.5) / 2**j
    for k in range(b.count(j)):
        vals = b.eval_primal(UniIndex(j, k), mid)
        ref = np.sum((vals**2 if square else vals) * masses)
        assert got[k] == pytest.approx(ref, abs=1e-12)
