import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mcdm.errors import ConvergenceFailure, NotPositiveDefinite, NotSymmetric, RankOutOfRange
from mcdm.linalg import SvdFactors, check_symmetric, column_rank, svd, sym_inv_sqrt, truncate


def _spd(seed, n):
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((n + 3, n))
    return A.T @ A


@given(st.integers(0, 10_000), st.integers(1, 7))
@settings(max_examples=50, deadline=None)
def test_inv_sqrt_squares_to_inverse(seed, n):
    M = _spd(seed, n)
    R = sym_inv_sqrt(M)
    np.testing.assert_allclose(R, R.T, atol=1e-12)
    np.testing.assert_allclose(R @ M @ R, np.eye(n), atol=1e-8)


def test_inv_sqrt_rejects_singular():
    A = np.array([[1.0, 2.0], [2.0, 4.0]])
    with pytest.raises(NotPositiveDefinite):
        sym_inv_sqrt(A)


def test_inv_sqrt_rejects_asymmetric():
    with pytest.raises(NotSymmetric):
        sym_inv_sqrt(np.array([[2.0, 1.0], [0.0, 2.0]]))
    with pytest.raises(NotSymmetric):
        check_symmetric(np.ones((2, 3)))


@given(st.integers(0, 10_000), st.integers(1, 6), st.integers(1, 6))
@settings(max_examples=50, deadline=None)
def test_svd_reconstructs_with_sign_convention(seed, m, n):
    A = np.random.default_rng(seed).standard_normal((m, n))
    f = svd(A)
    np.testing.assert_allclose(f.reconstruct(), A, atol=1e-10)
    assert np.all(np.diff(f.singular_values) <= 1e-12)
    for s in range(f.left.shape[1]):
        col = f.left[:, s]
        assert col[np.argmax(np.abs(col))] > 0


def test_svd_rejects_nonfinite():
    with pytest.raises(ConvergenceFailure):
        svd(np.array([[1.0, np.nan]]))


def test_truncate_bounds_and_best_approximation():
    rng = np.random.default_rng(3)
    A = rng.standard_normal((6, 4))
    f = svd(A)
    t = truncate(f, 2)
    assert t.rank == 2
    # Eckart-Young: error equals the discarded singular values
    err = np.linalg.norm(A - t.reconstruct())
    assert err == pytest.approx(np.sqrt(np.sum(f.singular_values[2:] ** 2)))
    for bad in (0, 5):
        with pytest.raises(RankOutOfRange):
            truncate(f, bad)


def test_column_rank():
    A = np.column_stack([np.ones(5), np.arange(5.0), np.arange(5.0) + 1])
    assert column_rank(A) == 2
    assert column_rank(np.eye(4)) == 4


def test_svd_small_cases():
    np.testing.assert_allclose(svd(np.diag([3.0, 1.0])).singular_values, [3, 1])
    a = np.array([0.6, 0.8])
    b = np.array([0.0, 1.0, 0.0])
    s = svd(np.outer(a, b)).singular_values
    assert s[0] == pytest.approx(1) and np.all(np.abs(s[1:]) < 1e-15)


def test_eckart_young_against_eigendecomposition():
    A = np.random.default_rng(4).standard_normal((4, 6))
    approx = truncate(svd(A), 2).reconstruct()
    evals = np.sort(np.linalg.eigvalsh(A.T @ A))[::-1]
    assert np.linalg.norm(A - approx) ** 2 == pytest.approx(evals[2:].sum(), abs=1e-10)


def test_truncate_keeps_leading_and_first_of_tie():
    f = SvdFactors(np.eye(3), np.array([2.0, 2.0, 1.0]), np.eye(3))
    t = truncate(f, 1)
    np.testing.assert_array_equal(t.left[:, 0], [1, 0, 0])
    full = truncate(f, 3)
    np.testing.assert_array_equal(full.singular_values, f.singular_values)
    g = SvdFactors(np.eye(3), np.array([5.0, 3.0, 1.0]), np.eye(3))
    np.testing.assert_array_equal(truncate(g, 2).singular_values, [5, 3])
