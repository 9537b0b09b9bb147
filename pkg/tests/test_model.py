import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mcdm.design import DesignSet, ProfileCoding, TermSet
from mcdm.errors import DimensionMismatch, ProbabilityUnderflow
from mcdm.model import (
    Parameters,
    deviance,
    deviance_from_theta,
    identify,
    linear_predictor,
    probabilities,
    validate_observations,
)
from oracles import row_nll, theta_elementwise


def _design(seed, N=15, P=3, R=3, z_order=2):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((N, P))
    return rng, DesignSet.for_profiles(X, ProfileCoding(R), TermSet.up_to_order(R, z_order), TermSet.saturated(R))


def _params(rng, d, S):
    return Parameters(rng.standard_normal(d.T), rng.standard_normal((d.P, S)), rng.standard_normal((d.Q, S)))


def test_linear_predictor_matches_elementwise():
    rng, d = _design(0)
    p = _params(rng, d, 2)
    np.testing.assert_allclose(
        linear_predictor(p, d), theta_elementwise(p.b_w, p.B_x, p.B_z, d.X, d.Z, d.W), atol=1e-12
    )


def test_dimension_checks():
    rng, d = _design(1)
    with pytest.raises(DimensionMismatch):
        linear_predictor(Parameters(np.zeros(d.T + 1), np.zeros((d.P, 1)), np.zeros((d.Q, 1))), d)
    with pytest.raises(DimensionMismatch):
        Parameters(np.zeros(2), np.zeros((3, 2)), np.zeros((3, 1)))


def test_probabilities_stable_for_large_theta():
    pi = probabilities(np.array([[1000.0, 1000.0, -1000.0]]))
    np.testing.assert_allclose(pi, [[0.5, 0.5, 0.0]])
    assert np.all(np.isfinite(pi))


def test_deviance_underflow_and_log_softmax_path():
    G = np.array([[0.0, 0.0, 1.0]])
    theta = np.array([[0.0, 0.0, -800.0]])
    with pytest.raises(ProbabilityUnderflow):
        deviance(G, probabilities(theta))
    assert deviance_from_theta(G, theta) == pytest.approx(2 * (800 + np.log(2)))


def test_validate_observations():
    with pytest.raises(ValueError):
        validate_observations([[1, 1, 0]])
    with pytest.raises(ValueError):
        validate_observations([[0.5, 0.5]])


@given(st.integers(0, 10_000), st.integers(2, 10))
@settings(max_examples=100, deadline=None)
def test_gradient_central_differences(seed, K):
    rng = np.random.default_rng(seed)
    theta = rng.normal(scale=2, size=K)
    g = np.zeros(K)
    g[rng.integers(K)] = 1
    grad = -(g - probabilities(theta)[0])
    eps = 1e-5
    num = np.array([
        (row_nll(theta + eps * np.eye(K)[k], g) - row_nll(theta - eps * np.eye(K)[k], g)) / (2 * eps)
        for k in range(K)
    ])
    assert np.max(np.abs(num - grad)) / max(np.max(np.abs(grad)), 1e-12) < 1e-6


@given(st.integers(0, 10_000), st.integers(2, 10))
@settings(max_examples=100, deadline=None)
def test_curvature_bound(seed, K):
    rng = np.random.default_rng(seed)
    pi = rng.dirichlet(np.full(K, rng.uniform(0.05, 3)))
    J = np.eye(K) - np.ones((K, K)) / K
    M = J / 2 - (np.diag(pi) - np.outer(pi, pi))
    assert np.linalg.eigvalsh(M).min() >= -1e-12


def test_quarter_identity_is_not_a_bound_for_two_even_categories():
    pi = np.array([0.5, 0.5])
    M = np.eye(2) / 4 - (np.diag(pi) - np.outer(pi, pi))
    assert np.linalg.eigvalsh(M).min() == pytest.approx(-0.25)


@given(st.integers(0, 10_000), st.integers(1, 2))
@settings(max_examples=40, deadline=None)
def test_identify_constraints_and_orbit(seed, S):
    rng, d = _design(seed)
    p = _params(rng, d, S)
    ident = identify(p, d)
    np.testing.assert_allclose(linear_predictor(ident, d), linear_predictor(p, d), atol=1e-10)
    V = d.Z @ ident.B_z
    U = d.X @ ident.B_x
    np.testing.assert_allclose(V.T @ V, np.eye(S), atol=1e-10)
    UU = U.T @ U
    np.testing.assert_allclose(UU, np.diag(np.diag(UU)), atol=1e-8 * max(1, np.abs(UU).max()))
    assert np.all(np.diff(np.diag(UU)) <= 1e-10)
    for s in range(S):
        col = V[:, s]
        assert col[np.flatnonzero(np.abs(col) > 1e-12)[0]] > 0
    # every member of the orbit maps to the same representative
    M = rng.standard_normal((S, S)) + 3 * np.eye(S)
    moved = Parameters(p.b_w, p.B_x @ M, p.B_z @ np.linalg.inv(M).T)
    again = identify(moved, d)
    np.testing.assert_allclose(again.B_x, ident.B_x, atol=1e-8)
    np.testing.assert_allclose(again.B_z, ident.B_z, atol=1e-8)
    # idempotent
    twice = identify(ident, d)
    np.testing.assert_allclose(twice.B_x, ident.B_x, atol=1e-10)
    np.testing.assert_allclose(twice.B_z, ident.B_z, atol=1e-10)
