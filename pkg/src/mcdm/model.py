"""Model state: canonical parameters, probabilities, deviance, identification."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import log_softmax

from .design import DesignSet
from .errors import DimensionMismatch, ProbabilityUnderflow
from .linalg import svd, sym_inv_sqrt

TINY = np.finfo(float).tiny


@dataclass
class Parameters:
    """Intercept weights ``b_w`` (T), predictor loadings ``B_x`` (P x S), category loadings ``B_z`` (Q x S)."""

    b_w: np.ndarray
    B_x: np.ndarray
    B_z: np.ndarray

    def __post_init__(self):
        self.b_w = np.asarray(self.b_w, dtype=float).reshape(-1)
        self.B_x = np.asarray(self.B_x, dtype=float)
        self.B_z = np.asarray(self.B_z, dtype=float)
        if self.B_x.ndim != 2 or self.B_z.ndim != 2:
            raise DimensionMismatch("B_x and B_z must be 2-d")
        if self.B_x.shape[1] != self.B_z.shape[1]:
            raise DimensionMismatch(
                f"B_x has {self.B_x.shape[1]} columns but B_z has {self.B_z.shape[1]}"
            )

    @property
    def S(self) -> int:
        return self.B_x.shape[1]

    @classmethod
    def zeros(cls, T: int, P: int, Q: int, S: int) -> "Parameters":
        return cls(np.zeros(T), np.zeros((P, S)), np.zeros((Q, S)))

    def copy(self) -> "Parameters":
        return Parameters(self.b_w.copy(), self.B_x.copy(), self.B_z.copy())

    def intercepts(self, d: DesignSet) -> np.ndarray:
        return d.W @ self.b_w

    def object_scores(self, d: DesignSet) -> np.ndarray:
        return d.X @ self.B_x

    def category_scores(self, d: DesignSet) -> np.ndarray:
        return d.Z @ self.B_z

    def implied(self) -> np.ndarray:
        return self.B_x @ self.B_z.T


def check_dimensions(params: Parameters, d: DesignSet) -> None:
    if params.b_w.shape[0] != d.T:
        raise DimensionMismatch(f"b_w has length {params.b_w.shape[0]}, W has {d.T} columns")
    if params.B_x.shape[0] != d.P:
        raise DimensionMismatch(f"B_x has {params.B_x.shape[0]} rows, X has {d.P} columns")
    if params.B_z.shape[0] != d.Q:
        raise DimensionMismatch(f"B_z has {params.B_z.shape[0]} rows, Z has {d.Q} columns")


def linear_predictor(params: Parameters, d: DesignSet) -> np.ndarray:
    """Theta = 1 (W b_w)' + X B_x B_z' Z'."""
    check_dimensions(params, d)
    theta = np.broadcast_to(d.W @ params.b_w, (d.N, d.K)).copy()
    if params.S:
        theta += (d.X @ params.B_x) @ (d.Z @ params.B_z).T
    return theta


def probabilities(theta: np.ndarray) -> np.ndarray:
    """Row-wise softmax, shifted by the row maximum."""
    theta = np.atleast_2d(theta)
    e = np.exp(theta - theta.max(axis=1, keepdims=True))
    return e / e.sum(axis=1, keepdims=True)


def deviance(G: np.ndarray, pi: np.ndarray) -> float:
    """-2 sum g_ik log pi_ik."""
    G, pi = np.atleast_2d(G), np.atleast_2d(pi)
    if G.shape != pi.shape:
        raise DimensionMismatch(f"G is {G.shape}, pi is {pi.shape}")
    observed = G > 0
    if np.any(pi[observed] < TINY):
        raise ProbabilityUnderflow("an observed category has probability below the smallest normal")
    return float(-2.0 * np.sum(G[observed] * np.log(pi[observed])))


def deviance_from_theta(G: np.ndarray, theta: np.ndarray) -> float:
    """Deviance evaluated via log-softmax; avoids rounding pi before the log."""
    logp = log_softmax(theta, axis=1)
    observed = G > 0
    return float(-2.0 * np.sum(G[observed] * logp[observed]))


def validate_observations(G: np.ndarray) -> np.ndarray:
    G = np.atleast_2d(np.asarray(G, dtype=float))
    if not np.all((G == 0) | (G == 1)):
        raise ValueError("G must be a 0/1 indicator matrix")
    if not np.all(G.sum(axis=1) == 1):
        raise ValueError("each row of G must contain exactly one 1")
    return G


def _sign_rule(V: np.ndarray, rel_tol: float = 1e-12) -> np.ndarray:
    signs = np.ones(V.shape[1])
    for s in range(V.shape[1]):
        col = V[:, s]
        scale = np.max(np.abs(col), initial=0.0)
        nz = np.flatnonzero(np.abs(col) > rel_tol * scale) if scale > 0 else []
        if len(nz) and col[nz[0]] < 0:
            signs[s] = -1.0
    return signs


def canonical_loadings(
    A: np.ndarray, S: int, d: DesignSet
) -> tuple[np.ndarray, np.ndarray]:
    """Canonical ``(B_x, B_z)`` of rank ``S`` reproducing ``A = B_x B_z'`` when rank(A) <= S.

    Uses the SVD of ``(X'X)^(1/2) A (Z'Z)^(1/2)``: V'V = I, U'U = diag of
    squared singular values (nonincreasing), then the sign rule on V.
    """
    Rx = sym_inv_sqrt(d.X.T @ d.X)
    Rz = sym_inv_sqrt(d.Z.T @ d.Z)
    # (X'X)^(1/2) = inverse of Rx
    Kx = np.linalg.inv(Rx)
    Kz = np.linalg.inv(Rz)
    f = svd(Kx @ A @ Kz)
    B_x = Rx @ (f.left[:, :S] * f.singular_values[:S])
    B_z = Rz @ f.right[:, :S]
    signs = _sign_rule(d.Z @ B_z)
    return B_x * signs, B_z * signs


def identify(params: Parameters, d: DesignSet) -> Parameters:
    """Map parameters to the canonical representative of their orbit.

    The result yields the same Theta with ``V'V = I``, ``U'U`` diagonal and
    nonincreasing, and each column of V having its first nonzero entry
    positive.
    """
    check_dimensions(params, d)
    if params.S == 0:
        return params.copy()
    B_x, B_z = canonical_loadings(params.implied(), params.S, d)
    return Parameters(params.b_w.copy(), B_x, B_z)
