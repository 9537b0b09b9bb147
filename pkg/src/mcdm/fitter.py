"""Majorization-minimization estimation.

Each iteration replaces the negative log-likelihood by the least-squares
surrogate ``||H - Theta||^2`` built from the working responses
``H = Theta + (G - Pi) / c`` and minimizes it over the parameters, first the
intercept weights and then the bilinear part. The curvature ``c`` must bound
the Hessian ``diag(pi) - pi pi'`` from above. The default ``c = 1/2`` does so
on the subspace orthogonal to the constant, where the designs live, so every
iteration is guaranteed not to increase the deviance. ``c = 1/4`` takes twice
the step and usually converges faster, but it is not a bound when two
categories share most of the probability, and the deviance can then rise. Three schemes are available for
the bilinear part:

``joint-gsvd``
    rank-S solution of the constrained low-rank problem from one SVD in the
    metrics ``X'X`` and ``Z'Z``.
``alternating``
    ``B_x`` by least squares given ``V``, then ``B_z`` by an orthogonal
    Procrustes step given ``U``.
``dimension-wise``
    one dimension at a time, allowing entries of ``B_x``/``B_z`` to be fixed
    at zero through 0/1 masks.
"""

from __future__ import annotations

import sys
from dataclasses import dataclass, field
from typing import IO

import numpy as np

from .design import DesignSet
from .errors import (
    Diverged,
    RankOutOfRange,
    SingularNormalEquations,
    UnidentifiableMask,
)
from .linalg import svd, sym_inv_sqrt, truncate
from .model import (
    Parameters,
    _sign_rule,
    deviance_from_theta,
    identify,
    linear_predictor,
    probabilities,
    validate_observations,
)

SCHEMES = ("joint-gsvd", "alternating", "dimension-wise")


@dataclass
class FitOptions:
    max_iterations: int = 10000
    tolerance: float = 1e-8
    update_scheme: str = "joint-gsvd"
    mask_x: np.ndarray | None = None
    mask_z: np.ndarray | None = None
    trace: bool = False
    trace_stream: IO | None = None
    curvature: float = 0.5

    def __post_init__(self):
        if not 0 < self.curvature <= 1:
            raise ValueError("curvature must lie in (0, 1]")
        if self.tolerance <= 0:
            raise ValueError("tolerance must be positive")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be at least 1")
        if self.update_scheme not in SCHEMES:
            raise ValueError(f"update_scheme must be one of {SCHEMES}")
        if (self.mask_x is not None or self.mask_z is not None) and (
            self.update_scheme != "dimension-wise"
        ):
            raise ValueError("constraint masks require the dimension-wise scheme")


@dataclass
class FitResult:
    params: Parameters
    design: DesignSet
    S: int
    deviance: float
    iterations: int
    converged: bool
    trace: list = field(default_factory=list)
    scheme: str = "joint-gsvd"

    @property
    def npar(self) -> int:
        return count_parameters(self.design.T, self.S, self.design.P, self.design.Q)

    @property
    def aic(self) -> float:
        return self.deviance + 2 * self.npar

    @property
    def intercepts(self) -> np.ndarray:
        return self.design.W @ self.params.b_w

    @property
    def theta(self) -> np.ndarray:
        return linear_predictor(self.params, self.design)

    @property
    def pi(self) -> np.ndarray:
        return probabilities(self.theta)


def count_parameters(T: int, S: int, P: int, Q: int) -> int:
    return T + S * (P + Q - S)


class DesignFactors:
    """Matrices that stay fixed across iterations, computed once per fit."""

    def __init__(self, d: DesignSet):
        self.design = d
        WtW = d.W.T @ d.W
        try:
            self.W_pinv = np.linalg.solve(WtW, d.W.T)
        except np.linalg.LinAlgError as exc:
            raise SingularNormalEquations("W'W is singular") from exc
        self.Rx = sym_inv_sqrt(d.X.T @ d.X) if d.P else np.empty((0, 0))
        self.Rz = sym_inv_sqrt(d.Z.T @ d.Z) if d.Q else np.empty((0, 0))
        # (X'X)^(-1/2) X' and Z (Z'Z)^(-1/2)
        self.left = self.Rx @ d.X.T
        self.right = d.Z @ self.Rz
        self.X_pinv = self.Rx @ self.left  # (X'X)^(-1) X'

    @classmethod
    def fresh(cls, d: DesignSet) -> "DesignFactors":
        return cls(d)

    def matches(self, other: "DesignFactors", tol: float = 0.0) -> bool:
        pairs = [
            (self.W_pinv, other.W_pinv),
            (self.Rx, other.Rx),
            (self.Rz, other.Rz),
            (self.left, other.left),
            (self.right, other.right),
            (self.X_pinv, other.X_pinv),
        ]
        return all(np.max(np.abs(a - b), initial=0.0) <= tol for a, b in pairs)


def working_responses(
    theta: np.ndarray, G: np.ndarray, pi: np.ndarray, curvature: float = 0.5
) -> np.ndarray:
    """H = Theta + (G - Pi) / curvature."""
    return theta + (G - pi) / curvature


def update_intercepts(
    H: np.ndarray,
    d: DesignSet,
    B_x: np.ndarray,
    B_z: np.ndarray,
    factors: DesignFactors | None = None,
) -> np.ndarray:
    """Least-squares intercept weights given the bilinear part."""
    resid = H
    if B_x.shape[1]:
        resid = H - (d.X @ B_x) @ (d.Z @ B_z).T
    m_tilde = resid.mean(axis=0)
    if factors is None:
        try:
            return np.linalg.solve(d.W.T @ d.W, d.W.T @ m_tilde)
        except np.linalg.LinAlgError as exc:
            raise SingularNormalEquations("W'W is singular") from exc
    return factors.W_pinv @ m_tilde


def update_bilinear(
    H_c: np.ndarray, d: DesignSet, S: int, factors: DesignFactors | None = None
) -> tuple[np.ndarray, np.ndarray]:
    """Rank-S least-squares fit of ``H_c`` by ``X B_x B_z' Z'``.

    SVD of ``(X'X)^(-1/2) X' H_c Z (Z'Z)^(-1/2) = P Phi Q'`` gives
    ``B_x = (X'X)^(-1/2) P_S Phi_S`` and ``B_z = (Z'Z)^(-1/2) Q_S``.
    """
    if S > d.max_rank:
        raise RankOutOfRange(f"S={S} exceeds min(P, Q)={d.max_rank}")
    if S == 0:
        return np.zeros((d.P, 0)), np.zeros((d.Q, 0))
    f = factors or DesignFactors(d)
    core = truncate(svd(f.left @ H_c @ f.right), S)
    B_x = f.Rx @ (core.left * core.singular_values)
    B_z = f.Rz @ core.right
    signs = _sign_rule(d.Z @ B_z)
    return B_x * signs, B_z * signs


def update_bx_given_v(
    H_c: np.ndarray, d: DesignSet, V: np.ndarray, factors: DesignFactors | None = None
) -> np.ndarray:
    """B_x = (X'X)^(-1) X' H_c V for orthonormal V."""
    f = factors or DesignFactors(d)
    return f.X_pinv @ (H_c @ V)


def update_bz_given_u(
    H_c: np.ndarray, d: DesignSet, U: np.ndarray, factors: DesignFactors | None = None
) -> np.ndarray:
    """Orthonormality-constrained B_z given object scores U.

    With ``(Z'Z)^(-1/2) Z' H_c' U = P Phi Q'``, returns
    ``(Z'Z)^(-1/2) P_S Q_S'`` so that ``B_z' Z'Z B_z = I``.
    """
    f = factors or DesignFactors(d)
    S = U.shape[1]
    if S > d.Q:
        raise RankOutOfRange(f"S={S} exceeds Q={d.Q}")
    M = f.right.T @ (H_c.T @ U)
    fac = svd(M)
    return f.Rz @ (fac.left[:, :S] @ fac.right[:, :S].T)


def _dimensionwise_sweep(
    H_c: np.ndarray,
    d: DesignSet,
    B_x: np.ndarray,
    B_z: np.ndarray,
    mask_x: np.ndarray,
    mask_z: np.ndarray,
) -> tuple[np.ndarray, np.ndarray]:
    B_x, B_z = B_x.copy(), B_z.copy()
    U = d.X @ B_x
    V = d.Z @ B_z
    fitted = U @ V.T
    for s in range(B_x.shape[1]):
        fitted -= np.outer(U[:, s], V[:, s])
        R = H_c - fitted
        fx = np.flatnonzero(mask_x[:, s])
        fz = np.flatnonzero(mask_z[:, s])
        v = V[:, s]
        vv = v @ v
        if vv > 0:
            Xf = d.X[:, fx]
            c = np.linalg.solve(Xf.T @ Xf, Xf.T @ (R @ v)) / vv
            B_x[:, s] = 0.0
            B_x[fx, s] = c
        u = d.X @ B_x[:, s]
        uu = u @ u
        if uu > 0:
            Zf = d.Z[:, fz]
            e = np.linalg.solve(Zf.T @ Zf, Zf.T @ (R.T @ u)) / uu
            B_z[:, s] = 0.0
            B_z[fz, s] = e
            # unit-length V column; the scale moves into B_x
            norm = np.linalg.norm(d.Z @ B_z[:, s])
            if norm > 0:
                B_z[:, s] /= norm
                B_x[:, s] *= norm
        U[:, s] = d.X @ B_x[:, s]
        V[:, s] = d.Z @ B_z[:, s]
        fitted += np.outer(U[:, s], V[:, s])
    return B_x, B_z


def _check_masks(d: DesignSet, S: int, opts: FitOptions) -> tuple[np.ndarray, np.ndarray]:
    mx = np.ones((d.P, S)) if opts.mask_x is None else np.asarray(opts.mask_x, dtype=float)
    mz = np.ones((d.Q, S)) if opts.mask_z is None else np.asarray(opts.mask_z, dtype=float)
    if mx.shape != (d.P, S) or mz.shape != (d.Q, S):
        raise UnidentifiableMask(
            f"masks must be {(d.P, S)} and {(d.Q, S)}, got {mx.shape} and {mz.shape}"
        )
    if not (np.all((mx == 0) | (mx == 1)) and np.all((mz == 0) | (mz == 1))):
        raise UnidentifiableMask("masks must be 0/1")
    for s in range(S):
        if not mx[:, s].any() or not mz[:, s].any():
            raise UnidentifiableMask(f"dimension {s + 1} has no free entries in B_x or B_z")
    return mx.astype(bool), mz.astype(bool)


def initial_parameters(
    G: np.ndarray, d: DesignSet, S: int, factors: DesignFactors, curvature: float = 0.5
) -> Parameters:
    """Working responses at Theta = 0, intercepts without bilinear part, then one joint update."""
    H = (G - 1.0 / d.K) / curvature
    b_w = factors.W_pinv @ H.mean(axis=0)
    B_x, B_z = update_bilinear(H - d.W @ b_w, d, S, factors)
    return Parameters(b_w, B_x, B_z)


def mm_step(
    params: Parameters,
    G: np.ndarray,
    d: DesignSet,
    factors: DesignFactors,
    scheme: str = "joint-gsvd",
    masks: tuple[np.ndarray, np.ndarray] | None = None,
    curvature: float = 0.5,
) -> Parameters:
    """One MM iteration: working responses, intercept update, bilinear update."""
    theta = linear_predictor(params, d)
    H = working_responses(theta, G, probabilities(theta), curvature)
    S = params.S
    b_w = update_intercepts(H, d, params.B_x, params.B_z, factors)
    if S == 0:
        return Parameters(b_w, params.B_x, params.B_z)
    H_c = H - d.W @ b_w
    if scheme == "joint-gsvd":
        B_x, B_z = update_bilinear(H_c, d, S, factors)
    elif scheme == "alternating":
        B_x = update_bx_given_v(H_c, d, d.Z @ params.B_z, factors)
        B_z = update_bz_given_u(H_c, d, d.X @ B_x, factors)
    else:
        mx, mz = masks if masks is not None else (np.ones((d.P, S), bool), np.ones((d.Q, S), bool))
        B_x, B_z = _dimensionwise_sweep(H_c, d, params.B_x, params.B_z, mx, mz)
    return Parameters(b_w, B_x, B_z)


def _finalize(params: Parameters, d: DesignSet, masked: bool) -> Parameters:
    if params.S == 0:
        return params
    if not masked:
        return identify(params, d)
    # zero constraints rule out rotations; fix only scale and sign per dimension
    B_x, B_z = params.B_x.copy(), params.B_z.copy()
    for s in range(params.S):
        norm = np.linalg.norm(d.Z @ B_z[:, s])
        if norm > 0:
            B_z[:, s] /= norm
            B_x[:, s] *= norm
    signs = _sign_rule(d.Z @ B_z)
    return Parameters(params.b_w.copy(), B_x * signs, B_z * signs)


def fit(
    G: np.ndarray,
    d: DesignSet,
    S: int,
    opts: FitOptions | None = None,
    init: Parameters | None = None,
) -> FitResult:
    """Maximum likelihood fit by MM iterations.

    Stops when the deviance decreases by less than ``opts.tolerance`` in one
    iteration or after ``opts.max_iterations`` iterations (then
    ``converged`` is False). ``init`` overrides the default starting values.
    """
    opts = opts or FitOptions()
    G = validate_observations(G)
    if G.shape != (d.N, d.K):
        raise ValueError(f"G is {G.shape}, expected {(d.N, d.K)}")
    if not 0 <= S <= d.max_rank:
        raise RankOutOfRange(f"S={S} outside 0..min(P, Q)={d.max_rank}")
    factors = DesignFactors(d)
    masks = None
    masked = opts.mask_x is not None or opts.mask_z is not None
    if opts.update_scheme == "dimension-wise" and S:
        masks = _check_masks(d, S, opts)

    if init is not None:
        params = init.copy()
        if params.S != S:
            raise RankOutOfRange(f"initial parameters have S={params.S}, expected {S}")
    else:
        params = initial_parameters(G, d, S, factors, opts.curvature)
    if masks is not None:
        params = _masked_start(params, d, masks)

    stream = opts.trace_stream or sys.stderr
    dev = deviance_from_theta(G, linear_predictor(params, d))
    trace = [dev]
    if opts.trace:
        print(f"0\t{dev:.10f}", file=stream)
    converged = False
    it = 0
    for it in range(1, opts.max_iterations + 1):
        params = mm_step(params, G, d, factors, opts.update_scheme, masks, opts.curvature)
        new = deviance_from_theta(G, linear_predictor(params, d))
        if not np.isfinite(new):
            raise Diverged(f"deviance became {new} at iteration {it}")
        trace.append(new)
        if opts.trace:
            print(f"{it}\t{new:.10f}", file=stream)
        if dev - new < opts.tolerance:
            dev = new
            converged = True
            break
        dev = new
    params = _finalize(params, d, masked)
    return FitResult(
        params=params,
        design=d,
        S=S,
        deviance=deviance_from_theta(G, linear_predictor(params, d)),
        iterations=it,
        converged=converged,
        trace=trace,
        scheme=opts.update_scheme,
    )


def _masked_start(params: Parameters, d: DesignSet, masks) -> Parameters:
    mx, mz = masks
    B_x = np.where(mx, params.B_x, 0.0)
    B_z = np.where(mz, params.B_z, 0.0)
    for s in range(B_z.shape[1]):
        if np.linalg.norm(d.Z @ B_z[:, s]) == 0:
            B_z[mz[:, s], s] = 1.0
    return Parameters(params.b_w, B_x, B_z)


def fit_dimensionwise(
    G: np.ndarray,
    d: DesignSet,
    S: int,
    opts: FitOptions | None = None,
    mask_x: np.ndarray | None = None,
    mask_z: np.ndarray | None = None,
    init: Parameters | None = None,
) -> FitResult:
    """Dimension-wise fit; entries where a mask is 0 stay exactly zero."""
    base = opts or FitOptions()
    opts = FitOptions(
        max_iterations=base.max_iterations,
        tolerance=base.tolerance,
        update_scheme="dimension-wise",
        mask_x=mask_x if mask_x is not None else base.mask_x,
        mask_z=mask_z if mask_z is not None else base.mask_z,
        trace=base.trace,
        trace_stream=base.trace_stream,
        curvature=base.curvature,
    )
    return fit(G, d, S, opts, init=init)


__all__ = [
    "FitOptions",
    "FitResult",
    "DesignFactors",
    "count_parameters",
    "fit",
    "fit_dimensionwise",
    "initial_parameters",
    "mm_step",
    "update_bilinear",
    "update_bx_given_v",
    "update_bz_given_u",
    "update_intercepts",
    "working_responses",
]
