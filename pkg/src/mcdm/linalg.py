"""Dense linear-algebra kernel used by the estimation updates.

Only three things are needed: a symmetric inverse square root for the Gram
matrices ``X'X`` and ``Z'Z``, an SVD with a deterministic sign convention, and
truncation of the SVD to the leading ``S`` components.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConvergenceFailure, NotPositiveDefinite, NotSymmetric, RankOutOfRange

RANK_TOL = 1e-10
SYMMETRY_TOL = 1e-8


@dataclass(frozen=True)
class SvdFactors:
    """Thin SVD ``A = left @ diag(singular_values) @ right.T``."""

    left: np.ndarray
    singular_values: np.ndarray
    right: np.ndarray

    @property
    def rank(self) -> int:
        return self.singular_values.shape[0]

    def reconstruct(self) -> np.ndarray:
        return (self.left * self.singular_values) @ self.right.T


def check_symmetric(M: np.ndarray, tol: float = SYMMETRY_TOL) -> None:
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise NotSymmetric(f"matrix must be square, got shape {M.shape}")
    scale = np.max(np.abs(M)) if M.size else 0.0
    if np.max(np.abs(M - M.T), initial=0.0) > tol * max(scale, np.finfo(float).tiny):
        raise NotSymmetric("matrix is not symmetric within tolerance")


def sym_inv_sqrt(M: np.ndarray, rank_tol: float = RANK_TOL) -> np.ndarray:
    """Inverse square root ``R`` of a symmetric positive-definite matrix.

    ``R`` is symmetric and satisfies ``R @ M @ R = I``. Eigenvalues at or below
    ``rank_tol`` times the largest eigenvalue are treated as zero, in which case
    :class:`NotPositiveDefinite` is raised.
    """
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if M.shape[0] != M.shape[1]:
        raise NotSymmetric(f"matrix must be square, got shape {M.shape}")
    check_symmetric(M)
    M = 0.5 * (M + M.T)
    evals, evecs = np.linalg.eigh(M)
    top = evals[-1]
    if top <= 0 or evals[0] <= rank_tol * top:
        raise NotPositiveDefinite(
            f"smallest eigenvalue {evals[0]:.3g} is not positive relative to largest {top:.3g}"
        )
    R = (evecs / np.sqrt(evals)) @ evecs.T
    return 0.5 * (R + R.T)


def _fix_signs(left: np.ndarray, right: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    # largest-magnitude entry of each left vector made positive; first index wins ties
    if left.shape[1] == 0:
        return left, right
    idx = np.argmax(np.abs(left), axis=0)
    signs = np.sign(left[idx, np.arange(left.shape[1])])
    signs[signs == 0] = 1.0
    return left * signs, right * signs


def svd(A: np.ndarray) -> SvdFactors:
    """Thin SVD with singular values in nonincreasing order and fixed signs."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    if not np.all(np.isfinite(A)):
        raise ConvergenceFailure("SVD input contains non-finite entries")
    try:
        u, s, vt = np.linalg.svd(A, full_matrices=False)
    except np.linalg.LinAlgError as exc:  # pragma: no cover - LAPACK failure
        raise ConvergenceFailure(str(exc)) from exc
    left, right = _fix_signs(u, vt.T)
    return SvdFactors(left=left, singular_values=s, right=right)


def truncate(f: SvdFactors, S: int) -> SvdFactors:
    """Keep the ``S`` leading singular triplets.

    LAPACK returns values sorted descending, so equal values keep their
    original column order and the first of a tied group is retained.
    """
    if not 1 <= S <= f.rank:
        raise RankOutOfRange(f"S={S} outside 1..{f.rank}")
    return SvdFactors(
        left=f.left[:, :S].copy(),
        singular_values=f.singular_values[:S].copy(),
        right=f.right[:, :S].copy(),
    )


def column_rank(A: np.ndarray, rank_tol: float = RANK_TOL) -> int:
    """Numerical column rank using the same scale-relative rule as ``sym_inv_sqrt``."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    if A.shape[1] == 0:
        return 0
    s = np.linalg.svd(A, compute_uv=False)
    if s[0] == 0:
        return 0
    # eigenvalues of A'A are s**2
    return int(np.sum(s**2 > rank_tol * s[0] ** 2))
