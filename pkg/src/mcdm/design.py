"""Design matrices for the participants (X) and the categories (Z, W).

Profiles of ``R`` binary responses are enumerated with response 1 varying
slowest and each response coded ``-1/2`` (low) or ``+1/2`` (high). A term is a
nonempty set of response indices (1-based); its column holds the product of the
codes of the responses in the term.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import (
    DesignError,
    EmptyTermSet,
    HierarchyViolation,
    RankDeficient,
    TermOutOfRange,
    ZeroVariance,
)
from .linalg import column_rank

Term = tuple  # sorted tuple of 1-based response indices


def parse_term(text: str | int | Iterable[int]) -> Term:
    """Parse ``"1:2"`` (or an int / iterable of ints) into a sorted term tuple."""
    if isinstance(text, (int, np.integer)):
        parts = [int(text)]
    elif isinstance(text, str):
        pieces = [p.strip() for p in text.split(":")]
        if not text.strip() or any(not p for p in pieces):
            raise DesignError(f"malformed term {text!r}")
        try:
            parts = [int(p) for p in pieces]
        except ValueError:
            raise DesignError(f"malformed term {text!r}") from None
    else:
        parts = [int(p) for p in text]
    if not parts:
        raise DesignError("a term needs at least one response index")
    term = tuple(sorted(parts))
    if len(set(term)) != len(term):
        raise DesignError(f"repeated response index in term {text!r}")
    return term


def format_term(term: Term, names: Sequence[str] | None = None) -> str:
    if names is None:
        return ":".join(str(r) for r in term)
    return ":".join(names[r - 1] for r in term)


class TermSet(tuple):
    """Ordered, duplicate-free collection of terms."""

    def __new__(cls, terms: Iterable = ()):
        seen = []
        for t in terms:
            term = parse_term(t)
            if term in seen:
                raise DesignError(f"duplicate term {format_term(term)}")
            seen.append(term)
        return super().__new__(cls, seen)

    @classmethod
    def up_to_order(cls, R: int, order: int) -> "TermSet":
        """All terms with at most ``order`` responses, ordered by size then lexicographically."""
        order = min(order, R)
        return cls(
            t for k in range(1, order + 1) for t in itertools.combinations(range(1, R + 1), k)
        )

    @classmethod
    def saturated(cls, R: int) -> "TermSet":
        return cls.up_to_order(R, R)

    def max_order(self) -> int:
        return max((len(t) for t in self), default=0)

    def contains(self, term) -> bool:
        return parse_term(term) in self

    def union(self, other: Iterable) -> "TermSet":
        return TermSet(list(self) + [t for t in map(parse_term, other) if t not in self])

    def without(self, term) -> "TermSet":
        term = parse_term(term)
        return TermSet(t for t in self if t != term)

    def is_hierarchical(self) -> bool:
        """True if every proper nonempty subset of every term is also present."""
        for t in self:
            for k in range(1, len(t)):
                for sub in itertools.combinations(t, k):
                    if sub not in self:
                        return False
        return True

    def labels(self, names: Sequence[str] | None = None) -> list[str]:
        return [format_term(t, names) for t in self]


@dataclass(frozen=True)
class ProfileCoding:
    """Bijection between the ``K = 2**R`` profiles and the binary responses.

    ``names`` are the response names, ``levels[r]`` is the ``(low, high)``
    label pair of response ``r``; the high label is coded ``+1/2``.
    """

    R: int
    names: tuple = ()
    levels: tuple = ()

    def __post_init__(self):
        if self.R < 1:
            raise DesignError("need at least one binary response")
        if not self.names:
            object.__setattr__(self, "names", tuple(f"Y{r}" for r in range(1, self.R + 1)))
        if not self.levels:
            object.__setattr__(self, "levels", tuple((0, 1) for _ in range(self.R)))
        if len(self.names) != self.R or len(self.levels) != self.R:
            raise DesignError("names/levels must have one entry per response")

    @property
    def K(self) -> int:
        return 2**self.R

    def codes(self) -> np.ndarray:
        """K x R matrix of +-1/2 codes; response 1 varies slowest."""
        return np.array(list(itertools.product((-0.5, 0.5), repeat=self.R)))

    def profile_index(self, high: Sequence[bool]) -> int:
        """Row index of the profile whose response ``r`` is high iff ``high[r]``."""
        if len(high) != self.R:
            raise DesignError(f"expected {self.R} responses, got {len(high)}")
        k = 0
        for h in high:
            k = 2 * k + (1 if h else 0)
        return k

    def profile_bits(self, k: int) -> tuple:
        return tuple(bool((k >> (self.R - 1 - r)) & 1) for r in range(self.R))

    def profile_label(self, k: int) -> str:
        return ",".join(
            str(lv[1] if b else lv[0]) for lv, b in zip(self.levels, self.profile_bits(k))
        )


def build_profile_design(coding: ProfileCoding, terms: Iterable) -> np.ndarray:
    """K x |terms| design matrix of code products for the given terms."""
    terms = TermSet(terms)
    if len(terms) == 0:
        raise EmptyTermSet("term set is empty")
    for t in terms:
        if t[0] < 1 or t[-1] > coding.R:
            raise TermOutOfRange(f"term {format_term(t)} outside responses 1..{coding.R}")
    y = coding.codes()
    cols = [np.prod(y[:, [r - 1 for r in t]], axis=1) for t in terms]
    return np.column_stack(cols)


@dataclass(frozen=True)
class HierarchyReport:
    ok: bool
    missing: tuple = ()

    def __bool__(self) -> bool:
        return self.ok


def validate_hierarchy(z_terms: Iterable, w_terms: Iterable) -> HierarchyReport:
    z_terms, w_terms = TermSet(z_terms), TermSet(w_terms)
    missing = tuple(t for t in z_terms if t not in w_terms)
    return HierarchyReport(ok=not missing, missing=missing)


# predictor encoding -------------------------------------------------------

DIRECTIVES = ("passthrough", "center", "standardize")


@dataclass
class PredictorEncoding:
    """Encoded predictor matrix plus what is needed to encode new rows identically."""

    X: np.ndarray
    labels: list
    directives: dict
    centers: np.ndarray
    scales: np.ndarray

    def transform(self, table: Mapping[str, Sequence]) -> np.ndarray:
        cols = []
        for j, name in enumerate(self.labels):
            if name not in table:
                raise DesignError(f"predictor column {name!r} missing")
            x = _as_numeric(table[name], self.directives[name], name)
            cols.append((x - self.centers[j]) / self.scales[j])
        return np.column_stack(cols) if cols else np.empty((0, 0))


def _as_numeric(values, directive, name) -> np.ndarray:
    if isinstance(directive, str) and directive.startswith("indicator:"):
        level = directive.split(":", 1)[1]
        return np.array([1.0 if str(v) == level else 0.0 for v in values])
    try:
        return np.asarray(values, dtype=float)
    except (TypeError, ValueError):
        raise DesignError(f"predictor {name!r} is not numeric; use an 'indicator:LEVEL' directive") from None


def encode_predictors(
    table: Mapping[str, Sequence], spec: Mapping[str, str]
) -> PredictorEncoding:
    """Encode raw predictor columns into X.

    ``spec`` maps column name to ``"passthrough"``, ``"center"``,
    ``"standardize"`` or ``"indicator:LEVEL"``; its order fixes the column
    order of X. Standardization uses the N-1 denominator.
    """
    labels = list(spec)
    cols, centers, scales = [], [], []
    n = None
    for name in labels:
        directive = spec[name]
        if not (directive in DIRECTIVES or str(directive).startswith("indicator:")):
            raise DesignError(f"unknown directive {directive!r} for predictor {name!r}")
        if name not in table:
            raise DesignError(f"predictor column {name!r} missing")
        x = _as_numeric(table[name], directive, name)
        if n is None:
            n = x.shape[0]
        elif x.shape[0] != n:
            raise DesignError("predictor columns differ in length")
        if np.any(~np.isfinite(x)):
            raise DesignError(f"predictor {name!r} has missing or non-finite values")
        center, scale = 0.0, 1.0
        if directive in ("center", "standardize"):
            center = x.mean()
        if directive == "standardize":
            if x.shape[0] < 2:
                raise DesignError("standardization needs at least two rows")
            scale = x.std(ddof=1)
            if scale == 0:
                raise ZeroVariance(f"predictor {name!r} is constant and cannot be standardized")
        cols.append((x - center) / scale)
        centers.append(center)
        scales.append(scale)
    if n is not None and n < 2:
        raise DesignError("need at least two observations")
    X = np.column_stack(cols) if cols else np.empty((n or 0, 0))
    check_full_column_rank(X, labels, "X")
    return PredictorEncoding(
        X=X,
        labels=labels,
        directives=dict(spec),
        centers=np.array(centers),
        scales=np.array(scales),
    )


def dependent_columns(A: np.ndarray) -> list[int]:
    """Indices of columns that are linear combinations of earlier columns."""
    dep, keep = [], []
    for j in range(A.shape[1]):
        trial = keep + [j]
        if column_rank(A[:, trial]) < len(trial):
            dep.append(j)
        else:
            keep.append(j)
    return dep


def check_full_column_rank(A: np.ndarray, labels: Sequence[str] | None, what: str) -> None:
    if A.shape[1] == 0:
        return
    if column_rank(A) < A.shape[1]:
        dep = dependent_columns(A)
        names = [labels[j] if labels else str(j) for j in dep]
        raise RankDeficient(f"{what} is not of full column rank; dependent columns: {names}")


def _spans_constant(A: np.ndarray) -> bool:
    if A.shape[1] == 0:
        return False
    one = np.ones(A.shape[0])
    coef, *_ = np.linalg.lstsq(A, one, rcond=None)
    return np.linalg.norm(A @ coef - one) < 1e-8 * np.sqrt(A.shape[0])


@dataclass
class DesignSet:
    """The three design matrices and their labels.

    ``X`` (N x P) describes participants, ``Z`` (K x Q) the categories that
    predictors act on, and ``W`` (K x T) the intercept structure. When the
    categories are profiles, ``z_terms``/``w_terms`` record the terms and
    ``coding`` the profile enumeration.
    """

    X: np.ndarray
    Z: np.ndarray
    W: np.ndarray
    x_labels: list = field(default_factory=list)
    z_labels: list = field(default_factory=list)
    w_labels: list = field(default_factory=list)
    z_terms: TermSet | None = None
    w_terms: TermSet | None = None
    coding: ProfileCoding | None = None

    def __post_init__(self):
        self.X = np.atleast_2d(np.asarray(self.X, dtype=float))
        self.Z = np.atleast_2d(np.asarray(self.Z, dtype=float))
        self.W = np.atleast_2d(np.asarray(self.W, dtype=float))
        if self.Z.shape[0] != self.W.shape[0]:
            raise DesignError(f"Z has {self.Z.shape[0]} rows but W has {self.W.shape[0]}")
        if not self.x_labels:
            self.x_labels = [f"x{j + 1}" for j in range(self.P)]
        if not self.z_labels:
            self.z_labels = (
                self.z_terms.labels(self.coding.names if self.coding else None)
                if self.z_terms is not None
                else [f"z{j + 1}" for j in range(self.Q)]
            )
        if not self.w_labels:
            self.w_labels = (
                self.w_terms.labels(self.coding.names if self.coding else None)
                if self.w_terms is not None
                else [f"w{j + 1}" for j in range(self.T)]
            )
        self.validate()

    @property
    def N(self) -> int:
        return self.X.shape[0]

    @property
    def P(self) -> int:
        return self.X.shape[1]

    @property
    def K(self) -> int:
        return self.W.shape[0]

    @property
    def Q(self) -> int:
        return self.Z.shape[1]

    @property
    def T(self) -> int:
        return self.W.shape[1]

    @property
    def max_rank(self) -> int:
        return min(self.P, self.Q)

    def validate(self) -> None:
        if self.T == 0:
            raise DesignError("W needs at least one column")
        for name, A, labels in (
            ("X", self.X, self.x_labels),
            ("Z", self.Z, self.z_labels),
            ("W", self.W, self.w_labels),
        ):
            if not np.all(np.isfinite(A)):
                raise DesignError(f"{name} has non-finite entries")
            check_full_column_rank(A, labels, name)
        if self.P and _spans_constant(self.X):
            raise DesignError("X must not contain an intercept; the intercepts are carried by W")
        for name, A in (("Z", self.Z), ("W", self.W)):
            if _spans_constant(A):
                raise DesignError(
                    f"the constant vector lies in the column space of {name}; drop the intercept column"
                )
        if self.z_terms is not None and self.w_terms is not None:
            report = validate_hierarchy(self.z_terms, self.w_terms)
            if not report.ok:
                raise HierarchyViolation(
                    "Z terms missing from W: " + ", ".join(format_term(t) for t in report.missing)
                )

    @classmethod
    def for_profiles(
        cls,
        X: np.ndarray,
        coding: ProfileCoding,
        z_terms: Iterable,
        w_terms: Iterable,
        x_labels: Sequence[str] | None = None,
    ) -> "DesignSet":
        z_terms, w_terms = TermSet(z_terms), TermSet(w_terms)
        Z = build_profile_design(coding, z_terms) if z_terms else np.empty((coding.K, 0))
        W = build_profile_design(coding, w_terms)
        return cls(
            X=X,
            Z=Z,
            W=W,
            x_labels=list(x_labels) if x_labels is not None else [],
            z_terms=z_terms,
            w_terms=w_terms,
            coding=coding,
        )

    def with_X(self, X: np.ndarray, x_labels: Sequence[str] | None = None) -> "DesignSet":
        return DesignSet(
            X=X,
            Z=self.Z,
            W=self.W,
            x_labels=list(x_labels) if x_labels is not None else list(self.x_labels),
            z_labels=list(self.z_labels),
            w_labels=list(self.w_labels),
            z_terms=self.z_terms,
            w_terms=self.w_terms,
            coding=self.coding,
        )


def profile_indicator(
    responses: Sequence[Sequence], coding: ProfileCoding
) -> np.ndarray:
    """N x K indicator matrix from R response columns of (low/high) labels."""
    if len(responses) != coding.R:
        raise DesignError(f"expected {coding.R} response columns, got {len(responses)}")
    n = len(responses[0])
    idx = np.zeros(n, dtype=int)
    for r, (col, (low, high)) in enumerate(zip(responses, coding.levels)):
        if len(col) != n:
            raise DesignError("response columns differ in length")
        for i, v in enumerate(col):
            if v == high or str(v) == str(high):
                bit = 1
            elif v == low or str(v) == str(low):
                bit = 0
            else:
                raise DesignError(
                    f"row {i + 1}: response {coding.names[r]!r} has unknown label {v!r}"
                )
            idx[i] = 2 * idx[i] + bit
    G = np.zeros((n, coding.K))
    G[np.arange(n), idx] = 1.0
    return G


def treatment_design(K: int) -> np.ndarray:
    """Saturated K x (K-1) design for unstructured categories (first category as reference)."""
    return np.eye(K)[:, 1:]
