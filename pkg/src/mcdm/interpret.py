"""Interpretation of fitted models for profiles of binary responses.

Effects are expressed as changes in the log odds of one response, or in the
log odds ratio of two responses, comparing profiles that agree on all other
responses (the *holding pattern*). Contrasts are formed on the design rows
first and then mapped through the parameters, so that contrasts which vanish
by construction come out exactly zero.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .design import ProfileCoding, TermSet, format_term
from .errors import DimensionMismatch, MCDMError, TargetNotInModel
from .fitter import FitResult
from .model import Parameters, probabilities


@dataclass
class ImpliedCoefficients:
    """``A = B_x B_z'``; rows are predictors, columns are Z terms."""

    A: np.ndarray
    row_labels: list
    col_labels: list

    def __getitem__(self, key):
        row, col = key
        i = self.row_labels.index(row) if isinstance(row, str) else row
        j = self.col_labels.index(col) if isinstance(col, str) else col
        return self.A[i, j]


def implied_coefficients(params: Parameters, fit: FitResult | None = None) -> ImpliedCoefficients:
    if params.S < 1:
        raise MCDMError("implied coefficients need S >= 1")
    A = params.B_x @ params.B_z.T
    if fit is not None:
        rows, cols = list(fit.design.x_labels), list(fit.design.z_labels)
    else:
        rows = [f"x{j + 1}" for j in range(A.shape[0])]
        cols = [f"z{j + 1}" for j in range(A.shape[1])]
    return ImpliedCoefficients(A, rows, cols)


@dataclass
class EffectQuery:
    """Target response ``r`` (int) or pair ``(r, r')``, 1-based.

    ``holding`` maps the other responses to True (high) / False (low); missing
    entries default to low.
    """

    target: int | tuple
    x: np.ndarray | None = None
    holding: Mapping[int, bool] = field(default_factory=dict)

    def responses(self) -> tuple:
        t = (self.target,) if isinstance(self.target, (int, np.integer)) else tuple(self.target)
        if len(set(t)) != len(t):
            raise ValueError("pair queries need two distinct responses")
        return t


@dataclass
class Effect:
    intercept_contrast: float
    slope_per_predictor: np.ndarray
    value_at_x: float
    profiles: tuple  # (k, l) or (k, l, n, o)


def _coding(fit: FitResult, coding: ProfileCoding | None) -> ProfileCoding:
    coding = coding or fit.design.coding
    if coding is None:
        raise MCDMError("effect queries need a profile coding")
    if coding.K != fit.design.K:
        raise DimensionMismatch(f"coding has K={coding.K}, model has K={fit.design.K}")
    return coding


def _profile(coding: ProfileCoding, fixed: Mapping[int, bool], holding: Mapping[int, bool]) -> int:
    bits = [bool(holding.get(r, False)) for r in range(1, coding.R + 1)]
    for r, v in fixed.items():
        bits[r - 1] = v
    return coding.profile_index(bits)


def _check_target(fit: FitResult, responses: tuple, coding: ProfileCoding) -> None:
    for r in responses:
        if not 1 <= r <= coding.R:
            raise TargetNotInModel(f"response {r} outside 1..{coding.R}")
    d = fit.design
    if d.z_terms is None or d.w_terms is None:
        return
    # a single response needs a main effect in Z or some W term involving it;
    # a pair needs its association somewhere, or at least main-effect structure
    target = tuple(sorted(responses))
    in_z = target in d.z_terms or any(set(target) <= set(t) for t in d.z_terms)
    in_w = any(set(target) & set(t) for t in d.w_terms)
    if not (in_z or in_w):
        names = format_term(target, coding.names)
        raise TargetNotInModel(f"{names} has no Z column and no W term to contrast")


def _effect(fit: FitResult, weights: dict, x: np.ndarray | None) -> tuple[float, np.ndarray, float]:
    d = fit.design
    P = fit.params
    w_con = sum(c * d.W[k] for k, c in weights.items())
    z_con = sum(c * d.Z[k] for k, c in weights.items())
    intercept = float(w_con @ P.b_w)
    slope = P.B_x @ (P.B_z.T @ z_con) if P.S else np.zeros(d.P)
    x = np.zeros(d.P) if x is None else np.asarray(x, dtype=float)
    if x.shape != (d.P,):
        raise DimensionMismatch(f"x has shape {x.shape}, expected ({d.P},)")
    return intercept, slope, intercept + float(x @ slope)


def log_odds(query: EffectQuery, fit: FitResult, coding: ProfileCoding | None = None) -> Effect:
    """Log odds of response r (high vs low) at predictor values x.

    Equals ``m_k - m_l + x' B_x (v_k - v_l)`` for profiles k, l that differ
    only in response r.
    """
    coding = _coding(fit, coding)
    (r,) = query.responses()
    _check_target(fit, (r,), coding)
    k = _profile(coding, {r: True}, query.holding)
    l = _profile(coding, {r: False}, query.holding)
    ic, slope, value = _effect(fit, {k: 1.0, l: -1.0}, query.x)
    return Effect(ic, slope, value, (k, l))


def log_odds_ratio(query: EffectQuery, fit: FitResult, coding: ProfileCoding | None = None) -> Effect:
    """Log odds ratio of responses r and r' at predictor values x.

    Profiles: k = (high, high), l = (low, high), n = (high, low),
    o = (low, low) in positions (r, r'); value is
    ``m_k + m_o - m_l - m_n + x' B_x (v_k + v_o - v_l - v_n)``.
    """
    coding = _coding(fit, coding)
    r, rr = query.responses()
    _check_target(fit, (r, rr), coding)
    k = _profile(coding, {r: True, rr: True}, query.holding)
    l = _profile(coding, {r: False, rr: True}, query.holding)
    n = _profile(coding, {r: True, rr: False}, query.holding)
    o = _profile(coding, {r: False, rr: False}, query.holding)
    ic, slope, value = _effect(fit, {k: 1.0, o: 1.0, l: -1.0, n: -1.0}, query.x)
    return Effect(ic, slope, value, (k, l, n, o))


def holding_patterns(R: int, exclude: Sequence[int]) -> list[dict]:
    """All assignments of the responses not in ``exclude``."""
    others = [r for r in range(1, R + 1) if r not in exclude]
    return [dict(zip(others, bits)) for bits in itertools.product((False, True), repeat=len(others))]


def effect_by_pattern(query: EffectQuery, fit: FitResult, coding: ProfileCoding | None = None) -> list:
    """The effect for every holding pattern, as ``(pattern, Effect)`` pairs."""
    coding = _coding(fit, coding)
    responses = query.responses()
    func = log_odds if len(responses) == 1 else log_odds_ratio
    out = []
    for pattern in holding_patterns(coding.R, responses):
        q = EffectQuery(query.target, query.x, pattern)
        out.append((pattern, func(q, fit, coding)))
    return out


@dataclass
class InterceptAssociation:
    pair: tuple
    label: str
    value: float
    in_w: bool


def intercept_associations(fit: FitResult, coding: ProfileCoding | None = None) -> list[InterceptAssociation]:
    """Pairwise log odds ratios at x = 0 for pairs not modelled in Z."""
    coding = _coding(fit, coding)
    z_terms = fit.design.z_terms or TermSet()
    w_terms = fit.design.w_terms or TermSet()
    out = []
    for pair in itertools.combinations(range(1, coding.R + 1), 2):
        if pair in z_terms:
            continue
        eff = log_odds_ratio(EffectQuery(pair), fit, coding)
        label = format_term(pair, coding.names)
        out.append(InterceptAssociation(pair, label, eff.intercept_contrast, pair in w_terms))
    return out


@dataclass
class CoefficientTable:
    """Rows: intercept contrast (labelled ``"1"``) then predictors; columns: Z terms.

    ``column_kinds`` flags whether the intercept row of a column is a log odds
    (main effect) or a log odds ratio (pairwise association).
    """

    row_labels: list
    col_labels: list
    values: np.ndarray
    column_kinds: list

    def to_text(self, digits: int = 2) -> str:
        width = max(8, digits + 6)
        head = " " * 10 + "".join(f"{c:>{width}}" for c in self.col_labels)
        lines = [head]
        for label, row in zip(self.row_labels, self.values):
            cells = "".join(f"{v:>{width}.{digits}f}" if np.isfinite(v) else f"{'-':>{width}}" for v in row)
            lines.append(f"{label:<10}{cells}")
        return "\n".join(lines)

    def to_rows(self) -> list[list]:
        rows = [["term"] + list(self.col_labels), ["kind"] + list(self.column_kinds)]
        for label, row in zip(self.row_labels, self.values):
            rows.append([label] + [float(v) for v in row])
        return rows


def coefficient_table(fit: FitResult, coding: ProfileCoding | None = None, holding=None) -> CoefficientTable:
    """Intercept contrasts over implied coefficients, one column per Z term."""
    d = fit.design
    coding = _coding(fit, coding)
    holding = holding or {}
    terms = d.z_terms or TermSet()
    kinds, first = [], []
    for t in terms:
        if len(t) == 1:
            kinds.append("log-odds")
            first.append(log_odds(EffectQuery(t[0], None, holding), fit, coding).intercept_contrast)
        elif len(t) == 2:
            kinds.append("log-odds-ratio")
            first.append(log_odds_ratio(EffectQuery(t, None, holding), fit, coding).intercept_contrast)
        else:
            kinds.append("higher-order")
            first.append(np.nan)
    A = fit.params.implied() if fit.S else np.zeros((d.P, d.Q))
    values = np.vstack([np.array(first, dtype=float).reshape(1, -1), A]) if d.Q else np.zeros((d.P + 1, 0))
    return CoefficientTable(["1"] + list(d.x_labels), list(d.z_labels), values, kinds)


@dataclass
class Prediction:
    profile_probabilities: np.ndarray
    marginal_response_probabilities: np.ndarray | None


def predict(fit: FitResult, x_new: np.ndarray, coding: ProfileCoding | None = None) -> Prediction:
    """Profile probabilities for predictor rows, plus P(response r high) when profiles are coded."""
    d = fit.design
    x_new = np.asarray(x_new, dtype=float)
    single = x_new.ndim == 1
    X = np.atleast_2d(x_new)
    if X.shape[1] != d.P:
        raise DimensionMismatch(f"x_new has {X.shape[1]} predictors, model has {d.P}")
    theta = d.W @ fit.params.b_w + (X @ fit.params.B_x) @ (d.Z @ fit.params.B_z).T
    pi = probabilities(np.atleast_2d(theta))
    coding = coding or d.coding
    marg = None
    if coding is not None:
        high = (coding.codes() > 0).astype(float)
        marg = pi @ high
    if single:
        return Prediction(pi[0], None if marg is None else marg[0])
    return Prediction(pi, marg)


__all__ = [
    "CoefficientTable",
    "Effect",
    "EffectQuery",
    "ImpliedCoefficients",
    "InterceptAssociation",
    "Prediction",
    "coefficient_table",
    "effect_by_pattern",
    "holding_patterns",
    "implied_coefficients",
    "intercept_associations",
    "log_odds",
    "log_odds_ratio",
    "predict",
]
