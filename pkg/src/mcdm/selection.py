"""AIC, stepwise model selection and case-bootstrap confidence intervals."""

from __future__ import annotations

import itertools
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Iterable, Sequence

import numpy as np

from .design import DesignSet, ProfileCoding, TermSet, format_term, validate_hierarchy
from .errors import InvalidLevel, MCDMError
from .fitter import FitOptions, FitResult, count_parameters, fit

log = logging.getLogger(__name__)

STEP_KINDS = ("dimensionality", "z-structure", "x-structure", "w-structure")


def npar(T: int, S: int, P: int, Q: int) -> int:
    """Naive parameter count T + S (P + Q - S)."""
    return count_parameters(T, S, P, Q)


def aic(result: FitResult) -> float:
    """Deviance + 2 npar."""
    d = result.design
    return result.deviance + 2 * npar(d.T, result.S, d.P, d.Q)


@dataclass(frozen=True)
class ModelSpec:
    """Rank, Z and W term sets, and the predictor columns kept in X."""

    S: int
    z_terms: TermSet
    w_terms: TermSet
    x_columns: tuple

    def summary(self, R: int | None = None, names: Sequence[str] | None = None) -> dict:
        return {
            "S": self.S,
            "Z": describe_terms(self.z_terms, R, names),
            "X": " + ".join(self.x_columns) if self.x_columns else "-",
            "W": describe_terms(self.w_terms, R, names),
        }


def describe_terms(terms: TermSet, R: int | None = None, names: Sequence[str] | None = None) -> str:
    """Compact description: highest complete order plus any extra terms."""
    if not terms:
        return "-"
    if R is None:
        return ", ".join(format_term(t, names) for t in terms)
    order = 0
    for o in range(1, R + 1):
        if all(t in terms for t in TermSet.up_to_order(R, o)):
            order = o
    base = set(TermSet.up_to_order(R, order)) if order else set()
    extra = [format_term(t, names) for t in terms if t not in base]
    parts = ([str(order)] if order else []) + extra
    return " + ".join(parts)


@dataclass
class SelectionData:
    """Everything needed to build a design for any candidate spec."""

    G: np.ndarray
    X: np.ndarray
    x_labels: list
    coding: ProfileCoding | None = None
    Z: np.ndarray | None = None  # direct (non-profile) pathway
    W: np.ndarray | None = None

    def design(self, spec: ModelSpec) -> DesignSet:
        cols = [self.x_labels.index(c) for c in spec.x_columns]
        X = self.X[:, cols] if cols else np.empty((self.X.shape[0], 0))
        if self.coding is not None:
            return DesignSet.for_profiles(X, self.coding, spec.z_terms, spec.w_terms, list(spec.x_columns))
        return DesignSet(X=X, Z=self.Z, W=self.W, x_labels=list(spec.x_columns))


@dataclass
class Candidate:
    spec: ModelSpec
    deviance: float
    npar: int
    aic: float
    converged: bool = True
    error: str | None = None
    result: FitResult | None = field(default=None, repr=False)

    @property
    def feasible(self) -> bool:
        return self.error is None


@dataclass
class SelectionStep:
    kind: str
    candidates: list
    chosen: ModelSpec

    @property
    def chosen_candidate(self) -> Candidate:
        return next(c for c in self.candidates if c.spec == self.chosen)


@dataclass
class StepwiseOptions:
    fit_options: FitOptions = field(default_factory=FitOptions)
    steps: tuple = STEP_KINDS
    dimensions: Sequence[int] | None = None
    forced: Sequence[str] = ()
    n_jobs: int = 1


def _key(c: Candidate, index: int):
    return (c.aic, c.npar, index)


def _best(cands: list) -> Candidate:
    return min(((c, i) for i, c in enumerate(cands)), key=lambda ci: _key(*ci))[0]


def _fit_candidate(data: SelectionData, spec: ModelSpec, fopts: FitOptions) -> Candidate:
    try:
        if spec.z_terms is not None and spec.w_terms is not None and data.coding is not None:
            report = validate_hierarchy(spec.z_terms, spec.w_terms)
            if not report.ok:
                raise MCDMError("hierarchy violated")
        d = data.design(spec)
        if spec.S > d.max_rank:
            raise MCDMError(f"S={spec.S} exceeds min(P, Q)={d.max_rank}")
        res = fit(data.G, d, spec.S, fopts)
    except (MCDMError, np.linalg.LinAlgError, ValueError) as exc:
        return Candidate(spec, np.inf, -1, np.inf, False, str(exc))
    return Candidate(spec, res.deviance, res.npar, aic(res), res.converged, None, res)


def _fit_all(data, specs, opts: StepwiseOptions, cache: dict) -> list:
    todo = [s for s in specs if s not in cache]
    if opts.n_jobs > 1 and len(todo) > 1:
        with ThreadPoolExecutor(max_workers=opts.n_jobs) as pool:
            fitted = list(pool.map(lambda s: _fit_candidate(data, s, opts.fit_options), todo))
    else:
        fitted = [_fit_candidate(data, s, opts.fit_options) for s in todo]
    for s, c in zip(todo, fitted):
        cache[s] = c
    return [cache[s] for s in specs]


def _dedupe(specs: Iterable[ModelSpec]) -> list:
    out = []
    for s in specs:
        if s not in out:
            out.append(s)
    return out


def _step_dimensionality(data, spec, opts, cache, R):
    if opts.dimensions is not None:
        dims = list(opts.dimensions)
    else:
        P = len(spec.x_columns)
        Q = len(spec.z_terms) if data.coding is not None else data.Z.shape[1]
        dims = list(range(0, min(P, Q) + 1))
    specs = _dedupe(replace(spec, S=S) for S in dims)
    cands = _fit_all(data, specs, opts, cache)
    return SelectionStep("dimensionality", cands, _best(cands).spec)


def _step_z(data, spec, opts, cache, R):
    z = spec.z_terms
    top = z.max_order()
    by_order = [replace(spec, z_terms=TermSet(t for t in z if len(t) <= o)) for o in range(top, 0, -1)]
    cands = _fit_all(data, _dedupe(by_order), opts, cache)
    base = _best(cands)
    o_star = base.spec.z_terms.max_order()
    # re-add single dropped terms one order up whose constituents are all present
    extra = [
        t
        for t in z
        if len(t) == o_star + 1
        and t not in base.spec.z_terms
        and all(
            sub in base.spec.z_terms
            for k in range(1, len(t))
            for sub in itertools.combinations(t, k)
        )
    ]
    singles = [replace(base.spec, z_terms=base.spec.z_terms.union([t])) for t in extra]
    single_cands = _fit_all(data, singles, opts, cache)
    accepted = [t for t, c in zip(extra, single_cands) if _key(c, 0) < _key(base, 0)]
    combo = []
    if len(accepted) > 1:
        combo = _fit_all(data, [replace(base.spec, z_terms=base.spec.z_terms.union(accepted))], opts, cache)
    allc = cands + single_cands + combo
    return SelectionStep("z-structure", allc, _best(allc).spec)


def _step_x(data, spec, opts, cache, R):
    current = _fit_all(data, [spec], opts, cache)[0]
    allc = [current]
    while True:
        droppable = [c for c in current.spec.x_columns if c not in opts.forced]
        if not droppable:
            break
        specs = [
            replace(current.spec, x_columns=tuple(c for c in current.spec.x_columns if c != drop))
            for drop in droppable
        ]
        round_ = _fit_all(data, specs, opts, cache)
        allc.extend(round_)
        best = _best(round_)
        if best.feasible and (best.aic, best.npar) < (current.aic, current.npar):
            current = best
        else:
            break
    return SelectionStep("x-structure", allc, _best(allc).spec)


def _step_w(data, spec, opts, cache, R):
    w = spec.w_terms
    top = w.max_order()
    specs = [
        replace(spec, w_terms=TermSet(t for t in w if len(t) <= o or t in spec.z_terms))
        for o in range(top, 0, -1)
    ]
    cands = _fit_all(data, _dedupe(specs), opts, cache)
    return SelectionStep("w-structure", cands, _best(cands).spec)


_STEPS: dict[str, Callable] = {
    "dimensionality": _step_dimensionality,
    "z-structure": _step_z,
    "x-structure": _step_x,
    "w-structure": _step_w,
}


def stepwise(
    G: np.ndarray,
    data: SelectionData,
    full_spec: ModelSpec,
    opts: StepwiseOptions | None = None,
) -> tuple[list, ModelSpec]:
    """Four-step AIC search: rank, then Z, then X, then W.

    Every candidate fit is kept in the returned steps; candidates that fail to
    fit are recorded with ``aic = inf`` and an error message. Ties on AIC go to
    the model with fewer parameters, then to the earlier candidate.
    """
    opts = opts or StepwiseOptions()
    data = replace(data, G=G)
    unknown = set(opts.forced) - set(full_spec.x_columns)
    if unknown:
        raise MCDMError(f"forced predictors not in the model: {sorted(unknown)}")
    if data.coding is not None and not validate_hierarchy(full_spec.z_terms, full_spec.w_terms):
        raise MCDMError("full model violates the Z-in-W hierarchy")
    R = data.coding.R if data.coding is not None else None
    cache: dict = {}
    steps = []
    spec = full_spec
    for kind in opts.steps:
        if kind not in _STEPS:
            raise ValueError(f"unknown step {kind!r}")
        if kind in ("z-structure", "w-structure") and data.coding is None:
            continue
        step = _STEPS[kind](data, spec, opts, cache, R)
        steps.append(step)
        spec = step.chosen
        log.info("%s step chose %s", kind, spec.summary(R))
    return steps, spec


def selection_report(steps: list, coding: ProfileCoding | None = None) -> list[dict]:
    """One record per candidate: step, spec summary, deviance, npar, AIC, chosen flag."""
    R = coding.R if coding else None
    names = coding.names if coding else None
    rows = []
    for step in steps:
        for c in step.candidates:
            row = {"step": step.kind}
            row.update(c.spec.summary(R, names))
            row.update(
                deviance=c.deviance,
                npar=c.npar,
                aic=c.aic,
                chosen=c.spec == step.chosen,
                error=c.error or "",
            )
            rows.append(row)
    return rows


# bootstrap ----------------------------------------------------------------


@dataclass
class BootstrapResult:
    """Percentile intervals for implied coefficients and intercept weights."""

    implied: np.ndarray  # B x P x Q replicate values
    b_w: np.ndarray  # B x T
    implied_lower: np.ndarray
    implied_upper: np.ndarray
    b_w_lower: np.ndarray
    b_w_upper: np.ndarray
    alpha: float
    seed: int
    B: int
    failures: int = 0
    errors: list = field(default_factory=list)

    @property
    def failure_fraction(self) -> float:
        return self.failures / self.B if self.B else 0.0


def _replicate(G, d: DesignSet, S, idx, fopts, init):
    try:
        rd = d.with_X(d.X[idx])
        res = fit(G[idx], rd, S, fopts, init=init)
    except (MCDMError, np.linalg.LinAlgError) as exc:
        return None, str(exc)
    return res, None


def bootstrap(
    G: np.ndarray,
    design: DesignSet,
    S: int,
    B: int = 1000,
    alpha: float = 0.05,
    seed: int = 0,
    fit_options: FitOptions | None = None,
    n_jobs: int = 1,
    warm_start: FitResult | None = None,
) -> BootstrapResult:
    """Case bootstrap: resample rows with replacement, refit, take percentiles.

    All resampling indices are drawn up front from one seeded generator, so
    the result does not depend on ``n_jobs``. Replicates that fail to fit
    (e.g. a resample that makes X rank deficient) are excluded and counted.
    ``warm_start`` starts each replicate from that fit's parameters.
    """
    if B < 1:
        raise ValueError("B must be at least 1")
    if not 0 < alpha < 1:
        raise InvalidLevel(f"alpha must lie in (0, 1), got {alpha}")
    fopts = fit_options or FitOptions()
    rng = np.random.default_rng(seed)
    N = design.N
    indices = [rng.integers(0, N, size=N) for _ in range(B)]
    init = warm_start.params if warm_start is not None else None

    def run(idx):
        return _replicate(G, design, S, idx, fopts, init)

    if n_jobs > 1:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            outcomes = list(pool.map(run, indices))
    else:
        outcomes = [run(idx) for idx in indices]

    A_reps, b_reps, errors = [], [], []
    for res, err in outcomes:
        if res is None:
            errors.append(err)
            continue
        A_reps.append(res.params.implied() if S else np.zeros((design.P, design.Q)))
        b_reps.append(res.params.b_w)
    if not A_reps:
        raise MCDMError(f"all {B} bootstrap replicates failed; first error: {errors[0]}")
    A_reps = np.array(A_reps)
    b_reps = np.array(b_reps)
    q = [alpha / 2, 1 - alpha / 2]
    A_lo, A_hi = np.quantile(A_reps, q, axis=0)
    b_lo, b_hi = np.quantile(b_reps, q, axis=0)
    return BootstrapResult(
        implied=A_reps,
        b_w=b_reps,
        implied_lower=A_lo,
        implied_upper=A_hi,
        b_w_lower=b_lo,
        b_w_upper=b_hi,
        alpha=alpha,
        seed=seed,
        B=B,
        failures=len(errors),
        errors=errors,
    )
