import numpy as np
import pytest

from conftest import ACM_MODELS
from mcdm.design import DesignSet, ProfileCoding, TermSet, validate_hierarchy
from mcdm.errors import InvalidLevel, MCDMError
from mcdm.fitter import FitOptions, fit
from mcdm.selection import (
    Candidate,
    ModelSpec,
    SelectionData,
    StepwiseOptions,
    _best,
    aic,
    bootstrap,
    describe_terms,
    npar,
    selection_report,
    stepwise,
)

FAST = FitOptions(tolerance=1e-7)


def simulate_rank_one(rng, N=500, scale=1.0):
    """Three binary responses, three predictors, one true dimension on main effects."""
    coding = ProfileCoding(3)
    X = rng.standard_normal((N, 3))
    z, w = TermSet.up_to_order(3, 1), TermSet.up_to_order(3, 2)
    d = DesignSet.for_profiles(X, coding, z, w)
    b_w = np.array([0.3, -0.2, 0.1, 0.8, 0.4, -0.5])
    a = scale * np.array([1.0, -0.8, 0.5])
    v = np.array([1.0, 0.7, -0.6])
    theta = d.W @ b_w + np.outer(X @ a, d.Z @ v)
    p = np.exp(theta - theta.max(axis=1, keepdims=True))
    p /= p.sum(axis=1, keepdims=True)
    y = (p.cumsum(axis=1) > rng.random((N, 1))).argmax(axis=1)
    return np.eye(d.K)[y], d, np.outer(a, v)


@pytest.mark.parametrize("model,expected", [("1", 3), ("2", 12), ("4a", 11), ("4b", 11), ("4c", 11), ("5", 10), ("7", 8)])
def test_npar_matches_table(model, expected):
    S, z, w = ACM_MODELS[model]
    assert npar(len(w), S, 2, len(z)) == expected


def test_aic_definition():
    rng = np.random.default_rng(0)
    G, d, _ = simulate_rank_one(rng, N=100)
    res = fit(G, d, 1, FAST)
    assert aic(res) == res.deviance + 2 * (d.T + 1 * (d.P + d.Q - 1))
    assert npar(6, 0, 2, 3) == 6


def test_tie_break_prefers_fewer_parameters_then_order():
    spec = ModelSpec(1, TermSet(["1"]), TermSet(["1"]), ("x1",))
    a = Candidate(spec, 10.0, 5, 20.0)
    b = Candidate(spec, 12.0, 4, 20.0)
    c = Candidate(spec, 12.0, 4, 20.0)
    assert _best([a, b, c]) is b
    assert _best([Candidate(spec, np.inf, -1, np.inf, False, "boom"), a]) is a


def test_describe_terms():
    assert describe_terms(TermSet.up_to_order(3, 2), 3) == "2"
    assert describe_terms(TermSet(["1", "2", "3", "1:3"]), 3, ["A", "C", "M"]) == "1 + A:M"
    assert describe_terms(TermSet(), 3) == "-"


@pytest.fixture(scope="module")
def selection_run():
    rng = np.random.default_rng(1)
    G, d, _ = simulate_rank_one(rng, N=300)
    data = SelectionData(G, d.X, ["x1", "x2", "x3"], d.coding)
    full = ModelSpec(3, TermSet.up_to_order(3, 2), TermSet.saturated(3), ("x1", "x2", "x3"))
    steps, final = stepwise(G, data, full, StepwiseOptions(FAST, forced=("x3",)))
    return steps, final, data


def test_stepwise_structure(selection_run):
    steps, final, _ = selection_run
    assert [s.kind for s in steps] == ["dimensionality", "z-structure", "x-structure", "w-structure"]
    dims = sorted(c.spec.S for c in steps[0].candidates)
    assert dims == [0, 1, 2, 3]
    for step in steps:
        chosen = step.chosen_candidate
        assert all(chosen.aic <= c.aic for c in step.candidates)
        for c in step.candidates:
            assert validate_hierarchy(c.spec.z_terms, c.spec.w_terms).ok
            assert "x3" in c.spec.x_columns
    assert steps[-1].chosen == final
    assert validate_hierarchy(final.z_terms, final.w_terms).ok


def test_stepwise_steps_chain(selection_run):
    steps, _, _ = selection_run
    for prev, nxt in zip(steps, steps[1:]):
        # each step re-evaluates the previous choice among its candidates
        assert any(c.spec == prev.chosen for c in nxt.candidates)


def test_z_step_tries_order_reduction(selection_run):
    steps, _, _ = selection_run
    orders = {c.spec.z_terms.max_order() for c in steps[1].candidates}
    assert {1, 2} <= orders


def test_w_step_keeps_z_terms(selection_run):
    steps, _, _ = selection_run
    for c in steps[3].candidates:
        assert all(t in c.spec.w_terms for t in c.spec.z_terms)


def test_selection_report(selection_run):
    steps, _, data = selection_run
    rows = selection_report(steps, data.coding)
    assert len(rows) == sum(len(s.candidates) for s in steps)
    assert {"step", "S", "Z", "X", "W", "deviance", "npar", "aic", "chosen"} <= set(rows[0])
    assert sum(r["chosen"] for r in rows if r["step"] == "dimensionality") >= 1


def test_single_candidate_degenerate_call():
    rng = np.random.default_rng(2)
    G, d, _ = simulate_rank_one(rng, N=120)
    data = SelectionData(G, d.X, ["x1", "x2", "x3"], d.coding)
    full = ModelSpec(1, d.z_terms, d.w_terms, ("x1", "x2", "x3"))
    steps, final = stepwise(G, data, full, StepwiseOptions(FAST, steps=("dimensionality",), dimensions=[1]))
    assert len(steps) == 1 and len(steps[0].candidates) == 1 and final == full


def test_infeasible_candidates_are_recorded():
    rng = np.random.default_rng(3)
    G, d, _ = simulate_rank_one(rng, N=120)
    data = SelectionData(G, d.X, ["x1", "x2", "x3"], d.coding)
    full = ModelSpec(1, d.z_terms, d.w_terms, ("x1", "x2", "x3"))
    steps, final = stepwise(G, data, full, StepwiseOptions(FAST, steps=("dimensionality",), dimensions=[1, 5]))
    bad = [c for c in steps[0].candidates if not c.feasible]
    assert len(bad) == 1 and bad[0].aic == np.inf and bad[0].error
    assert final.S == 1


def test_stepwise_rejects_bad_inputs():
    rng = np.random.default_rng(4)
    G, d, _ = simulate_rank_one(rng, N=60)
    data = SelectionData(G, d.X, ["x1", "x2", "x3"], d.coding)
    full = ModelSpec(1, d.z_terms, d.w_terms, ("x1", "x2", "x3"))
    with pytest.raises(MCDMError):
        stepwise(G, data, full, StepwiseOptions(forced=("age",)))
    with pytest.raises(MCDMError):
        stepwise(G, data, ModelSpec(1, TermSet(["1", "1:2"]), TermSet(["1", "2"]), ("x1",)))
    with pytest.raises(ValueError):
        stepwise(G, data, full, StepwiseOptions(steps=("bogus",)))


def test_parallel_selection_matches_serial():
    rng = np.random.default_rng(5)
    G, d, _ = simulate_rank_one(rng, N=150)
    data = SelectionData(G, d.X, ["x1", "x2", "x3"], d.coding)
    full = ModelSpec(3, d.z_terms, d.w_terms, ("x1", "x2", "x3"))
    serial = stepwise(G, data, full, StepwiseOptions(FAST, steps=("dimensionality",)))
    parallel = stepwise(G, data, full, StepwiseOptions(FAST, steps=("dimensionality",), n_jobs=4))
    assert [c.aic for c in serial[0][0].candidates] == [c.aic for c in parallel[0][0].candidates]


def _rank_choices(n_rep, seed=2024):
    rng = np.random.default_rng(seed)
    picks = []
    opts = StepwiseOptions(FitOptions(tolerance=1e-8), steps=("dimensionality",))
    for _ in range(n_rep):
        G, d, _ = simulate_rank_one(rng)
        data = SelectionData(G, d.X, ["x1", "x2", "x3"], d.coding)
        full = ModelSpec(3, d.z_terms, d.w_terms, ("x1", "x2", "x3"))
        picks.append(stepwise(G, data, full, opts)[1].S)
    return np.bincount(picks, minlength=4)


@pytest.fixture(scope="module")
def rank_choices():
    return _rank_choices(50)


def test_rank_one_truth_is_the_modal_choice(rank_choices):
    # AIC never misses the true dimension here and overfits it in a minority of runs
    assert rank_choices[0] == 0
    assert rank_choices[1] == rank_choices.max()
    assert rank_choices[1] / rank_choices.sum() >= 0.7


@pytest.mark.xfail(
    strict=True,
    reason="AIC overfits the rank in roughly 18% of replicates for P = Q = 3; see notes on the target rate",
)
def test_rank_one_truth_selected_ninety_percent(rank_choices):
    assert rank_choices[1] / rank_choices.sum() >= 0.9


def test_bootstrap_degenerate_and_deterministic():
    rng = np.random.default_rng(6)
    G, d, _ = simulate_rank_one(rng, N=120)
    one = bootstrap(G, d, 1, B=1, seed=3, fit_options=FAST)
    np.testing.assert_array_equal(one.implied_lower, one.implied_upper)
    np.testing.assert_array_equal(one.implied_lower, one.implied[0])
    a = bootstrap(G, d, 1, B=5, seed=9, fit_options=FAST)
    b = bootstrap(G, d, 1, B=5, seed=9, fit_options=FAST, n_jobs=3)
    np.testing.assert_array_equal(a.implied_lower, b.implied_lower)
    np.testing.assert_array_equal(a.b_w_upper, b.b_w_upper)
    assert np.all(a.implied_lower <= a.implied_upper)
    q = np.quantile(a.implied, [0.025, 0.975], axis=0)
    np.testing.assert_array_equal(q[0], a.implied_lower)
    assert a.failure_fraction == 0
    c = bootstrap(G, d, 1, B=5, seed=10, fit_options=FAST)
    assert not np.array_equal(a.implied, c.implied)


def test_bootstrap_validation():
    rng = np.random.default_rng(7)
    G, d, _ = simulate_rank_one(rng, N=60)
    for alpha in (0, 1, 1.5):
        with pytest.raises(InvalidLevel):
            bootstrap(G, d, 1, B=2, alpha=alpha)
    with pytest.raises(ValueError):
        bootstrap(G, d, 1, B=0)


def test_bootstrap_records_failed_replicates():
    # a rare binary predictor: some resamples lose it entirely, making X rank deficient
    rng = np.random.default_rng(8)
    G, d, _ = simulate_rank_one(rng, N=40)
    X = d.X.copy()
    X[:, 2] = 0.0
    X[0, 2] = 1.0
    rd = d.with_X(X)
    res = bootstrap(G, rd, 1, B=20, seed=0, fit_options=FitOptions(max_iterations=50))
    assert res.failures > 0 and res.failures == len(res.errors)
    assert res.implied.shape[0] == 20 - res.failures
