import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cwimpute.core import NumericalError, TrialDataset
from cwimpute.imputation import observed_means
from cwimpute.optimal_si import (
    LARGE_SDS,
    PopulationMoments1D,
    SIVarianceObjective,
    gain_1d,
    moments_1d,
    nelder_mead,
    optimal_c_closed_1d,
    optimal_c_numeric,
)
from cwimpute.simulation import ScenarioConfig, generate, random_dataset
from cwimpute.variance import var_si_contrast
from helpers import paired_dataset

seeds = st.integers(0, 2**31 - 1)

moment_values = st.builds(
    PopulationMoments1D,
    cov_missing_outcome=st.floats(-5, 5),
    cov_covariate_outcome=st.floats(-5, 5),
    obs_mean=st.floats(-5, 5),
    var_indicator=st.floats(0.01, 0.25),
    obs_var=st.floats(0.01, 10),
    obs_rate=st.floats(0.05, 0.95),
    pi=st.just((0.5, 0.5)),
)


@settings(max_examples=300, deadline=None)
@given(moment_values, st.floats(-1e3, 1e3))
def test_gain_is_nonnegative(m, c):
    assert gain_1d(c, m) >= 0.0


@settings(max_examples=300, deadline=None)
@given(moment_values)
def test_gain_vanishes_at_the_zero_gain_point(m):
    if abs(m.cov_missing_outcome) < 1e-3:
        return
    assert gain_1d(-m.cov_covariate_outcome / m.cov_missing_outcome, m) < 1e-10


@settings(max_examples=200, deadline=None)
@given(moment_values)
def test_gain_limit_far_from_observed_mean(m):
    if abs(m.cov_missing_outcome) < 1e-2:
        return
    limit = m.cov_missing_outcome**2 / (m.pi[0] * m.pi[1] * m.var_indicator)
    far = m.obs_mean + 1e6 * np.sqrt(m.obs_var)
    assert abs(gain_1d(far, m) / limit - 1) < 0.01


@settings(max_examples=300, deadline=None)
@given(moment_values)
def test_closed_form_maximises_gain(m):
    opt = optimal_c_closed_1d(m)
    best = gain_1d(opt.value, m)
    grid = m.obs_mean + np.sqrt(m.obs_var) * np.linspace(-50, 50, 401)
    assert all(gain_1d(c, m) <= best * (1 + 1e-9) + 1e-12 for c in grid)


def test_degenerate_branch_goes_far_and_reaches_the_limit():
    m = PopulationMoments1D(cov_missing_outcome=0.5, cov_covariate_outcome=-0.5 * 0.3, obs_mean=0.3, var_indicator=0.2,
                            obs_var=2.0, obs_rate=0.7, pi=(0.5, 0.5))
    opt = optimal_c_closed_1d(m)
    assert opt.kind == "degenerate-large"
    assert np.isclose(abs(opt.value - 0.3), LARGE_SDS * np.sqrt(2.0))
    limit = m.cov_missing_outcome**2 / (0.25 * m.var_indicator)
    assert abs(gain_1d(opt.value, m) / limit - 1) < 0.01


def test_branch_with_unrelated_indicator_returns_observed_mean():
    d = paired_dataset(5000, seed=1)
    m = moments_1d(d)
    assert abs(m.cov_missing_outcome) < 1e-10
    opt = optimal_c_closed_1d(m)
    assert opt.kind == "observed-mean"
    assert opt.value == pytest.approx(float(observed_means(d.x, d.r)[0]), abs=1e-12)


def test_numeric_optimum_near_observed_mean_when_indicator_unrelated():
    d = paired_dataset(5000, seed=2)  # n = 10,000
    res = optimal_c_numeric(d)
    assert abs(res.c[0] - observed_means(d.x, d.r)[0]) < 0.05


def test_no_missingness_has_no_optimum():
    d = TrialDataset.from_arrays(np.arange(8.0), [1, 2] * 4, np.arange(8.0)[:, None] ** 2)
    with pytest.raises(NumericalError, match="no missingness"):
        optimal_c_closed_1d(moments_1d(d))


def test_gain_matches_variance_reduction_at_large_n():
    d, _ = generate(ScenarioConfig(case="case2", n=200_000, J=2, reps=1), 5)
    d1 = d.subset_covariates([1])
    m = moments_1d(d1)
    v_anova = var_si_contrast(d1.subset_covariates([]), np.zeros(0))
    for c in (-2.0, 0.0, 0.5, 3.0):
        reduction = v_anova - var_si_contrast(d1, [c])
        assert abs(reduction - gain_1d(c, m)) < 0.01 * v_anova


@pytest.mark.parametrize("case", ["case1", "case2", "case3"])
def test_closed_form_never_worse_than_observed_mean(case):
    d, _ = generate(ScenarioConfig(case=case, n=20_000, J=2, reps=1), 3)
    d1 = d.subset_covariates([0])
    opt = optimal_c_closed_1d(moments_1d(d1))
    mean = observed_means(d1.x, d1.r)
    assert var_si_contrast(d1, [opt.value]) <= var_si_contrast(d1, mean) + 1e-9


@settings(max_examples=40, deadline=None)
@given(seeds, st.integers(1, 5))
def test_fast_objective_equals_variance_formula(seed, J):
    d = random_dataset(seed, n=100, J=J)
    f = SIVarianceObjective(d)
    rng = np.random.default_rng(seed)
    for _ in range(3):
        c = rng.normal(scale=3.0, size=J)
        assert np.isclose(f(c), var_si_contrast(d, c), rtol=1e-10)
    assert f.evaluations == 3


def test_nelder_mead_on_quadratic_and_rosenbrock():
    x, fx, ok, evals = nelder_mead(lambda v: float(((v - [1.0, -2.0]) ** 2).sum()), [0.0, 0.0], 0.5, 1000)
    assert ok and np.allclose(x, [1.0, -2.0], atol=1e-5)
    rosen = lambda v: float(100 * (v[1] - v[0] ** 2) ** 2 + (1 - v[0]) ** 2)
    x, fx, ok, evals = nelder_mead(rosen, [-1.2, 1.0], 0.1, 5000)
    assert ok and np.allclose(x, [1.0, 1.0], atol=1e-3)


def test_nelder_mead_respects_evaluation_budget():
    calls = []

    def f(v):
        calls.append(1)
        return float((v**2).sum())

    x, fx, ok, evals = nelder_mead(f, [5.0, 5.0, 5.0], 1.0, max_evals=20)
    assert not ok
    assert evals == len(calls) and evals <= 20 + 3
    assert fx <= f(np.array([5.0, 5.0, 5.0]))


@settings(max_examples=15, deadline=None)
@given(seeds)
def test_numeric_optimum_is_no_worse_than_the_observed_mean(seed):
    d = random_dataset(seed, n=120, J=2)
    res = optimal_c_numeric(d)
    assert res.objective <= var_si_contrast(d, observed_means(d.x, d.r)) + 1e-12
    assert np.isclose(res.objective, var_si_contrast(d, res.c), rtol=1e-10)
    assert res.objective <= min(f for f, _ in res.candidates) + 1e-6


def test_numeric_optimizer_is_deterministic():
    d, _ = generate(ScenarioConfig(case="case3", n=500, J=5, reps=1), 1)
    a, b = optimal_c_numeric(d), optimal_c_numeric(d)
    assert np.array_equal(a.c, b.c) and a.objective == b.objective
    assert len(a.candidates) == 5


def test_single_start_without_restarts():
    d = random_dataset(4, n=120, J=2)
    res = optimal_c_numeric(d, init=[0.0, 0.0], restarts=False)
    assert len(res.candidates) == 1 and np.array_equal(res.start, [0.0, 0.0])


def test_search_stays_in_box_when_optimum_is_at_infinity():
    # the variance here keeps falling as the second value grows without bound
    d = random_dataset(242948517, n=120, J=2)
    res = optimal_c_numeric(d)
    sd = d.x[d.r[:, 1] == 1, 1].std(ddof=1)
    assert abs(res.c[1] - observed_means(d.x, d.r)[1]) <= LARGE_SDS * sd * (1 + 1e-12)
    assert np.isclose(res.objective, var_si_contrast(d, res.c), rtol=1e-10)
