import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cwimpute.numlin import numerical_rank, ols, sample_cov, sample_cov_matrix


def normal_equations(a, b):
    """Reference solution through the Gram matrix."""
    return np.linalg.solve(a.T @ a, a.T @ b)


@settings(max_examples=150, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 12), st.integers(0, 60))
def test_ols_matches_normal_equations(seed, p, extra):
    rng = np.random.default_rng(seed)
    m = p + extra + 2
    a = rng.normal(size=(m, p)) * rng.uniform(0.2, 5.0, p)
    b = rng.normal(size=m)
    fit = ols(a, b)
    assert fit.rank_ok and fit.rank == p
    ref = normal_equations(a, b)
    assert np.allclose(fit.coefficients, ref, rtol=1e-8, atol=1e-8)
    assert np.allclose(fit.residuals, b - a @ ref, atol=1e-8)
    # residuals are orthogonal to the columns
    assert np.abs(a.T @ fit.residuals).max() < 1e-8 * (1 + np.abs(a).sum())


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 8))
def test_fitted_values_invariant_to_reparameterisation(seed, p):
    rng = np.random.default_rng(seed)
    a = rng.normal(size=(40, p))
    b = rng.normal(size=40)
    g = rng.normal(size=(p, p)) + 2.0 * np.eye(p)
    if np.linalg.cond(g) > 1e4:
        return
    fitted = a @ ols(a, b).coefficients
    moved = a @ g
    assert np.abs(moved @ ols(moved, b).coefficients - fitted).max() < 1e-8


def test_ols_exact_fit():
    a = np.column_stack([np.ones(5), np.arange(5.0)])
    fit = ols(a, 2.0 + 3.0 * np.arange(5.0))
    assert np.allclose(fit.coefficients, [2.0, 3.0])
    assert np.abs(fit.residuals).max() < 1e-12


def test_rank_deficiency_reported_not_raised():
    rng = np.random.default_rng(1)
    a = rng.normal(size=(20, 3))
    a = np.column_stack([a, a[:, 0] + a[:, 1]])
    fit = ols(a, rng.normal(size=20))
    assert not fit.rank_ok and fit.rank == 3
    assert numerical_rank(a) == 3


def test_underdetermined_rejected():
    with pytest.raises(ValueError):
        ols(np.ones((2, 3)), np.ones(2))


def test_no_implicit_intercept():
    x = np.arange(1.0, 6.0)[:, None]
    fit = ols(x, 1.0 + x[:, 0])
    assert fit.coefficients.shape == (1,)
    assert not np.isclose(fit.coefficients[0], 1.0)


def test_sample_cov_matches_numpy():
    rng = np.random.default_rng(3)
    a, b = rng.normal(size=(2, 50))
    assert np.isclose(sample_cov(a, b), np.cov(a, b)[0, 1])
    m = rng.normal(size=(50, 4))
    s = sample_cov_matrix(m)
    assert np.allclose(s, np.cov(m, rowvar=False))
    assert np.array_equal(s, s.T)


def test_sample_cov_needs_two_points():
    with pytest.raises(ValueError):
        sample_cov(np.ones(1), np.ones(1))
