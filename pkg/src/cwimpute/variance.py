"""Plug-in asymptotic variances for two-arm contrasts and normal-theory intervals."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Union

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy.stats import norm

from .core import DataValidationError, TrialDataset, allocation
from .estimators import EstimateResult, fit_arm, mim_design
from .imputation import ImputationPlan, impute
from .numlin import sample_cov_matrix

__all__ = [
    "ContrastInference",
    "var_si_contrast",
    "var_cwi_contrast",
    "var_mim_contrast",
    "confidence_interval",
]


@dataclass(frozen=True)
class ContrastInference:
    estimate: float
    se: float
    ci: tuple[float, float]
    level: float

    def covers(self, value: float) -> bool:
        return self.ci[0] <= value <= self.ci[1]


def _check_pair(dataset: TrialDataset, t: int, s: int) -> None:
    k = dataset.k
    if k < 2:
        raise ValueError("contrast needs at least 2 arms")
    if t == s or not (1 <= t <= k and 1 <= s <= k):
        raise ValueError(f"invalid contrast ({t}, {s}) for {k} arms")
    counts = dataset.arm_counts()
    for a in (t, s):
        if counts[a - 1] < 2:
            raise DataValidationError(f"arm {a} has {counts[a - 1]} subject")


def _si_form(y: NDArray, arm: NDArray, z: NDArray, pi: NDArray, t: int, s: int) -> float:
    """Residual variances over pi plus the slope-difference quadratic form."""
    fit_t = fit_arm(y, arm, z, t)
    fit_s = fit_arm(y, arm, z, s)
    diff = fit_t.coefficients[1:] - fit_s.coefficients[1:]
    value = (
        np.var(fit_t.residuals, ddof=1) / pi[t - 1]
        + np.var(fit_s.residuals, ddof=1) / pi[s - 1]
    )
    if diff.size:
        value += float(diff @ sample_cov_matrix(z) @ diff)
    return float(value)


def var_si_contrast(
    dataset: TrialDataset,
    plan: Union[ImputationPlan, ArrayLike],
    t: int = 2,
    s: int = 1,
) -> float:
    """Asymptotic variance of ``sqrt(n)(theta_t - theta_s)`` under single imputation.

    ``plan`` is a single-imputation plan or the imputation vector itself.
    """
    _check_pair(dataset, t, s)
    if isinstance(plan, ImputationPlan):
        if not plan.is_single:
            raise ValueError("var_si_contrast needs a plan with identical rows")
        c = plan.values[0]
    else:
        c = np.asarray(plan, dtype=float).reshape(-1)
    z = impute(dataset.x, dataset.r, c)
    return _si_form(dataset.y, dataset.arm, z, allocation(dataset), t, s)


def _cwi_general(dataset: TrialDataset, c_t: NDArray, c_s: NDArray, t: int, s: int) -> float:
    y, arm = dataset.y, dataset.arm
    pi = allocation(dataset)
    z_t = impute(dataset.x, dataset.r, c_t)
    z_s = impute(dataset.x, dataset.r, c_s)
    fit_tt = fit_arm(y, arm, z_t, t)
    fit_ss = fit_arm(y, arm, z_s, s)
    value = (
        np.var(fit_tt.residuals, ddof=1) / pi[t - 1]
        + np.var(fit_ss.residuals, ddof=1) / pi[s - 1]
    )
    J = dataset.J
    if J == 0:
        return float(value)
    b_tt = fit_tt.coefficients[1:]
    b_ss = fit_ss.coefficients[1:]
    # arm-s slope in world t and arm-t slope in world s
    b_st = fit_arm(y, arm, z_t, s).coefficients[1:]
    b_ts = fit_arm(y, arm, z_s, t).coefficients[1:]
    joint = sample_cov_matrix(np.hstack([z_t, z_s]))
    sig_t = joint[:J, :J]
    sig_s = joint[J:, J:]
    sig_ts = joint[:J, J:]
    value += (
        b_tt @ sig_t @ b_tt
        + b_ss @ sig_s @ b_ss
        + 2.0 * b_tt @ sig_ts @ b_ss
        - 2.0 * b_st @ sig_t @ b_tt
        - 2.0 * b_ss @ sig_s @ b_ts
    )
    return float(value)


def var_cwi_contrast(dataset: TrialDataset, plan: ImputationPlan, t: int = 2, s: int = 1) -> float:
    """Asymptotic variance of ``sqrt(n)(theta_t - theta_s)`` under cross-world imputation.

    Cross-arm slopes (arm ``s`` outcomes on world-``t`` covariates) are fitted
    within arm ``s``. When rows ``t`` and ``s`` coincide this is the single
    imputation formula, evaluated through :func:`var_si_contrast`.
    """
    _check_pair(dataset, t, s)
    c_t, c_s = plan.row(t), plan.row(s)
    if np.array_equal(c_t, c_s):
        return var_si_contrast(dataset, c_t, t, s)
    return _cwi_general(dataset, c_t, c_s, t, s)


def var_mim_contrast(dataset: TrialDataset, mim_result: EstimateResult, t: int = 2, s: int = 1) -> float:
    """Single-imputation variance formula on the augmented covariates ``[R o X, R]``."""
    if mim_result.method != "anhecova-mim":
        raise ValueError("var_mim_contrast needs the result of anhecova_mim")
    _check_pair(dataset, t, s)
    w = mim_design(dataset, mim_result.indicator_columns)
    return _si_form(dataset.y, dataset.arm, w, allocation(dataset), t, s)


def confidence_interval(estimate: float, variance: float, n: int, level: float = 0.95) -> ContrastInference:
    """Normal-approximation interval ``estimate +/- z * sqrt(variance / n)``."""
    if not 0.0 < level < 1.0:
        raise ValueError(f"level must lie in (0, 1), got {level}")
    if n < 1:
        raise ValueError("n must be positive")
    if variance < 0 or not np.isfinite(variance):
        raise ValueError(f"variance estimate {variance} is negative or not finite")
    se = float(np.sqrt(variance / n))
    half = float(norm.ppf(0.5 + level / 2.0)) * se
    return ContrastInference(float(estimate), se, (estimate - half, estimate + half), level)
