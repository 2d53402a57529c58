"""Point estimators of the arm means under single, cross-world and indicator imputation.

Every adjusted estimator here has the standardisation form

    theta_t = mean(Y | arm t) - b_t' (mean(Z_t | arm t) - mean(Z_t))

where ``Z_t`` is the covariate matrix of the world used for arm ``t`` and ``b_t``
the slope fitted within arm ``t``. Averages in the second mean run over all
subjects, so each world is imputed for the whole sample.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .core import NumericalError, ReducedIndicators, TrialDataset, reduce_indicators
from .imputation import ImputationPlan, build_plan, impute
from .numlin import LsFit, numerical_rank, ols

__all__ = [
    "METHODS",
    "EstimateResult",
    "anova",
    "ancova_si",
    "anhecova_si",
    "anhecova_cwi",
    "anhecova_mim",
    "mim_to_cwi_values",
    "anhecova_ti",
    "mim_design",
    "fit_arm",
]

METHODS = ("anova", "ancova-si", "anhecova-si", "anhecova-cwi", "anhecova-mim", "anhecova-ti")

BETA_ZERO_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class EstimateResult:
    """Arm-mean estimates with the fitted slopes behind them.

    ``theta[t - 1]`` estimates the mean outcome of arm ``t``. For the indicator
    method, ``gammas`` holds the indicator coefficients for the columns listed in
    ``indicator_columns``.
    """

    theta: NDArray[np.float64]
    betas: NDArray[np.float64]
    method: str
    plan: Optional[ImputationPlan] = None
    gammas: Optional[NDArray[np.float64]] = None
    indicator_columns: tuple[int, ...] = ()
    rank_dropped: tuple[int, ...] = ()
    reduction: Optional[ReducedIndicators] = None
    notes: tuple[str, ...] = field(default=())

    def contrast(self, t: int, s: int) -> float:
        """``theta_t - theta_s``."""
        return float(self.theta[t - 1] - self.theta[s - 1])


def fit_arm(y: NDArray, arm: NDArray, z: NDArray, t: int) -> LsFit:
    """OLS of ``y`` on an intercept and ``z``, using the subjects of arm ``t`` only."""
    sel = arm == t
    zt = z[sel]
    design = np.empty((zt.shape[0], zt.shape[1] + 1))
    design[:, 0] = 1.0
    design[:, 1:] = zt
    fit = ols(design, y[sel])
    if not fit.rank_ok:
        raise NumericalError(
            f"arm {t}: covariate design is rank deficient (rank {fit.rank} < {design.shape[1]}); "
            "remove a constant or collinear covariate"
        )
    return fit


def _standardise(y: NDArray, arm: NDArray, z: NDArray, t: int, slope: NDArray) -> float:
    sel = arm == t
    return float(y[sel].mean() - slope @ (z[sel].mean(axis=0) - z.mean(axis=0)))


def anova(dataset: TrialDataset) -> EstimateResult:
    """Unadjusted per-arm outcome means."""
    k = dataset.k
    theta = np.array([dataset.y[dataset.arm == t].mean() for t in range(1, k + 1)])
    return EstimateResult(theta, np.zeros((k, dataset.J)), "anova")


def _single_row(dataset: TrialDataset, plan: Union[ImputationPlan, ArrayLike]) -> tuple[ImputationPlan, NDArray]:
    if not isinstance(plan, ImputationPlan):
        plan = ImputationPlan.single(plan, dataset.k)
    if not plan.is_single:
        raise ValueError("single-imputation estimator needs a plan with identical rows")
    return plan, plan.values[0]


def ancova_si(dataset: TrialDataset, plan: Union[ImputationPlan, ArrayLike]) -> EstimateResult:
    """Common-slope working model ``Y ~ A + (X_imp - mean(X_imp))`` without intercept."""
    plan, c = _single_row(dataset, plan)
    k = dataset.k
    z = impute(dataset.x, dataset.r, c)
    zc = z - z.mean(axis=0)
    arms = (dataset.arm[:, None] == np.arange(1, k + 1)[None, :]).astype(float)
    fit = ols(np.hstack([arms, zc]), dataset.y)
    if not fit.rank_ok:
        raise NumericalError(
            f"ANCOVA design is rank deficient (rank {fit.rank} < {k + dataset.J}); "
            "remove a constant or collinear covariate"
        )
    slope = fit.coefficients[k:]
    return EstimateResult(fit.coefficients[:k].copy(), np.tile(slope, (k, 1)), "ancova-si", plan)


def _anhecova(dataset: TrialDataset, plan: ImputationPlan, method: str) -> EstimateResult:
    k = dataset.k
    if plan.k != k or plan.values.shape[1] != dataset.J:
        raise ValueError(f"plan has shape {plan.values.shape}, expected {(k, dataset.J)}")
    theta = np.empty(k)
    betas = np.empty((k, dataset.J))
    worlds: dict[bytes, NDArray] = {}
    for t in range(1, k + 1):
        c = plan.row(t)
        key = c.tobytes()
        if key not in worlds:
            worlds[key] = impute(dataset.x, dataset.r, c)
        z = worlds[key]
        slope = fit_arm(dataset.y, dataset.arm, z, t).coefficients[1:]
        betas[t - 1] = slope
        theta[t - 1] = _standardise(dataset.y, dataset.arm, z, t, slope)
    return EstimateResult(theta, betas, method, plan)


def anhecova_si(dataset: TrialDataset, plan: Union[ImputationPlan, ArrayLike]) -> EstimateResult:
    """Arm-specific slopes with one shared imputation vector."""
    plan, _ = _single_row(dataset, plan)
    return _anhecova(dataset, plan, "anhecova-si")


def anhecova_cwi(dataset: TrialDataset, plan: ImputationPlan) -> EstimateResult:
    """Cross-world imputation: arm ``t`` is standardised in the world imputed with row ``t``."""
    return _anhecova(dataset, plan, "anhecova-cwi")


def mim_design(dataset: TrialDataset, columns: tuple[int, ...]) -> NDArray[np.float64]:
    """Augmented covariates ``[R o X, R[:, columns]]``."""
    return np.hstack([dataset.x, dataset.r[:, list(columns)].astype(float)])


def _rank_dropped_indicators(dataset: TrialDataset, columns: tuple[int, ...]) -> tuple[int, ...]:
    """Indicator columns that are linearly dependent on earlier columns in some arm."""
    drop: set[int] = set()
    for t in range(1, dataset.k + 1):
        sel = dataset.arm == t
        base = np.column_stack([np.ones(int(sel.sum())), dataset.x[sel]])
        if numerical_rank(base) < base.shape[1]:
            raise NumericalError(
                f"arm {t}: covariate design is rank deficient before adding indicators; "
                "remove a constant or collinear covariate"
            )
        full = np.column_stack([base, dataset.r[sel][:, list(columns)]])
        if numerical_rank(full) == full.shape[1]:
            continue
        kept = base
        for j in columns:
            trial = np.column_stack([kept, dataset.r[sel, j]])
            if numerical_rank(trial) == trial.shape[1]:
                kept = trial
            else:
                drop.add(j)
    return tuple(sorted(drop))


def anhecova_mim(dataset: TrialDataset) -> EstimateResult:
    """Missingness-indicator method: within-arm fits of ``Y ~ 1 + R o X + R``."""
    reduction = reduce_indicators(dataset.r)
    columns = reduction.columns
    rank_dropped = _rank_dropped_indicators(dataset, columns)
    notes = []
    if rank_dropped:
        columns = tuple(j for j in columns if j not in rank_dropped)
        notes.append(
            "indicators dropped for collinearity: " + ", ".join(str(j + 1) for j in rank_dropped)
        )
    w = mim_design(dataset, columns)
    J = dataset.J
    k = dataset.k
    theta = np.empty(k)
    betas = np.empty((k, J))
    gammas = np.empty((k, len(columns)))
    for t in range(1, k + 1):
        slope = fit_arm(dataset.y, dataset.arm, w, t).coefficients[1:]
        betas[t - 1] = slope[:J]
        gammas[t - 1] = slope[J:]
        theta[t - 1] = _standardise(dataset.y, dataset.arm, w, t, slope)
    return EstimateResult(
        theta, betas, "anhecova-mim", build_plan(dataset, "mim"), gammas,
        columns, rank_dropped, reduction, tuple(notes),
    )


def mim_to_cwi_values(mim_result: EstimateResult) -> NDArray[np.float64]:
    """Cross-world values ``-gamma_t / beta_t`` that reproduce the indicator-method fit.

    Covariates without a retained indicator of their own (fully observed,
    duplicate or collinear indicator) get 0, which leaves ``R o X`` untouched
    for that column.
    """
    if mim_result.method != "anhecova-mim" or mim_result.gammas is None:
        raise ValueError("mim_to_cwi_values needs the result of anhecova_mim")
    k, J = mim_result.betas.shape
    values = np.zeros((k, J))
    for t in range(k):
        for pos, j in enumerate(mim_result.indicator_columns):
            beta = mim_result.betas[t, j]
            if abs(beta) < BETA_ZERO_TOL:
                raise NumericalError(
                    f"cross-world value undefined (beta ~ 0) for arm {t + 1}, covariate {j + 1}"
                )
            values[t, j] = -mim_result.gammas[t, pos] / beta
    return values


def anhecova_ti(dataset: TrialDataset, c1: ArrayLike, c2: ArrayLike) -> EstimateResult:
    """Treatment-specific imputation for two arms.

    Subjects in arm ``t`` are imputed with ``c_t`` once; overall means mix the two
    imputations. ``result.contrast(2, 1)`` is the effect estimate.
    """
    if dataset.k != 2:
        raise ValueError(f"treatment-specific imputation needs exactly 2 arms, got {dataset.k}")
    cs = [np.asarray(c1, dtype=float).reshape(-1), np.asarray(c2, dtype=float).reshape(-1)]
    z = np.empty_like(dataset.x)
    for t, c in enumerate(cs, start=1):
        sel = dataset.arm == t
        z[sel] = impute(dataset.x[sel], dataset.r[sel], c)
    theta = np.empty(2)
    betas = np.empty((2, dataset.J))
    for t in (1, 2):
        slope = fit_arm(dataset.y, dataset.arm, z, t).coefficients[1:]
        betas[t - 1] = slope
        theta[t - 1] = _standardise(dataset.y, dataset.arm, z, t, slope)
    values = np.vstack(cs)
    strategy = "fixed" if np.array_equal(values[0], values[1]) else "arm-mean"
    return EstimateResult(theta, betas, "anhecova-ti", ImputationPlan(strategy, values))
