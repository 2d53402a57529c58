"""Imputation values for single imputation that minimise the contrast variance.

Two routes: a closed form for one covariate and two arms, built from six
moments of ``(R, X, Y)``, and a multi-start Nelder-Mead search over the
plug-in variance for any number of covariates.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .core import CWIError, DataValidationError, NumericalError, TrialDataset, allocation
from .estimators import EstimateResult, anhecova_mim, mim_to_cwi_values
from .imputation import observed_means
from .numlin import sample_cov, sample_cov_matrix

__all__ = [
    "PopulationMoments1D",
    "ClosedFormOptimum",
    "OptimalC",
    "moments_1d",
    "optimal_c_closed_1d",
    "gain_1d",
    "SIVarianceObjective",
    "nelder_mead",
    "optimal_c_numeric",
    "default_starts",
]

BRANCH_TOL = 1e-8
LARGE_SDS = 1e6


@dataclass(frozen=True)
class PopulationMoments1D:
    """Moments of one covariate and its indicator that fix the one-covariate optimum.

    ``cov_missing_outcome`` and ``cov_covariate_outcome`` are covariances of ``1 - R`` and ``R X`` with
    ``pi_1 Y(2) + pi_2 Y(1)``, estimated arm by arm: arm 2 identifies the
    covariance with ``Y(2)`` and arm 1 the one with ``Y(1)``.
    """

    cov_missing_outcome: float
    cov_covariate_outcome: float
    obs_mean: float
    var_indicator: float
    obs_var: float
    obs_rate: float
    pi: tuple[float, float]


@dataclass(frozen=True)
class ClosedFormOptimum:
    value: float
    kind: str  # "interior" | "observed-mean" | "degenerate-large"


@dataclass(frozen=True)
class OptimalC:
    c: NDArray[np.float64]
    objective: float
    converged: bool
    evaluations: int
    start: NDArray[np.float64]
    candidates: tuple[tuple[float, bool], ...] = ()


def moments_1d(dataset: TrialDataset, j: int = 0) -> PopulationMoments1D:
    """Plug-in moments for covariate ``j`` (0-based) of a two-arm dataset."""
    if dataset.k != 2:
        raise ValueError(f"moments_1d needs exactly 2 arms, got {dataset.k}")
    pi1, pi2 = (float(p) for p in allocation(dataset))
    rj = dataset.r[:, j].astype(float)
    xj = dataset.x[:, j]
    y = dataset.y
    a1 = dataset.arm == 1
    a2 = dataset.arm == 2
    cov_miss = pi1 * sample_cov(1.0 - rj[a2], y[a2]) + pi2 * sample_cov(1.0 - rj[a1], y[a1])
    cov_x = pi1 * sample_cov(xj[a2], y[a2]) + pi2 * sample_cov(xj[a1], y[a1])
    obs = rj == 1
    x_obs = xj[obs]
    var_x_obs = float(np.var(x_obs, ddof=1)) if x_obs.size > 1 else 0.0
    return PopulationMoments1D(
        cov_missing_outcome=cov_miss,
        cov_covariate_outcome=cov_x,
        obs_mean=float(x_obs.mean()),
        var_indicator=sample_cov(rj, rj),
        obs_var=var_x_obs,
        obs_rate=float(rj.mean()),
        pi=(pi1, pi2),
    )


def gain_1d(c: float, m: PopulationMoments1D, pi: Optional[Sequence[float]] = None) -> float:
    """Variance reduction of the adjusted contrast over the unadjusted one at imputation value ``c``.

    The imputed covariate variance is written as
    ``E(R) var(X | R=1) + var(R) (E(X | R=1) - c)^2``.
    """
    pi1, pi2 = m.pi if pi is None else (float(pi[0]), float(pi[1]))
    denom = pi1 * pi2 * (m.obs_rate * m.obs_var + m.var_indicator * (m.obs_mean - c) ** 2)
    if not denom > 0:
        raise NumericalError("imputed covariate is constant; gain undefined")
    return (m.cov_covariate_outcome + m.cov_missing_outcome * c) ** 2 / denom


def _gain_limit(m: PopulationMoments1D) -> float:
    return m.cov_missing_outcome**2 / (m.pi[0] * m.pi[1] * m.var_indicator)


def optimal_c_closed_1d(m: PopulationMoments1D) -> ClosedFormOptimum:
    """Maximiser of :func:`gain_1d`.

    Returns the observed mean when the indicator is unrelated to the outcomes
    (``cov_missing_outcome == 0``), and a value ``1e6`` standard deviations away from it when
    the interior root does not exist.
    """
    if not m.var_indicator > 0:
        raise NumericalError("no missingness in this covariate")
    mu = m.obs_mean
    if abs(m.cov_missing_outcome) < BRANCH_TOL * (1.0 + abs(m.cov_covariate_outcome)):
        return ClosedFormOptimum(mu, "observed-mean")
    pivot = m.cov_covariate_outcome + m.cov_missing_outcome * mu
    if abs(pivot) > BRANCH_TOL * (1.0 + abs(m.cov_covariate_outcome) + abs(m.cov_missing_outcome * mu)):
        num = m.cov_missing_outcome * (m.obs_rate * m.obs_var + m.var_indicator * mu**2) + m.cov_covariate_outcome * m.var_indicator * mu
        return ClosedFormOptimum(num / (m.var_indicator * pivot), "interior")
    far = LARGE_SDS * np.sqrt(m.obs_var) if m.obs_var > 0 else LARGE_SDS
    up, down = mu + far, mu - far
    value = up if gain_1d(up, m) >= gain_1d(down, m) else down
    return ClosedFormOptimum(float(value), "degenerate-large")


class SIVarianceObjective:
    """Fast evaluator of ``var_si_contrast(dataset, c, t, s)`` as a function of ``c``.

    The imputed covariates are ``R o X + (1 - R) o c``, so every covariance the
    formula needs is a quadratic in ``c`` built from covariances of
    ``[R o X, 1 - R, Y]``. Those are computed once; each call then costs a few
    ``J x J`` solves instead of two least-squares fits.
    """

    def __init__(self, dataset: TrialDataset, t: int = 2, s: int = 1):
        self.t, self.s = t, s
        self.J = J = dataset.J
        pi = allocation(dataset)
        self.pi_t, self.pi_s = float(pi[t - 1]), float(pi[s - 1])
        w = np.hstack([dataset.x, 1.0 - dataset.r])
        blocks = []
        for a in (t, s):
            sel = dataset.arm == a
            blocks.append(sample_cov_matrix(np.column_stack([w[sel], dataset.y[sel]])))
        cm = np.stack(blocks)
        # per-arm blocks, stacked on a leading axis of length 2
        self._czz = cm[:, :J, :J]
        self._czm = cm[:, :J, J:2 * J]
        self._cmm = cm[:, J:2 * J, J:2 * J]
        self._czy = cm[:, :J, 2 * J]
        self._cmy = cm[:, J:2 * J, 2 * J]
        self._vyy = cm[:, 2 * J, 2 * J]
        self._wts = np.array([1.0 / self.pi_t, 1.0 / self.pi_s])
        cm = sample_cov_matrix(w)
        self._all = (cm[:J, :J], cm[:J, J:], cm[J:, J:])
        self.evaluations = 0

    def __call__(self, c: ArrayLike) -> float:
        self.evaluations += 1
        c = np.asarray(c, dtype=float).reshape(-1)
        cc = np.outer(c, c)
        cross = self._czm * c
        sx = self._czz + cross + cross.transpose(0, 2, 1) + self._cmm * cc
        sy = self._czy + self._cmy * c
        try:
            beta = np.linalg.solve(sx, sy[..., None])[..., 0]
        except np.linalg.LinAlgError:
            return float("inf")
        resid = self._vyy - np.einsum("aj,aj->a", sy, beta)
        diff = beta[0] - beta[1]
        czz, czm, cmm = self._all
        cross = czm * c
        sig = czz + cross + cross.T + cmm * cc
        total = float(resid @ self._wts + diff @ sig @ diff)
        return total if np.isfinite(total) else float("inf")


def nelder_mead(
    func: Callable[[NDArray[np.float64]], float],
    x0: ArrayLike,
    step: ArrayLike,
    max_evals: int,
    rtol: float = 1e-6,
    alpha: float = 1.0,
    gamma: float = 2.0,
    rho: float = 0.5,
    sigma: float = 0.5,
) -> tuple[NDArray[np.float64], float, bool, int]:
    """Derivative-free simplex descent.

    Stops when the simplex diameter falls below ``rtol * (1 + ||best||)`` or after
    ``max_evals`` evaluations. Returns ``(best_x, best_f, converged, evaluations)``;
    ``best_x`` is never worse than ``x0``.
    """
    x0 = np.asarray(x0, dtype=float).reshape(-1)
    dim = x0.shape[0]
    simplex = np.tile(x0, (dim + 1, 1))
    simplex[1:] += np.diag(np.asarray(step, dtype=float) * np.ones(dim))
    fvals = np.array([func(v) for v in simplex])
    evals = dim + 1
    converged = False
    while True:
        order = np.argsort(fvals, kind="stable")
        simplex, fvals = simplex[order], fvals[order]
        spread = simplex[1:] - simplex[0]
        gaps = simplex[:, None, :] - simplex[None, :, :]
        diameter = float(np.sqrt((gaps * gaps).sum(axis=2).max()))
        if diameter < rtol * (1.0 + float(np.linalg.norm(simplex[0]))):
            converged = True
            break
        if evals >= max_evals or not spread.any():
            break
        centroid = simplex[:-1].mean(axis=0)
        worst = simplex[-1]
        xr = centroid + alpha * (centroid - worst)
        fr = func(xr)
        evals += 1
        if fvals[0] <= fr < fvals[-2]:
            simplex[-1], fvals[-1] = xr, fr
            continue
        if fr < fvals[0]:
            xe = centroid + gamma * (xr - centroid)
            fe = func(xe)
            evals += 1
            if fe < fr:
                simplex[-1], fvals[-1] = xe, fe
            else:
                simplex[-1], fvals[-1] = xr, fr
            continue
        if fr < fvals[-1]:
            xc = centroid + rho * (xr - centroid)
        else:
            xc = centroid + rho * (worst - centroid)
        fc = func(xc)
        evals += 1
        if fc < min(fr, fvals[-1]):
            simplex[-1], fvals[-1] = xc, fc
            continue
        for i in range(1, dim + 1):
            simplex[i] = simplex[0] + sigma * (simplex[i] - simplex[0])
            fvals[i] = func(simplex[i])
        evals += dim
    best = int(np.argmin(fvals))
    return simplex[best].copy(), float(fvals[best]), converged, evals


def _column_sd(dataset: TrialDataset) -> NDArray[np.float64]:
    sd = np.empty(dataset.J)
    for j in range(dataset.J):
        obs = dataset.x[dataset.r[:, j] == 1, j]
        sd[j] = float(np.std(obs, ddof=1)) if obs.size > 1 else 0.0
    return sd


def default_starts(
    dataset: TrialDataset,
    t: int = 2,
    s: int = 1,
    mim_result: Optional[EstimateResult] = None,
) -> list[NDArray[np.float64]]:
    """Observed means, observed means +/- 2 SD, and the indicator-implied rows for arms t and s."""
    mean = observed_means(dataset.x, dataset.r)
    sd = _column_sd(dataset)
    starts = [mean, mean + 2.0 * sd, mean - 2.0 * sd]
    try:
        if mim_result is None:
            mim_result = anhecova_mim(dataset)
        star = mim_to_cwi_values(mim_result)
    except CWIError:
        return starts
    for a in (t, s):
        row = star[a - 1]
        if np.all(np.isfinite(row)):
            starts.append(row)
    return starts


def optimal_c_numeric(
    dataset: TrialDataset,
    t: int = 2,
    s: int = 1,
    init: Optional[ArrayLike] = None,
    restarts: bool = True,
    mim_result: Optional[EstimateResult] = None,
) -> OptimalC:
    """Minimise the single-imputation variance of ``theta_t - theta_s`` over ``c``.

    With ``init`` given only that start is used unless ``restarts`` is True, in
    which case the default starts are appended. Ties between starts are broken
    by the objective and then lexicographically by ``c``. Each ``c_j`` is kept
    within ``LARGE_SDS`` observed standard deviations of its observed mean.
    Non-convergence is reported in the result, not raised.
    """
    if dataset.k < 2:
        raise DataValidationError("optimal_c_numeric needs at least 2 arms")
    J = dataset.J
    objective = SIVarianceObjective(dataset, t, s)
    if J == 0:
        value = objective(np.zeros(0))
        return OptimalC(np.zeros(0), value, True, 1, np.zeros(0))
    starts: list[NDArray] = []
    if init is not None:
        starts.append(np.asarray(init, dtype=float).reshape(-1))
    if restarts or init is None:
        extra = default_starts(dataset, t, s, mim_result) if restarts else [observed_means(dataset.x, dataset.r)]
        starts.extend(extra)
    sd = _column_sd(dataset)
    # When the variance only keeps falling as some c_j runs off to infinity the
    # search is held to the same box the closed form uses for that case.
    centre = observed_means(dataset.x, dataset.r)
    half = LARGE_SDS * np.where(sd > 0, sd, 1.0)
    lo, hi = centre - half, centre + half

    def boxed(v: NDArray) -> float:
        return objective(np.clip(v, lo, hi))

    results = []
    for start in starts:
        step = 0.25 * np.where(sd > 0, sd, 1.0 + np.abs(start))
        x, f, ok, evals = nelder_mead(boxed, start, step, max_evals=500 * J)
        results.append((f, tuple(np.clip(x, lo, hi)), ok, evals, start))
    best = min(results, key=lambda r: (r[0], r[1]))
    return OptimalC(
        np.array(best[1]),
        best[0],
        best[2],
        objective.evaluations,
        best[4],
        tuple((r[0], r[2]) for r in results),
    )
