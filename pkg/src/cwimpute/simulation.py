"""Seeded data generators for the three simulation cases and a Monte Carlo runner.

Each replication draws from its own Philox stream keyed by ``(seed, rep_index)``,
so results do not depend on the order or the number of workers. Covariates,
assignment and outcome noise come from one sub-stream and the missingness
uniforms from another; cases 1 and 2 therefore share outcome data for the same
seed and differ only in which covariates are missing.
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np
from numpy.typing import NDArray

from .core import CWIError, TrialDataset
from .estimators import anhecova_cwi, anhecova_mim, anhecova_si, anova, mim_to_cwi_values
from .imputation import ImputationPlan, build_plan
from .optimal_si import optimal_c_numeric
from .variance import var_cwi_contrast, var_mim_contrast, var_si_contrast

__all__ = [
    "CASES",
    "SIM_METHODS",
    "TRUE_EFFECT",
    "ScenarioConfig",
    "Truth",
    "MethodSummary",
    "SimulationReport",
    "replication_rng",
    "generate",
    "estimate_methods",
    "run_monte_carlo",
    "summarize",
    "random_dataset",
    "prognostic_missingness_dataset",
]

CASES = ("case1", "case2", "case3")
SIM_METHODS = ("anova", "si-mean", "si-opt", "mim", "cwi-star")
TRUE_EFFECT = 1.0
Z_95 = 1.959963984540054

X_MEAN = np.array([0.1, 0.2, 0.2, 0.3, 0.3])
X_VAR = np.array([2.0, 2.0, 1.0, 2.0, 1.0])
OBS_PROB = np.array([0.8, 0.7, 0.75, 0.65, 0.85])


@dataclass(frozen=True)
class ScenarioConfig:
    case: str = "case1"
    n: int = 500
    J: int = 5
    reps: int = 3000
    seed: int = 20240101
    rho: float = 0.3
    methods: tuple[str, ...] = ("anova", "si-mean", "si-opt", "mim")

    def __post_init__(self):
        if self.case not in CASES:
            raise ValueError(f"case must be one of {CASES}, got {self.case!r}")
        if self.reps < 1:
            raise ValueError("reps must be at least 1")
        if self.n < 20:
            raise ValueError("n must be at least 20")
        if self.J not in (2, 5):
            raise ValueError("J must be 2 or 5")
        if not -1.0 < self.rho < 1.0:
            raise ValueError("rho must lie in (-1, 1)")
        unknown = [m for m in self.methods if m not in SIM_METHODS]
        if unknown or not self.methods:
            raise ValueError(f"methods must be a non-empty subset of {SIM_METHODS}, got {self.methods}")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")
        object.__setattr__(self, "methods", tuple(self.methods))


@dataclass(frozen=True, eq=False)
class Truth:
    """Generator-side quantities that an analyst never observes jointly."""

    y1: NDArray[np.float64]
    y2: NDArray[np.float64]
    x: NDArray[np.float64]
    r: NDArray[np.int8]


def replication_rng(seed: int, rep_index: int, stream: int) -> np.random.Generator:
    ss = np.random.SeedSequence(entropy=seed, spawn_key=(rep_index, stream))
    return np.random.Generator(np.random.Philox(ss))


def _expit(v: NDArray) -> NDArray:
    return 1.0 / (1.0 + np.exp(-v))


def generate(config: ScenarioConfig, rep_index: int = 0) -> tuple[TrialDataset, Truth]:
    n = config.n
    rng = replication_rng(config.seed, rep_index, 0)
    z = rng.standard_normal((n, 5))
    eps = rng.standard_normal((n, 2))
    arm = 1 + (rng.random(n) < 0.5).astype(np.int64)
    u = replication_rng(config.seed, rep_index, 1).random((n, 5))

    sd = np.sqrt(X_VAR)
    if config.case == "case3":
        corr = np.full((5, 5), config.rho)
        np.fill_diagonal(corr, 1.0)
        chol = np.linalg.cholesky(corr * np.outer(sd, sd))
        x = X_MEAN + z @ chol.T
    else:
        x = X_MEAN + z * sd

    x1, x2, x3, x4, x5 = x.T
    if config.case == "case3":
        y1 = x1**2 - 0.5 * x1 + x2 + x3**2 - 0.5 * x4 + x5 + eps[:, 0]
        y2 = 4.0 + x1 + x2 + x3 + 0.5 * x4 - x5 + eps[:, 1]
    else:
        y1 = x1**2 - 0.5 * x1 + x2 + x3**2 - 5.0 * x4 + 5.0 * x5 + eps[:, 0]
        y2 = 3.85 + x1 + x2 + x3 + 0.5 * x4 - x5 + eps[:, 1]

    if config.case == "case1":
        p_obs = np.broadcast_to(OBS_PROB, (n, 5))
    elif config.case == "case2":
        p_obs = _expit(0.5 * x + 1.0)
    else:
        p_obs = _expit(0.5 * (y1 + y2)[:, None] - 2.0 * x - 2.0)
    r = (u < p_obs).astype(np.int8)

    y = np.where(arm == 1, y1, y2)
    cols = list(range(config.J))
    dataset = TrialDataset.from_arrays(
        y, arm, x[:, cols], r[:, cols], pi=(0.5, 0.5),
        covariate_names=tuple(f"x{j + 1}" for j in cols),
    )
    return dataset, Truth(y1, y2, x, r)


def estimate_methods(dataset: TrialDataset, methods: Sequence[str]) -> dict[str, tuple[float, float]]:
    """``(estimate, se)`` of ``theta_2 - theta_1`` for each requested method.

    A method whose estimator fails maps to ``(nan, nan)``.
    """
    n = dataset.n
    out: dict[str, tuple[float, float]] = {}
    mim = None

    def get_mim():
        nonlocal mim
        if mim is None:
            mim = anhecova_mim(dataset)
        return mim

    for method in methods:
        try:
            if method == "anova":
                est = anova(dataset).contrast(2, 1)
                var = var_si_contrast(dataset.subset_covariates([]), np.zeros(0))
            elif method == "si-mean":
                plan = build_plan(dataset, "observed-mean")
                est = anhecova_si(dataset, plan).contrast(2, 1)
                var = var_si_contrast(dataset, plan)
            elif method == "si-opt":
                try:
                    mim_result = get_mim()
                except CWIError:
                    mim_result = None
                opt = optimal_c_numeric(dataset, 2, 1, mim_result=mim_result)
                est = anhecova_si(dataset, opt.c).contrast(2, 1)
                var = opt.objective
            elif method == "mim":
                res = get_mim()
                est = res.contrast(2, 1)
                var = var_mim_contrast(dataset, res)
            elif method == "cwi-star":
                plan = ImputationPlan("cross-world", mim_to_cwi_values(get_mim()))
                est = anhecova_cwi(dataset, plan).contrast(2, 1)
                var = var_cwi_contrast(dataset, plan)
            else:
                raise ValueError(f"unknown method {method!r}")
            if not np.isfinite(var) or var < 0 or not np.isfinite(est):
                raise ArithmeticError("non-finite estimate or variance")
            out[method] = (float(est), math.sqrt(var / n))
        except (CWIError, ArithmeticError, np.linalg.LinAlgError):
            out[method] = (math.nan, math.nan)
    return out


def _run_chunk(args: tuple[ScenarioConfig, Sequence[int]]) -> list[tuple[int, dict[str, tuple[float, float]]]]:
    config, indices = args
    return [(i, estimate_methods(generate(config, i)[0], config.methods)) for i in indices]


@dataclass(frozen=True)
class MethodSummary:
    method: str
    bias: float
    sd: float
    mean_se: float
    coverage_pct: float
    n_ok: int
    n_failed: int
    sd_defined: bool

    @property
    def sd_mc_se(self) -> float:
        """Normal-theory Monte Carlo standard error of ``sd``."""
        if self.n_ok < 2:
            return math.nan
        return self.sd / math.sqrt(2.0 * (self.n_ok - 1))


@dataclass(eq=False)
class SimulationReport:
    config: ScenarioConfig
    rows: dict[str, MethodSummary]
    estimates: dict[str, NDArray[np.float64]] = field(repr=False)
    ses: dict[str, NDArray[np.float64]] = field(repr=False)
    wall_time: float = 0.0

    def row(self, method: str) -> MethodSummary:
        return self.rows[method]

    def to_dict(self, include_timing: bool = False) -> dict:
        out = {
            "config": asdict(self.config),
            "results": [_jsonable(asdict(self.rows[m])) for m in self.config.methods],
            "diagnostics": {
                "true_effect": TRUE_EFFECT,
                "failed_replications": {m: self.rows[m].n_failed for m in self.config.methods},
            },
        }
        out["config"]["methods"] = list(self.config.methods)
        if include_timing:
            out["diagnostics"]["wall_time_s"] = self.wall_time
        return out


def _jsonable(d: dict) -> dict:
    return {k: (None if isinstance(v, float) and not math.isfinite(v) else v) for k, v in d.items()}


def summarize(method: str, est: NDArray, se: NDArray, truth: float = TRUE_EFFECT) -> MethodSummary:
    ok = np.isfinite(est) & np.isfinite(se)
    e, s = est[ok], se[ok]
    n_ok = int(ok.sum())
    if n_ok == 0:
        return MethodSummary(method, math.nan, math.nan, math.nan, math.nan, 0, int(est.size), False)
    covered = np.abs(e - truth) <= Z_95 * s
    sd = float(np.std(e, ddof=1)) if n_ok > 1 else math.nan
    return MethodSummary(
        method,
        float(e.mean() - truth),
        sd,
        float(s.mean()),
        float(100.0 * covered.mean()),
        n_ok,
        int(est.size - n_ok),
        n_ok > 1,
    )


def run_monte_carlo(config: ScenarioConfig, workers: int = 1, chunk_size: int = 50) -> SimulationReport:
    """Replicate ``config.reps`` trials and summarise each method.

    Replications are independent; with ``workers > 1`` they run in a process
    pool and are merged by replication index, giving the same report as a
    serial run.
    """
    start = time.perf_counter()
    indices = list(range(config.reps))
    chunks = [(config, indices[i:i + chunk_size]) for i in range(0, len(indices), chunk_size)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_run_chunk, chunks))
    else:
        parts = [_run_chunk(c) for c in chunks]
    merged = sorted((item for part in parts for item in part), key=lambda item: item[0])
    estimates = {m: np.array([res[m][0] for _, res in merged]) for m in config.methods}
    ses = {m: np.array([res[m][1] for _, res in merged]) for m in config.methods}
    rows = {m: summarize(m, estimates[m], ses[m]) for m in config.methods}
    return SimulationReport(config, rows, estimates, ses, time.perf_counter() - start)


def random_dataset(
    seed: int,
    n: int = 200,
    J: int = 3,
    k: int = 2,
    missing: str = "mixed",
    pi: Optional[Sequence[float]] = None,
) -> TrialDataset:
    """Generic trial with heterogeneous arm effects for identity checks.

    ``missing="mixed"`` makes the first covariate fully observed (when
    ``J >= 3``), a later one share its mask with another column, and the rest
    missing at random with rates between 10% and 40%, depending on the
    outcome for some columns. ``missing="none"`` gives complete data.
    """
    if missing not in ("mixed", "none"):
        raise ValueError("missing must be 'mixed' or 'none'")
    rng = replication_rng(seed, 0, 7)
    arm = np.concatenate([np.arange(1, k + 1), np.arange(1, k + 1), rng.integers(1, k + 1, n - 2 * k)])
    rng.shuffle(arm)
    x = rng.normal(size=(n, J)) * rng.uniform(0.5, 2.0, J) + rng.normal(size=J)
    slopes = rng.normal(size=(k, J))
    y = rng.normal(size=k)[arm - 1] + np.einsum("ij,ij->i", x, slopes[arm - 1]) + rng.normal(size=n)
    y = y + 0.3 * x[:, 0] ** 2 if J else y
    r = np.ones((n, J), dtype=np.int8)
    if missing == "mixed":
        for j in range(J):
            if J >= 3 and j == 0:
                continue
            rate = rng.uniform(0.1, 0.4)
            score = rng.normal(size=n) + (0.8 * y / (np.std(y) + 1e-12) if j % 2 else 0.0)
            r[:, j] = score > np.quantile(score, rate)
        if J >= 4:
            r[:, J - 1] = r[:, J - 2]
    return TrialDataset.from_arrays(y, arm, x, r, pi=pi)


def prognostic_missingness_dataset(seed: int, rep_index: int, n: int = 2000) -> TrialDataset:
    """Two arms, one strongly prognostic covariate missing completely at random for half the subjects.

    ``X ~ N(1, 1)``, ``Y(t) = t + 3 X + eps`` and ``P(R = 1) = 0.5``, so the
    true effect is 1 and arm-specific imputation values inject extra noise
    through the slope.
    """
    rng = replication_rng(seed, rep_index, 2)
    x = 1.0 + rng.standard_normal(n)
    arm = 1 + (rng.random(n) < 0.5).astype(np.int64)
    y = arm + 3.0 * x + rng.standard_normal(n)
    r = (rng.random(n) < 0.5).astype(np.int8)
    return TrialDataset.from_arrays(y, arm, x[:, None], r[:, None], pi=(0.5, 0.5))
