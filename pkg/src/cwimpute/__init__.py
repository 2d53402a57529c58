"""Treatment-effect estimation in randomized trials with incomplete baseline covariates."""

from .core import CWIError, DataValidationError, NumericalError, TrialDataset
from .estimators import (
    EstimateResult,
    ancova_si,
    anhecova_cwi,
    anhecova_mim,
    anhecova_si,
    anhecova_ti,
    anova,
    mim_to_cwi_values,
)
from .imputation import ImputationPlan, arm_means, build_plan, impute, observed_means
from .io import read_csv, write_csv
from .optimal_si import OptimalC, gain_1d, moments_1d, optimal_c_closed_1d, optimal_c_numeric
from .simulation import ScenarioConfig, SimulationReport, generate, run_monte_carlo
from .variance import (
    ContrastInference,
    confidence_interval,
    var_cwi_contrast,
    var_mim_contrast,
    var_si_contrast,
)

__version__ = "0.1.0"

__all__ = [
    "CWIError",
    "DataValidationError",
    "NumericalError",
    "TrialDataset",
    "EstimateResult",
    "anova",
    "ancova_si",
    "anhecova_si",
    "anhecova_cwi",
    "anhecova_mim",
    "anhecova_ti",
    "mim_to_cwi_values",
    "ImputationPlan",
    "impute",
    "observed_means",
    "arm_means",
    "build_plan",
    "read_csv",
    "write_csv",
    "OptimalC",
    "moments_1d",
    "gain_1d",
    "optimal_c_closed_1d",
    "optimal_c_numeric",
    "ScenarioConfig",
    "SimulationReport",
    "generate",
    "run_monte_carlo",
    "ContrastInference",
    "var_si_contrast",
    "var_cwi_contrast",
    "var_mim_contrast",
    "confidence_interval",
]
