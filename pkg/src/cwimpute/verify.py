"""Self-check suite run by ``cwimpute verify``.

Each check regenerates datasets from a seed, computes the largest deviation
from an exact identity and compares it with a tolerance. The checks use
routes that are independent of the code under test wherever one exists
(for complete data, a single joint least-squares fit with arm interactions).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import TrialDataset
from .estimators import ancova_si, anhecova_cwi, anhecova_mim, anhecova_si, mim_to_cwi_values
from .imputation import ImputationPlan, build_plan, observed_means
from .simulation import random_dataset
from .variance import var_cwi_contrast, var_si_contrast

__all__ = ["CheckResult", "classical_anhecova", "run_identity_suite", "IDENTITY_TOLERANCES"]

IDENTITY_TOLERANCES = {
    "cwi-at-implied-values-equals-mim": 1e-8,
    "mim-ignores-masked-cells": 0.0,
    "cwi-equal-rows-is-si": 1e-12,
    "complete-data-collapse": 1e-10,
    "ancova-shift-invariance": 1e-10,
}


@dataclass(frozen=True)
class CheckResult:
    name: str
    max_deviation: float
    tolerance: float
    datasets: int

    @property
    def passed(self) -> bool:
        return bool(self.max_deviation <= self.tolerance)


def classical_anhecova(dataset: TrialDataset) -> np.ndarray:
    """Arm means from one joint fit of ``Y ~ A + A:(X - mean(X))`` (complete data only)."""
    k = dataset.k
    xc = dataset.x - dataset.x.mean(axis=0)
    blocks = []
    for t in range(1, k + 1):
        ind = (dataset.arm == t).astype(float)
        blocks.append(ind[:, None])
        blocks.append(ind[:, None] * xc)
    design = np.hstack(blocks)
    coef = np.linalg.lstsq(design, dataset.y, rcond=None)[0]
    stride = 1 + dataset.J
    return coef[::stride][:k]


def _perturbed(d: TrialDataset, rng: np.random.Generator) -> TrialDataset:
    x = np.array(d.x)
    masked = d.r == 0
    x[masked] = rng.normal(scale=1e3, size=int(masked.sum()))
    return TrialDataset.from_arrays(d.y, d.arm, x, d.r, d.pi)


def run_identity_suite(
    seed: int = 0,
    sizes: Sequence[int] = (200,),
    datasets_per_size: int = 10,
    corrupt: bool = False,
) -> list[CheckResult]:
    """Run every identity check; ``corrupt`` injects an error to test the harness."""
    dev = {name: 0.0 for name in IDENTITY_TOLERANCES}
    count = 0
    rng = np.random.default_rng(seed)
    for n in sizes:
        for i in range(datasets_per_size):
            count += 1
            ds_seed = seed * 1_000_003 + n * 1009 + i
            d = random_dataset(ds_seed, n=n, J=3 + i % 3)

            mim = anhecova_mim(d)
            plan = ImputationPlan("cross-world", mim_to_cwi_values(mim))
            cwi = anhecova_cwi(d, plan).theta
            if corrupt:
                cwi = cwi + 1e-6
            dev["cwi-at-implied-values-equals-mim"] = max(dev["cwi-at-implied-values-equals-mim"], float(np.abs(cwi - mim.theta).max()))

            again = anhecova_mim(_perturbed(d, rng)).theta
            dev["mim-ignores-masked-cells"] = max(
                dev["mim-ignores-masked-cells"], 0.0 if np.array_equal(again, mim.theta) else float("inf")
            )

            c = observed_means(d.x, d.r) + rng.normal(size=d.J)
            same = ImputationPlan("cross-world", np.tile(c, (d.k, 1)))
            gap = max(
                float(np.abs(anhecova_cwi(d, same).theta - anhecova_si(d, c).theta).max()),
                abs(var_cwi_contrast(d, same) - var_si_contrast(d, c)),
            )
            dev["cwi-equal-rows-is-si"] = max(dev["cwi-equal-rows-is-si"], gap)

            full = random_dataset(ds_seed, n=n, J=3 + i % 3, missing="none")
            ref = classical_anhecova(full)
            mean_plan = build_plan(full, "observed-mean")
            routes = [
                anhecova_si(full, mean_plan).theta,
                anhecova_cwi(full, ImputationPlan("cross-world", rng.normal(size=(full.k, full.J)))).theta,
                anhecova_mim(full).theta,
            ]
            gap = max(float(np.abs(th - ref).max()) for th in routes)
            dev["complete-data-collapse"] = max(dev["complete-data-collapse"], gap)

            delta = rng.normal(scale=5.0, size=d.J)
            shifted = TrialDataset.from_arrays(d.y, d.arm, d.x + delta, d.r, d.pi)
            base = ancova_si(d, c).contrast(2, 1)
            moved = ancova_si(shifted, c + delta).contrast(2, 1)
            dev["ancova-shift-invariance"] = max(
                dev["ancova-shift-invariance"], abs(moved - base) / max(1.0, abs(base))
            )
    return [CheckResult(name, dev[name], tol, count) for name, tol in IDENTITY_TOLERANCES.items()]
