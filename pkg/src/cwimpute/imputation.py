"""Covariate-wise imputation and imputation plans."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal, Optional

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .core import DataValidationError, TrialDataset

__all__ = [
    "Strategy",
    "STRATEGIES",
    "ImputationPlan",
    "impute",
    "observed_means",
    "arm_means",
    "build_plan",
]

Strategy = Literal["fixed", "observed-mean", "arm-mean", "cross-world", "mim"]
STRATEGIES: tuple[str, ...] = ("fixed", "observed-mean", "arm-mean", "cross-world", "mim")
_SHARED_ROW = ("fixed", "observed-mean")


@dataclass(frozen=True, eq=False)
class ImputationPlan:
    """Per-arm imputation vectors; row ``t - 1`` is the vector used for arm ``t``."""

    strategy: str
    values: NDArray[np.float64]

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise ValueError(f"unknown imputation strategy {self.strategy!r}")
        vals = np.asarray(self.values, dtype=float)
        if vals.ndim != 2:
            raise ValueError("plan values must be a k x J matrix")
        if not np.all(np.isfinite(vals)):
            raise DataValidationError("imputation values must be finite")
        if self.strategy in _SHARED_ROW and vals.shape[0] and not np.all(vals == vals[0]):
            raise ValueError(f"strategy {self.strategy!r} requires identical rows")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @property
    def k(self) -> int:
        return int(self.values.shape[0])

    def row(self, t: int) -> NDArray[np.float64]:
        return self.values[t - 1]

    @property
    def is_single(self) -> bool:
        """True when every arm uses the same vector (single imputation)."""
        return bool(np.all(self.values == self.values[0]))

    @classmethod
    def single(cls, c: ArrayLike, k: int, strategy: str = "fixed") -> "ImputationPlan":
        row = np.asarray(c, dtype=float).reshape(-1)
        return cls(strategy, np.tile(row, (k, 1)))


def impute(x: ArrayLike, r: ArrayLike, c: ArrayLike) -> NDArray[np.float64]:
    """``R o X + (1 - R) o c``: replace every masked entry of column ``j`` by ``c[j]``."""
    xv = np.asarray(x, dtype=float)
    rv = np.asarray(r)
    cv = np.asarray(c, dtype=float)
    if not np.all(np.isfinite(cv)):
        raise DataValidationError("imputation values must be finite")
    return np.where(rv == 1, xv, cv[None, :])


def observed_means(x: ArrayLike, r: ArrayLike) -> NDArray[np.float64]:
    xv = np.asarray(x, dtype=float)
    rv = np.asarray(r)
    counts = rv.sum(axis=0)
    if np.any(counts == 0):
        j = int(np.flatnonzero(counts == 0)[0])
        raise DataValidationError(f"covariate {j + 1} fully missing")
    return np.where(rv == 1, xv, 0.0).sum(axis=0) / counts


def arm_means(dataset: TrialDataset, t: int) -> NDArray[np.float64]:
    """Observed covariate means among subjects in arm ``t``."""
    sel = dataset.arm_mask(t)
    counts = dataset.r[sel].sum(axis=0)
    if np.any(counts == 0):
        j = int(np.flatnonzero(counts == 0)[0])
        raise DataValidationError(f"covariate {j + 1} has no observed value in arm {t}")
    return dataset.x[sel].sum(axis=0) / counts


def build_plan(
    dataset: TrialDataset,
    strategy: str,
    fixed_values: Optional[ArrayLike] = None,
) -> ImputationPlan:
    """Populate an :class:`ImputationPlan` for ``dataset``.

    ``fixed`` broadcasts ``fixed_values`` (length J); ``cross-world`` takes a
    ``k x J`` matrix in ``fixed_values``; ``mim`` yields zeros because the
    indicator method imputes zero internally.
    """
    k, J = dataset.k, dataset.J
    if strategy == "fixed":
        if fixed_values is None:
            raise ValueError("strategy 'fixed' needs fixed_values")
        c = np.asarray(fixed_values, dtype=float).reshape(-1)
        if c.shape[0] != J:
            raise ValueError(f"fixed_values has length {c.shape[0]}, expected {J}")
        return ImputationPlan.single(c, k, "fixed")
    if fixed_values is not None and strategy != "cross-world":
        raise ValueError(f"fixed_values is only accepted for 'fixed' and 'cross-world', not {strategy!r}")
    if strategy == "observed-mean":
        return ImputationPlan.single(observed_means(dataset.x, dataset.r), k, "observed-mean")
    if strategy == "arm-mean":
        return ImputationPlan("arm-mean", np.vstack([arm_means(dataset, t) for t in range(1, k + 1)]))
    if strategy == "cross-world":
        if fixed_values is None:
            raise ValueError("strategy 'cross-world' needs a k x J matrix of values")
        vals = np.asarray(fixed_values, dtype=float)
        if vals.shape != (k, J):
            raise ValueError(f"cross-world values have shape {vals.shape}, expected {(k, J)}")
        return ImputationPlan("cross-world", vals)
    if strategy == "mim":
        return ImputationPlan("mim", np.zeros((k, J)))
    raise ValueError(f"unknown imputation strategy {strategy!r}")
