"""Trial data container, validation and missingness-indicator reduction."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from numpy.typing import ArrayLike, NDArray

__all__ = [
    "CWIError",
    "DataValidationError",
    "NumericalError",
    "TrialDataset",
    "ReducedIndicators",
    "ALL_OBSERVED",
    "validate",
    "reduce_indicators",
    "empirical_pi",
    "allocation",
]

ALL_OBSERVED = "all-observed"
CONSTANT = "constant"


class CWIError(Exception):
    """Base class for errors raised by this package."""


class DataValidationError(CWIError, ValueError):
    """Input data violates a structural requirement."""


class NumericalError(CWIError, ArithmeticError):
    """A fit or formula is undefined for the given data (rank deficiency etc.)."""


@dataclass(frozen=True, eq=False)
class TrialDataset:
    """Outcomes, arm labels and a partially observed covariate matrix.

    Arm codes are integers ``1..k``; ``arm_labels`` optionally records the
    original label of each code. ``x`` and ``r`` are ``n x J``; ``r[i, j] == 1``
    marks an observed entry. Entries of ``x`` under ``r == 0`` are zeroed on
    construction, so ``x`` always equals ``R o X`` (imputation with zeros).

    Construct through :meth:`from_arrays`, or call :func:`validate` on a
    hand-built instance.
    """

    y: NDArray[np.float64]
    arm: NDArray[np.int64]
    x: NDArray[np.float64]
    r: NDArray[np.int8]
    pi: Optional[NDArray[np.float64]] = None
    covariate_names: tuple[str, ...] = field(default=())
    arm_labels: tuple[str, ...] = field(default=())

    @classmethod
    def from_arrays(
        cls,
        y: ArrayLike,
        arm: ArrayLike,
        x: Optional[ArrayLike] = None,
        r: Optional[ArrayLike] = None,
        pi: Optional[ArrayLike] = None,
        covariate_names: Sequence[str] = (),
        arm_labels: Sequence[str] = (),
    ) -> "TrialDataset":
        y_arr = np.asarray(y, dtype=float).reshape(-1)
        n = y_arr.shape[0]
        arm_arr = np.asarray(arm)
        if arm_arr.ndim != 1 or arm_arr.shape[0] != n:
            raise DataValidationError(f"arm has shape {arm_arr.shape}, expected ({n},)")
        if not np.issubdtype(arm_arr.dtype, np.integer):
            as_int = arm_arr.astype(np.int64)
            if not np.array_equal(as_int, arm_arr):
                raise DataValidationError("arm labels must be integers 1..k")
            arm_arr = as_int
        if x is None:
            x_arr = np.zeros((n, 0))
        else:
            x_arr = np.array(x, dtype=float)
            if x_arr.ndim == 1:
                x_arr = x_arr.reshape(n, -1)
        if r is None:
            r_arr = (~np.isnan(x_arr)).astype(np.int8)
        else:
            r_arr = np.asarray(r)
            if not np.all((r_arr == 0) | (r_arr == 1)):
                raise DataValidationError("mask r must be binary")
            r_arr = r_arr.astype(np.int8)
            if r_arr.ndim == 1:
                r_arr = r_arr.reshape(n, -1)
        if x_arr.shape != r_arr.shape:
            raise DataValidationError(f"x has shape {x_arr.shape} but r has shape {r_arr.shape}")
        x_arr = np.where(r_arr == 1, x_arr, 0.0)
        pi_arr = None if pi is None else np.asarray(pi, dtype=float).reshape(-1)
        names = tuple(covariate_names) or tuple(f"x{j + 1}" for j in range(x_arr.shape[1]))
        for a in (y_arr, arm_arr, x_arr, r_arr):
            a.setflags(write=False)
        if pi_arr is not None:
            pi_arr.setflags(write=False)
        return validate(cls(y_arr, arm_arr.astype(np.int64), x_arr, r_arr, pi_arr, names, tuple(arm_labels)))

    @property
    def n(self) -> int:
        return int(self.y.shape[0])

    @property
    def J(self) -> int:
        return int(self.x.shape[1])

    @property
    def k(self) -> int:
        return int(self.arm.max())

    def arm_mask(self, t: int) -> NDArray[np.bool_]:
        return self.arm == t

    def arm_counts(self) -> NDArray[np.int64]:
        return np.bincount(self.arm, minlength=self.k + 1)[1:]

    def subset_covariates(self, columns: Sequence[int]) -> "TrialDataset":
        cols = list(columns)
        return TrialDataset.from_arrays(
            self.y, self.arm, self.x[:, cols], self.r[:, cols], self.pi,
            tuple(self.covariate_names[j] for j in cols), self.arm_labels,
        )


def validate(dataset: TrialDataset) -> TrialDataset:
    """Return ``dataset`` unchanged if every structural invariant holds.

    Raises
    ------
    DataValidationError
        Naming the first violated invariant.
    """
    y, arm, x, r = dataset.y, dataset.arm, dataset.x, dataset.r
    n = y.shape[0]
    if n == 0:
        raise DataValidationError("dataset is empty")
    if arm.shape != (n,):
        raise DataValidationError(f"arm has length {arm.shape[0]}, expected {n}")
    if x.ndim != 2 or x.shape[0] != n:
        raise DataValidationError(f"x has {x.shape[0]} rows, expected {n}")
    if r.shape != x.shape:
        raise DataValidationError(f"r has shape {r.shape}, expected {x.shape}")
    if not np.all(np.isfinite(y)):
        bad = int(np.flatnonzero(~np.isfinite(y))[0])
        raise DataValidationError(f"outcome of subject {bad} is not finite")
    if not np.all((r == 0) | (r == 1)):
        raise DataValidationError("mask r must be binary")
    if not np.all(np.isfinite(x[r == 1])):
        raise DataValidationError("observed covariate values must be finite")
    if arm.min() < 1:
        raise DataValidationError(f"arm label {int(arm.min())} is outside 1..k")
    k = int(arm.max())
    counts = np.bincount(arm, minlength=k + 1)[1:]
    for t, c in enumerate(counts, start=1):
        if c == 0:
            raise DataValidationError(f"arm labels must be dense 1..{k}; arm {t} is empty")
        if c < 2:
            raise DataValidationError(f"arm {t} has {c} subject")
    observed = r.sum(axis=0)
    for j, c in enumerate(observed):
        if c == 0:
            raise DataValidationError(f"covariate {j + 1} fully missing")
    if dataset.arm_labels and len(dataset.arm_labels) != k:
        raise DataValidationError(f"{len(dataset.arm_labels)} arm labels given for {k} arms")
    if dataset.pi is not None:
        pi = dataset.pi
        if pi.shape != (k,):
            raise DataValidationError(f"pi has length {pi.shape[0]}, expected {k}")
        if np.any(pi <= 0) or np.any(pi >= 1):
            raise DataValidationError("allocation proportions must lie in (0, 1)")
        total = float(pi.sum())
        if abs(total - 1.0) > 1e-12:
            raise DataValidationError(f"allocation proportions sum to {total:g}")
    return dataset


@dataclass(frozen=True)
class ReducedIndicators:
    """Indicator columns kept for the missingness-indicator method.

    ``dropped`` maps each removed column to the retained column it duplicates,
    or to ``ALL_OBSERVED`` / ``"constant"`` when the column carries no variation.
    """

    columns: tuple[int, ...]
    dropped: dict[int, object]

    def representative(self, j: int) -> Optional[int]:
        """Retained column whose indicator stands in for column ``j``."""
        if j in self.columns:
            return j
        target = self.dropped.get(j)
        return target if isinstance(target, int) else None


def reduce_indicators(r: ArrayLike) -> ReducedIndicators:
    """Drop constant and duplicated columns of a missingness mask.

    The first occurrence of a repeated column is retained.
    """
    mask = np.asarray(r)
    kept: list[int] = []
    dropped: dict[int, object] = {}
    for j in range(mask.shape[1]):
        col = mask[:, j]
        if np.all(col == 1):
            dropped[j] = ALL_OBSERVED
            continue
        if np.all(col == col[0]):
            dropped[j] = CONSTANT
            continue
        for i in kept:
            if np.array_equal(mask[:, i], col):
                dropped[j] = i
                break
        else:
            kept.append(j)
    return ReducedIndicators(tuple(kept), dropped)


def empirical_pi(dataset: TrialDataset) -> NDArray[np.float64]:
    """Observed allocation proportions ``n_t / n``."""
    return dataset.arm_counts() / dataset.n


def allocation(dataset: TrialDataset) -> NDArray[np.float64]:
    """Proportions used in variance formulas: supplied ``pi`` else empirical."""
    if dataset.pi is not None:
        return np.asarray(dataset.pi, dtype=float)
    return empirical_pi(dataset)
