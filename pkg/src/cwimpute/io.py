"""CSV ingestion and export of trial datasets.

Row numbers in error messages count the header as row 1, so they match the
line numbers of an unquoted file.
"""

from __future__ import annotations

import csv
import math
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np

from .core import DataValidationError, TrialDataset

__all__ = ["DEFAULT_NA_TOKENS", "read_csv", "write_csv", "format_float"]

DEFAULT_NA_TOKENS = ("", "NA")

PathLike = Union[str, Path]


def format_float(v: float) -> str:
    """Shortest decimal string that parses back to the same double."""
    return repr(float(v))


def _parse(cell: str) -> Optional[float]:
    try:
        v = float(cell)
    except ValueError:
        return None
    return v if math.isfinite(v) else None


def read_csv(
    path: PathLike,
    outcome_col: str = "y",
    arm_col: str = "arm",
    covariates: Optional[Sequence[str]] = None,
    pi: Optional[Sequence[float]] = None,
    na_tokens: Sequence[str] = DEFAULT_NA_TOKENS,
    arm_order: Optional[Sequence[str]] = None,
) -> TrialDataset:
    """Load a trial from a header-first, comma-separated UTF-8 file.

    Cells equal to one of ``na_tokens`` (after stripping whitespace) are
    missing. Arm labels are arbitrary strings coded ``1..k`` in order of first
    appearance, after any labels listed in ``arm_order``; the labels are kept
    in ``dataset.arm_labels``. With ``covariates=None`` every other column
    whose observed cells are all numeric is used.

    Raises
    ------
    DataValidationError
        On a missing column, a missing arm label or outcome, or a non-numeric
        outcome or named covariate cell.
    """
    na = set(na_tokens)
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataValidationError(f"{path}: file is empty") from None
        rows = [row for row in reader if row]
    if len(set(header)) != len(header):
        raise DataValidationError("duplicate column names in header")
    index = {name: i for i, name in enumerate(header)}
    for name in (outcome_col, arm_col):
        if name not in index:
            raise DataValidationError(f"column {name!r} not found; columns are {header}")
    explicit = covariates is not None
    if explicit:
        cov_names = list(covariates)
        missing = [c for c in cov_names if c not in index]
        if missing:
            raise DataValidationError(f"covariate columns not found: {missing}")
        if outcome_col in cov_names or arm_col in cov_names:
            raise DataValidationError("outcome and arm columns cannot be covariates")
    else:
        cov_names = [h for h in header if h not in (outcome_col, arm_col)]
    if not rows:
        raise DataValidationError(f"{path}: no data rows")

    n = len(rows)
    width = len(header)
    y = np.empty(n)
    arm = np.empty(n, dtype=np.int64)
    labels: dict[str, int] = {}
    for label in arm_order or ():
        labels.setdefault(str(label), len(labels) + 1)
    cells = [[] for _ in cov_names]
    for i, row in enumerate(rows):
        line = i + 2
        if len(row) != width:
            raise DataValidationError(f"row {line}: expected {width} fields, found {len(row)}")
        label = row[index[arm_col]].strip()
        if label in na:
            raise DataValidationError(f"row {line}, column {arm_col}: missing arm label")
        arm[i] = labels.setdefault(label, len(labels) + 1)
        raw = row[index[outcome_col]].strip()
        if raw in na:
            raise DataValidationError(f"row {line}, column {outcome_col}: missing outcome")
        v = _parse(raw)
        if v is None:
            raise DataValidationError(f"row {line}, column {outcome_col}: not numeric")
        y[i] = v
        for j, name in enumerate(cov_names):
            cells[j].append(row[index[name]].strip())

    kept_names: list[str] = []
    columns: list[np.ndarray] = []
    for name, col in zip(cov_names, cells):
        values = np.full(n, np.nan)
        numeric = True
        for i, cell in enumerate(col):
            if cell in na:
                continue
            v = _parse(cell)
            if v is None:
                if explicit:
                    raise DataValidationError(f"row {i + 2}, column {name}: not numeric")
                numeric = False
                break
            values[i] = v
        if numeric:
            kept_names.append(name)
            columns.append(values)
    x = np.column_stack(columns) if columns else np.zeros((n, 0))
    r = (~np.isnan(x)).astype(np.int8)
    unused = [lab for lab, code in labels.items() if code not in set(arm.tolist())]
    if unused:
        raise DataValidationError(f"arm labels {unused} do not occur in column {arm_col}")
    return TrialDataset.from_arrays(
        y, arm, np.nan_to_num(x), r, pi=pi, covariate_names=tuple(kept_names),
        arm_labels=tuple(labels),
    )


def write_csv(
    dataset: TrialDataset,
    path: PathLike,
    outcome_col: str = "y",
    arm_col: str = "arm",
    na_token: str = "",
) -> None:
    """Write ``dataset`` so that :func:`read_csv` reproduces it exactly.

    Re-reading needs ``arm_order=dataset.arm_labels`` (or ``"1", "2", ...``)
    whenever the first row is not in arm 1.
    """
    labels = dataset.arm_labels or tuple(str(t) for t in range(1, dataset.k + 1))
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow([outcome_col, arm_col, *dataset.covariate_names])
        for i in range(dataset.n):
            covs = [
                format_float(dataset.x[i, j]) if dataset.r[i, j] else na_token
                for j in range(dataset.J)
            ]
            writer.writerow([format_float(dataset.y[i]), labels[dataset.arm[i] - 1], *covs])
