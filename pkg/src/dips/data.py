"""Observed-data container, CSV ingestion, and covariate standardization.

Every downstream fit consumes a :class:`Dataset`: an outcome vector ``y``,
a binary treatment vector ``t``, and an ``n x p`` covariate matrix ``x``
with named columns.  Covariates are standardized (sample mean 0, sample
SD 1, divisor ``n - 1``) before any penalized fit so that penalties act
uniformly across columns.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DegenerateDesignError,
    DomainError,
    ParseError,
    SchemaError,
)

__all__ = ["Dataset", "Standardization", "load_csv", "standardize"]

# Relative threshold below which a column counts as constant.
_ZERO_SD_TOL = 1e-12


@dataclass(frozen=True)
class Dataset:
    """Immutable observed data: outcome, binary treatment, covariates."""

    y: np.ndarray
    t: np.ndarray
    x: np.ndarray
    names: tuple[str, ...]
    outcome_name: str = "Y"
    treatment_name: str = "T"

    def __post_init__(self):
        y = np.asarray(self.y, dtype=float)
        t = np.asarray(self.t)
        x = np.asarray(self.x, dtype=float)
        if x.ndim != 2:
            raise DomainError("covariate matrix must be two-dimensional")
        n, p = x.shape
        if n < 2 or p < 1:
            raise DomainError(f"need n >= 2 and p >= 1, got n={n}, p={p}")
        if y.shape != (n,) or t.shape != (n,):
            raise DomainError("y, t, and x row counts disagree")
        if not np.all(np.isin(t, (0, 1))):
            bad = np.unique(t[~np.isin(t, (0, 1))])
            raise DomainError(f"treatment values outside {{0,1}}: {bad.tolist()}")
        if not np.all(np.isfinite(y)):
            raise DomainError("outcome contains non-finite values")
        if not np.all(np.isfinite(x)):
            raise DomainError("covariates contain non-finite values")
        if len(self.names) != p:
            raise DomainError("number of column names must equal p")
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "t", t.astype(np.int64))
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "names", tuple(self.names))

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def p(self) -> int:
        return self.x.shape[1]

    def arm_counts(self) -> tuple[int, int]:
        n1 = int(self.t.sum())
        return self.n - n1, n1

    def to_csv(self, path) -> None:
        """Write outcome, treatment, covariates with a header row.

        Floats are written with ``repr`` so a reload round-trips
        bit-identically.
        """
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow([self.outcome_name, self.treatment_name, *self.names])
            for i in range(self.n):
                w.writerow(
                    [repr(float(self.y[i])), int(self.t[i])]
                    + [repr(float(v)) for v in self.x[i]]
                )


@dataclass(frozen=True)
class Standardization:
    """Per-column affine transform applied to retained covariates."""

    means: np.ndarray
    sds: np.ndarray
    kept: tuple[int, ...]
    kept_names: tuple[str, ...]
    dropped_names: tuple[str, ...] = field(default=())

    def apply(self, x: np.ndarray) -> np.ndarray:
        return (x[:, list(self.kept)] - self.means) / self.sds

    def invert(self, z: np.ndarray) -> np.ndarray:
        return z * self.sds + self.means


def _parse_numeric_column(rows: list[list[str]], col_idx: int, col_name: str):
    values = np.empty(len(rows))
    bad: list[tuple[int, str]] = []
    for i, row in enumerate(rows):
        cell = row[col_idx].strip()
        if cell == "" or cell.lower() in ("na", "nan"):
            bad.append((i + 2, col_name))  # +2: header row is line 1
            continue
        try:
            v = float(cell)
        except ValueError:
            bad.append((i + 2, col_name))
            continue
        if not np.isfinite(v):
            bad.append((i + 2, col_name))
            continue
        values[i] = v
    return values, bad


def load_csv(path, outcome: str, treatment: str, covariates="all-others") -> Dataset:
    """Read a UTF-8 comma-separated file into a :class:`Dataset`.

    Parameters
    ----------
    path : str or path-like
        File with a mandatory header row.
    outcome, treatment : str
        Column names for the outcome and the binary treatment.
    covariates : list of str or "all-others"
        Covariate columns in the declared order; "all-others" takes every
        remaining column in file order.

    Raises
    ------
    SchemaError
        Missing column or empty file.
    ParseError
        Non-numeric, empty, or NA cells (all offending cells listed).
    DomainError
        Treatment values outside {0, 1}.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError(f"{path}: empty file, header row required") from None
        header = [h.strip() for h in header]
        rows = [row for row in reader if row]

    for col in (outcome, treatment):
        if col not in header:
            raise SchemaError(f"{path}: column {col!r} not found in header {header}")
    if covariates == "all-others":
        cov_names = [c for c in header if c not in (outcome, treatment)]
    else:
        cov_names = list(covariates)
        for c in cov_names:
            if c not in header:
                raise SchemaError(f"{path}: covariate column {c!r} not found")
    if not cov_names:
        raise SchemaError(f"{path}: no covariate columns")
    if not rows:
        raise SchemaError(f"{path}: no data rows")

    short = [i + 2 for i, row in enumerate(rows) if len(row) != len(header)]
    if short:
        raise ParseError(f"{path}: rows with wrong field count at lines {short}")

    col_of = {name: header.index(name) for name in header}
    bad_cells: list[tuple[int, str]] = []

    y, bad = _parse_numeric_column(rows, col_of[outcome], outcome)
    bad_cells += bad
    t_raw, bad = _parse_numeric_column(rows, col_of[treatment], treatment)
    bad_cells += bad
    x = np.empty((len(rows), len(cov_names)))
    for j, name in enumerate(cov_names):
        x[:, j], bad = _parse_numeric_column(rows, col_of[name], name)
        bad_cells += bad
    if bad_cells:
        shown = ", ".join(f"(line {r}, {c})" for r, c in bad_cells[:20])
        more = "" if len(bad_cells) <= 20 else f" and {len(bad_cells) - 20} more"
        raise ParseError(
            f"{path}: non-numeric or missing cells at {shown}{more}", cells=bad_cells
        )

    if not np.all(np.isin(t_raw, (0.0, 1.0))):
        bad_vals = sorted(set(t_raw[~np.isin(t_raw, (0.0, 1.0))].tolist()))
        raise DomainError(
            f"{path}: treatment column {treatment!r} contains values outside "
            f"{{0,1}}: {bad_vals}"
        )

    return Dataset(
        y=y,
        t=t_raw.astype(np.int64),
        x=x,
        names=tuple(cov_names),
        outcome_name=outcome,
        treatment_name=treatment,
    )


def standardize(d: Dataset) -> tuple[Dataset, Standardization]:
    """Center and scale each covariate column to sample mean 0, SD 1.

    Zero-variance columns are dropped with a warning; the returned
    :class:`Standardization` records the retained columns and the
    invertible transform.  Outcome and treatment are untouched.
    """
    means = d.x.mean(axis=0)
    sds = d.x.std(axis=0, ddof=1)
    keep = sds > _ZERO_SD_TOL * (1.0 + np.abs(means))
    if not np.any(keep):
        raise DegenerateDesignError("all covariate columns have zero variance")
    dropped = tuple(name for name, k in zip(d.names, keep) if not k)
    if dropped:
        warnings.warn(
            f"dropping zero-variance covariate columns: {list(dropped)}",
            stacklevel=2,
        )
    kept_idx = tuple(int(i) for i in np.flatnonzero(keep))
    std = Standardization(
        means=means[keep],
        sds=sds[keep],
        kept=kept_idx,
        kept_names=tuple(d.names[i] for i in kept_idx),
        dropped_names=dropped,
    )
    ds = Dataset(
        y=d.y,
        t=d.t,
        x=std.apply(d.x),
        names=std.kept_names,
        outcome_name=d.outcome_name,
        treatment_name=d.treatment_name,
    )
    return ds, std
