"""Exception hierarchy shared across the package."""

from __future__ import annotations


class DipsError(Exception):
    """Base class for all package errors."""


class DataError(DipsError):
    """Problems with input data (ingestion, schema, domain)."""


class SchemaError(DataError):
    """A required column is missing or the header is malformed."""


class ParseError(DataError):
    """A cell could not be parsed as a finite number."""

    def __init__(self, message: str, cells: list[tuple[int, str]] | None = None):
        super().__init__(message)
        self.cells = cells or []


class DomainError(DataError):
    """A value violates a domain contract (e.g. treatment outside {0,1})."""


class DegenerateDesignError(DataError):
    """Every covariate column has zero variance."""


class SolverError(DipsError):
    """An iterative fit failed to converge."""

    def __init__(self, message: str, last_objective: float | None = None):
        super().__init__(message)
        self.last_objective = last_objective


class DegenerateScoreError(DipsError):
    """A smoothing score has zero sample variance (null working model)."""


class SmoothingDegeneracyError(DipsError):
    """A kernel denominator underflowed at an evaluation point."""


class EstimationError(DipsError):
    """An effect estimator could not be computed on this dataset."""


class InferenceError(DipsError):
    """Resampling inference failed (e.g. too many failed resamples)."""


class ConfigError(DipsError):
    """Invalid run configuration."""
