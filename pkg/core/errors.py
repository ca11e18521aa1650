"""
Exception hierarchy for ZeroBench.

Data-driven imputation failures are reported through ImputationOutcome statuses;
the exceptions below are for violated preconditions and unusable inputs.
"""
from typing import List, Optional, Tuple


class ZeroBenchError(Exception):
    """Base class for all library errors."""


class DomainError(ZeroBenchError, ValueError):
    """A log-ratio operation received a zero or negative part."""


class ContractError(ZeroBenchError, ValueError):
    """A caller violated an operation's preconditions."""


class DegenerateInputError(ZeroBenchError, ValueError):
    """The input carries too little information for the requested estimate."""


class ConvergenceError(ZeroBenchError, RuntimeError):
    """An optimiser stopped before reaching its convergence criterion."""

    def __init__(self, message: str, trace: Optional[List[Tuple[float, ...]]] = None):
        super().__init__(message)
        self.trace = trace or []


class IngestError(ContractError):
    """A count matrix file could not be parsed."""

    def __init__(self, message: str, row: Optional[int] = None, column: Optional[str] = None):
        location = ""
        if row is not None or column is not None:
            location = f" (row {row}, column {column})"
        super().__init__(f"{message}{location}")
        self.row = row
        self.column = column


class StorageError(ZeroBenchError, OSError):
    """Results could not be written to the configured location."""
