"""
Compositional containers: composition and count matrices, log-ratio
coordinates and the variation matrix.
"""
from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np

from core.errors import ContractError
from core.models.base import LabeledMatrix


@dataclass(frozen=True, eq=False)
class CompositionMatrix(LabeledMatrix):
    """Nonnegative n×D matrix of compositions (n ≥ 2, D ≥ 2)."""

    def _validate(self):
        if self.n < 2 or self.D < 2:
            raise ContractError(f"a composition matrix needs n >= 2 and D >= 2, got {self.shape}")
        if np.any(self.values < 0):
            raise ContractError("composition matrix has negative entries")

    @property
    def is_strict(self) -> bool:
        """All parts strictly positive."""
        return bool(np.all(self.values > 0))

    @property
    def zero_mask(self) -> np.ndarray:
        return self.values == 0


@dataclass(frozen=True, eq=False)
class CountMatrix(CompositionMatrix):
    """Composition matrix of nonnegative integer counts."""

    def _coerce(self, values: np.ndarray) -> np.ndarray:
        if not np.all(values == np.round(values)):
            raise ContractError("count matrix has non-integer entries")
        return values.astype(np.int64)

    @property
    def depths(self) -> np.ndarray:
        """Row totals."""
        return self.values.sum(axis=1)


@dataclass(frozen=True, eq=False)
class LogRatioCoordinates:
    """
    Log-ratio coordinates of a composition matrix.

    kind is one of "alr", "clr", "ilr". ``index`` holds the ALR reference or
    the ILR pivot (0-based); ``basis`` holds the D×(D−1) contrast matrix for ILR.
    """

    values: np.ndarray
    kind: str
    index: Optional[int] = None
    basis: Optional[np.ndarray] = None
    row_labels: Tuple[str, ...] = field(default=())

    def __post_init__(self):
        if self.kind not in ("alr", "clr", "ilr"):
            raise ContractError(f"unknown log-ratio kind {self.kind!r}")
        values = np.array(self.values, dtype=float)
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        if self.kind == "ilr":
            if self.basis is None:
                raise ContractError("ILR coordinates need their contrast matrix")
            basis = np.asarray(self.basis, dtype=float)
            if basis.ndim != 2 or basis.shape[1] != basis.shape[0] - 1:
                raise ContractError(f"ILR basis must be D×(D−1), got {basis.shape}")
            object.__setattr__(self, "basis", basis)

    @property
    def D(self) -> int:
        """Number of parts of the underlying composition."""
        if self.kind == "clr":
            return self.values.shape[-1]
        return self.values.shape[-1] + 1

    def __array__(self, dtype=None, copy=None):
        return np.array(self.values, dtype=dtype)


@dataclass(frozen=True, eq=False)
class VariationMatrix:
    """D×D matrix of log-ratio variances t_jk."""

    values: np.ndarray
    labels: Tuple[str, ...] = field(default=())

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        if values.ndim != 2 or values.shape[0] != values.shape[1]:
            raise ContractError(f"variation matrix must be square, got {values.shape}")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    def nearest_parts(self, j: int, k: int) -> np.ndarray:
        """The k parts other than j with the smallest t_jk, most proportional first."""
        order = np.argsort(self.values[j], kind="stable")
        order = order[order != j]
        return order[:k]
