"""
Base container for labelled numeric matrices.
Composition, count and outcome containers build on it.
"""
import os
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from core.config import logger
from core.errors import ContractError, StorageError


def _default_labels(prefix: str, count: int) -> Tuple[str, ...]:
    return tuple(f"{prefix}{i + 1}" for i in range(count))


@dataclass(frozen=True, eq=False)
class LabeledMatrix:
    """An n×D float matrix with row and column labels."""

    values: np.ndarray
    row_labels: Tuple[str, ...] = field(default=())
    col_labels: Tuple[str, ...] = field(default=())

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        if values.ndim != 2:
            raise ContractError(f"expected a 2-D matrix, got {values.ndim} dimension(s)")
        if not np.all(np.isfinite(values)):
            raise ContractError("matrix contains NaN or infinite entries")
        values = self._coerce(values)
        values.setflags(write=False)
        rows = tuple(str(r) for r in self.row_labels) or _default_labels("S", values.shape[0])
        cols = tuple(str(c) for c in self.col_labels) or _default_labels("P", values.shape[1])
        if len(rows) != values.shape[0] or len(cols) != values.shape[1]:
            raise ContractError(
                f"labels ({len(rows)}, {len(cols)}) do not match shape {values.shape}"
            )
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "row_labels", rows)
        object.__setattr__(self, "col_labels", cols)
        self._validate()

    def _coerce(self, values: np.ndarray) -> np.ndarray:
        """Hook for subclasses that store another dtype."""
        return values

    def _validate(self):
        """Hook for subclasses."""

    def __array__(self, dtype=None, copy=None):
        return np.array(self.values, dtype=dtype)

    @property
    def shape(self) -> Tuple[int, int]:
        return self.values.shape

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def D(self) -> int:
        return self.values.shape[1]

    def with_values(self, values: np.ndarray):
        """Same labels, new values."""
        return replace(self, values=values)

    def subset_columns(self, columns: Sequence[int]):
        columns = list(columns)
        return replace(
            self,
            values=self.values[:, columns],
            col_labels=tuple(self.col_labels[c] for c in columns),
        )

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.values, index=list(self.row_labels), columns=list(self.col_labels))

    @classmethod
    def from_frame(cls, frame: pd.DataFrame):
        return cls(
            values=frame.to_numpy(dtype=float),
            row_labels=tuple(frame.index.astype(str)),
            col_labels=tuple(frame.columns.astype(str)),
        )

    def save(self, path: str, index_label: Optional[str] = "sample", float_format: Optional[str] = None):
        """Write the matrix as CSV with a header row and a label column."""
        directory = os.path.dirname(os.path.abspath(path))
        try:
            os.makedirs(directory, exist_ok=True)
            self.to_frame().to_csv(path, index_label=index_label, float_format=float_format)
        except OSError as e:
            raise StorageError(f"could not write {path}: {e}") from e
        logger.debug(f"Saved {self.__class__.__name__} {self.shape} to {path}")
