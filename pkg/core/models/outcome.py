"""
Result of one imputation call.
"""
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Any, Dict, Optional, Sequence

import numpy as np
import pandas as pd


class Status(str, Enum):
    OK = "ok"
    FAILED = "failed"
    DEGENERATE = "degenerate"


@dataclass(frozen=True, eq=False)
class ImputationOutcome:
    """
    Imputed matrix plus status and diagnostics.

    ``reason`` explains a failed or degenerate status. ``negative_rows`` flags
    rows whose multiplicative adjustment factor was not positive.
    """

    imputed: np.ndarray
    status: Status = Status.OK
    reason: str = ""
    method: str = ""
    variant: str = "raw"
    iterations: int = 0
    converged: bool = True
    runtime_s: float = 0.0
    negative_rows: Optional[np.ndarray] = None
    notes: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        imputed = np.array(self.imputed, dtype=float)
        imputed.setflags(write=False)
        object.__setattr__(self, "imputed", imputed)
        if self.negative_rows is None:
            object.__setattr__(self, "negative_rows", np.zeros(imputed.shape[0], dtype=bool))
        object.__setattr__(self, "status", Status(self.status))

    @classmethod
    def failed(cls, x: np.ndarray, reason: str, **kwargs) -> "ImputationOutcome":
        return cls(imputed=x, status=Status.FAILED, reason=reason, **kwargs)

    @classmethod
    def degenerate(cls, x: np.ndarray, detail: str, **kwargs) -> "ImputationOutcome":
        return cls(imputed=x, status=Status.DEGENERATE, reason=detail, **kwargs)

    @property
    def ok(self) -> bool:
        return self.status is Status.OK

    @property
    def is_failed(self) -> bool:
        return self.status is Status.FAILED

    @property
    def is_degenerate(self) -> bool:
        return self.status is Status.DEGENERATE

    @property
    def n_negative_rows(self) -> int:
        return int(np.count_nonzero(self.negative_rows))

    def with_(self, **changes) -> "ImputationOutcome":
        return replace(self, **changes)

    def to_frame(
        self, row_labels: Optional[Sequence[str]] = None, col_labels: Optional[Sequence[str]] = None
    ) -> pd.DataFrame:
        return pd.DataFrame(
            self.imputed,
            index=None if row_labels is None else list(row_labels),
            columns=None if col_labels is None else list(col_labels),
        )
