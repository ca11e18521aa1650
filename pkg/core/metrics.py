"""
Distortion metrics between a ground-truth matrix and its imputation, and
failure bookkeeping over metric records.
"""
from typing import Iterable, Tuple

import numpy as np
import pandas as pd
from scipy.spatial.distance import pdist

from core.coda import aitchison_distance, ilr_pivot
from core.errors import ContractError, DegenerateInputError
from core.schemas import RESULT_COLUMNS, MetricRecord


def _pair(original, imputed) -> Tuple[np.ndarray, np.ndarray]:
    a = np.asarray(original, dtype=float)
    b = np.asarray(imputed, dtype=float)
    if a.shape != b.shape or a.ndim != 2:
        raise ContractError(f"matrices must share a 2-D shape, got {a.shape} and {b.shape}")
    return a, b


def adcs(original, imputed) -> float:
    """
    Average difference in covariance structure:
    ‖S − S′‖_F / (D − 1) for the ILR sample covariances S, S′ (n − 1 denominator).
    """
    a, b = _pair(original, imputed)
    n, D = a.shape
    if n < 2:
        raise ContractError("ADCS needs at least two rows")
    S = np.atleast_2d(np.cov(ilr_pivot(a).values, rowvar=False, ddof=1))
    S_imp = np.atleast_2d(np.cov(ilr_pivot(b).values, rowvar=False, ddof=1))
    return float(np.linalg.norm(S - S_imp, ord="fro") / (D - 1))


def ced_reference_rows(mask: np.ndarray, denominator: str = "observed") -> Tuple[np.ndarray, str]:
    """
    Rows spanning the normalising distance of the CED and the basis used.

    "observed" takes the rows without censored cells, "all" every row, and
    "auto" falls back from "observed" to "all" when fewer than two rows are
    fully observed.
    """
    mask = np.asarray(mask, dtype=bool)
    censored_rows = mask.any(axis=1)
    if denominator not in ("observed", "all", "auto"):
        raise ContractError(f"unknown CED denominator {denominator!r}")
    if denominator == "all":
        return np.ones(mask.shape[0], dtype=bool), "all"
    reference = ~censored_rows
    if reference.sum() < 2:
        if denominator == "auto":
            return np.ones(mask.shape[0], dtype=bool), "all"
        raise ContractError("CED needs at least two fully observed rows")
    return reference, "observed"


def ced(original, imputed, mask, denominator: str = "observed") -> float:
    """
    Compositional error deviation: mean Aitchison distance between true and
    imputed rows that had censored cells, divided by the largest pairwise
    Aitchison distance among the reference rows of the truth.
    """
    a, b = _pair(original, imputed)
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != a.shape:
        raise ContractError(f"mask shape {mask.shape} does not match {a.shape}")
    censored_rows = mask.any(axis=1)
    if not censored_rows.any():
        raise ContractError("the mask marks no censored row")
    reference, _ = ced_reference_rows(mask, denominator)
    spread = float(pdist(ilr_pivot(a[reference]).values).max())
    if spread == 0:
        raise DegenerateInputError("reference rows are all proportional; CED denominator is zero")
    errors = aitchison_distance(a[censored_rows], b[censored_rows])
    return float(np.mean(errors) / spread)


def records_frame(records: Iterable[MetricRecord]) -> pd.DataFrame:
    rows = [r.model_dump() for r in records]
    return pd.DataFrame(rows, columns=list(RESULT_COLUMNS))


def failure_accounting(records: Iterable[MetricRecord]) -> pd.DataFrame:
    """
    Per (method, m, p): failure rate, degenerate rate, share of runs with
    negative rows, mean runtime of ok runs and the number of runs.

    Ceiling records repeat the status of their raw record, so only raw records
    are counted when any are present.
    """
    frame = records_frame(records)
    columns = ["method", "m", "p", "failure_rate", "degenerate_rate", "negative_row_rate", "mean_runtime_s", "n"]
    if frame.empty:
        return pd.DataFrame(columns=columns)
    if (frame["variant"] == "raw").any():
        frame = frame[frame["variant"] == "raw"]
    frame = frame.assign(
        failed=frame["status"] == "failed",
        degenerate=frame["status"] == "degenerate",
        negative=frame["neg_rows"] > 0,
        ok_runtime=frame["runtime_s"].where(frame["status"] == "ok").astype(float),
    )
    summary = (
        frame.groupby(["method", "m", "p"], sort=True)
        .agg(
            failure_rate=("failed", "mean"),
            degenerate_rate=("degenerate", "mean"),
            negative_row_rate=("negative", "mean"),
            mean_runtime_s=("ok_runtime", "mean"),
            n=("status", "size"),
        )
        .reset_index()
    )
    return summary[columns]
