"""
Count matrix CSV ingestion.

Expected layout: a header row of part labels, a first column of sample
labels, nonnegative integer cells.
"""
import os

import numpy as np
import pandas as pd

from core.config import get_logger
from core.errors import ContractError, IngestError
from core.models.composition import CountMatrix

logger = get_logger("ingest")


def _duplicates(labels) -> list:
    seen, dup = set(), []
    for label in labels:
        if label in seen and label not in dup:
            dup.append(label)
        seen.add(label)
    return dup


def ingest_csv(path: str) -> CountMatrix:
    """
    Parse a labelled count matrix.

    Raises:
        IngestError: empty file, ragged rows, duplicate labels or a cell that
            is not a nonnegative integer; the message names the data row
            (1-based) and the column label
    """
    if not os.path.exists(path):
        raise FileNotFoundError(path)
    try:
        raw = pd.read_csv(path, header=None, dtype=str, keep_default_na=False, encoding="utf-8")
    except pd.errors.EmptyDataError:
        raise IngestError(f"{path} is empty") from None
    except pd.errors.ParserError as e:
        raise IngestError(f"ragged rows in {path}: {e}") from None
    except UnicodeDecodeError as e:
        raise IngestError(f"{path} is not valid UTF-8: {e}") from None

    if raw.shape[0] < 2:
        raise IngestError(f"{path} has no data rows")
    if raw.shape[1] < 2:
        raise IngestError(f"{path} has no count columns")

    col_labels = [str(c).strip() for c in raw.iloc[0, 1:]]
    row_labels = [str(r).strip() for r in raw.iloc[1:, 0]]
    dup_cols = _duplicates(col_labels)
    if dup_cols:
        raise IngestError(f"duplicate column label(s) {dup_cols}", row=0, column=dup_cols[0])
    dup_rows = _duplicates(row_labels)
    if dup_rows:
        raise IngestError(f"duplicate row label(s) {dup_rows}", row=row_labels.index(dup_rows[0]) + 1, column="")

    cells = raw.iloc[1:, 1:].reset_index(drop=True)
    cells.columns = col_labels
    missing = cells.isna() | (cells.apply(lambda s: s.str.strip()) == "")
    if missing.to_numpy().any():
        i, j = np.argwhere(missing.to_numpy())[0]
        raise IngestError("missing cell (ragged row)", row=int(i) + 1, column=col_labels[j])

    numeric = cells.apply(lambda s: pd.to_numeric(s.str.strip(), errors="coerce")).to_numpy(dtype=float)
    checks = [
        (~np.isfinite(numeric), "not a finite number"),
        (numeric < 0, "negative count"),
        (numeric != np.round(numeric), "non-integer count"),
    ]
    for bad, message in checks:
        if bad.any():
            i, j = np.argwhere(bad)[0]
            raise IngestError(f"{message}: {cells.iat[i, j]!r}", row=int(i) + 1, column=col_labels[j])

    try:
        matrix = CountMatrix(numeric, tuple(row_labels), tuple(col_labels))
    except ContractError as e:
        raise IngestError(f"{path}: {e}") from None
    logger.info(f"Ingested {path}: {matrix.n} samples × {matrix.D} parts")
    return matrix
