"""
Result storage for benchmark runs

Handles all persistence for a run directory:
- Append-only partial results while cells finish
- Resumption of interrupted sweeps by cell
- Order-normalised final results, manifest and aggregates
- Optional mirroring of finished artefacts to GCS

Storage Structure:
    <out_dir>/
    ├── results.partial.csv   # appended as cells finish
    ├── results.csv           # sorted, written at the end
    ├── manifest.json
    └── aggregates/
        ├── metrics_by_p.csv
        ├── metrics_avg_p.csv
        ├── runtime.csv
        └── failures.csv

- Cloud mirror: gs://<bucket>/runs/<run_id>/...
"""

import json
import os
from typing import Dict, Iterable, List, Optional, Set, Tuple

import pandas as pd

from core.config import GCS_BUCKET_NAME, config, get_logger
from core.errors import StorageError
from core.schemas import PARTIAL_COLUMNS, RESULT_COLUMNS, MetricRecord, RunManifest

logger = get_logger("storage")

# Try to import GCS
try:
    from google.cloud import storage
    GCS_AVAILABLE = True
except ImportError:
    logger.debug("Could not import GCS. Cloud mirroring will not be available.")
    GCS_AVAILABLE = False

PARTIAL_NAME = "results.partial.csv"
RESULTS_NAME = "results.csv"
MANIFEST_NAME = "manifest.json"
AGGREGATES_DIR = "aggregates"


def get_storage_config(out_dir: str) -> dict:
    """Current storage configuration for a run directory."""
    return {
        'environment': config.ENVIRONMENT,
        'use_cloud_storage': config.use_cloud_storage,
        'out_dir': os.path.abspath(out_dir),
        'gcs_bucket': GCS_BUCKET_NAME if config.use_cloud_storage else None,
        'gcs_available': GCS_AVAILABLE,
    }


def _optional_float(value) -> Optional[float]:
    if value is None or (isinstance(value, float) and pd.isna(value)) or value == "":
        return None
    return float(value)


def _basis(value) -> str:
    return value if isinstance(value, str) else ""


class ResultStore:
    """
    Single-writer store for the records of one run.
    """

    def __init__(self, out_dir: str, run_id: Optional[str] = None, omit_runtime: bool = False):
        self._out_dir = out_dir
        self._run_id = run_id or os.path.basename(os.path.abspath(out_dir))
        self._omit_runtime = omit_runtime
        self._gcs_client = None
        self._ensure_local_dirs()

    @property
    def out_dir(self) -> str:
        return self._out_dir

    def path(self, *parts: str) -> str:
        return os.path.join(self._out_dir, *parts)

    def _ensure_local_dirs(self):
        """Ensure the run directory exists and is writable"""
        try:
            os.makedirs(self._out_dir, exist_ok=True)
        except OSError as e:
            raise StorageError(f"cannot create output directory {self._out_dir}: {e}") from e
        if not os.access(self._out_dir, os.W_OK):
            raise StorageError(f"output directory {self._out_dir} is not writable")
        logger.debug(f"Ensured run directory exists: {self._out_dir}")

    def _write_text(self, path: str, text: str, mode: str = "w"):
        try:
            with open(path, mode, encoding="utf-8", newline="") as f:
                f.write(text)
        except OSError as e:
            raise StorageError(f"could not write {path}: {e}") from e

    def _rows_text(self, records: Iterable[MetricRecord], header: bool, partial: bool = False) -> str:
        rows = [record.to_row(omit_runtime=self._omit_runtime, with_basis=partial) for record in records]
        columns = PARTIAL_COLUMNS if partial else RESULT_COLUMNS
        frame = pd.DataFrame(rows, columns=list(columns), dtype=str)
        return frame.to_csv(index=False, header=header, lineterminator="\n")

    def append(self, records: List[MetricRecord]):
        """Append the records of one finished cell to the partial results."""
        path = self.path(PARTIAL_NAME)
        header = not os.path.exists(path)
        self._write_text(path, self._rows_text(records, header, partial=True), mode="a")

    def load_partial(self) -> List[MetricRecord]:
        """Records persisted by an earlier, interrupted run."""
        path = self.path(PARTIAL_NAME)
        if not os.path.exists(path):
            return []
        frame = pd.read_csv(
            path,
            dtype={"method": str, "variant": str, "status": str, "ced_basis": str},
            keep_default_na=True,
            float_precision="round_trip",
        )
        records = []
        for row in frame.to_dict(orient="records"):
            records.append(
                MetricRecord(
                    method=row["method"],
                    variant=row["variant"],
                    m=int(row["m"]),
                    p=float(row["p"]),
                    rep=int(row["rep"]),
                    status=row["status"],
                    ced=_optional_float(row["ced"]),
                    adcs=_optional_float(row["adcs"]),
                    runtime_s=_optional_float(row["runtime_s"]),
                    neg_rows=int(row["neg_rows"]),
                    ced_basis=_basis(row.get("ced_basis")),
                )
            )
        logger.info(f"Loaded {len(records)} persisted record(s) from {path}")
        return records

    def completed_cells(self, records: Optional[List[MetricRecord]] = None) -> Set[Tuple[int, float, int]]:
        """(m, p, rep) cells already present in the partial results."""
        records = self.load_partial() if records is None else records
        return {(r.m, r.p, r.rep) for r in records}

    def finalize(self, records: List[MetricRecord]) -> str:
        """Write results.csv sorted by (method, variant, m, p, rep)."""
        ordered = sorted(records, key=lambda r: r.sort_key)
        path = self.path(RESULTS_NAME)
        self._write_text(path, self._rows_text(ordered, header=True))
        logger.info(f"Wrote {len(ordered)} record(s) to {path}")
        return path

    def write_manifest(self, manifest: RunManifest) -> str:
        path = self.path(MANIFEST_NAME)
        self._write_text(path, json.dumps(manifest.model_dump(mode="json"), indent=2, sort_keys=True) + "\n")
        return path

    def write_aggregates(self, frames: Dict[str, pd.DataFrame]) -> List[str]:
        directory = self.path(AGGREGATES_DIR)
        try:
            os.makedirs(directory, exist_ok=True)
        except OSError as e:
            raise StorageError(f"cannot create {directory}: {e}") from e
        paths = []
        for name, frame in frames.items():
            path = os.path.join(directory, f"{name}.csv")
            self._write_text(path, frame.to_csv(index=False, lineterminator="\n"))
            paths.append(path)
        logger.info(f"Wrote {len(paths)} aggregate file(s) to {directory}")
        return paths

    def _init_gcs(self):
        """Initialize Google Cloud Storage client"""
        try:
            self._gcs_client = storage.Client()
            logger.info(f"GCS client initialized for bucket {GCS_BUCKET_NAME}")
        except Exception as e:
            logger.error(f"Failed to initialize GCS: {str(e)}")
            raise

    def mirror(self) -> int:
        """
        Upload the run directory to gs://<bucket>/runs/<run_id>/ when cloud
        storage is enabled. Returns the number of uploaded files.
        """
        if not (config.use_cloud_storage and GCS_AVAILABLE):
            return 0
        if self._gcs_client is None:
            self._init_gcs()
        bucket = self._gcs_client.bucket(GCS_BUCKET_NAME)
        uploaded = 0
        for root, _, files in os.walk(self._out_dir):
            for filename in sorted(files):
                if filename == PARTIAL_NAME:
                    continue
                local = os.path.join(root, filename)
                relative = os.path.relpath(local, self._out_dir).replace(os.sep, "/")
                blob = bucket.blob(f"runs/{self._run_id}/{relative}")
                blob.upload_from_filename(local)
                uploaded += 1
        logger.info(f"Mirrored {uploaded} file(s) to gs://{GCS_BUCKET_NAME}/runs/{self._run_id}/")
        return uploaded
