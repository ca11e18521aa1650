"""
Aggregate tables behind the line and box plots of a benchmark run.
"""
from typing import Dict, List

import pandas as pd

from core.config import get_logger
from core.errors import ContractError
from core.metrics import failure_accounting, records_frame
from core.schemas import MetricRecord
from core.storage_service import ResultStore

logger = get_logger("plotdata")

GROUP_BY_P = ["method", "variant", "m", "p"]
GROUP_AVG_P = ["method", "variant", "m"]


def _q1(s: pd.Series) -> float:
    return s.quantile(0.25, interpolation="linear")


def _q3(s: pd.Series) -> float:
    return s.quantile(0.75, interpolation="linear")


def summarize(frame: pd.DataFrame, keys: List[str]) -> pd.DataFrame:
    """count/mean/median/q1/q3 of CED and ADCS over the ok records of each group."""
    ok = frame[frame["status"] == "ok"]
    if ok.empty:
        return pd.DataFrame(columns=keys + ["n_ok"])
    stats = (
        ok.groupby(keys, sort=True)
        .agg(
            n_ok=("ced", "size"),
            ced_mean=("ced", "mean"),
            ced_median=("ced", "median"),
            ced_q1=("ced", _q1),
            ced_q3=("ced", _q3),
            adcs_mean=("adcs", "mean"),
            adcs_median=("adcs", "median"),
            adcs_q1=("adcs", _q1),
            adcs_q3=("adcs", _q3),
        )
        .reset_index()
    )
    return stats


def runtime_table(frame: pd.DataFrame) -> pd.DataFrame:
    raw = frame[frame["variant"] == "raw"] if (frame["variant"] == "raw").any() else frame
    raw = raw.dropna(subset=["runtime_s"])
    columns = ["method", "m", "p", "runtime_mean", "runtime_median", "n"]
    if raw.empty:
        return pd.DataFrame(columns=columns)
    return (
        raw.groupby(["method", "m", "p"], sort=True)
        .agg(runtime_mean=("runtime_s", "mean"), runtime_median=("runtime_s", "median"), n=("runtime_s", "size"))
        .reset_index()[columns]
    )


def aggregate(records: List[MetricRecord]) -> Dict[str, pd.DataFrame]:
    if not records:
        raise ContractError("no records to aggregate")
    frame = records_frame(records)
    frame["runtime_s"] = frame["runtime_s"].astype(float)
    return {
        "metrics_by_p": summarize(frame, GROUP_BY_P),
        "metrics_avg_p": summarize(frame, GROUP_AVG_P),
        "runtime": runtime_table(frame),
        "failures": failure_accounting(records),
    }


def emit_plot_data(records: List[MetricRecord], out_dir: str) -> List[str]:
    """
    Write aggregates/metrics_by_p.csv, metrics_avg_p.csv, runtime.csv and
    failures.csv under ``out_dir``. Quartiles use linear interpolation.
    """
    frames = aggregate(records)
    paths = ResultStore(out_dir).write_aggregates(frames)
    logger.info(f"Plot data for {len(records)} record(s) written to {out_dir}")
    return paths
