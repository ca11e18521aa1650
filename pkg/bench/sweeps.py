"""
Benchmark sweeps: per cell (m, p, rep), sample m columns of the zero-free
truth, insert zeros at the p-quantile, run every configured method and score
the raw and ceiling variants against the truth.

Each method call runs in its own child process so that an overrunning call
can be killed at the timeout and a crashing one only fails its own record.
"""
import multiprocessing
import time
import zlib
from concurrent.futures import ProcessPoolExecutor, as_completed
from concurrent.futures.process import BrokenProcessPool
from dataclasses import dataclass
from typing import Dict, List, Optional

import numpy as np

from bench.ingest import ingest_csv
from core.config import config, get_logger
from core.countlab import insert_zeros, make_zero_free, simulate_dm
from core.errors import ContractError, ZeroBenchError
from core.imputers import apply_ceiling, impute
from core.metrics import adcs, ced, ced_reference_rows
from core.models.outcome import ImputationOutcome, Status
from core.schemas import DMSpec, ExperimentConfig, MetricRecord, SparsitySweep
from core.storage_service import ResultStore

logger = get_logger("sweeps")

# Parameters the harness passes to particular methods.
HARNESS_PARAMS: Dict[str, Dict] = {"GBM": {"output": "p-counts"}}

# Grace period between SIGTERM and SIGKILL for an overrunning child.
KILL_GRACE_S = 2.0


@dataclass(frozen=True)
class Cell:
    m: int
    p: float
    rep: int

    @property
    def p_key(self) -> int:
        return int(round(self.p * 1_000_000))


def cell_seed(base_seed: int, cell: Cell, *extra: int) -> np.random.SeedSequence:
    """Stream for one cell; ``extra`` keys derive per-method children."""
    return np.random.SeedSequence(entropy=base_seed ^ cell.rep, spawn_key=(cell.m, cell.p_key, *extra))


def method_key(method_id: str) -> int:
    return zlib.crc32(method_id.encode("utf-8"))


def mp_context():
    """Fork where the platform has it: children see the parent's registry as is."""
    if "fork" in multiprocessing.get_all_start_methods():
        return multiprocessing.get_context("fork")
    return multiprocessing.get_context()


def load_truth(cfg: ExperimentConfig) -> np.ndarray:
    """Zero-free ground truth from a CSV file or a Dirichlet-multinomial spec."""
    if isinstance(cfg.input, DMSpec):
        rng = np.random.default_rng(np.random.SeedSequence(cfg.base_seed))
        counts = simulate_dm(cfg.input, rng)
        if np.any(counts.values == 0):
            counts = make_zero_free(counts, config.ZERO_FREE_DEPTH, rng)
        return np.array(counts.values)
    counts = ingest_csv(cfg.input)
    if np.any(counts.values == 0):
        raise ContractError(f"{cfg.input} contains zeros; benchmark input must be zero-free (see gen-nozero)")
    return np.array(counts.values)


def cells_for(cfg: ExperimentConfig, n_columns: int) -> List[Cell]:
    cells = []
    for m, p in cfg.grid:
        if m > n_columns:
            raise ContractError(f"m={m} exceeds the {n_columns} columns of the input")
        cells.extend(Cell(m, p, rep) for rep in range(cfg.reps))
    return cells


def _child(conn, method: str, x: np.ndarray, dl: np.ndarray, rng, params: Dict):
    try:
        message = (True, impute(method, x, dl, rng=rng, **params))
    except Exception as e:
        message = (False, f"{type(e).__name__}: {e}")
    try:
        conn.send(message)
    except Exception as e:
        conn.send((False, f"result could not be returned: {e}"))
    finally:
        conn.close()


def call_with_timeout(
    method: str, x: np.ndarray, dl: np.ndarray, rng: np.random.Generator, params: Dict, timeout_s: float
) -> ImputationOutcome:
    """
    Run one imputation in a child process.

    A call still running after ``timeout_s`` seconds is killed and comes back
    as a failed outcome, as do exceptions raised by the method and a child
    that dies without answering.
    """
    ctx = mp_context()
    receiver, sender = ctx.Pipe(duplex=False)
    process = ctx.Process(target=_child, args=(sender, method, x, dl, rng, params), daemon=True)
    start = time.perf_counter()
    process.start()
    sender.close()

    message = None
    timed_out = False
    try:
        if receiver.poll(timeout_s):
            message = receiver.recv()
        else:
            timed_out = True
    except (EOFError, OSError):
        pass
    finally:
        receiver.close()

    if timed_out:
        process.terminate()
        process.join(KILL_GRACE_S)
        if process.is_alive():
            process.kill()
    process.join()
    elapsed = time.perf_counter() - start

    if timed_out:
        reason = f"timeout ({elapsed:.1f}s > {timeout_s}s)"
    elif message is None:
        reason = f"worker exited with code {process.exitcode}"
    elif not message[0]:
        reason = message[1]
    else:
        return message[1]
    logger.warning(f"{method}: {reason}")
    return ImputationOutcome.failed(x, reason, method=method, runtime_s=elapsed)


def _score(
    outcome: ImputationOutcome,
    truth: np.ndarray,
    mask: np.ndarray,
    cell: Cell,
    variant: str,
    omit_runtime: bool,
    ced_basis: str,
) -> MetricRecord:
    status = outcome.status
    ced_value = adcs_value = None
    reason = outcome.reason
    if status is Status.OK:
        imputed = outcome.imputed
        if not (np.all(np.isfinite(imputed)) and np.all(imputed > 0)):
            status, reason = Status.DEGENERATE, "non-positive cells after imputation"
        else:
            try:
                ced_value = ced(truth, imputed, mask, denominator="auto")
                adcs_value = adcs(truth, imputed)
            except ZeroBenchError as e:
                status, reason = Status.FAILED, f"evaluation: {e}"
    return MetricRecord(
        method=outcome.method,
        variant=variant,
        m=cell.m,
        p=cell.p,
        rep=cell.rep,
        status=status.value,
        ced=ced_value,
        adcs=adcs_value,
        runtime_s=None if omit_runtime else outcome.runtime_s,
        neg_rows=outcome.n_negative_rows,
        reason=reason,
        ced_basis=ced_basis,
    )


def failed_cell(cell: Cell, cfg: ExperimentConfig, reason: str) -> List[MetricRecord]:
    """Failed records for every method and variant of a cell that produced nothing."""
    return [
        MetricRecord(method=method, variant=variant, m=cell.m, p=cell.p, rep=cell.rep, status="failed", reason=reason)
        for method in cfg.methods
        for variant in cfg.variants
    ]


def run_cell(truth: np.ndarray, cell: Cell, cfg: ExperimentConfig) -> List[MetricRecord]:
    """Every configured method on one (m, p, rep) cell."""
    rng = np.random.default_rng(cell_seed(cfg.base_seed, cell))
    columns = np.sort(rng.choice(truth.shape[1], size=cell.m, replace=False))
    X_true = truth[:, columns]
    zeroed, plan = insert_zeros(X_true, cell.p, columns=cfg.zero_columns, rng=rng, parity=cfg.parity)
    X0 = np.array(zeroed.values, dtype=float)
    _, basis = ced_reference_rows(plan.realized_mask, "auto")
    if basis == "all":
        logger.info(f"Cell m={cell.m} p={cell.p} rep={cell.rep}: fewer than two uncensored rows, CED spans all rows")

    records = []
    for method in cfg.methods:
        method_rng = np.random.default_rng(cell_seed(cfg.base_seed, cell, method_key(method)))
        params = {**HARNESS_PARAMS.get(method, {}), **cfg.method_params.get(method, {})}
        outcome = call_with_timeout(method, X0, plan.realized_dl, method_rng, params, cfg.timeout_s)
        outcome = outcome.with_(method=method)

        for variant in cfg.variants:
            if variant == "raw":
                scored = outcome
            elif outcome.is_failed:
                scored = outcome.with_(variant="ceil")
            else:
                scored = apply_ceiling(outcome)
            records.append(_score(scored, X_true, plan.realized_mask, cell, variant, cfg.omit_runtime, basis))
    logger.debug(f"Cell m={cell.m} p={cell.p} rep={cell.rep}: {len(records)} record(s), CED basis {basis}")
    return records


def _run(cfg: ExperimentConfig, store: Optional[ResultStore]) -> List[MetricRecord]:
    truth = load_truth(cfg)
    cells = cells_for(cfg, truth.shape[1])
    records: List[MetricRecord] = []
    if store is not None:
        records = store.load_partial()
        done = store.completed_cells(records)
        if done:
            logger.info(f"Resuming: {len(done)} of {len(cells)} cell(s) already complete")
        cells = [c for c in cells if (c.m, c.p, c.rep) not in done]

    def collect(cell_records: List[MetricRecord]):
        records.extend(cell_records)
        if store is not None:
            store.append(cell_records)

    if cfg.jobs <= 1:
        for i, cell in enumerate(cells, 1):
            collect(run_cell(truth, cell, cfg))
            if i % 10 == 0 or i == len(cells):
                logger.info(f"Completed {i}/{len(cells)} cell(s)")
    else:
        with ProcessPoolExecutor(max_workers=cfg.jobs, mp_context=mp_context()) as executor:
            futures = {executor.submit(run_cell, truth, cell, cfg): cell for cell in cells}
            for i, future in enumerate(as_completed(futures), 1):
                cell = futures[future]
                try:
                    cell_records = future.result()
                except BrokenProcessPool as e:
                    logger.error(f"Worker lost on m={cell.m} p={cell.p} rep={cell.rep}: {e}")
                    cell_records = failed_cell(cell, cfg, f"worker lost: {e}")
                collect(cell_records)
                if i % 10 == 0 or i == len(cells):
                    logger.info(f"Completed {i}/{len(cells)} cell(s)")

    return sorted(records, key=lambda r: r.sort_key)


def ced_basis_counts(records: List[MetricRecord]) -> Dict[str, int]:
    """Number of cells whose CED was normalised over observed rows and over all rows."""
    cells = {(r.m, r.p, r.rep, r.ced_basis) for r in records if r.ced_basis}
    counts: Dict[str, int] = {}
    for *_, basis in cells:
        counts[basis] = counts.get(basis, 0) + 1
    return dict(sorted(counts.items()))


def run_sparsity_sweep(cfg: ExperimentConfig, store: Optional[ResultStore] = None) -> List[MetricRecord]:
    """Vary p at each m."""
    if not isinstance(cfg.design, SparsitySweep):
        raise ContractError("run_sparsity_sweep needs a sparsity design")
    return _run(cfg, store)


def run_dimension_sweep(cfg: ExperimentConfig, store: Optional[ResultStore] = None) -> List[MetricRecord]:
    """Vary m at each fixed p."""
    if isinstance(cfg.design, SparsitySweep):
        raise ContractError("run_dimension_sweep needs a dimension design")
    return _run(cfg, store)
