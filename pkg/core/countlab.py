"""
Count-data experiments: quantile zero insertion, Dirichlet-multinomial
simulation, scale quantization and the zero-free dataset generator.
"""
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from core.coda import clr
from core.config import get_logger
from core.errors import ContractError, DegenerateInputError
from core.models.composition import CountMatrix
from core.schemas import DMSpec

logger = get_logger("countlab")

ColumnRule = Union[str, Sequence[int]]


def _counts(counts) -> Tuple[np.ndarray, tuple, tuple]:
    if isinstance(counts, CountMatrix):
        return np.array(counts.values), counts.row_labels, counts.col_labels
    arr = np.asarray(counts)
    return CountMatrix(arr).values.copy(), (), ()


@dataclass(frozen=True, eq=False)
class ZeroInsertionPlan:
    """
    Where zeros were inserted and at which thresholds.

    ``realized_dl`` is n×D: each targeted column carries its quantile
    threshold, every other column its minimum (nothing below it was seen).
    ``realized_zero_rate`` is the zeroed fraction of the targeted cells.
    """

    quantile_p: float
    target_columns: Tuple[int, ...]
    realized_mask: np.ndarray
    realized_dl: np.ndarray
    realized_zero_rate: float


def target_columns(D: int, columns: ColumnRule, parity: str = "even", rng: Optional[np.random.Generator] = None):
    """Resolve a column rule to sorted 0-based indices."""
    if isinstance(columns, str):
        if columns == "every_second":
            # parity refers to 1-based positions
            start = 1 if parity == "even" else 0
            return tuple(range(start, D, 2))
        if columns == "random_half":
            if rng is None:
                raise ContractError("random column selection needs an rng")
            return tuple(int(c) for c in np.sort(rng.choice(D, size=D // 2, replace=False)))
        raise ContractError(f"unknown column rule {columns!r}")
    chosen = sorted({int(c) for c in columns})
    if any(not 0 <= c < D for c in chosen):
        raise ContractError(f"column indices out of range for D={D}")
    return tuple(chosen)


def insert_zeros(
    counts,
    p: float,
    columns: ColumnRule = "every_second",
    rng: Optional[np.random.Generator] = None,
    parity: str = "even",
) -> Tuple[CountMatrix, ZeroInsertionPlan]:
    """
    Zero every cell of a targeted column that lies strictly below the column's
    p-quantile (linear interpolation between order statistics).
    """
    values, rows, cols = _counts(counts)
    if np.any(values <= 0):
        raise ContractError("zero insertion needs a strictly positive count matrix")
    if not 0 < p < 1:
        raise ContractError(f"p must lie in (0, 1), got {p}")
    n, D = values.shape
    targets = target_columns(D, columns, parity, rng)

    mask = np.zeros((n, D), dtype=bool)
    limits = values.min(axis=0).astype(float)
    for j in targets:
        threshold = float(np.quantile(values[:, j], p, method="linear"))
        limits[j] = threshold
        mask[:, j] = values[:, j] < threshold

    zeroed = np.where(mask, 0, values)
    targeted_cells = n * len(targets)
    rate = float(mask.sum() / targeted_cells) if targeted_cells else 0.0
    plan = ZeroInsertionPlan(
        quantile_p=p,
        target_columns=targets,
        realized_mask=mask,
        realized_dl=np.broadcast_to(limits, (n, D)).copy(),
        realized_zero_rate=rate,
    )
    return CountMatrix(zeroed, rows, cols), plan


def sparsity(counts) -> float:
    """Fraction of zero cells."""
    values = np.asarray(counts.values if isinstance(counts, CountMatrix) else counts)
    return float(np.mean(values == 0))


def dirichlet(alpha: np.ndarray, rng: np.random.Generator, size: Optional[int] = None) -> np.ndarray:
    """Dirichlet draws as normalised Gamma variables; alpha may be n×D."""
    g = rng.gamma(np.asarray(alpha, dtype=float), size=size)
    return g / g.sum(axis=-1, keepdims=True)


def simulate_dm(spec: DMSpec, rng: np.random.Generator) -> CountMatrix:
    """n rows of Multinomial(depth, q) with q ~ Dirichlet(alpha)."""
    alpha = np.asarray(spec.alpha, dtype=float)
    q = dirichlet(alpha, rng, size=(spec.n, alpha.size))
    counts = rng.multinomial(spec.depth, q)
    return CountMatrix(counts)


def quantize_scale(counts, scale: float) -> CountMatrix:
    """
    Scale counts and round up to the integer lattice: ⌈scale·value⌉.

    Products are rounded to 9 decimals first so 30·0.1 lands on 3, not 4.
    """
    if not scale > 0:
        raise ContractError(f"scale must be positive, got {scale}")
    values, rows, cols = _counts(counts)
    scaled = np.ceil(np.round(values * float(scale), 9))
    return CountMatrix(scaled.astype(np.int64), rows, cols)


def logratio_shift_experiment(
    spec: DMSpec, scales: Sequence[float], rng: np.random.Generator
) -> Tuple[pd.DataFrame, pd.DataFrame]:
    """
    Effect of quantization on the log-ratio of the first two parts.

    Returns:
        (shifts, means):
            - shifts: columns scale, sample_id, lr_shift; log10(x1/x2) after
              quantization minus the unscaled value, per sample
            - means: columns scale, mean_lr, n_used, n_dropped; log10 of the
              ratio of the column means of parts 1 and 2 over the rows whose
              first two parts stay positive
    """
    if spec.depth < 1 or len(spec.alpha) < 2:
        raise ContractError("the experiment needs at least two parts")
    counts = simulate_dm(spec, rng).values
    base_ok = (counts[:, 0] > 0) & (counts[:, 1] > 0)
    with np.errstate(divide="ignore", invalid="ignore"):
        base_lr = np.log10(counts[:, 0] / counts[:, 1])

    shift_frames: List[pd.DataFrame] = []
    mean_rows = []
    for scale in scales:
        q = quantize_scale(counts, scale).values
        ok = base_ok & (q[:, 0] > 0) & (q[:, 1] > 0)
        n_used = int(ok.sum())
        if n_used == 0:
            logger.warning(f"All rows dropped at scale {scale}")
            mean_rows.append({"scale": scale, "mean_lr": np.nan, "n_used": 0, "n_dropped": spec.n})
            continue
        lr = np.log10(q[ok, 0] / q[ok, 1])
        shift_frames.append(
            pd.DataFrame({"scale": scale, "sample_id": np.flatnonzero(ok), "lr_shift": lr - base_lr[ok]})
        )
        mean_lr = float(np.log10(q[ok, 0].mean() / q[ok, 1].mean()))
        mean_rows.append({"scale": scale, "mean_lr": mean_lr, "n_used": n_used, "n_dropped": spec.n - n_used})

    shifts = (
        pd.concat(shift_frames, ignore_index=True)
        if shift_frames
        else pd.DataFrame(columns=["scale", "sample_id", "lr_shift"])
    )
    return shifts, pd.DataFrame(mean_rows, columns=["scale", "mean_lr", "n_used", "n_dropped"])


def depth_resolution(
    alpha: Sequence[float], depths: Sequence[int], n: int, rng: np.random.Generator
) -> Tuple[pd.DataFrame, pd.DataFrame]:
    """
    Lattice resolution of count compositions at several depths.

    Returns a summary (depth, n_distinct, n_zero_rows) and the CLR coordinates
    of every zero-free sample (depth, sample_id, clr_1..clr_D).
    """
    summary = []
    coord_frames = []
    for depth in depths:
        counts = simulate_dm(DMSpec(alpha=list(alpha), depth=int(depth), n=n), rng).values
        distinct = np.unique(counts, axis=0).shape[0]
        positive = np.all(counts > 0, axis=1)
        summary.append({"depth": depth, "n_distinct": distinct, "n_zero_rows": int((~positive).sum())})
        if positive.any():
            coords = clr(counts[positive]).values
            frame = pd.DataFrame(coords, columns=[f"clr_{k + 1}" for k in range(coords.shape[1])])
            frame.insert(0, "sample_id", np.flatnonzero(positive))
            frame.insert(0, "depth", depth)
            coord_frames.append(frame)
    coords = pd.concat(coord_frames, ignore_index=True) if coord_frames else pd.DataFrame()
    return pd.DataFrame(summary), coords


def zero_free_draw(
    counts, depth_full: int, rng: np.random.Generator, max_doublings: int = 10
) -> Tuple[np.ndarray, int]:
    """
    Posterior compositions p_i ~ Dirichlet(counts_i + ½) scaled by ``depth_full``
    and rounded half up. The same draws are rescaled at twice the depth until
    no zero remains.

    Returns the zero-free values and the depth used.
    """
    values, _, _ = _counts(counts)
    if depth_full < 1:
        raise ContractError("depth_full must be a positive integer")
    props = dirichlet(values + 0.5, rng)
    depth = int(depth_full)
    for attempt in range(max_doublings + 1):
        scaled = np.floor(props * depth + 0.5).astype(np.int64)
        if np.all(scaled > 0):
            if attempt:
                logger.info(f"Zero-free matrix needed depth {depth} ({attempt} doubling(s))")
            return scaled, depth
        depth *= 2
    raise DegenerateInputError(
        f"zeros remain after {max_doublings} doublings of the depth (last tried {depth // 2})"
    )


def make_zero_free(counts, depth_full: int, rng: np.random.Generator) -> CountMatrix:
    """Strictly positive count matrix with the same labels, see :func:`zero_free_draw`."""
    _, rows, cols = _counts(counts)
    values, _ = zero_free_draw(counts, depth_full, rng)
    return CountMatrix(values, rows, cols)


def synthetic_sparse_counts(
    n: int = 56, D: int = 985, sparsity_target: float = 0.633, rng: Optional[np.random.Generator] = None
) -> CountMatrix:
    """
    Stand-in for a sparse amplicon table: lognormal taxon abundances,
    multinomial sampling, then random zeros up to the target sparsity while
    keeping at least one positive cell per row.
    """
    rng = rng if rng is not None else np.random.default_rng(0)
    abundance = rng.lognormal(mean=0.0, sigma=2.0, size=D)
    props = dirichlet(np.broadcast_to(abundance, (n, D)), rng)
    depth = rng.integers(5_000, 50_000, size=n)
    counts = rng.multinomial(depth, props)
    counts = np.maximum(counts, 1)
    zero_cells = rng.random((n, D)) < sparsity_target
    keep = np.argmax(counts, axis=1)
    zero_cells[np.arange(n), keep] = False
    counts[zero_cells] = 0
    return CountMatrix(
        counts,
        tuple(f"S{i + 1}" for i in range(n)),
        tuple(f"OTU{j + 1}" for j in range(D)),
    )
