"""
Compositional geometry: closure, log-ratio transforms and their inverses,
the Aitchison distance and the variation matrix.

Functions accept plain arrays (a single composition as a 1-D vector or one
composition per row) as well as :class:`CompositionMatrix`. Column indices
are 0-based.
"""
from functools import lru_cache
from typing import Optional, Union

import numpy as np
from scipy.spatial.distance import pdist, squareform

from core.errors import ContractError, DegenerateInputError, DomainError
from core.models.composition import CompositionMatrix, LogRatioCoordinates, VariationMatrix

ArrayLike = Union[np.ndarray, CompositionMatrix, list, tuple]


def _as_array(x: ArrayLike) -> np.ndarray:
    arr = np.asarray(x, dtype=float)
    if arr.ndim not in (1, 2):
        raise ContractError(f"expected a vector or a matrix, got {arr.ndim} dimensions")
    if not np.all(np.isfinite(arr)):
        raise ContractError("input contains NaN or infinite entries")
    return arr


def _as_strict(x: ArrayLike) -> np.ndarray:
    arr = _as_array(x)
    if np.any(arr <= 0):
        raise DomainError("log-ratio operations require strictly positive parts")
    return arr


def _check_index(index: int, D: int, what: str) -> int:
    if not -D <= index < D:
        raise ContractError(f"{what} index {index} out of range for D={D}")
    return index % D


def closure(x: ArrayLike, total: float = 1.0) -> np.ndarray:
    """
    Rescale each composition so its parts sum to ``total``.

    Args:
        x: Nonnegative vector or matrix (one composition per row)
        total: Positive target sum

    Returns:
        Array of the same shape as ``x``

    Raises:
        DegenerateInputError: a composition has no positive part
    """
    arr = _as_array(x)
    if total <= 0:
        raise ContractError("closure total must be positive")
    if np.any(arr < 0):
        raise ContractError("closure requires nonnegative parts")
    sums = arr.sum(axis=-1, keepdims=True)
    if np.any(sums == 0):
        raise DegenerateInputError("cannot close an all-zero composition")
    return arr / sums * total


def geometric_mean(x: ArrayLike, axis: int = -1) -> np.ndarray:
    arr = _as_strict(x)
    return np.exp(np.log(arr).mean(axis=axis))


def clr(x: ArrayLike) -> LogRatioCoordinates:
    """Centred log-ratio: log parts minus the log geometric mean of each row."""
    logs = np.log(_as_strict(x))
    return LogRatioCoordinates(values=logs - logs.mean(axis=-1, keepdims=True), kind="clr")


def inverse_clr(z: Union[LogRatioCoordinates, np.ndarray]) -> np.ndarray:
    values = _coordinate_values(z, "clr")
    shifted = values - values.max(axis=-1, keepdims=True)
    return closure(np.exp(shifted))


def alr(x: ArrayLike, ref: int = -1) -> LogRatioCoordinates:
    """Additive log-ratio ln(x_k / x_ref) over the D−1 parts other than ``ref``."""
    arr = _as_strict(x)
    D = arr.shape[-1]
    ref = _check_index(ref, D, "reference")
    logs = np.log(arr)
    values = np.delete(logs, ref, axis=-1) - logs[..., ref : ref + 1]
    return LogRatioCoordinates(values=values, kind="alr", index=ref)


def inverse_alr(z: Union[LogRatioCoordinates, np.ndarray], ref: Optional[int] = None) -> np.ndarray:
    """Closed composition from ALR coordinates; ``ref`` defaults to the stored reference."""
    if isinstance(z, LogRatioCoordinates):
        if z.kind != "alr":
            raise ContractError(f"expected ALR coordinates, got {z.kind}")
        ref = z.index if ref is None else ref
    values = _coordinate_values(z, "alr")
    D = values.shape[-1] + 1
    ref = _check_index(D - 1 if ref is None else ref, D, "reference")
    full = np.insert(values, ref, 0.0, axis=-1)
    full = full - full.max(axis=-1, keepdims=True)
    return closure(np.exp(full))


@lru_cache(maxsize=64)
def _helmert(D: int) -> np.ndarray:
    H = np.zeros((D, D - 1))
    for i in range(D - 1):
        rest = D - i - 1
        H[i, i] = np.sqrt(rest / (rest + 1))
        H[i + 1 :, i] = -1.0 / np.sqrt(rest * (rest + 1))
    H.setflags(write=False)
    return H


def helmert_basis(D: int) -> np.ndarray:
    """
    Orthonormal D×(D−1) contrast matrix of pivot balances.

    Column i contrasts part i against the geometric mean of parts i+1..D−1, so
    ``clr(x) @ H`` yields the pivot coordinates of ``x``.
    """
    if D < 2:
        raise ContractError("a basis needs at least two parts")
    return _helmert(int(D)).copy()


def pivot_basis(D: int, pivot: int = 0) -> np.ndarray:
    """Helmert basis with part ``pivot`` moved first and the others kept in order."""
    pivot = _check_index(pivot, D, "pivot")
    order = [pivot] + [k for k in range(D) if k != pivot]
    H = np.empty((D, D - 1))
    H[order, :] = _helmert(int(D))
    return H


def ilr_pivot(x: ArrayLike, pivot: int = 0) -> LogRatioCoordinates:
    """
    Pivot (isometric) log-ratio coordinates.

    The first coordinate is sqrt((D−1)/D)·ln(x_pivot / gmean(other parts)).
    """
    arr = _as_strict(x)
    D = arr.shape[-1]
    H = pivot_basis(D, pivot)
    logs = np.log(arr)
    centred = logs - logs.mean(axis=-1, keepdims=True)
    return LogRatioCoordinates(values=centred @ H, kind="ilr", index=pivot % D, basis=H)


def inverse_ilr(z: Union[LogRatioCoordinates, np.ndarray], pivot: Optional[int] = None) -> np.ndarray:
    """Closed composition from ILR coordinates, using the stored contrast matrix."""
    if isinstance(z, LogRatioCoordinates):
        if z.kind != "ilr":
            raise ContractError(f"expected ILR coordinates, got {z.kind}")
        H = z.basis
        if pivot is not None and pivot % H.shape[0] != z.index:
            raise ContractError(f"coordinates were built with pivot {z.index}, not {pivot}")
    else:
        values = np.asarray(z, dtype=float)
        H = pivot_basis(values.shape[-1] + 1, 0 if pivot is None else pivot)
    values = _coordinate_values(z, "ilr")
    if values.shape[-1] != H.shape[1]:
        raise ContractError(
            f"coordinates have {values.shape[-1]} columns but the basis spans {H.shape[1]}"
        )
    return inverse_clr(values @ H.T)


def _coordinate_values(z, kind: str) -> np.ndarray:
    if isinstance(z, LogRatioCoordinates):
        if z.kind != kind:
            raise ContractError(f"expected {kind.upper()} coordinates, got {z.kind.upper()}")
        return np.array(z.values)
    values = np.asarray(z, dtype=float)
    if not np.all(np.isfinite(values)):
        raise ContractError("coordinates contain NaN or infinite entries")
    return values


def aitchison_distance(x: ArrayLike, y: ArrayLike) -> Union[float, np.ndarray]:
    """
    Aitchison distance, row-wise for matrices.

    Equal to sqrt(1/(2D) · Σ_i Σ_j (ln(x_i/x_j) − ln(y_i/y_j))²), which is the
    Euclidean distance between CLR vectors.
    """
    a = clr(x).values
    b = clr(y).values
    if a.shape != b.shape:
        raise ContractError(f"shape mismatch: {a.shape} vs {b.shape}")
    d = np.sqrt(((a - b) ** 2).sum(axis=-1))
    return float(d) if d.ndim == 0 else d


def pairwise_aitchison(x: ArrayLike) -> np.ndarray:
    """n×n matrix of Aitchison distances between the rows of ``x``."""
    arr = _as_strict(x)
    if arr.ndim != 2:
        raise ContractError("pairwise distances need a matrix")
    return squareform(pdist(ilr_pivot(arr).values))


def variation_matrix(x: ArrayLike) -> VariationMatrix:
    """
    Variation matrix t_jk = var(ln(x_j / x_k)) with the n−1 denominator.

    Computed from the covariance of CLR coordinates so that per-row scale drops
    out before any arithmetic.
    """
    arr = _as_strict(x)
    if arr.ndim != 2 or arr.shape[0] < 2:
        raise ContractError("the variation matrix needs at least two rows")
    C = np.atleast_2d(np.cov(clr(arr).values, rowvar=False, ddof=1))
    d = np.diag(C)
    T = d[:, None] + d[None, :] - 2.0 * C
    T = np.maximum((T + T.T) / 2.0, 0.0)
    np.fill_diagonal(T, 0.0)
    labels = tuple(x.col_labels) if isinstance(x, CompositionMatrix) else ()
    return VariationMatrix(values=T, labels=labels)
