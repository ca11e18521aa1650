"""
Shared plumbing for the imputers: input validation, the multiplicative
adjustment, and the method registry.
"""
import time
from dataclasses import dataclass
from functools import wraps
from typing import Callable, Dict, Optional

import numpy as np

from core.config import get_logger
from core.errors import ContractError
from core.models.composition import CompositionMatrix
from core.models.outcome import ImputationOutcome, Status

logger = get_logger("imputers")

REGISTRY: Dict[str, Callable[..., ImputationOutcome]] = {}


@dataclass(frozen=True, eq=False)
class CensoredData:
    """Zero-bearing matrix, its censoring mask and the detection limits (n×D)."""

    x: np.ndarray
    mask: np.ndarray
    dl: np.ndarray

    @property
    def has_zeros(self) -> bool:
        return bool(self.mask.any())

    @property
    def masked_columns(self) -> np.ndarray:
        return np.flatnonzero(self.mask.any(axis=0))


def prepare(x, dl=None) -> CensoredData:
    """
    Validate a zero-bearing matrix and broadcast its detection limits.

    ``dl`` may be a scalar, a length-D vector or an n×D matrix; it only has to be
    positive on masked (zero) cells.
    """
    arr = np.array(x.values if isinstance(x, CompositionMatrix) else x, dtype=float)
    if arr.ndim == 1:
        arr = arr[None, :]
    if arr.ndim != 2 or arr.shape[1] < 2:
        raise ContractError(f"expected an n×D matrix with D >= 2, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)) or np.any(arr < 0):
        raise ContractError("input must be finite and nonnegative")
    if np.any(arr.sum(axis=1) == 0):
        raise ContractError("every row needs at least one positive entry")
    mask = arr == 0
    if dl is None:
        limits = np.full(arr.shape, np.nan)
    else:
        try:
            limits = np.broadcast_to(np.asarray(dl, dtype=float), arr.shape).copy()
        except ValueError as e:
            raise ContractError(f"detection limits do not match shape {arr.shape}") from e
        if mask.any() and not np.all(limits[mask] > 0):
            raise ContractError("detection limits must be positive on every zero cell")
    return CensoredData(x=arr, mask=mask, dl=limits)


def require_limits(data: CensoredData):
    if data.has_zeros and not np.all(np.isfinite(data.dl[data.mask])):
        raise ContractError("this method needs detection limits for the zero cells")


def multiplicative_adjust(x: np.ndarray, mask: np.ndarray, delta: np.ndarray):
    """
    Place ``delta`` on masked cells and rescale the positive parts of each row by
    1 − Σ_masked δ / C_i, with C_i the row total of ``x``.

    Returns the adjusted matrix and the rows whose factor is not positive.
    """
    totals = x.sum(axis=1)
    added = np.where(mask, delta, 0.0).sum(axis=1)
    factor = 1.0 - added / totals
    out = np.where(mask, delta, x * factor[:, None])
    return out, factor <= 0


def outcome_from_adjustment(out: np.ndarray, negative: np.ndarray, **kwargs) -> ImputationOutcome:
    if negative.any():
        return ImputationOutcome.degenerate(
            out,
            f"{int(negative.sum())} row(s) with non-positive multiplicative adjustment",
            negative_rows=negative,
            **kwargs,
        )
    return ImputationOutcome(imputed=out, negative_rows=negative, **kwargs)


def imputer(method_id: str):
    """
    Register an imputer under its stable method identifier and time every call.

    The wrapped callable takes ``(x, dl, rng=None, **params)``.
    """

    def decorator(func):
        @wraps(func)
        def wrapper(*args, **kwargs):
            start = time.perf_counter()
            outcome = func(*args, **kwargs)
            elapsed = time.perf_counter() - start
            outcome = outcome.with_(method=method_id, runtime_s=elapsed)
            if outcome.status is not Status.OK:
                logger.warning(f"{method_id}: {outcome.status.value} ({outcome.reason})")
            else:
                logger.debug(f"{method_id}: ok in {elapsed:.3f}s, {outcome.iterations} iteration(s)")
            return outcome

        REGISTRY[method_id] = wrapper
        return wrapper

    return decorator


def get_imputer(method_id: str) -> Callable[..., ImputationOutcome]:
    try:
        return REGISTRY[method_id]
    except KeyError:
        valid = ", ".join(sorted(REGISTRY))
        raise ContractError(f"unknown method {method_id!r}; valid identifiers: {valid}") from None


def impute(method_id: str, x, dl=None, rng: Optional[np.random.Generator] = None, **params) -> ImputationOutcome:
    """Run the imputer registered as ``method_id``."""
    return get_imputer(method_id)(x, dl, rng=rng, **params)
