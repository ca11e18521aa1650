"""
Low-rank replacement in ILR coordinates.
"""
from typing import Optional

import numpy as np

from core.coda import helmert_basis
from core.config import config
from core.errors import ContractError
from core.imputers.base import imputer, prepare, require_limits
from core.models.outcome import ImputationOutcome


def _start(data, fraction: float) -> np.ndarray:
    """
    Multiplicative simple replacement expressed on the scale of the observed
    parts: zeros become fraction·DL divided by the row's adjustment factor,
    capped at DL.
    """
    delta = fraction * np.where(data.mask, data.dl, 0.0)
    factor = 1.0 - delta.sum(axis=1) / data.x.sum(axis=1)
    scaled = np.where(factor[:, None] > 0, delta / np.where(factor > 0, factor, 1.0)[:, None], delta)
    return np.where(data.mask, np.minimum(scaled, data.dl), data.x)


@imputer("lr_SVD")
def lr_svd(
    x,
    dl,
    rng: Optional[np.random.Generator] = None,
    rank: Optional[int] = None,
    weight_beta: Optional[float] = None,
    max_iter: Optional[int] = None,
    tol: Optional[float] = None,
) -> ImputationOutcome:
    """
    Iterative rank-``rank`` SVD reconstruction of the ILR coordinates.

    Each iteration takes the best rank-s approximation R of the column-centred
    ILR matrix, maps it back to log scale with a per-row offset fitted to the
    observed parts, blends observed cells as (1 − β)·R + β·X and clips censored
    cells at ln DL. Stops when the relative Frobenius change of the
    coordinates drops below ``tol``. Observed cells of the output are the input.
    """
    rank = config.SVD_RANK if rank is None else rank
    weight_beta = config.SVD_WEIGHT if weight_beta is None else weight_beta
    max_iter = config.SVD_MAX_ITER if max_iter is None else max_iter
    tol = config.SVD_TOL if tol is None else tol
    data = prepare(x, dl)
    n, D = data.x.shape
    max_rank = min(n, D - 1) - 1
    if not 1 <= rank <= max_rank:
        raise ContractError(f"rank must lie in [1, {max_rank}] for a {n}×{D} matrix, got {rank}")
    if not 0 <= weight_beta <= 1:
        raise ContractError("weight_beta must lie in [0, 1]")
    if not data.has_zeros:
        return ImputationOutcome(imputed=data.x, iterations=0)
    require_limits(data)

    H = helmert_basis(D)
    observed = ~data.mask
    log_x = np.log(np.where(observed, data.x, 1.0))
    log_dl = np.log(np.where(data.mask, data.dl, 1.0))

    L = np.log(_start(data, config.REPLACEMENT_FRACTION))
    Z = (L - L.mean(axis=1, keepdims=True)) @ H
    converged = False
    iterations = 0
    for iterations in range(1, max_iter + 1):
        centre = Z.mean(axis=0)
        try:
            U, s, Vt = np.linalg.svd(Z - centre, full_matrices=False)
        except np.linalg.LinAlgError as e:
            return ImputationOutcome.failed(data.x, f"SVD failed: {e}", iterations=iterations)
        R = centre + (U[:, :rank] * s[:rank]) @ Vt[:rank]
        fitted = R @ H.T
        offset = np.where(observed, log_x - fitted, 0.0).sum(axis=1) / observed.sum(axis=1)
        fitted = fitted + offset[:, None]

        L = np.where(
            observed,
            (1.0 - weight_beta) * fitted + weight_beta * log_x,
            np.minimum(fitted, log_dl),
        )
        Z_new = (L - L.mean(axis=1, keepdims=True)) @ H
        change = np.linalg.norm(Z_new - Z) / max(np.linalg.norm(Z), 1e-300)
        Z = Z_new
        if not np.all(np.isfinite(Z)):
            return ImputationOutcome.failed(data.x, "non-finite coordinates", iterations=iterations)
        if change < tol:
            converged = True
            break

    out = data.x.copy()
    out[data.mask] = np.minimum(np.exp(L[data.mask]), data.dl[data.mask])
    return ImputationOutcome(
        imputed=out,
        iterations=iterations,
        converged=converged,
        notes={"rank": rank, "weight_beta": weight_beta},
    )
