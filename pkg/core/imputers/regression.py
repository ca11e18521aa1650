"""
Regression-based EM replacement in log-ratio coordinates.

Both methods cycle over the censored columns: regress the column's log-ratio
coordinate on coordinates built from the other parts, then replace the
censored cells by the mean of the fitted normal truncated at the censoring
bound. lr_em works in ALR coordinates with ordinary least squares; pls_em
works in pivot coordinates with partial least squares.
"""
import warnings
from typing import Callable, Dict, List, Optional

import numpy as np
from sklearn.cross_decomposition import PLSRegression
from sklearn.model_selection import KFold

from core.censored import truncnorm_mean
from core.coda import helmert_basis, variation_matrix
from core.config import config
from core.errors import ContractError
from core.imputers.base import CensoredData, imputer, logger, prepare, require_limits
from core.models.outcome import ImputationOutcome


class _RegressionFailure(Exception):
    pass


def initial_replacement(data: CensoredData, fraction: Optional[float] = None) -> np.ndarray:
    """Zeros replaced by fraction·DL, nothing else touched."""
    fraction = config.REPLACEMENT_FRACTION if fraction is None else fraction
    return np.where(data.mask, fraction * np.nan_to_num(data.dl, nan=1.0), data.x)


def reference_column(data: CensoredData, reference: Optional[int]) -> Optional[int]:
    """Requested ALR reference, or the last part observed in every row."""
    D = data.x.shape[1]
    if reference is not None:
        if not -D <= reference < D:
            raise ContractError(f"reference {reference} out of range for D={D}")
        reference %= D
        if data.mask[:, reference].any():
            raise ContractError(f"reference part {reference} has zero cells")
        return reference
    observed = np.flatnonzero(~data.mask.any(axis=0))
    return int(observed[-1]) if observed.size else None


def _sigma(residuals: np.ndarray, dof: int) -> float:
    if dof <= 0:
        raise _RegressionFailure("too few rows for the number of regression parameters")
    return max(float(np.sqrt(residuals @ residuals / dof)), 1e-12)


def censored_em(
    L: np.ndarray,
    mask: np.ndarray,
    update: Callable[[int, np.ndarray], np.ndarray],
    max_iter: int,
    tol: float,
):
    """
    Gauss-Seidel EM over censored columns on the log scale.

    ``update(j, L)`` returns new log values for the whole column j; only the
    censored rows are written back. Stops when the largest change of a
    censored log value falls below ``tol``.
    """
    columns = np.flatnonzero(mask.any(axis=0))
    trace: List[float] = []
    converged = False
    for _ in range(max_iter):
        max_change = 0.0
        for j in columns:
            rows = mask[:, j]
            new = update(j, L)[rows]
            max_change = max(max_change, float(np.max(np.abs(new - L[rows, j]))))
            L[rows, j] = new
        trace.append(max_change)
        if max_change < tol:
            converged = True
            break
    return L, trace, converged


def _finish(data: CensoredData, L: np.ndarray, trace, converged, **notes) -> ImputationOutcome:
    out = data.x.copy()
    out[data.mask] = np.exp(L[data.mask])
    if not converged:
        logger.info(f"EM stopped after {len(trace)} iterations without reaching tol")
    return ImputationOutcome(
        imputed=out,
        iterations=len(trace),
        converged=converged,
        notes={"max_change": trace, **notes},
    )


@imputer("lr_em")
def lr_em(
    x,
    dl,
    rng: Optional[np.random.Generator] = None,
    max_iter: Optional[int] = None,
    tol: Optional[float] = None,
    reference: Optional[int] = None,
) -> ImputationOutcome:
    """
    EM replacement in ALR coordinates with least-squares regression.

    Censored ALR coordinates are set to mu − sigma·φ(a)/Φ(a) with
    a = (ψ − mu)/sigma and ψ = ln(DL / x_ref). The result does not depend on
    which fully observed part serves as the reference.
    """
    max_iter = config.EM_MAX_ITER if max_iter is None else max_iter
    tol = config.EM_TOL if tol is None else tol
    data = prepare(x, dl)
    if not data.has_zeros:
        return ImputationOutcome(imputed=data.x, iterations=0)
    require_limits(data)
    n, D = data.x.shape
    if n < 3:
        raise ContractError("lr_em needs at least three rows")
    ref = reference_column(data, reference)
    if ref is None:
        return ImputationOutcome.failed(data.x, "no part is observed in every row to serve as ALR reference")

    log_ref = np.log(data.x[:, ref])
    log_dl = np.log(np.where(data.mask, data.dl, 1.0))
    intercept = np.ones((n, 1))

    def update(j, L):
        predictors = [k for k in range(D) if k not in (j, ref)]
        A = np.hstack([intercept, L[:, predictors] - log_ref[:, None]])
        z = L[:, j] - log_ref
        beta, _, rank, _ = np.linalg.lstsq(A, z, rcond=None)
        if rank < A.shape[1]:
            raise _RegressionFailure("singular predictor matrix")
        pred = A @ beta
        sigma = _sigma(z - pred, n - A.shape[1])
        psi = log_dl[:, j] - log_ref
        new, _ = truncnorm_mean(pred, sigma, psi)
        return new + log_ref

    L = np.log(initial_replacement(data))
    try:
        L, trace, converged = censored_em(L, data.mask, update, max_iter, tol)
    except _RegressionFailure as e:
        return ImputationOutcome.failed(data.x, str(e))
    return _finish(data, L, trace, converged, reference=ref)


def _select_components(P: np.ndarray, z: np.ndarray, candidates: range, folds: int, seed: int) -> int:
    """Number of PLS components with the smallest cross-validated prediction error."""
    kfold = KFold(n_splits=min(folds, P.shape[0]), shuffle=True, random_state=seed)
    press = np.zeros(len(candidates))
    for train, test in kfold.split(P):
        for c, ncomp in enumerate(candidates):
            model = PLSRegression(n_components=min(ncomp, len(train) - 1, P.shape[1]), scale=False)
            model.fit(P[train], z[train])
            press[c] += float(np.sum((z[test] - model.predict(P[test]).ravel()) ** 2))
    return candidates[int(np.argmin(press))]


@imputer("PLS")
def pls_em(
    x,
    dl,
    rng: Optional[np.random.Generator] = None,
    n_components: Optional[int] = None,
    max_iter: Optional[int] = None,
    tol: Optional[float] = None,
    n_predictors: Optional[int] = None,
    max_components: Optional[int] = None,
    cv_folds: Optional[int] = None,
) -> ImputationOutcome:
    """
    EM replacement with the least-squares step replaced by PLS regression.

    For target part j the response is its first pivot coordinate
    sqrt(k/(k+1))·ln(x_j / gmean(x_S)) and the predictors are the pivot
    coordinates of the parts S. S holds every other part, or with
    ``n_predictors`` only the parts with the smallest log-ratio variance t_jk.
    Unless ``n_components`` is given, the component count is chosen per column
    by K-fold cross-validation on the starting matrix and recorded in the notes.
    """
    max_iter = config.EM_MAX_ITER if max_iter is None else max_iter
    tol = config.EM_TOL if tol is None else tol
    max_components = config.PLS_MAX_COMPONENTS if max_components is None else max_components
    cv_folds = config.PLS_CV_FOLDS if cv_folds is None else cv_folds
    data = prepare(x, dl)
    if not data.has_zeros:
        return ImputationOutcome(imputed=data.x, iterations=0)
    require_limits(data)
    n, D = data.x.shape
    if n < 3:
        raise ContractError("pls_em needs at least three rows")
    if n_predictors is not None and not 2 <= n_predictors <= D - 1:
        raise ContractError(f"n_predictors must lie in [2, {D - 1}]")

    start = initial_replacement(data)
    L = np.log(start)
    log_dl = np.log(np.where(data.mask, data.dl, 1.0))
    columns = data.masked_columns

    if n_predictors is not None:
        T = variation_matrix(start)
        parts = {int(j): np.sort(T.nearest_parts(j, n_predictors)) for j in columns}
    else:
        parts = {int(j): np.array([k for k in range(D) if k != j]) for j in columns}

    def design(j, L):
        S = parts[int(j)]
        k = S.size
        g = L[:, S].mean(axis=1)
        P = (L[:, S] - g[:, None]) @ helmert_basis(k)
        return P, np.sqrt(k / (k + 1.0)), g

    seed = int(rng.integers(2**31 - 1)) if rng is not None else 0
    chosen: Dict[int, int] = {}
    for j in columns:
        P, c, g = design(j, L)
        limit = min(n - 1, P.shape[1])
        if n_components is not None:
            if not 1 <= n_components <= limit:
                raise ContractError(f"n_components must lie in [1, {limit}] for column {j}")
            chosen[int(j)] = n_components
            continue
        if np.all(P.std(axis=0) < 1e-12):
            return ImputationOutcome.failed(data.x, f"column {j}: predictors are constant")
        candidates = range(1, min(max_components, limit) + 1)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            chosen[int(j)] = _select_components(P, c * (L[:, j] - g), candidates, cv_folds, seed)
    logger.debug(f"PLS components per column: {chosen}")

    def update(j, L):
        P, c, g = design(j, L)
        if np.all(P.std(axis=0) < 1e-12):
            raise _RegressionFailure(f"column {j}: predictors are constant")
        ncomp = chosen[int(j)]
        z = c * (L[:, j] - g)
        model = PLSRegression(n_components=ncomp, scale=False).fit(P, z)
        pred = model.predict(P).ravel()
        sigma = _sigma(z - pred, n - ncomp - 1)
        psi = c * (log_dl[:, j] - g)
        new, _ = truncnorm_mean(pred, sigma, psi)
        return new / c + g

    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            L, trace, converged = censored_em(L, data.mask, update, max_iter, tol)
    except _RegressionFailure as e:
        return ImputationOutcome.failed(data.x, str(e))
    return _finish(data, L, trace, converged, n_components=chosen)
