"""
Data augmentation for censored ALR coordinates.

A Gibbs sampler alternates between drawing the censored coordinates from
their truncated normal full conditionals and drawing (mu, Sigma) from the
normal-inverse-Wishart posterior under a noninformative prior. The
imputation is the average of the post-burn-in draws.
"""
from typing import Optional

import numpy as np
from scipy import linalg, stats

from core.censored import truncnorm_draw
from core.config import config
from core.errors import ContractError
from core.imputers.base import imputer, logger, prepare, require_limits
from core.imputers.regression import initial_replacement, reference_column
from core.models.outcome import ImputationOutcome

RIDGE_SCALE = 1e-8


def _cholesky(S: np.ndarray):
    try:
        return linalg.cholesky(S, lower=True)
    except linalg.LinAlgError:
        return None


def _positive_definite(S: np.ndarray):
    """S itself, or S plus a small ridge; None if both fail."""
    if _cholesky(S) is not None:
        return S, False
    q = S.shape[0]
    ridged = S + RIDGE_SCALE * np.trace(S) / q * np.eye(q)
    if _cholesky(ridged) is not None:
        return ridged, True
    return None, True


@imputer("lr_da")
def lr_da(
    x,
    dl,
    rng: Optional[np.random.Generator] = None,
    n_iter: Optional[int] = None,
    burn_in: Optional[int] = None,
    reference: Optional[int] = None,
) -> ImputationOutcome:
    n_iter = config.DA_ITERATIONS if n_iter is None else n_iter
    burn_in = config.DA_BURN_IN if burn_in is None else burn_in
    if not 0 <= burn_in < n_iter:
        raise ContractError("burn_in must be smaller than n_iter")
    if rng is None:
        raise ContractError("lr_da needs an rng")
    data = prepare(x, dl)
    if not data.has_zeros:
        return ImputationOutcome(imputed=data.x, iterations=0)
    require_limits(data)
    n, D = data.x.shape
    if n < 3:
        raise ContractError("lr_da needs at least three rows")
    ref = reference_column(data, reference)
    if ref is None:
        return ImputationOutcome.failed(data.x, "no part is observed in every row to serve as ALR reference")
    q = D - 1
    if n - 1 < q:
        return ImputationOutcome.failed(data.x, f"posterior covariance needs n >= D (n={n}, D={D})")

    others = [k for k in range(D) if k != ref]
    log_ref = np.log(data.x[:, ref])
    Z = np.log(initial_replacement(data)[:, others]) - log_ref[:, None]
    zmask = data.mask[:, others]
    psi = np.log(np.where(zmask, data.dl[:, others], 1.0)) - log_ref[:, None]
    columns = np.flatnonzero(zmask.any(axis=0))

    mu = Z.mean(axis=0)
    Sigma, ridged = _positive_definite(np.cov(Z, rowvar=False).reshape(q, q))
    if Sigma is None:
        return ImputationOutcome.failed(data.x, "initial covariance is not positive definite")
    ridge_count = int(ridged)
    saturated = 0
    total = np.zeros_like(Z)
    kept = 0

    for t in range(n_iter):
        # (a) censored coordinates given (mu, Sigma)
        Q = linalg.cho_solve((linalg.cholesky(Sigma, lower=True), True), np.eye(q))
        for c in columns:
            rows = zmask[:, c]
            var = 1.0 / Q[c, c]
            dev = Z[rows] - mu
            dev[:, c] = 0.0
            cond_mean = mu[c] - var * (dev @ Q[:, c])
            draws, sat = truncnorm_draw(cond_mean, np.sqrt(var), psi[rows, c], rng)
            saturated += int(np.count_nonzero(sat))
            Z[rows, c] = draws

        # (b) (mu, Sigma) given the completed data
        zbar = Z.mean(axis=0)
        centred = Z - zbar
        S, ridged = _positive_definite(centred.T @ centred)
        ridge_count += int(ridged)
        if S is None:
            return ImputationOutcome.failed(data.x, f"scatter matrix not positive definite at iteration {t}")
        draw = stats.invwishart.rvs(df=n - 1, scale=S, random_state=rng)
        Sigma, ridged = _positive_definite(np.atleast_2d(draw))
        ridge_count += int(ridged)
        if Sigma is None:
            return ImputationOutcome.failed(data.x, f"covariance draw not positive definite at iteration {t}")
        mu = rng.multivariate_normal(zbar, Sigma / n, method="cholesky")

        if not (np.all(np.isfinite(Z)) and np.all(np.isfinite(mu))):
            return ImputationOutcome.failed(data.x, f"non-finite draw at iteration {t}")
        if t >= burn_in:
            total += Z
            kept += 1

    if ridge_count:
        logger.info(f"lr_da: covariance regularised {ridge_count} time(s)")
    Z_mean = total / kept
    out = data.x.copy()
    full = np.zeros_like(data.x)
    full[:, others] = Z_mean + log_ref[:, None]
    out[data.mask] = np.exp(full[data.mask])
    return ImputationOutcome(
        imputed=out,
        iterations=n_iter,
        notes={"reference": ref, "burn_in": burn_in, "ridge": ridge_count, "saturated": saturated},
    )
