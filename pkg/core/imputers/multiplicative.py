"""
Multiplicative replacement family.

Each method chooses a replacement δ_ij for every zero cell and rescales the
positive parts of the row so that their ratios are preserved:

    r_ij = δ_ij                                  if x_ij == 0
    r_ij = x_ij · (1 − Σ_{k: x_ik == 0} δ_ik / C_i)  otherwise

The methods differ only in how δ is chosen.
"""
from typing import Optional, Union

import numpy as np

from core.censored import (
    fit_censored_lognormal,
    km_draw_below,
    km_left_censored,
    km_restricted_geomean,
    truncnorm_draw,
    truncnorm_mean,
)
from core.config import config
from core.errors import ContractError, ConvergenceError, DegenerateInputError
from core.imputers.base import (
    imputer,
    logger,
    multiplicative_adjust,
    outcome_from_adjustment,
    prepare,
    require_limits,
)
from core.models.outcome import ImputationOutcome
from core.schemas import DirichletPrior


@imputer("mult_repl")
def mult_repl(x, dl, rng: Optional[np.random.Generator] = None, fraction: float = None) -> ImputationOutcome:
    """Replace zeros by ``fraction``·DL (default 0.65) with multiplicative adjustment."""
    fraction = config.REPLACEMENT_FRACTION if fraction is None else fraction
    if not 0 < fraction < 1:
        raise ContractError(f"fraction must lie in (0, 1), got {fraction}")
    data = prepare(x, dl)
    if not data.has_zeros:
        return ImputationOutcome(imputed=data.x)
    require_limits(data)
    delta = np.where(data.mask, fraction * np.nan_to_num(data.dl), 0.0)
    out, negative = multiplicative_adjust(data.x, data.mask, delta)
    return outcome_from_adjustment(out, negative, notes={"fraction": fraction})


@imputer("mult_lognorm")
def mult_lognorm(x, dl, rng: Optional[np.random.Generator] = None, random: bool = False) -> ImputationOutcome:
    """
    Replace zeros using a per-column lognormal fitted to the positive values
    with the zeros treated as left-censored at their detection limits.

    Deterministic mode uses the geometric mean of the fitted distribution
    truncated at DL; ``random=True`` draws one value per cell below DL.
    Columns whose fit fails fall back to 0.65·DL.
    """
    data = prepare(x, dl)
    if not data.has_zeros:
        return ImputationOutcome(imputed=data.x)
    require_limits(data)
    if random and rng is None:
        raise ContractError("random mode needs an rng")

    delta = np.zeros_like(data.x)
    fallback = []
    saturated = 0
    for j in data.masked_columns:
        col_mask = data.mask[:, j]
        observed = data.x[~col_mask, j]
        limits = data.dl[col_mask, j]
        try:
            if observed.size < 2:
                raise DegenerateInputError("fewer than two positive values")
            fit = fit_censored_lognormal(observed, limits)
        except (DegenerateInputError, ConvergenceError) as e:
            logger.info(f"mult_lognorm: column {j} falls back to simple replacement ({e})")
            fallback.append(int(j))
            delta[col_mask, j] = config.REPLACEMENT_FRACTION * limits
            continue
        upper = np.log(limits)
        if random:
            logs, sat = truncnorm_draw(fit.mu_log, fit.sigma_log, upper, rng)
        else:
            logs, sat = truncnorm_mean(fit.mu_log, fit.sigma_log, upper)
        saturated += int(np.count_nonzero(sat))
        delta[col_mask, j] = np.exp(logs)

    out, negative = multiplicative_adjust(data.x, data.mask, delta)
    return outcome_from_adjustment(
        out, negative, notes={"fallback_columns": fallback, "saturated": saturated, "random": random}
    )


@imputer("mult_KMSS")
def mult_km(x, dl, rng: Optional[np.random.Generator] = None, random: bool = False) -> ImputationOutcome:
    """
    Replace zeros from a per-column Kaplan-Meier CDF of the left-censored column,
    smoothed by a monotone interpolant.

    Deterministic mode uses the geometric mean of the smoothed estimator below
    DL; ``random=True`` draws one value per cell.
    """
    data = prepare(x, dl)
    if not data.has_zeros:
        return ImputationOutcome(imputed=data.x)
    require_limits(data)
    if random and rng is None:
        raise ContractError("random mode needs an rng")

    delta = np.zeros_like(data.x)
    uniform_fallbacks = 0
    for j in data.masked_columns:
        col_mask = data.mask[:, j]
        observed = data.x[~col_mask, j]
        limits = data.dl[col_mask, j]
        try:
            ecdf = km_left_censored(observed, limits)
        except DegenerateInputError as e:
            return ImputationOutcome.failed(data.x, f"column {j}: {e}")
        if random:
            values = np.empty(limits.size)
            for i, limit in enumerate(limits):
                draw, fell_back = km_draw_below(ecdf, limit, rng)
                values[i] = draw
                uniform_fallbacks += fell_back
        else:
            cache = {}
            for limit in np.unique(limits):
                cache[limit] = km_restricted_geomean(ecdf, limit)
                uniform_fallbacks += cache[limit][1] * int(np.count_nonzero(limits == limit))
            values = np.array([cache[limit][0] for limit in limits])
        delta[col_mask, j] = values

    out, negative = multiplicative_adjust(data.x, data.mask, delta)
    return outcome_from_adjustment(
        out, negative, notes={"uniform_fallbacks": int(uniform_fallbacks), "random": random}
    )


def geometric_prior(counts: np.ndarray):
    """
    Data-driven prior per row: t_ij is the geometric mean of the positive
    proportions of column j over the other rows (then closed), and
    s_i = 1 / gmean(t_i).

    Returns (strengths of shape n, centers of shape n×D).
    """
    props = counts / counts.sum(axis=1, keepdims=True)
    positive = props > 0
    logs = np.where(positive, np.log(np.where(positive, props, 1.0)), 0.0)
    col_sum = logs.sum(axis=0)
    col_cnt = positive.sum(axis=0)
    loo_cnt = col_cnt[None, :] - positive
    with np.errstate(divide="ignore", invalid="ignore"):
        loo_mean = (col_sum[None, :] - logs) / loo_cnt
    # columns with no positive value in the other rows take the row's smallest center
    finite = np.isfinite(loo_mean)
    if not finite.all():
        row_floor = np.where(finite, loo_mean, np.inf).min(axis=1, keepdims=True)
        row_floor = np.where(np.isfinite(row_floor), row_floor, 0.0)
        loo_mean = np.where(finite, loo_mean, row_floor)
    centers = np.exp(loo_mean - loo_mean.max(axis=1, keepdims=True))
    centers /= centers.sum(axis=1, keepdims=True)
    strengths = 1.0 / np.exp(np.log(centers).mean(axis=1))
    return strengths, centers


@imputer("GBM")
def gbm_cmult(
    counts,
    dl=None,
    rng: Optional[np.random.Generator] = None,
    prior: Union[DirichletPrior, str] = "geometric",
    output: str = "prop",
) -> ImputationOutcome:
    """
    Bayesian-multiplicative replacement for count data.

    Zero parts take the posterior mean s·t_j/(N_i + s) of a Dirichlet(s·t)
    prior; positive proportions are shrunk by 1 − s/(N_i + s)·Σ_zero t_k so
    their ratios stay fixed.

    Args:
        prior: A DirichletPrior, or one of the standard names (Haldane, Perks,
            Jeffreys, BayesLaplace, geometric) built with a uniform center
        output: "prop" for proportions, "p-counts" for proportions rescaled by
            each row's original total
    """
    if output not in ("prop", "p-counts"):
        raise ContractError(f"output must be 'prop' or 'p-counts', got {output!r}")
    data = prepare(counts, None)
    c = data.x
    n, D = c.shape
    if isinstance(prior, str):
        prior = DirichletPrior.named(prior, D)
    totals = c.sum(axis=1)
    props = c / totals[:, None]
    scale = totals[:, None] if output == "p-counts" else 1.0

    if prior.name == "geometric":
        strengths, centers = geometric_prior(c)
    else:
        if len(prior.center) != D:
            raise ContractError(f"prior center has {len(prior.center)} parts, data has {D}")
        strengths = np.full(n, prior.strength)
        centers = np.broadcast_to(np.asarray(prior.center, dtype=float), (n, D))

    if not data.has_zeros:
        return ImputationOutcome(imputed=props * scale, notes={"prior": prior.name})
    if np.any(strengths[data.mask.any(axis=1)] == 0):
        return ImputationOutcome.degenerate(
            props * scale, "a zero-strength prior cannot replace zeros", notes={"prior": prior.name}
        )

    weight = strengths / (totals + strengths)
    zero_mass = np.where(data.mask, centers, 0.0).sum(axis=1)
    out = np.where(
        data.mask,
        weight[:, None] * centers,
        props * (1.0 - weight * zero_mass)[:, None],
    )
    return ImputationOutcome(imputed=out * scale, notes={"prior": prior.name, "output": output})
