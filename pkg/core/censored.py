"""
Censored-data utilities shared by the parametric imputers.

- truncated normal moments and draws (upper truncation)
- maximum-likelihood fit of a left-censored lognormal
- Kaplan-Meier estimate of a left-censored CDF with a monotone smoother
"""
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np
from scipy import optimize, special, stats
from scipy.interpolate import PchipInterpolator

from core.config import get_logger
from core.errors import ContractError, ConvergenceError, DegenerateInputError

logger = get_logger(__name__)

# Below this standardized truncation point Φ(a) underflows in double precision.
SATURATION_POINT = -37.0
# Gap left below the truncation point on saturation, in units of sigma.
SATURATION_EPS = 1e-8

MLE_GTOL = 1e-6
MLE_MAX_ITER = 200


@dataclass(frozen=True)
class TruncatedNormalSpec:
    """Normal(mu, sigma) restricted to values below ``upper``."""

    mu: float
    sigma: float
    upper: float

    def __post_init__(self):
        if not self.sigma > 0:
            raise ContractError(f"sigma must be positive, got {self.sigma}")

    @property
    def a(self) -> float:
        return (self.upper - self.mu) / self.sigma


def _mills(a: np.ndarray) -> np.ndarray:
    """φ(a)/Φ(a), evaluated in log space."""
    return np.exp(stats.norm.logpdf(a) - stats.norm.logcdf(a))


def truncnorm_mean(mu, sigma, upper) -> Tuple[np.ndarray, np.ndarray]:
    """
    Vectorised mean of Normal(mu, sigma) truncated above at ``upper``.

    Returns:
        (means, saturated): ``saturated`` marks entries with a < -37 where the
        mean is pinned to ``upper - 1e-8·sigma``.
    """
    mu, sigma, upper = np.broadcast_arrays(
        np.asarray(mu, dtype=float), np.asarray(sigma, dtype=float), np.asarray(upper, dtype=float)
    )
    if np.any(sigma <= 0):
        raise ContractError("sigma must be positive")
    a = (upper - mu) / sigma
    saturated = a < SATURATION_POINT
    safe_a = np.where(saturated, 0.0, a)
    mean = mu - sigma * _mills(safe_a)
    ceiling = upper - SATURATION_EPS * sigma
    mean = np.where(saturated, ceiling, np.minimum(mean, ceiling))
    return mean, saturated


def truncnorm_draw(mu, sigma, upper, rng: np.random.Generator) -> Tuple[np.ndarray, np.ndarray]:
    """
    Vectorised inverse-CDF draws from Normal(mu, sigma) truncated above at ``upper``.

    The uniform is mapped through log Φ so extreme truncation stays finite.
    """
    mu, sigma, upper = np.broadcast_arrays(
        np.asarray(mu, dtype=float), np.asarray(sigma, dtype=float), np.asarray(upper, dtype=float)
    )
    if np.any(sigma <= 0):
        raise ContractError("sigma must be positive")
    a = (upper - mu) / sigma
    saturated = a < SATURATION_POINT
    u = rng.random(size=a.shape)
    # log(u·Φ(a)); u == 0 maps to -inf, which ndtri_exp sends to -inf as well
    with np.errstate(divide="ignore"):
        log_p = stats.norm.logcdf(a) + np.log(u)
    std = special.ndtri_exp(log_p)
    std = np.where(np.isfinite(std), std, a - 40.0)
    draws = mu + sigma * std
    ceiling = upper - SATURATION_EPS * sigma
    draws = np.minimum(draws, ceiling)
    return draws, saturated


def trunc_normal_mean(spec: TruncatedNormalSpec) -> float:
    """Mean of ``spec``: mu − sigma·φ(a)/Φ(a) with a = (upper − mu)/sigma."""
    mean, saturated = truncnorm_mean(spec.mu, spec.sigma, spec.upper)
    if saturated:
        logger.debug(f"Truncated normal mean saturated at a={spec.a:.1f}")
    return float(mean)


def trunc_normal_draw(spec: TruncatedNormalSpec, rng: np.random.Generator) -> float:
    """One draw from ``spec``, strictly below ``spec.upper``."""
    draw, saturated = truncnorm_draw(spec.mu, spec.sigma, spec.upper, rng)
    if saturated:
        logger.debug(f"Truncated normal draw saturated at a={spec.a:.1f}")
    return float(draw)


@dataclass(frozen=True)
class CensoredLognormalFit:
    mu_log: float
    sigma_log: float
    n_obs: int
    n_cens: int
    loglik: float
    iterations: int = 0
    converged: bool = True

    def __post_init__(self):
        if not self.sigma_log > 0:
            raise ContractError("sigma_log must be positive")
        if self.n_obs < 1 or self.n_obs + self.n_cens < 2:
            raise ContractError("a fit needs one observed point and two points in total")


def censored_normal_loglik(
    mu: float, log_sigma: float, observed_log: np.ndarray, limits_log: np.ndarray
) -> Tuple[float, np.ndarray]:
    """
    Log-likelihood of a left-censored normal sample and its gradient in (mu, log sigma).

    Observed points contribute their log density; censored points contribute
    log Φ((limit − mu)/sigma).
    """
    sigma = np.exp(log_sigma)
    z = (observed_log - mu) / sigma
    w = (limits_log - mu) / sigma
    loglik = stats.norm.logpdf(z).sum() - observed_log.size * log_sigma + stats.norm.logcdf(w).sum()
    lam = _mills(w)
    d_mu = z.sum() / sigma - lam.sum() / sigma
    d_log_sigma = (z**2 - 1.0).sum() - (lam * w).sum()
    return float(loglik), np.array([d_mu, d_log_sigma])


def fit_censored_lognormal(observed, censored_limits) -> CensoredLognormalFit:
    """
    Maximum-likelihood lognormal fit to positive values with left-censored points.

    Optimised with BFGS on (mu, log sigma) using analytic gradients of the mean
    log-likelihood, starting from the log-sample mean and SD. Convergence is
    judged on the gradient of the summed log-likelihood.

    Raises:
        DegenerateInputError: all observed values identical and nothing censored.
        ConvergenceError: gradient norm still at or above 1e-6 after 200 iterations.
    """
    observed = np.asarray(observed, dtype=float).ravel()
    limits = np.asarray(censored_limits, dtype=float).ravel()
    if observed.size < 1:
        raise ContractError("at least one observed value is required")
    if np.any(observed <= 0) or np.any(limits <= 0):
        raise ContractError("observed values and censoring limits must be positive")
    if observed.size + limits.size < 2:
        raise DegenerateInputError("a lognormal fit needs at least two points")

    y = np.log(observed)
    c = np.log(limits)
    mu0 = float(y.mean())
    sd0 = float(y.std())

    if limits.size == 0:
        if sd0 == 0:
            raise DegenerateInputError("all observed values are identical; sigma is degenerate")
        loglik, _ = censored_normal_loglik(mu0, np.log(sd0), y, c)
        return CensoredLognormalFit(mu0, sd0, observed.size, 0, loglik, iterations=0)

    n_total = y.size + c.size
    trace: List[Tuple[float, ...]] = []

    def objective(theta):
        loglik, grad = censored_normal_loglik(theta[0], theta[1], y, c)
        return -loglik / n_total, -grad / n_total

    def score(theta):
        return censored_normal_loglik(theta[0], theta[1], y, c)[1]

    def record(theta):
        trace.append((float(theta[0]), float(np.exp(theta[1]))))

    start = np.array([mu0, np.log(sd0) if sd0 > 0 else 0.0])
    result = optimize.minimize(
        objective,
        start,
        jac=True,
        method="BFGS",
        callback=record,
        options={"gtol": MLE_GTOL / (10 * n_total), "maxiter": MLE_MAX_ITER},
    )
    theta = result.x
    grad_norm = float(np.linalg.norm(score(theta))) if np.all(np.isfinite(theta)) else np.inf
    if np.isfinite(grad_norm) and grad_norm >= MLE_GTOL:
        # the mean objective flattens out before the summed score does; finish on the score
        polished = optimize.root(score, theta, method="hybr", options={"xtol": 1e-14})
        if np.all(np.isfinite(polished.x)):
            polished_norm = float(np.linalg.norm(score(polished.x)))
            before = censored_normal_loglik(theta[0], theta[1], y, c)[0]
            after = censored_normal_loglik(polished.x[0], polished.x[1], y, c)[0]
            if polished_norm < grad_norm and after >= before - 1e-9 * max(1.0, abs(before)):
                theta, grad_norm = polished.x, polished_norm
                record(theta)
    if not np.isfinite(grad_norm) or grad_norm >= MLE_GTOL:
        raise ConvergenceError(
            f"censored lognormal fit did not converge (|grad|={grad_norm:.2e}, {result.message})",
            trace=trace,
        )
    loglik, _ = censored_normal_loglik(theta[0], theta[1], y, c)
    return CensoredLognormalFit(
        mu_log=float(theta[0]),
        sigma_log=float(np.exp(theta[1])),
        n_obs=int(y.size),
        n_cens=int(c.size),
        loglik=loglik,
        iterations=int(result.nit),
    )


@dataclass(frozen=True, eq=False)
class LeftCensoredECDF:
    """
    Step CDF at the distinct observed values plus its monotone smoother.

    The smoother is the PCHIP interpolant through (0, 0) and the step points;
    beyond the largest support point the CDF is 1.
    """

    support: np.ndarray
    cdf: np.ndarray
    smoothed: PchipInterpolator = field(repr=False)

    @classmethod
    def from_steps(cls, support, cdf) -> "LeftCensoredECDF":
        support = np.asarray(support, dtype=float)
        cdf = np.asarray(cdf, dtype=float)
        if support.ndim != 1 or support.shape != cdf.shape or support.size < 1:
            raise ContractError("support and cdf must be matching non-empty vectors")
        if np.any(support <= 0) or np.any(np.diff(support) <= 0):
            raise ContractError("support must be strictly increasing positive values")
        if np.any(np.diff(cdf) < 0) or not np.isclose(cdf[-1], 1.0):
            raise ContractError("cdf must be nondecreasing and end at 1")
        smoothed = PchipInterpolator(np.r_[0.0, support], np.r_[0.0, cdf], extrapolate=False)
        return cls(support=support, cdf=cdf, smoothed=smoothed)

    def cdf_at(self, x) -> np.ndarray:
        """Smoothed CDF, clamped to 0 at or below 0 and to 1 past the support."""
        x = np.asarray(x, dtype=float)
        inside = np.clip(x, 0.0, self.support[-1])
        values = np.nan_to_num(self.smoothed(inside), nan=0.0)
        values = np.where(x <= 0, 0.0, values)
        values = np.where(x >= self.support[-1], 1.0, values)
        return np.clip(values, 0.0, 1.0)

    def mass_below(self, limit: float) -> float:
        return float(self.cdf_at(limit))

    def _inverse_grid(self, limit: float, resolution: int = 4096) -> Tuple[np.ndarray, np.ndarray]:
        """Points (F, x) on (0, limit) with F strictly increasing, for np.interp inversion."""
        knots = self.support[self.support < limit]
        xs = np.union1d(np.linspace(0.0, limit, resolution + 1), knots)
        Fs = np.maximum.accumulate(self.cdf_at(xs))
        keep = np.r_[True, np.diff(Fs) > 0]
        return Fs[keep], xs[keep]


def _right_censored_km(times: np.ndarray, events: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Product-limit survival S(u) at the distinct event times (censored ties stay at risk)."""
    event_times, d = np.unique(times[events], return_counts=True)
    sorted_times = np.sort(times)
    at_risk = times.size - np.searchsorted(sorted_times, event_times, side="left")
    survival = np.cumprod(1.0 - d / at_risk)
    return event_times, survival


def km_left_censored(observed, censored_limits) -> LeftCensoredECDF:
    """
    Kaplan-Meier CDF of left-censored positive data.

    The time axis is reversed (t = M − x), the right-censored product-limit
    estimator is applied, and the survival curve is reversed back:
    F(y) = S((M − y)−).
    """
    observed = np.asarray(observed, dtype=float).ravel()
    limits = np.asarray(censored_limits, dtype=float).ravel()
    if np.any(observed <= 0) or np.any(limits <= 0):
        raise ContractError("observed values and censoring limits must be positive")
    if np.unique(observed).size < 2:
        raise DegenerateInputError("Kaplan-Meier needs at least two distinct observed values")

    pooled = np.r_[observed, limits]
    M = pooled.max() + 1.0
    times = M - pooled
    events = np.r_[np.ones(observed.size, dtype=bool), np.zeros(limits.size, dtype=bool)]
    event_times, survival = _right_censored_km(times, events)

    # Left limit of S at each event time: survival at the previous event time.
    left_survival = np.r_[1.0, survival[:-1]]
    cdf = left_survival[::-1]
    # event times in reverse are the distinct observed values; M − (M − y) can
    # lose the last bits of y, so the support is taken from the data directly
    support = np.unique(observed)
    if support.size != cdf.size:
        raise DegenerateInputError("observed values too close to separate after axis reversal")
    return LeftCensoredECDF.from_steps(support, cdf)


def km_draw_below(
    ecdf: LeftCensoredECDF, limit: float, rng: np.random.Generator, size: Optional[int] = None
) -> Tuple[np.ndarray, bool]:
    """
    Inverse-CDF draws from the smoothed estimator restricted to (0, limit).

    Returns the draws and whether the uniform (0.1·limit, limit) fallback was used
    because the estimator has no mass below ``limit``.
    """
    if not limit > 0:
        raise ContractError("limit must be positive")
    Fs, xs = ecdf._inverse_grid(limit)
    mass = Fs[-1]
    if mass <= 1e-12 or Fs.size < 2:
        logger.debug(f"No estimator mass below {limit}; drawing uniformly on (0.1·limit, limit)")
        return rng.uniform(0.1 * limit, limit, size=size), True
    u = rng.uniform(0.0, mass, size=size)
    draws = np.interp(u, Fs, xs)
    draws = np.clip(draws, limit * 1e-12, limit * (1.0 - 1e-12))
    return draws, False


def km_restricted_geomean(ecdf: LeftCensoredECDF, limit: float, strata: int = 1024) -> Tuple[float, bool]:
    """Geometric mean of the smoothed estimator restricted to (0, limit), by stratified quantiles."""
    if not limit > 0:
        raise ContractError("limit must be positive")
    probs = (np.arange(strata) + 0.5) / strata
    Fs, xs = ecdf._inverse_grid(limit)
    mass = Fs[-1]
    if mass <= 1e-12 or Fs.size < 2:
        points = 0.1 * limit + probs * 0.9 * limit
        return float(np.exp(np.log(points).mean())), True
    points = np.interp(probs * mass, Fs, xs)
    points = np.clip(points, limit * 1e-12, limit * (1.0 - 1e-12))
    return float(np.exp(np.log(points).mean())), False
