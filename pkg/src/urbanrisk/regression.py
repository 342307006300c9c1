"""OLS and Huber robust linear models of case density on component scores.

Both fits regress y on an intercept plus the selected component scores.
The robust fit is iteratively reweighted least squares with the Huber
weight function and a MAD residual scale, reporting asymptotic-normal
(sandwich) standard errors; the OLS fit reports exact t-based inference.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, replace

import numpy as np

from . import numerics
from .errors import (
    DegenerateDataError,
    DimensionError,
    JoinError,
    SchemaError,
    StateError,
)
from .pca import ScoreTable

#: MAD consistency factor for the normal distribution.
MAD_TO_SIGMA = 0.6745


@dataclass(frozen=True)
class HuberConfig:
    """IRLS settings; 1.345 is the standard 95%-efficiency tuning constant."""

    tuning_constant: float = 1.345
    max_iterations: int = 50
    tolerance: float = 1e-8

    def __post_init__(self):
        if self.tuning_constant <= 0:
            raise DegenerateDataError("tuning constant must be positive")
        if self.tolerance <= 0:
            raise DegenerateDataError("tolerance must be positive")


@dataclass(frozen=True)
class RegressionFit:
    """A fitted linear model with per-coefficient inference.

    `coefficients[0]` is the intercept; the remaining entries follow
    `term_names`. OLS fits carry (r_squared, adj_r_squared) and t-based
    inference; Huber fits carry pseudo_r_squared, iteration count and
    normal-based inference.
    """

    kind: str  # "ols" or "huber"
    term_names: tuple[str, ...]
    component_ids: tuple[int, ...]
    coefficients: np.ndarray
    std_errors: np.ndarray
    test_stats: np.ndarray
    p_values: np.ndarray
    conf_intervals: np.ndarray  # (p+1) x 2
    residuals: np.ndarray
    fitted: np.ndarray
    scale: float
    n_obs: int
    r_squared: float | None = None
    adj_r_squared: float | None = None
    pseudo_r_squared: float | None = None
    iterations: int | None = None
    converged: bool = True

    @property
    def stat_label(self) -> str:
        return "t" if self.kind == "ols" else "z"


def _align_target(scores: ScoreTable, y) -> np.ndarray:
    """Accept y as an aligned vector or as a mapping keyed by neighborhood."""
    if isinstance(y, dict):
        missing = set(scores.neighborhood_ids) - set(y)
        extra = set(y) - set(scores.neighborhood_ids)
        if missing or extra:
            raise JoinError(
                f"target does not align with score rows; missing={sorted(missing)}, "
                f"unmatched={sorted(extra)}"
            )
        return np.array([float(y[nid]) for nid in scores.neighborhood_ids])
    arr = np.asarray(y, dtype=float)
    if arr.ndim != 1 or arr.shape[0] != scores.n:
        raise JoinError(
            f"target length {arr.shape[0] if arr.ndim == 1 else arr.shape} does "
            f"not match {scores.n} score rows"
        )
    return arr


def _design(scores: ScoreTable, y) -> tuple[np.ndarray, np.ndarray]:
    yv = _align_target(scores, y)
    n, p = scores.scores.shape
    if n <= p + 1:
        raise DimensionError(f"need n > p+1 observations (n={n}, p={p})")
    x = np.hstack([np.ones((n, 1)), scores.scores])
    return x, yv


def _term_names(scores: ScoreTable) -> tuple[str, ...]:
    return ("Intercept",) + tuple(f"Component {c}" for c in scores.component_ids)


def fit_ols(scores: ScoreTable, y) -> RegressionFit:
    """Ordinary least squares with exact t-based inference.

    sigma^2 = RSS / (n - p - 1); standard errors from sigma^2 (X'X)^-1;
    two-sided p-values and 95% intervals from the t distribution.
    """
    x, yv = _design(scores, y)
    n, k = x.shape
    beta = numerics.least_squares(x, yv)
    fitted = x @ beta
    residuals = yv - fitted
    df = n - k
    rss = float(residuals @ residuals)
    sigma2 = rss / df
    cov = sigma2 * numerics.xtx_inverse(x)
    se = np.sqrt(np.diag(cov))
    tstats = beta / se
    pvals = np.array([2.0 * numerics.t_sf(abs(t), df) for t in tstats])
    tcrit = numerics.t_ppf(0.975, df)
    ci = np.column_stack([beta - tcrit * se, beta + tcrit * se])

    tss = float(np.sum((yv - yv.mean()) ** 2))
    if tss == 0.0:
        raise DegenerateDataError("target has zero variance")
    r2 = 1.0 - rss / tss
    adj = 1.0 - (1.0 - r2) * (n - 1) / df
    return RegressionFit(
        kind="ols",
        term_names=_term_names(scores),
        component_ids=tuple(scores.component_ids),
        coefficients=beta,
        std_errors=se,
        test_stats=tstats,
        p_values=pvals,
        conf_intervals=ci,
        residuals=residuals,
        fitted=fitted,
        scale=float(np.sqrt(sigma2)),
        n_obs=n,
        r_squared=r2,
        adj_r_squared=adj,
    )


def mad_scale(residuals: np.ndarray) -> float:
    """Median absolute deviation about the median, normal-consistent."""
    med = np.median(residuals)
    return float(np.median(np.abs(residuals - med))) / MAD_TO_SIGMA


def huber_weights(scaled_resid: np.ndarray, c: float) -> np.ndarray:
    w = np.ones_like(scaled_resid)
    big = np.abs(scaled_resid) > c
    w[big] = c / np.abs(scaled_resid[big])
    return w


def huber_psi(u: np.ndarray, c: float) -> np.ndarray:
    return np.clip(u, -c, c)


def fit_huber(scores: ScoreTable, y, config: HuberConfig | None = None) -> RegressionFit:
    """Huber M-estimator fitted by IRLS, initialized at the OLS solution.

    Each iteration recomputes the MAD scale from current residuals, forms
    Huber weights, and solves a weighted least squares. Stops when the
    largest relative coefficient change drops below the tolerance; hitting
    the iteration cap attaches a convergence warning instead of failing.

    Standard errors come from the Huber sandwich
    ``s^2 * mean(psi(r/s)^2) / mean(psi'(r/s))^2 * (X'X)^-1``
    with z statistics and normal-based p-values and intervals.
    """
    if config is None:
        config = HuberConfig()
    x, yv = _design(scores, y)
    n, k = x.shape
    c = config.tuning_constant

    beta = numerics.least_squares(x, yv)
    iterations = 0
    converged = False
    for iterations in range(1, config.max_iterations + 1):
        residuals = yv - x @ beta
        scale = mad_scale(residuals)
        if scale == 0.0:
            raise DegenerateDataError(
                "MAD scale is zero (more than half the residuals identical)"
            )
        weights = huber_weights(residuals / scale, c)
        sqrt_w = np.sqrt(weights)
        beta_new = numerics.least_squares(x * sqrt_w[:, None], yv * sqrt_w)
        denom = np.maximum(np.abs(beta), 1e-300)
        change = float(np.max(np.abs(beta_new - beta) / denom))
        beta = beta_new
        if change < config.tolerance:
            converged = True
            break
    if not converged:
        warnings.warn(
            f"IRLS did not converge within {config.max_iterations} iterations",
            stacklevel=2,
        )

    fitted = x @ beta
    residuals = yv - fitted
    scale = mad_scale(residuals)
    if scale == 0.0:
        raise DegenerateDataError("MAD scale is zero at the fitted solution")
    u = residuals / scale
    psi = huber_psi(u, c)
    psi_prime_mean = float(np.mean(np.abs(u) <= c))
    if psi_prime_mean == 0.0:
        raise DegenerateDataError("all residuals flagged as outliers")
    factor = scale**2 * float(np.mean(psi**2)) / psi_prime_mean**2
    cov = factor * numerics.xtx_inverse(x)
    se = np.sqrt(np.diag(cov))
    zstats = beta / se
    pvals = np.array([2.0 * numerics.normal_sf(abs(z)) for z in zstats])
    zc = numerics.Z_975
    ci = np.column_stack([beta - zc * se, beta + zc * se])

    fit = RegressionFit(
        kind="huber",
        term_names=_term_names(scores),
        component_ids=tuple(scores.component_ids),
        coefficients=beta,
        std_errors=se,
        test_stats=zstats,
        p_values=pvals,
        conf_intervals=ci,
        residuals=residuals,
        fitted=fitted,
        scale=scale,
        n_obs=n,
        iterations=iterations,
        converged=converged,
    )
    return replace(fit, pseudo_r_squared=pseudo_r2(fit, yv))


def pseudo_r2(fit: RegressionFit, y) -> float:
    """1 - RSS/TSS computed from a robust fit's ordinary residuals.

    May be negative for fits worse than the constant-mean model.
    """
    if fit.kind != "huber":
        raise StateError("pseudo_r2 is defined for Huber fits")
    yv = np.asarray(y, dtype=float)
    if yv.shape != fit.fitted.shape:
        raise DimensionError("y does not match the fit")
    tss = float(np.sum((yv - yv.mean()) ** 2))
    if tss == 0.0:
        raise DegenerateDataError("target has zero variance")
    rss = float(np.sum((yv - fit.fitted) ** 2))
    return 1.0 - rss / tss


def predict(fit: RegressionFit, scores: ScoreTable) -> np.ndarray:
    """Intercept + scores @ slope for rows of a matching score table."""
    if tuple(scores.component_ids) != fit.component_ids:
        raise SchemaError(
            f"score components {scores.component_ids} do not match the fit's "
            f"{fit.component_ids}"
        )
    return fit.coefficients[0] + scores.scores @ fit.coefficients[1:]


def sign_agreement(a: RegressionFit, b: RegressionFit) -> tuple[int, int]:
    """(matching, total) count of coefficients with equal sign in two fits."""
    total = min(len(a.coefficients), len(b.coefficients))
    matching = int(
        np.sum(np.sign(a.coefficients[:total]) == np.sign(b.coefficients[:total]))
    )
    return matching, total
