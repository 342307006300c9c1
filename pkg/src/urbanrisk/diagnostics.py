"""Residual diagnostics for the OLS fit.

Shapiro-Wilk normality (Royston's AS R94 approximation, 3 <= n <= 5000),
Breusch-Pagan heteroskedasticity (studentized/Koenker form by default),
Durbin-Watson first-order autocorrelation, and variance inflation factors.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import numerics
from .errors import DegenerateDataError, DimensionError, DomainError, SingularMatrixError

ALPHA = 0.05
DW_BAND = (1.5, 2.5)
VIF_LIMIT = 10.0

# Royston (1995) AS R94 polynomial coefficients, ascending powers.
_SW_C1 = (0.0, 0.221157, -0.147981, -2.071190, 4.434685, -2.706056)
_SW_C2 = (0.0, 0.042981, -0.293762, -1.752461, 5.682633, -3.582633)
_SW_C3 = (0.544, -0.39978, 0.025054, -6.714e-4)
_SW_C4 = (1.3822, -0.77857, 0.062767, -0.0020322)
_SW_C5 = (-1.5861, -0.31082, -0.083751, 0.0038915)
_SW_C6 = (-0.4803, -0.082676, 0.0030302)
_SW_G = (-2.273, 0.459)


def _poly(coeffs, x: float) -> float:
    acc = 0.0
    for c in reversed(coeffs):
        acc = acc * x + c
    return acc


@dataclass(frozen=True)
class DiagnosticsReport:
    """Table of the four tests with satisfied/violated verdicts."""

    shapiro_w: float
    shapiro_p: float
    bp_lm: float
    bp_p: float
    dw: float
    vif: np.ndarray
    verdicts: dict[str, bool]

    def rows(self) -> list[tuple[str, str, str]]:
        """(Test, Result, Interpretation) rows in the conventional order."""
        def verdict(key):
            return "Satisfied" if self.verdicts[key] else "Violated"

        vif_text = ", ".join(
            "inf" if math.isinf(v) else f"{v:.4f}" for v in self.vif
        )
        return [
            ("Shapiro-Wilk (Normality)",
             f"W = {self.shapiro_w:.4f}, p = {self.shapiro_p:.4f}",
             verdict("shapiro")),
            ("Breusch-Pagan (Homoscedasticity)",
             f"LM = {self.bp_lm:.4f}, p = {self.bp_p:.4f}",
             verdict("breusch_pagan")),
            ("Durbin-Watson (Autocorrelation)",
             f"DW = {self.dw:.2f}",
             verdict("durbin_watson")),
            ("Variance Inflation Factor (VIF)",
             f"VIF = [{vif_text}]",
             verdict("vif")),
        ]


def shapiro_wilk(sample) -> tuple[float, float]:
    """Shapiro-Wilk W and p-value via Royston's AS R94 approximation.

    Valid for 3 <= n <= 5000. The p-value uses the exact arcsine formula at
    n = 3, the gamma-shifted branch for n <= 11, and the log-normal
    transformation of 1 - W above that.
    """
    x = np.sort(np.asarray(sample, dtype=float))
    n = x.size
    if n < 3 or n > 5000:
        raise DomainError(f"shapiro_wilk requires 3 <= n <= 5000, got {n}")
    if x[-1] - x[0] == 0.0:
        raise DegenerateDataError("sample has zero range")

    if n == 3:
        a = np.array([-math.sqrt(0.5), 0.0, math.sqrt(0.5)])
    else:
        m = np.array(
            [numerics.normal_ppf((i - 0.375) / (n + 0.25)) for i in range(1, n + 1)]
        )
        msq = float(m @ m)
        rsn = 1.0 / math.sqrt(n)
        a_n = m[-1] / math.sqrt(msq) + _poly(_SW_C1, rsn)
        if n > 5:
            a_n1 = m[-2] / math.sqrt(msq) + _poly(_SW_C2, rsn)
            phi = (msq - 2.0 * m[-1] ** 2 - 2.0 * m[-2] ** 2) / (
                1.0 - 2.0 * a_n**2 - 2.0 * a_n1**2
            )
            a = m / math.sqrt(phi)
            a[-1], a[0] = a_n, -a_n
            a[-2], a[1] = a_n1, -a_n1
        else:
            phi = (msq - 2.0 * m[-1] ** 2) / (1.0 - 2.0 * a_n**2)
            a = m / math.sqrt(phi)
            a[-1], a[0] = a_n, -a_n

    centered = x - x.mean()
    w = float((a @ x) ** 2 / (centered @ centered))
    w = min(w, 1.0)

    if n == 3:
        p = 6.0 / math.pi * (math.asin(math.sqrt(w)) - math.asin(math.sqrt(0.75)))
        return w, min(max(p, 0.0), 1.0)
    y = math.log(1.0 - w) if w < 1.0 else -math.inf
    if n <= 11:
        gamma = _poly(_SW_G, float(n))
        if y >= gamma:
            return w, 0.0
        z = (-math.log(gamma - y) - _poly(_SW_C3, float(n))) / math.exp(
            _poly(_SW_C4, float(n))
        )
    else:
        ln_n = math.log(n)
        z = (y - _poly(_SW_C5, ln_n)) / math.exp(_poly(_SW_C6, ln_n))
    return w, numerics.normal_sf(z)


def breusch_pagan(residuals, x_with_intercept, studentized: bool = True) -> tuple[float, float]:
    """Breusch-Pagan LM test of residual variance depending on regressors.

    Regresses squared residuals on the design (which must include the
    intercept column). The default studentized (Koenker) statistic is
    n * R² of that auxiliary regression; `studentized=False` gives the
    classic variant, ESS/2 of the normalized squared residuals. Either way
    the p-value is chi-square with k = non-intercept regressors.
    """
    r = np.asarray(residuals, dtype=float)
    x = np.asarray(x_with_intercept, dtype=float)
    if x.ndim != 2 or r.ndim != 1 or x.shape[0] != r.shape[0]:
        raise DimensionError("residuals and design dimensions disagree")
    n, cols = x.shape
    k = cols - 1
    if k < 1:
        raise DimensionError("design needs at least one non-intercept column")

    sq = r * r
    beta = numerics.least_squares(x, sq)
    fitted = x @ beta
    if studentized:
        tss = float(np.sum((sq - sq.mean()) ** 2))
        if tss == 0.0:
            return 0.0, 1.0
        r2_aux = 1.0 - float(np.sum((sq - fitted) ** 2)) / tss
        lm = n * r2_aux
    else:
        sigma2 = float(sq.mean())
        if sigma2 == 0.0:
            return 0.0, 1.0
        g_fitted = fitted / sigma2
        lm = 0.5 * float(np.sum((g_fitted - g_fitted.mean()) ** 2))
    lm = max(lm, 0.0)
    return lm, numerics.chi2_sf(lm, k)


def durbin_watson(residuals) -> float:
    """Sum of squared first differences over the residual sum of squares."""
    r = np.asarray(residuals, dtype=float)
    if r.size < 2:
        raise DimensionError("need at least 2 residuals")
    denom = float(r @ r)
    if denom == 0.0:
        raise DegenerateDataError("all residuals are zero")
    return float(np.sum(np.diff(r) ** 2)) / denom


def vif(x_regressors) -> np.ndarray:
    """Variance inflation factor of each column regressed on the rest.

    `x_regressors` carries regressors only; the intercept is added inside
    each auxiliary regression. A perfectly collinear column yields +inf
    rather than an error. Exactly duplicated columns among the predictors
    of an auxiliary regression are dropped before solving, which leaves
    that auxiliary R² unchanged.
    """
    x = np.asarray(x_regressors, dtype=float)
    if x.ndim != 2 or x.shape[1] < 2:
        raise DimensionError("vif needs a matrix with at least 2 columns")
    n, p = x.shape
    out = np.empty(p)
    for j in range(p):
        target = x[:, j]
        others = np.delete(x, j, axis=1)
        design = np.hstack([np.ones((n, 1)), others])
        r2 = _aux_r2(design, target)
        out[j] = math.inf if (1.0 - r2) <= 1e-12 else 1.0 / (1.0 - r2)
    return out


def _aux_r2(design: np.ndarray, target: np.ndarray) -> float:
    while True:
        try:
            beta = numerics.least_squares(design, target)
            break
        except SingularMatrixError as err:
            if err.column is None or design.shape[1] <= 1:
                raise
            design = np.delete(design, err.column, axis=1)
    resid = target - design @ beta
    tss = float(np.sum((target - target.mean()) ** 2))
    if tss == 0.0:
        raise DegenerateDataError("regressor column has zero variance")
    return 1.0 - float(resid @ resid) / tss


def diagnose(residuals, score_columns) -> DiagnosticsReport:
    """Run all four tests for an OLS fit on component scores."""
    r = np.asarray(residuals, dtype=float)
    s = np.asarray(score_columns, dtype=float)
    design = np.hstack([np.ones((s.shape[0], 1)), s])
    w, p_w = shapiro_wilk(r)
    lm, p_lm = breusch_pagan(r, design)
    dw = durbin_watson(r)
    vifs = vif(s)
    verdicts = {
        "shapiro": p_w >= ALPHA,
        "breusch_pagan": p_lm >= ALPHA,
        "durbin_watson": DW_BAND[0] <= dw <= DW_BAND[1],
        "vif": bool(np.all(vifs < VIF_LIMIT)),
    }
    return DiagnosticsReport(
        shapiro_w=w, shapiro_p=p_w, bp_lm=lm, bp_p=p_lm, dw=dw,
        vif=vifs, verdicts=verdicts,
    )
