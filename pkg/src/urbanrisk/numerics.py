"""Deterministic numeric kernels shared by the statistical modules.

Dense matrices are plain 2-D ``numpy.ndarray`` objects (row-major, finite
entries). Everything here is a pure function; nothing keeps state between
calls.

Algorithms:
  * symmetric eigendecomposition by cyclic Jacobi rotations,
  * linear least squares by Householder QR,
  * normal / chi-square / Student-t tail probabilities via the classic
    incomplete-gamma and incomplete-beta expansions (no table lookups).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    ConvergenceError,
    DegenerateDataError,
    DimensionError,
    DomainError,
    SingularMatrixError,
)

# Jacobi sweep budget and relative off-diagonal stopping threshold.
_JACOBI_MAX_SWEEPS = 100
_JACOBI_OFF_TOL = 1e-12

# Iteration budget / tolerance for the special-function expansions.
_SERIES_MAX_ITER = 500
_SERIES_TOL = 1e-15

#: Two-sided 95% standard-normal quantile used for robust-fit intervals.
Z_975 = 1.959963984540054


@dataclass(frozen=True)
class EigenResult:
    """Eigenvalues (descending) and matching unit eigenvectors (columns)."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray


def _as_matrix(m) -> np.ndarray:
    a = np.asarray(m, dtype=float)
    if a.ndim != 2:
        raise DimensionError(f"expected a 2-D matrix, got ndim={a.ndim}")
    if not np.all(np.isfinite(a)):
        raise DimensionError("matrix contains non-finite entries")
    return a


def symmetric_eigen(m, symmetry_tol: float = 1e-9) -> EigenResult:
    """Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.

    Returns eigenvalues sorted descending (stable sort, ties keep Jacobi
    output order) with orthonormal eigenvectors as columns, satisfying
    ``V @ diag(w) @ V.T == m`` to within ~1e-8 * ||m||_F.

    Raises
    ------
    DimensionError
        If `m` is not square or not symmetric within `symmetry_tol`.
    ConvergenceError
        If the off-diagonal mass has not vanished after 100 sweeps.
    """
    a = _as_matrix(m).copy()
    n, p = a.shape
    if n != p:
        raise DimensionError(f"matrix is {n}x{p}, expected square")
    scale = max(1.0, float(np.max(np.abs(a))))
    if np.max(np.abs(a - a.T)) > symmetry_tol * scale:
        raise DimensionError("matrix is not symmetric within tolerance")
    a = (a + a.T) / 2.0

    v = np.eye(n)
    frob = np.linalg.norm(a, "fro")
    if frob == 0.0:
        return EigenResult(np.zeros(n), v)

    def off_norm(x):
        # Norm of the off-diagonal part only; subtracting diagonal mass from
        # the full norm cancels catastrophically near convergence.
        off = x.copy()
        np.fill_diagonal(off, 0.0)
        return np.linalg.norm(off, "fro")

    for _ in range(_JACOBI_MAX_SWEEPS):
        if off_norm(a) <= _JACOBI_OFF_TOL * frob:
            break
        for i in range(n - 1):
            for j in range(i + 1, n):
                if abs(a[i, j]) <= _JACOBI_OFF_TOL * frob / (n * n):
                    continue
                # Classic two-sided rotation annihilating a[i, j].
                theta = (a[j, j] - a[i, i]) / (2.0 * a[i, j])
                t = math.copysign(1.0, theta) / (
                    abs(theta) + math.sqrt(theta * theta + 1.0)
                )
                c = 1.0 / math.sqrt(t * t + 1.0)
                s = t * c
                rot_i = c * a[:, i] - s * a[:, j]
                rot_j = s * a[:, i] + c * a[:, j]
                a[:, i], a[:, j] = rot_i, rot_j
                rot_i = c * a[i, :] - s * a[j, :]
                rot_j = s * a[i, :] + c * a[j, :]
                a[i, :], a[j, :] = rot_i, rot_j
                a[i, j] = a[j, i] = 0.0
                rot_i = c * v[:, i] - s * v[:, j]
                rot_j = s * v[:, i] + c * v[:, j]
                v[:, i], v[:, j] = rot_i, rot_j
    else:
        raise ConvergenceError(
            f"Jacobi sweep cap ({_JACOBI_MAX_SWEEPS}) reached without convergence"
        )

    w = np.diag(a).copy()
    order = np.argsort(-w, kind="stable")
    return EigenResult(w[order], v[:, order])


def _householder_triangularize(aug: np.ndarray, rank_tol: float):
    """In-place Householder triangularization of an augmented matrix.

    `aug` is [X | extra]; only the first `p` columns are triangularized.
    Raises SingularMatrixError naming the first column whose remaining
    segment is numerically zero (rank deficiency).
    """
    n, total = aug.shape
    p = total - 1
    col_scale = max(1.0, float(np.max(np.abs(aug[:, :p]))))
    for j in range(p):
        x = aug[j:, j]
        norm_x = np.linalg.norm(x)
        if norm_x <= rank_tol * col_scale:
            raise SingularMatrixError(
                f"design matrix is rank deficient at column {j}", column=j
            )
        alpha = -math.copysign(norm_x, x[0]) if x[0] != 0 else -norm_x
        u = x.copy()
        u[0] -= alpha
        norm_u = np.linalg.norm(u)
        if norm_u == 0.0:
            continue
        u /= norm_u
        aug[j:, j:] -= 2.0 * np.outer(u, u @ aug[j:, j:])
        aug[j, j] = alpha
        aug[j + 1 :, j] = 0.0
    return aug


def _back_substitute(r: np.ndarray, b: np.ndarray) -> np.ndarray:
    p = r.shape[0]
    beta = np.zeros(p)
    for i in range(p - 1, -1, -1):
        beta[i] = (b[i] - r[i, i + 1 :] @ beta[i + 1 :]) / r[i, i]
    return beta


def least_squares(x, y, rank_tol: float = 1e-10) -> np.ndarray:
    """Minimize ||y - X @ beta||_2 via Householder QR.

    Raises SingularMatrixError (naming the offending column) when X is
    numerically rank deficient, DimensionError on shape mismatch.
    """
    xm = _as_matrix(x)
    yv = np.asarray(y, dtype=float)
    if yv.ndim != 1:
        raise DimensionError("y must be a 1-D vector")
    n, p = xm.shape
    if yv.shape[0] != n:
        raise DimensionError(f"X has {n} rows but y has {yv.shape[0]} entries")
    if n < p:
        raise DimensionError(f"underdetermined system: {n} rows < {p} columns")
    aug = np.hstack([xm, yv[:, None]])
    _householder_triangularize(aug, rank_tol)
    return _back_substitute(aug[:p, :p], aug[:p, p])


def qr_r(x, rank_tol: float = 1e-10) -> np.ndarray:
    """Upper-triangular thin-R factor of X (Householder), rank-checked."""
    xm = _as_matrix(x).copy()
    n, p = xm.shape
    aug = np.hstack([xm, np.zeros((n, 1))])
    _householder_triangularize(aug, rank_tol)
    return aug[:p, :p]


def xtx_inverse(x, rank_tol: float = 1e-10) -> np.ndarray:
    """(X'X)^-1 computed from the R factor, avoiding normal equations."""
    r = qr_r(x, rank_tol)
    p = r.shape[0]
    r_inv = np.zeros((p, p))
    for j in range(p):
        e = np.zeros(p)
        e[j] = 1.0
        r_inv[:, j] = _back_substitute(r, e)
    return r_inv @ r_inv.T


# ---------------------------------------------------------------------------
# Distribution functions
# ---------------------------------------------------------------------------


def normal_cdf(z: float) -> float:
    """Standard normal CDF."""
    return 0.5 * math.erfc(-float(z) / math.sqrt(2.0))


def normal_sf(z: float) -> float:
    """Standard normal upper tail P(Z > z)."""
    return 0.5 * math.erfc(float(z) / math.sqrt(2.0))


# AS 241 (PPND16) rational approximations for the normal quantile.
_PPND_A = (
    3.3871328727963666080e0, 1.3314166789178437745e2, 1.9715909503065514427e3,
    1.3731693765509461125e4, 4.5921953931549871457e4, 6.7265770927008700853e4,
    3.3430575583588128105e4, 2.5090809287301226727e3,
)
_PPND_B = (
    1.0, 4.2313330701600911252e1, 6.8718700749205790830e2,
    5.3941960214247511077e3, 2.1213794301586595867e4, 3.9307895800092710610e4,
    2.8729085735721942674e4, 5.2264952788528545610e3,
)
_PPND_C = (
    1.42343711074968357734e0, 4.63033784615654529590e0,
    5.76949722146069140550e0, 3.64784832476320460504e0,
    1.27045825245236838258e0, 2.41780725177450611770e-1,
    2.27238449892691845833e-2, 7.74545014278341407640e-4,
)
_PPND_D = (
    1.0, 2.05319162663775882187e0, 1.67638483018380384940e0,
    6.89767334985100004550e-1, 1.48103976427480074590e-1,
    1.51986665636164571966e-2, 5.47593808499534494600e-4,
    1.05075007164441684324e-9,
)
_PPND_E = (
    6.65790464350110377720e0, 5.46378491116411436990e0,
    1.78482653991729133580e0, 2.96560571828504891230e-1,
    2.65321895265761230930e-2, 1.24266094738807843860e-3,
    2.71155556874348757815e-5, 2.01033439929228813265e-7,
)
_PPND_F = (
    1.0, 5.99832206555887937690e-1, 1.36929880922735805310e-1,
    1.48753612908506148525e-2, 7.86869131145613259100e-4,
    1.84631831751005468180e-5, 1.42151175831644588870e-7,
    2.04426310338993978564e-15,
)


def _poly(coeffs, x):
    acc = 0.0
    for c in reversed(coeffs):
        acc = acc * x + c
    return acc


def normal_ppf(q: float) -> float:
    """Standard normal quantile (Wichura's AS 241, |error| < 1e-15)."""
    if not 0.0 < q < 1.0:
        raise DomainError(f"normal_ppf requires 0 < q < 1, got {q}")
    d = q - 0.5
    if abs(d) <= 0.425:
        r = 0.180625 - d * d
        return d * _poly(_PPND_A, r) / _poly(_PPND_B, r)
    r = q if d < 0 else 1.0 - q
    r = math.sqrt(-math.log(r))
    if r <= 5.0:
        r -= 1.6
        val = _poly(_PPND_C, r) / _poly(_PPND_D, r)
    else:
        r -= 5.0
        val = _poly(_PPND_E, r) / _poly(_PPND_F, r)
    return -val if d < 0 else val


def _regularized_gamma_p(a: float, x: float) -> float:
    """Lower regularized incomplete gamma P(a, x), series expansion."""
    if x == 0.0:
        return 0.0
    term = 1.0 / a
    total = term
    for k in range(1, _SERIES_MAX_ITER):
        term *= x / (a + k)
        total += term
        if abs(term) < abs(total) * _SERIES_TOL:
            break
    else:
        raise ConvergenceError("incomplete gamma series failed to converge")
    return total * math.exp(-x + a * math.log(x) - math.lgamma(a))


def _regularized_gamma_q_cf(a: float, x: float) -> float:
    """Upper regularized incomplete gamma Q(a, x), Lentz continued fraction."""
    tiny = 1e-300
    b = x + 1.0 - a
    c = 1.0 / tiny
    d = 1.0 / b if b != 0 else 1.0 / tiny
    h = d
    for i in range(1, _SERIES_MAX_ITER):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        if abs(d) < tiny:
            d = tiny
        c = b + an / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _SERIES_TOL:
            break
    else:
        raise ConvergenceError("incomplete gamma continued fraction failed")
    return h * math.exp(-x + a * math.log(x) - math.lgamma(a))


def chi2_sf(x: float, df: int) -> float:
    """Chi-square upper tail P(X > x) with `df` degrees of freedom."""
    if df < 1:
        raise DomainError(f"chi2_sf requires df >= 1, got {df}")
    x = float(x)
    if x < 0:
        raise DomainError(f"chi2_sf requires x >= 0, got {x}")
    if x == 0.0:
        return 1.0
    a = df / 2.0
    half = x / 2.0
    if half < a + 1.0:
        return min(1.0, max(0.0, 1.0 - _regularized_gamma_p(a, half)))
    return min(1.0, max(0.0, _regularized_gamma_q_cf(a, half)))


def _beta_cf(a: float, b: float, x: float) -> float:
    """Continued fraction for the incomplete beta (Lentz's method)."""
    tiny = 1e-300
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < tiny:
        d = tiny
    d = 1.0 / d
    h = d
    for m in range(1, _SERIES_MAX_ITER):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + aa / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + aa / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _SERIES_TOL:
            return h
    raise ConvergenceError("incomplete beta continued fraction failed")


def _regularized_beta(a: float, b: float, x: float) -> float:
    """Regularized incomplete beta I_x(a, b)."""
    if x <= 0.0:
        return 0.0
    if x >= 1.0:
        return 1.0
    front = math.exp(
        math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
        + a * math.log(x) + b * math.log1p(-x)
    )
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _beta_cf(a, b, x) / a
    return 1.0 - front * _beta_cf(b, a, 1.0 - x) / b  # symmetry transform


def t_sf(t: float, df: int) -> float:
    """Student-t upper tail P(T > t) with `df` degrees of freedom."""
    if df < 1:
        raise DomainError(f"t_sf requires df >= 1, got {df}")
    t = float(t)
    x = df / (df + t * t)
    half_tail = 0.5 * _regularized_beta(df / 2.0, 0.5, x)
    return half_tail if t >= 0 else 1.0 - half_tail


def t_ppf(q: float, df: int) -> float:
    """Student-t quantile by bisection on the monotone tail function."""
    if df < 1:
        raise DomainError(f"t_ppf requires df >= 1, got {df}")
    if not 0.0 < q < 1.0:
        raise DomainError(f"t_ppf requires 0 < q < 1, got {q}")
    if q == 0.5:
        return 0.0
    if q < 0.5:
        return -t_ppf(1.0 - q, df)
    target = 1.0 - q  # upper-tail mass
    lo, hi = 0.0, 2.0
    while t_sf(hi, df) > target:
        hi *= 2.0
        if hi > 1e12:
            raise ConvergenceError("t quantile bracket expansion failed")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if t_sf(mid, df) > target:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-13 * max(1.0, hi):
            break
    return 0.5 * (lo + hi)


def sample_std(values, ddof: int = 1) -> float:
    """Standard deviation with explicit divisor; rejects degenerate input."""
    v = np.asarray(values, dtype=float)
    if v.size <= ddof:
        raise DegenerateDataError(f"need more than {ddof} values")
    return float(np.sqrt(np.sum((v - v.mean()) ** 2) / (v.size - ddof)))
