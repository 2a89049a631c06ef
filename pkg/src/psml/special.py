"""Special functions used by the closed-form selection probabilities.

Normal cdf/pdf, the central F distribution, and the binomial log-pmf.
Everything here is built on :mod:`math` (``erfc``, ``lgamma``) plus a
continued fraction for the regularized incomplete beta function, so the
closed forms do not depend on scipy.
"""

from __future__ import annotations

import math

import numpy as np

_SQRT2 = math.sqrt(2.0)
_LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)

_erfc = np.frompyfunc(math.erfc, 1, 1)


def _as_float(x, out):
    if np.ndim(x) == 0:
        return float(out)
    return np.asarray(out, dtype=float)


def norm_pdf(x):
    """Standard normal density."""
    x = np.asarray(x, dtype=float)
    return _as_float(x, np.exp(-0.5 * x * x - _LOG_SQRT_2PI))


def norm_logpdf(x):
    x = np.asarray(x, dtype=float)
    return _as_float(x, -0.5 * x * x - _LOG_SQRT_2PI)


def norm_cdf(x):
    """Standard normal cdf, ``0.5 * erfc(-x / sqrt(2))``.

    Accurate in relative terms deep into the lower tail, which matters for
    the inverse Mills ratio.
    """
    x = np.asarray(x, dtype=float)
    return _as_float(x, 0.5 * np.asarray(_erfc(-x / _SQRT2), dtype=float))


def _log_norm_cdf_scalar(x: float) -> float:
    if x > -20.0:
        return math.log(0.5 * math.erfc(-x / _SQRT2))
    # asymptotic tail series; erfc underflows near x = -38
    x2 = x * x
    series = 1.0 - 1.0 / x2 + 3.0 / x2**2 - 15.0 / x2**3 + 105.0 / x2**4
    return -0.5 * x2 - _LOG_SQRT_2PI - math.log(-x) + math.log(series)


_log_norm_cdf = np.frompyfunc(_log_norm_cdf_scalar, 1, 1)


def log_norm_cdf(x):
    x = np.asarray(x, dtype=float)
    return _as_float(x, np.asarray(_log_norm_cdf(x), dtype=float))


def mills_ratio(x):
    """``phi(x) / Phi(x)``, stable for large negative ``x``."""
    return _as_float(x, np.exp(norm_logpdf(x) - log_norm_cdf(x)))


def log_beta(a: float, b: float) -> float:
    return math.lgamma(a) + math.lgamma(b) - math.lgamma(a + b)


def _betacf(a: float, b: float, x: float) -> float:
    # modified Lentz evaluation of the incomplete beta continued fraction
    tiny = 1e-300
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < tiny:
        d = tiny
    d = 1.0 / d
    h = d
    for m in range(1, 10_000):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        d = tiny if abs(d) < tiny else d
        c = 1.0 + aa / c
        c = tiny if abs(c) < tiny else c
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        d = tiny if abs(d) < tiny else d
        c = 1.0 + aa / c
        c = tiny if abs(c) < tiny else c
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < 1e-16:
            return h
    raise ArithmeticError(f"incomplete beta continued fraction did not converge (a={a}, b={b}, x={x})")


def betainc(a: float, b: float, x: float) -> float:
    """Regularized incomplete beta function ``I_x(a, b)``."""
    if a <= 0 or b <= 0:
        raise ValueError("betainc requires a > 0 and b > 0")
    if x <= 0.0:
        return 0.0
    if x >= 1.0:
        return 1.0
    log_front = a * math.log(x) + b * math.log1p(-x) - log_beta(a, b)
    if x < (a + 1.0) / (a + b + 2.0):
        return math.exp(log_front) * _betacf(a, b, x) / a
    return 1.0 - math.exp(log_front) * _betacf(b, a, 1.0 - x) / b


def f_cdf(x: float, d1: float, d2: float) -> float:
    """Cdf of the central F(d1, d2) distribution."""
    if x <= 0.0:
        return 0.0
    # evaluate the smaller tail directly to keep relative accuracy
    z = d1 * x / (d1 * x + d2)
    if z <= 0.5:
        return betainc(0.5 * d1, 0.5 * d2, z)
    return 1.0 - betainc(0.5 * d2, 0.5 * d1, d2 / (d1 * x + d2))


def f_logpdf(x: float, d1: float, d2: float) -> float:
    if x <= 0.0:
        return -math.inf
    h1, h2 = 0.5 * d1, 0.5 * d2
    return (h1 * math.log(d1 * x) + h2 * math.log(d2) - (h1 + h2) * math.log(d1 * x + d2)
            - math.log(x) - log_beta(h1, h2))


def f_pdf(x: float, d1: float, d2: float) -> float:
    """Density of the central F(d1, d2) distribution."""
    return math.exp(f_logpdf(x, d1, d2))


def binom_logpmf(n, N: int, p: float):
    """Log of ``C(N, n) p^n (1-p)^(N-n)``; ``n`` may be an integer array."""
    n = np.asarray(n, dtype=float)
    lg = np.frompyfunc(math.lgamma, 1, 1)
    log_choose = (math.lgamma(N + 1.0) - np.asarray(lg(n + 1.0), dtype=float)
                  - np.asarray(lg(N - n + 1.0), dtype=float))
    return _as_float(n, log_choose + n * math.log(p) + (N - n) * math.log1p(-p))


def binom_pmf_vector(N: int, p: float) -> np.ndarray:
    """Binomial pmf over ``0..N`` computed in log space."""
    return np.exp(binom_logpmf(np.arange(N + 1), N, p))
