"""Paired t-test and squared Pearson correlation."""

from __future__ import annotations

import math

import numpy as np


class ZeroVarianceError(ValueError):
    """A statistic is undefined because an input has zero variance."""


def _betacf(a: float, b: float, x: float, max_iter: int = 500, tol: float = 1e-16) -> float:
    # modified Lentz evaluation of the incomplete-beta continued fraction
    tiny = 1e-300
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    d = tiny if abs(d) < tiny else d
    d = 1.0 / d
    h = d
    for m in range(1, max_iter + 1):
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
        if abs(delta - 1.0) < tol:
            return h
    raise ArithmeticError("incomplete beta continued fraction did not converge")


def betainc_regularized(a: float, b: float, x: float, complement: float | None = None) -> float:
    """I_x(a, b) by continued fraction, using the symmetry relation for
    x above the mean so the fraction converges quickly.

    ``complement`` may supply ``1 - x`` computed without cancellation.
    """
    if not 0.0 <= x <= 1.0:
        raise ValueError("x must lie in [0, 1]")
    y = 1.0 - x if complement is None else complement
    if x == 0.0 or y == 0.0:
        return 0.0 if x == 0.0 else 1.0
    log_front = (math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
                 + a * math.log(x) + b * math.log(y))
    if x < (a + 1.0) / (a + b + 2.0):
        return math.exp(log_front) * _betacf(a, b, x) / a
    return 1.0 - math.exp(log_front) * _betacf(b, a, y) / b


def t_two_sided_p(t: float, df: float) -> float:
    """Two-sided tail probability of Student's t with ``df`` degrees of freedom."""
    if t == 0.0:
        return 1.0
    t2 = t * t
    return betainc_regularized(df / 2.0, 0.5, df / (df + t2), t2 / (df + t2))


def paired_t_test(a, b) -> tuple[float, float]:
    """(t, two-sided p) for the differences a - b with n - 1 degrees of freedom."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError("paired_t_test needs two 1-D sequences of equal length")
    n = a.size
    if n < 2:
        raise ValueError("paired_t_test needs at least two pairs")
    d = a - b
    sd = d.std(ddof=1)
    scale = max(np.abs(d).max(), np.finfo(float).tiny)
    if sd <= 4 * np.finfo(float).eps * scale:
        raise ZeroVarianceError("zero-variance differences: t statistic undefined")
    t = float(d.mean() / (sd / math.sqrt(n)))
    return t, t_two_sided_p(t, n - 1)


def pearson_r2(x, y) -> float:
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1 or x.size < 2:
        raise ValueError("pearson_r2 needs two 1-D sequences of equal length >= 2")
    xc = x - x.mean()
    yc = y - y.mean()
    sxx = float(xc @ xc)
    syy = float(yc @ yc)
    if sxx == 0.0 or syy == 0.0:
        raise ZeroVarianceError("pearson_r2 is undefined for a constant input")
    r = float(xc @ yc) / math.sqrt(sxx * syy)
    return min(r * r, 1.0)
