"""Student-t significance tests with a self-contained CDF.

The t CDF is computed through the regularized incomplete beta function so the
core package does not depend on a statistics library.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

_BETACF_MAX_ITER = 300
_BETACF_EPS = 3e-15
_TINY = 1e-300


def _betacf(a: float, b: float, x: float) -> float:
    # Continued fraction for the incomplete beta function, evaluated with the
    # modified Lentz algorithm; converges fast for x < (a+1)/(a+b+2).
    qab = a + b
    qap = a + 1.0
    qam = a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < _TINY:
        d = _TINY
    d = 1.0 / d
    h = d
    for m in range(1, _BETACF_MAX_ITER + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < _TINY:
            d = _TINY
        c = 1.0 + aa / c
        if abs(c) < _TINY:
            c = _TINY
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < _TINY:
            d = _TINY
        c = 1.0 + aa / c
        if abs(c) < _TINY:
            c = _TINY
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _BETACF_EPS:
            return h
    raise RuntimeError(f"incomplete beta continued fraction did not converge (a={a}, b={b}, x={x})")


def betainc_regularized(a: float, b: float, x: float) -> float:
    """Regularized incomplete beta function I_x(a, b) for a, b > 0 and x in [0, 1]."""
    if a <= 0 or b <= 0:
        raise ValueError("shape parameters must be positive")
    if not 0.0 <= x <= 1.0:
        raise ValueError(f"x must lie in [0, 1], got {x}")
    if x == 0.0:
        return 0.0
    if x == 1.0:
        return 1.0
    ln_front = (
        math.lgamma(a + b)
        - math.lgamma(a)
        - math.lgamma(b)
        + a * math.log(x)
        + b * math.log1p(-x)
    )
    front = math.exp(ln_front)
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(a, b, x) / a
    return 1.0 - front * _betacf(b, a, 1.0 - x) / b


def student_t_cdf(t: float, df: float) -> float:
    """CDF of the Student t distribution with ``df`` degrees of freedom."""
    if df <= 0:
        raise ValueError("degrees of freedom must be positive")
    if math.isnan(t):
        return math.nan
    if math.isinf(t):
        return 1.0 if t > 0 else 0.0
    x = df / (df + t * t)
    tail = 0.5 * betainc_regularized(df / 2.0, 0.5, x)
    return 1.0 - tail if t >= 0 else tail


def _two_sided_p(t: float, df: float) -> float:
    return min(1.0, 2.0 * (1.0 - student_t_cdf(abs(t), df)))


@dataclass(frozen=True)
class TTestResult:
    """Outcome of a t-test: statistic, two-sided p, degrees of freedom."""

    t: float
    p: float
    df: float
    degenerate: bool = False


def _mean(xs: list[float]) -> float:
    return sum(xs) / len(xs)


def _sample_var(xs: list[float], mean: float) -> float:
    return sum((x - mean) ** 2 for x in xs) / (len(xs) - 1)


def paired_t_test(a: list[float], b: list[float]) -> TTestResult:
    """Paired t-test on per-item differences d = b - a.

    All-zero differences are a degenerate case reported as t=0, p=1.
    """
    if len(a) != len(b):
        raise ValueError(f"paired samples differ in length ({len(a)} vs {len(b)})")
    n = len(a)
    if n < 2:
        raise ValueError("paired t-test needs at least 2 pairs")
    d = [bi - ai for ai, bi in zip(a, b)]
    df = float(n - 1)
    if all(di == 0 for di in d):
        return TTestResult(t=0.0, p=1.0, df=df, degenerate=True)
    # t = sum(d) / sqrt((n*sum(d^2) - sum(d)^2) / (n-1)); algebraically equal to
    # mean/(sd/sqrt(n)) and exact in floating point for integer-valued d, which
    # the 0/1 indicator vectors compared across modes always are
    s = math.fsum(d)
    q = math.fsum(di * di for di in d)
    scatter = n * q - s * s
    if scatter <= 0.0:
        # constant nonzero differences: the statistic diverges
        t = math.inf if s > 0 else -math.inf
        return TTestResult(t=t, p=0.0, df=df)
    t = s / math.sqrt(scatter / (n - 1))
    return TTestResult(t=t, p=_two_sided_p(t, df), df=df)


def unpaired_t_test(a: list[float], b: list[float]) -> TTestResult:
    """Welch two-sample t-test (unequal variances, Welch-Satterthwaite df)."""
    na, nb = len(a), len(b)
    if na < 2 or nb < 2:
        raise ValueError("unpaired t-test needs at least 2 observations per sample")
    mean_a, mean_b = _mean(a), _mean(b)
    var_a = _sample_var(a, mean_a)
    var_b = _sample_var(b, mean_b)
    se2 = var_a / na + var_b / nb
    if se2 == 0.0:
        if mean_a == mean_b:
            return TTestResult(t=0.0, p=1.0, df=float(na + nb - 2), degenerate=True)
        raise ValueError("both samples are constant with unequal means; t is undefined")
    t = (mean_a - mean_b) / math.sqrt(se2)
    df = se2 * se2 / ((var_a / na) ** 2 / (na - 1) + (var_b / nb) ** 2 / (nb - 1))
    return TTestResult(t=t, p=_two_sided_p(t, df), df=df)
