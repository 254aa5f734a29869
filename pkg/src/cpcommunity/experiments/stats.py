"""Goodness-of-fit and summary statistics for campaign outputs."""

from dataclasses import dataclass, asdict
import math

import numpy as np
from scipy import stats as sps

KS_TRUNCATION = 1e-8


def kolmogorov_sf(x):
    """P(K > x) for the Kolmogorov distribution.

    Uses ``2 sum_{k>=1} (-1)^{k-1} exp(-2 k^2 x^2)`` for x >= 1 and the Jacobi
    theta form ``1 - sqrt(2 pi)/x sum_{k>=1} exp(-(2k-1)^2 pi^2 / (8 x^2))``
    below; each series stops at the first term under 1e-8.
    """
    if x <= 0:
        return 1.0
    if x >= 1.0:
        s, k = 0.0, 1
        while True:
            term = math.exp(-2.0 * k * k * x * x)
            s += term if k % 2 else -term
            if term < KS_TRUNCATION:
                break
            k += 1
        return min(max(2.0 * s, 0.0), 1.0)
    s, k = 0.0, 1
    c = math.pi ** 2 / (8.0 * x * x)
    while True:
        term = math.exp(-(2 * k - 1) ** 2 * c)
        s += term
        if term < KS_TRUNCATION:
            break
        k += 1
    return min(max(1.0 - math.sqrt(2.0 * math.pi) / x * s, 0.0), 1.0)


def ks_test(samples, cdf):
    """One-sample KS test of sorted ``samples`` against ``cdf``.

    Returns ``(D, p)``; the p-value applies Stephens' finite-sample correction
    ``x = D (sqrt(m) + 0.12 + 0.11 / sqrt(m))`` to the asymptotic law.
    """
    x = np.asarray(samples, dtype=float)
    m = len(x)
    if m < 8:
        raise ValueError(f"ks_test needs at least 8 samples, got {m}")
    if np.any(np.isnan(x)):
        raise ValueError("samples contain NaN")
    if np.any(np.diff(x) < 0):
        raise ValueError("samples must be sorted")
    F = np.asarray([cdf(v) for v in x], dtype=float)
    i = np.arange(1, m + 1)
    D = float(max((i / m - F).max(), (F - (i - 1) / m).max()))
    sq = math.sqrt(m)
    return D, kolmogorov_sf(D * (sq + 0.12 + 0.11 / sq))


def exp_cdf(rate, shift=0.0):
    return lambda x: -math.expm1(-rate * (x - shift)) if x > shift else 0.0


@dataclass(frozen=True)
class FitReport:
    n: int
    mean: float
    median: float
    ks_D: float
    ks_p: float
    shift: float
    ks_shift_D: float
    ks_shift_p: float
    better: str

    def as_dict(self):
        return asdict(self)


def exp_fit_report(values, rate):
    """KS of ``values`` against Exp(rate), raw and after a moment-fitted location shift.

    The shift is ``max(mean - 1/rate, 0)``.  Its p-value ignores that the shift was
    estimated from the same data, so it overstates the fit.
    ``better`` names the variant with the larger p-value.
    """
    x = np.sort(np.asarray(values, dtype=float))
    if len(x) < 8:
        return None
    D, p = ks_test(x, exp_cdf(rate))
    shift = max(float(x.mean()) - 1.0 / rate, 0.0)
    Ds, ps = ks_test(x, exp_cdf(rate, shift))
    return FitReport(len(x), float(x.mean()), float(np.median(x)), D, p, shift, Ds, ps,
                     "raw" if p >= ps else "shifted")


@dataclass(frozen=True)
class GeometricFit:
    n: int
    p_hat: float | None
    se: float | None
    zeros_excluded: int
    empty: bool

    def as_dict(self):
        return asdict(self)


def geometric_fit(counts):
    """MLE of a Geometric law on {1, 2, ...}: p = 1/mean, SE = sqrt(p^2 (1-p) / n).

    Zero counts (a crossing with no qualifying attempt) are excluded and counted.
    """
    c = np.asarray([x for x in counts if x is not None], dtype=float)
    zeros = int((c == 0).sum())
    c = c[c >= 1]
    if len(c) == 0:
        return GeometricFit(0, None, None, zeros, True)
    p = 1.0 / c.mean()
    return GeometricFit(len(c), p, math.sqrt(p * p * (1.0 - p) / len(c)), zeros, False)


def binomial_se(k, n):
    if n == 0:
        return float("nan")
    q = k / n
    return math.sqrt(q * (1.0 - q) / n)


def ks_2samp(x, y):
    """Two-sample KS (scipy); returns (D, p)."""
    r = sps.ks_2samp(np.asarray(x, dtype=float), np.asarray(y, dtype=float))
    return float(r.statistic), float(r.pvalue)
