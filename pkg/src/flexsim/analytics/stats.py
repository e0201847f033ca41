"""Correlation, two-sample KS and the count/duration fits used for channel data.

All p-values are asymptotic approximations.
"""

from __future__ import annotations

import math
import re
import statistics
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import optimize, stats


class AnalysisError(ValueError):
    pass


@dataclass(frozen=True)
class Correlation:
    r: float
    p: float
    n: int
    method: str


@dataclass(frozen=True)
class FitResult:
    family: str  # "poisson" | "exponential"
    parameter: float  # lambda per interval, or mean duration
    n: int
    outliers_removed: int = 0
    goodness: Optional[float] = None  # chi-square (poisson) or KS D (exponential)
    p_value: Optional[float] = None
    degenerate: bool = False
    median: Optional[float] = None

    def __post_init__(self):
        if self.n > 0 and not self.degenerate and not self.parameter > 0:
            raise AnalysisError("fitted parameter must be positive")


def _present(v) -> bool:
    return v is not None and not (isinstance(v, float) and math.isnan(v))


def _pearson(x: np.ndarray, y: np.ndarray) -> float:
    dx = x - x.mean()
    dy = y - y.mean()
    sxx = float(np.dot(dx, dx))
    syy = float(np.dot(dy, dy))
    if sxx == 0.0 or syy == 0.0:
        raise AnalysisError("correlation undefined: zero variance")
    r = float(np.dot(dx, dy)) / math.sqrt(sxx * syy)
    return max(-1.0, min(1.0, r))


def correlate(x, y, method: str = "pearson") -> Correlation:
    """Pearson or Spearman correlation with pairwise deletion of absent values.

    The p-value uses the t approximation with n - 2 degrees of freedom.
    """
    if len(x) != len(y):
        raise AnalysisError(f"length mismatch: {len(x)} vs {len(y)}")
    if method not in ("pearson", "spearman"):
        raise AnalysisError(f"unknown method {method!r}")
    pairs = [(float(a), float(b)) for a, b in zip(x, y) if _present(a) and _present(b)]
    n = len(pairs)
    if n < 3:
        raise AnalysisError(f"need at least 3 complete pairs, got {n}")
    xs = np.array([a for a, _ in pairs])
    ys = np.array([b for _, b in pairs])
    if method == "spearman":
        xs, ys = stats.rankdata(xs), stats.rankdata(ys)
    r = _pearson(xs, ys)
    if abs(r) == 1.0:
        p = 0.0
    else:
        t = r * math.sqrt((n - 2) / (1.0 - r * r))
        p = float(2.0 * stats.t.sf(abs(t), n - 2))
    return Correlation(r, p, n, method)


def ks_two_sample(a, b) -> tuple:
    """(D, p): sup |F_a - F_b| over the pooled points, asymptotic p."""
    a = np.sort(np.asarray(a, dtype=float))
    b = np.sort(np.asarray(b, dtype=float))
    if a.size == 0 or b.size == 0:
        raise AnalysisError("both samples must be non-empty")
    pooled = np.concatenate([a, b])
    fa = np.searchsorted(a, pooled, side="right") / a.size
    fb = np.searchsorted(b, pooled, side="right") / b.size
    d = float(np.max(np.abs(fa - fb)))
    en = math.sqrt(a.size * b.size / (a.size + b.size))
    p = float(stats.kstwobign.sf(en * d))
    return d, min(1.0, p)


# --------------------------------------------------------------------------
# fits


def fit_poisson(counts) -> FitResult:
    """Poisson rate as the sample mean, with a pooled chi-square test."""
    c = np.asarray(list(counts))
    if c.size == 0:
        raise AnalysisError("no counts")
    if np.any(c < 0) or np.any(c != np.round(c)):
        raise AnalysisError("counts must be non-negative integers")
    c = c.astype(np.int64)
    lam = float(c.mean())
    if lam == 0.0:
        return FitResult("poisson", 0.0, int(c.size), degenerate=True)
    # consecutive bins, each with expected count >= 5; the last is an open tail
    n = c.size
    bins = []
    lo, acc, k = 0, 0.0, 0
    while True:
        acc += n * stats.poisson.pmf(k, lam)
        if n * stats.poisson.sf(k, lam) < 5.0:
            bins.append((lo, None))
            break
        if acc >= 5.0:
            bins.append((lo, k))
            lo, acc = k + 1, 0.0
        k += 1
    obs, expd = [], []
    for lo, hi in bins:
        if hi is None:
            obs.append(int((c >= lo).sum()))
            expd.append(n * stats.poisson.sf(lo - 1, lam))
        else:
            obs.append(int(((c >= lo) & (c <= hi)).sum()))
            expd.append(n * (stats.poisson.cdf(hi, lam) - stats.poisson.cdf(lo - 1, lam)))
    dof = len(obs) - 2
    if dof < 1:
        return FitResult("poisson", lam, int(c.size))
    chi2 = float(sum((o - e) ** 2 / e for o, e in zip(obs, expd)))
    return FitResult("poisson", lam, int(c.size), goodness=chi2, p_value=float(stats.chi2.sf(chi2, dof)))


_IQR = re.compile(r"^iqr\(\s*([0-9.]+)\s*\)$")


def parse_outlier_rule(rule: str) -> Optional[float]:
    """``"none"`` -> None; ``"iqr(k)"`` -> k."""
    rule = rule.strip().lower()
    if rule == "none":
        return None
    m = _IQR.match(rule)
    if not m:
        raise AnalysisError(f"bad outlier rule {rule!r}; use none or iqr(k)")
    return float(m.group(1))


def _truncated_mean(x: np.ndarray, cut: float) -> float:
    """MLE of an exponential mean from a sample right-truncated at ``cut``."""
    m = float(x.mean())
    if m >= 0.49 * cut:
        return m

    def score(tau):
        z = cut / tau
        return m + cut / math.expm1(z) - tau

    return float(optimize.brentq(score, m, 100.0 * cut))


def fit_exponential(durations, outlier_rule: str = "iqr(3)") -> FitResult:
    """Exponential mean duration after optional upper-fence outlier removal.

    With ``iqr(k)`` values above Q3 + k*IQR are dropped. When that drops
    anything, the mean is the truncated-sample maximum-likelihood estimate
    so the fence itself does not bias the fit low.
    """
    x = np.asarray(list(durations), dtype=float)
    if x.size == 0:
        raise AnalysisError("no durations")
    if np.any(x <= 0):
        raise AnalysisError("durations must be positive")
    k = parse_outlier_rule(outlier_rule)
    removed = 0
    cut = None
    if k is not None:
        q1, q3 = np.percentile(x, [25, 75])
        fence = q3 + k * (q3 - q1)
        keep = x <= fence
        removed = int((~keep).sum())
        x = x[keep]
        if removed:
            cut = fence
    if x.size == 0:
        raise AnalysisError("all durations removed as outliers")
    mean = _truncated_mean(x, cut) if cut is not None else float(x.mean())
    d = float(stats.kstest(x, "expon", args=(0.0, mean)).statistic)
    return FitResult("exponential", mean, int(x.size), removed, goodness=d, median=float(np.median(x)))


# --------------------------------------------------------------------------


def weekend_weekday_ratio(days) -> tuple:
    """(mean_ratio, median_ratio) of weekend over weekday daily energy, minus 1.

    ``days`` is an iterable of (day_of_week, kwh) with Monday = 0.
    """
    weekend, weekday = [], []
    for dow, kwh in days:
        if not 0 <= int(dow) <= 6:
            raise AnalysisError(f"day of week out of range: {dow}")
        (weekend if int(dow) >= 5 else weekday).append(float(kwh))
    if not weekend or not weekday:
        raise AnalysisError("need at least one weekend and one weekday value")
    wd_mean, wd_median = statistics.fmean(weekday), statistics.median(weekday)
    if wd_mean == 0.0 or wd_median == 0.0:
        raise AnalysisError("weekday statistic is zero")
    return (statistics.fmean(weekend) / wd_mean - 1.0, statistics.median(weekend) / wd_median - 1.0)
