"""Shared summary statistics: normal-approximation CIs and the two-sample KS test."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import stats as sps

from .errors import EmptySamples

__all__ = ["SummaryStats", "mean_ci", "ks_two_sample", "ks_threshold", "zscore"]


@dataclass(frozen=True)
class SummaryStats:
    """Mean/CI summary of a sample, or a two-sample KS report."""

    mean: float
    sd: float
    stderr: float
    n: int
    level: float
    ci_low: float
    ci_high: float
    ks_stat: float | None = None
    ks_pvalue: float | None = None

    @property
    def half_width(self) -> float:
        return (self.ci_high - self.ci_low) / 2.0


def mean_ci(samples, level: float = 0.95) -> SummaryStats:
    """Normal-approximation confidence interval for the mean.

    Constant samples give sd = 0 and a zero-width interval. Heavy-tailed
    inputs are summarized as-is; callers needing stability diagnostics should
    compare half-sample estimates.
    """
    x = np.asarray(samples, dtype=np.float64).ravel()
    if x.size == 0:
        raise EmptySamples("mean_ci needs at least one sample")
    m = float(np.mean(x))
    sd = float(np.std(x, ddof=1)) if x.size > 1 else 0.0
    se = sd / np.sqrt(x.size)
    q = float(sps.norm.ppf(0.5 + level / 2.0))
    return SummaryStats(m, sd, se, int(x.size), level, m - q * se, m + q * se)


def ks_threshold(n: int, m: int, level: float = 0.01) -> float:
    """Asymptotic two-sample KS rejection threshold at the given level."""
    c = np.sqrt(-0.5 * np.log(level / 2.0))
    return float(c * np.sqrt((n + m) / (n * m)))


def ks_two_sample(a, b, level: float = 0.01) -> SummaryStats:
    """Classical two-sample KS statistic with asymptotic p-approximation.

    The mean/sd fields summarize the pooled sample; the decision quantities
    are ks_stat and ks_pvalue (reject when ks_stat > ks_threshold).
    """
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    if a.size == 0 or b.size == 0:
        raise EmptySamples("ks_two_sample needs two nonempty samples")
    res = sps.ks_2samp(a, b, method="asymp")
    pooled = np.concatenate([a, b])
    base = mean_ci(pooled, level=0.95)
    return SummaryStats(
        base.mean,
        base.sd,
        base.stderr,
        base.n,
        level,
        base.ci_low,
        base.ci_high,
        ks_stat=float(res.statistic),
        ks_pvalue=float(res.pvalue),
    )


def zscore(est_a: float, se_a: float, est_b: float, se_b: float) -> float:
    """z-score of the difference of two independent estimates.

    Zero difference with zero stderr counts as z = 0 (exact agreement).
    """
    diff = est_a - est_b
    se = float(np.hypot(se_a, se_b))
    if se == 0.0:
        return 0.0 if diff == 0.0 else np.inf
    return float(diff / se)
