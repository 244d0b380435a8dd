"""Characteristic exponent: the minimal positive root of m(theta) = 1."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidModel, NoRootInBracket, StochasticAmbiguity
from .weights import WeightModel, condition_report, _power_sums

__all__ = ["ExponentResult", "solve_alpha", "classify"]


@dataclass(frozen=True)
class ExponentResult:
    alpha: float
    ci_half_width: float
    bracket: tuple
    iterations: int
    classification: str
    m_at_alpha: float
    stderr_at_alpha: float


class _MomentCurve:
    """m(theta) - 1 as a fixed function of theta.

    Uses the model closed form when declared. Otherwise a single batch of
    weight sequences is drawn up front and reused for every theta (common
    random numbers), so the estimated curve is smooth and the bisection sees
    no sign flicker.
    """

    def __init__(self, model: WeightModel, budget: int, rng):
        self.exact = model.m(1.0) is not None
        if self.exact:
            self._m = model.m
        else:
            self._w = model.sample_many(int(budget), rng)

    def value(self, theta: float) -> float:
        return self._eval(theta)[0]

    def _eval(self, theta: float):
        if self.exact:
            return self._m(theta) - 1.0, 0.0
        sums = _power_sums(self._w, theta)
        m = float(sums.mean())
        se = float(sums.std(ddof=1) / np.sqrt(sums.size)) if sums.size > 1 else 0.0
        return m - 1.0, se

    def stderr(self, theta: float) -> float:
        return self._eval(theta)[1]


def solve_alpha(model: WeightModel, bracket, tol: float, budget: int, rng,
                scan_points: int = 64) -> ExponentResult:
    """Leftmost root of m(theta) = 1 inside the bracket.

    The bracket is scanned on a grid first so that the smallest sign change
    is refined, which guards the minimality required of the exponent (within
    the bracket only; global minimality is the caller's responsibility).
    """
    lo, hi = float(bracket[0]), float(bracket[1])
    if not (0.0 < lo < hi):
        raise InvalidModel("bracket must satisfy 0 < lo < hi")
    if not (tol > 0):
        raise InvalidModel("tol must be positive")
    model.validate()

    curve = _MomentCurve(model, budget, rng)
    grid = np.linspace(lo, hi, max(2, int(scan_points)))
    vals = np.array([curve.value(t) for t in grid])
    iterations = len(grid)

    if not curve.exact:
        ses = np.array([curve.stderr(t) for t in grid])
        certified_pos = (vals > 3.0 * ses).any()
        certified_neg = (vals < -3.0 * ses).any()
        if not (certified_pos and certified_neg):
            raise StochasticAmbiguity(
                "Monte Carlo noise prevents certifying a sign change on the scan grid"
            )

    # leftmost sign change (an exact zero on the grid is itself the root)
    root_lo = root_hi = None
    for i in range(len(grid) - 1):
        if vals[i] == 0.0:
            root_lo = root_hi = grid[i]
            break
        if vals[i] * vals[i + 1] < 0.0:
            root_lo, root_hi = grid[i], grid[i + 1]
            break
    else:
        if vals[-1] == 0.0:
            root_lo = root_hi = grid[-1]
    if root_lo is None:
        raise NoRootInBracket(
            f"m(theta) - 1 keeps one sign on the scan grid over {bracket}"
        )

    f_lo = curve.value(root_lo)
    while root_hi - root_lo > tol:
        mid = 0.5 * (root_lo + root_hi)
        f_mid = curve.value(mid)
        iterations += 1
        if f_mid == 0.0:
            root_lo = root_hi = mid
            break
        if f_lo * f_mid < 0.0:
            root_hi = mid
        else:
            root_lo, f_lo = mid, f_mid
    alpha = 0.5 * (root_lo + root_hi)

    m_res = curve.value(alpha)
    se = curve.stderr(alpha)
    if curve.exact:
        half_width = 0.0
    else:
        # delta method: slope of the estimated curve around the root
        h = max(tol, 1e-6)
        slope = (curve.value(alpha + h) - curve.value(alpha - h)) / (2.0 * h)
        half_width = 1.96 * se / abs(slope) if slope != 0.0 else np.inf
        if abs(m_res) > 3.0 * se + tol:
            raise StochasticAmbiguity(
                f"|m(alpha)-1| = {abs(m_res):.3g} not certified within 3 stderr"
            )

    cls = classify(model, alpha, budget, rng)
    return ExponentResult(
        alpha=float(alpha),
        ci_half_width=float(half_width),
        bracket=(lo, hi),
        iterations=iterations,
        classification=cls,
        m_at_alpha=float(m_res + 1.0),
        stderr_at_alpha=float(se),
    )


def classify(model: WeightModel, alpha: float, budget: int, rng,
             resolution: float = 1e-3) -> str:
    """Regular / Boundary / Indeterminate at the given exponent."""
    report = condition_report(model, alpha, budget, rng, resolution=resolution)
    return report.classification
