"""Weight-sequence models and the moment functionals of their conditions.

A model describes the random nonincreasing sequence of nonnegative
multipliers attached to the children of every tree vertex. Four families are
supported: fixed sequences, two lognormal children, an i.i.d. block from a
named marginal, and a finite table of (sequence, probability) pairs. All
families generate almost surely finitely many positive weights so that tree
computations terminate; zero weights contribute nothing to any moment sum.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import EmptySamples, InvalidModel
from .stats import SummaryStats, mean_ci

__all__ = [
    "WeightModel",
    "ConditionReport",
    "sample",
    "sample_many",
    "moment",
    "log_moment",
    "log2_moment",
    "condition_report",
]

_FAMILIES = ("deterministic", "gaussian_binary", "iid_count", "tabulated")
_MARGINALS = ("uniform", "lognormal", "exponential")


@dataclass(frozen=True)
class WeightModel:
    """Generative description of the weight sequence.

    span declares the lattice: r > 1 means every positive weight is an
    integer power of r, r = 1 means nongeometric. Closed-form moment
    functionals are attached when the family admits them and are used by
    moment estimators with zero-width confidence intervals.
    """

    family: str
    params: dict = field(default_factory=dict)
    span: float = 1.0
    closed_form: bool = True

    # ------------------------------------------------------------------
    # constructors
    # ------------------------------------------------------------------

    @staticmethod
    def deterministic(weights, span: float = 1.0) -> "WeightModel":
        w = tuple(float(x) for x in weights)
        m = WeightModel("deterministic", {"weights": w}, span=span)
        m.validate()
        return m

    @staticmethod
    def gaussian_binary(mu: float, sigma2: float, span: float = 1.0) -> "WeightModel":
        m = WeightModel("gaussian_binary", {"mu": float(mu), "sigma2": float(sigma2)}, span=span)
        m.validate()
        return m

    @staticmethod
    def iid_count(count: int, marginal: str, marginal_params, envelope: float | None = None,
                  span: float = 1.0) -> "WeightModel":
        p = {
            "count": int(count),
            "marginal": marginal,
            "marginal_params": tuple(float(x) for x in marginal_params),
        }
        if envelope is not None:
            p["envelope"] = float(envelope)
        m = WeightModel("iid_count", p, span=span)
        m.validate()
        return m

    @staticmethod
    def tabulated(entries, span: float = 1.0) -> "WeightModel":
        norm = tuple((tuple(float(w) for w in seq), float(p)) for seq, p in entries)
        m = WeightModel("tabulated", {"entries": norm}, span=span)
        m.validate()
        return m

    def without_closed_form(self) -> "WeightModel":
        """Copy of the model whose moment estimates go through Monte Carlo."""
        return replace(self, closed_form=False)

    # ------------------------------------------------------------------
    # validation
    # ------------------------------------------------------------------

    def validate(self) -> None:
        if self.family not in _FAMILIES:
            raise InvalidModel(f"unknown family {self.family!r}")
        if not (self.span >= 1.0):
            raise InvalidModel("span must be >= 1")
        p = self.params
        if self.family == "deterministic":
            w = p["weights"]
            if any(x < 0 for x in w):
                raise InvalidModel("weights must be nonnegative")
            if any(w[i] < w[i + 1] for i in range(len(w) - 1)):
                raise InvalidModel("weights must be nonincreasing")
        elif self.family == "gaussian_binary":
            if not (p["sigma2"] > 0):
                raise InvalidModel("sigma2 must be positive")
        elif self.family == "iid_count":
            if p["count"] < 1:
                raise InvalidModel("count must be >= 1")
            if p["marginal"] not in _MARGINALS:
                raise InvalidModel(f"unknown marginal {p['marginal']!r}")
            mp = p["marginal_params"]
            if p["marginal"] == "uniform":
                if not (len(mp) == 2 and 0 <= mp[0] < mp[1]):
                    raise InvalidModel("uniform marginal needs 0 <= a < b")
            elif p["marginal"] == "lognormal":
                if not (len(mp) == 2 and mp[1] > 0):
                    raise InvalidModel("lognormal marginal needs (mean, sigma>0)")
            elif p["marginal"] == "exponential":
                if not (len(mp) == 1 and mp[0] > 0):
                    raise InvalidModel("exponential marginal needs rate > 0")
        elif self.family == "tabulated":
            entries = p["entries"]
            if not entries:
                raise InvalidModel("tabulated model needs at least one entry")
            total = sum(prob for _, prob in entries)
            if any(prob < 0 for _, prob in entries) or abs(total - 1.0) > 1e-12:
                raise InvalidModel("tabulated probabilities must be nonnegative and sum to 1")
            for seq, _ in entries:
                if any(x < 0 for x in seq):
                    raise InvalidModel("weights must be nonnegative")
                if any(seq[i] < seq[i + 1] for i in range(len(seq) - 1)):
                    raise InvalidModel("weight sequences must be nonincreasing")

    # ------------------------------------------------------------------
    # sampling
    # ------------------------------------------------------------------

    def sample(self, rng: np.random.Generator) -> np.ndarray:
        """One weight sequence, nonincreasing."""
        return self.sample_many(1, rng)[0]

    def sample_many(self, n: int, rng: np.random.Generator) -> np.ndarray:
        """(n, k_max) array of sequences, rows nonincreasing, padded with 0."""
        p = self.params
        if self.family == "deterministic":
            w = np.asarray(p["weights"], dtype=np.float64)
            return np.tile(w, (n, 1)) if w.size else np.zeros((n, 0))
        if self.family == "gaussian_binary":
            x = rng.normal(p["mu"], math.sqrt(p["sigma2"]), size=(n, 2))
            w = np.exp(-x)
            w.sort(axis=1)
            return w[:, ::-1]
        if self.family == "iid_count":
            w = self._marginal_draw((n, p["count"]), rng)
            w.sort(axis=1)
            return w[:, ::-1]
        entries = p["entries"]
        kmax = max(len(seq) for seq, _ in entries)
        table = np.zeros((len(entries), kmax))
        for i, (seq, _) in enumerate(entries):
            table[i, : len(seq)] = seq
        probs = np.array([prob for _, prob in entries])
        idx = rng.choice(len(entries), size=n, p=probs)
        return table[idx]

    def _marginal_draw(self, shape, rng):
        name = self.params["marginal"]
        mp = self.params["marginal_params"]
        if name == "uniform":
            return rng.uniform(mp[0], mp[1], size=shape)
        if name == "lognormal":
            return rng.lognormal(mp[0], math.sqrt(mp[1]), size=shape)
        return rng.exponential(1.0 / mp[0], size=shape)

    # ------------------------------------------------------------------
    # closed forms
    # ------------------------------------------------------------------

    def weight_sup(self) -> float | None:
        """Supremum of the weight support, None when unknown/unbounded."""
        p = self.params
        if self.family == "deterministic":
            return max(p["weights"], default=0.0)
        if self.family == "tabulated":
            return max((seq[0] for seq, _ in p["entries"] if seq), default=0.0)
        if self.family == "iid_count":
            if p["marginal"] == "uniform":
                return p["marginal_params"][1]
            return p.get("envelope")
        return None  # gaussian_binary: e^{-X} is unbounded

    def m(self, theta: float) -> float | None:
        """Closed-form E sum T_j^theta, None when unavailable."""
        if not self.closed_form:
            return None
        p = self.params
        if self.family == "deterministic":
            return float(sum(w**theta for w in p["weights"] if w > 0))
        if self.family == "gaussian_binary":
            return float(2.0 * math.exp(-theta * p["mu"] + theta**2 * p["sigma2"] / 2.0))
        if self.family == "tabulated":
            return float(
                sum(prob * sum(w**theta for w in seq if w > 0) for seq, prob in p["entries"])
            )
        n, name, mp = p["count"], p["marginal"], p["marginal_params"]
        if name == "uniform":
            a, b = mp
            return float(n * (b ** (theta + 1) - a ** (theta + 1)) / ((b - a) * (theta + 1)))
        if name == "lognormal":
            return float(n * math.exp(theta * mp[0] + theta**2 * mp[1] / 2.0))
        lam = mp[0]
        return float(n * math.gamma(theta + 1.0) * lam ** (-theta))

    def m_prime(self, theta: float) -> float | None:
        """Closed-form E sum T_j^theta log T_j (0 log 0 := 0)."""
        if not self.closed_form:
            return None
        p = self.params
        if self.family == "deterministic":
            return float(sum(w**theta * math.log(w) for w in p["weights"] if w > 0))
        if self.family == "gaussian_binary":
            # d/dtheta of 2 exp(-theta mu + theta^2 sigma2 / 2)
            return float((p["sigma2"] * theta - p["mu"]) * self.m(theta))
        if self.family == "tabulated":
            return float(
                sum(
                    prob * sum(w**theta * math.log(w) for w in seq if w > 0)
                    for seq, prob in p["entries"]
                )
            )
        n, name, mp = p["count"], p["marginal"], p["marginal_params"]
        if name == "uniform":
            a, b = mp
            s = theta + 1.0
            la = a**s * math.log(a) if a > 0 else 0.0
            return float(n * ((b**s * math.log(b) - la) / ((b - a) * s)
                              - (b**s - a**s) / ((b - a) * s * s)))
        if name == "lognormal":
            return float((mp[0] + theta * mp[1]) * self.m(theta))
        from scipy.special import digamma

        lam = mp[0]
        return float(self.m(theta) * (digamma(theta + 1.0) - math.log(lam)))

    def m_log2(self, theta: float) -> float | None:
        """Closed-form E sum T_j^theta log^2 T_j."""
        if not self.closed_form:
            return None
        p = self.params
        if self.family == "deterministic":
            return float(sum(w**theta * math.log(w) ** 2 for w in p["weights"] if w > 0))
        if self.family == "gaussian_binary":
            mu, s2 = p["mu"], p["sigma2"]
            return float(((mu - theta * s2) ** 2 + s2) * self.m(theta))
        if self.family == "tabulated":
            return float(
                sum(
                    prob * sum(w**theta * math.log(w) ** 2 for w in seq if w > 0)
                    for seq, prob in p["entries"]
                )
            )
        name, mp = p["marginal"], p["marginal_params"]
        if name == "lognormal":
            return float(((mp[0] + theta * mp[1]) ** 2 + mp[1]) * self.m(theta))
        if name == "exponential":
            from scipy.special import digamma, polygamma

            lam = mp[0]
            d = digamma(theta + 1.0) - math.log(lam)
            return float(self.m(theta) * (polygamma(1, theta + 1.0) + d * d))
        return None  # uniform: second derivative left to Monte Carlo

    def mean_positive_count(self) -> float | None:
        """Closed-form E sum 1{T_j > 0}."""
        p = self.params
        if self.family == "deterministic":
            return float(sum(1 for w in p["weights"] if w > 0))
        if self.family == "gaussian_binary":
            return 2.0
        if self.family == "iid_count":
            return float(p["count"])
        return float(
            sum(prob * sum(1 for w in seq if w > 0) for seq, prob in p["entries"])
        )

    # ------------------------------------------------------------------
    # serialization
    # ------------------------------------------------------------------

    def to_json(self) -> str:
        p = dict(self.params)
        if self.family == "deterministic":
            p["weights"] = list(p["weights"])
        elif self.family == "iid_count":
            p["marginal_params"] = list(p["marginal_params"])
        elif self.family == "tabulated":
            p["entries"] = [[list(seq), prob] for seq, prob in p["entries"]]
        return json.dumps({"family": self.family, "params": p, "span": self.span})

    @staticmethod
    def from_json(text) -> "WeightModel":
        obj = json.loads(text) if isinstance(text, (str, bytes)) else text
        if not isinstance(obj, dict):
            raise InvalidModel("model document must be a JSON object")
        extra = set(obj) - {"family", "params", "span"}
        if extra:
            raise InvalidModel(f"unknown model fields: {sorted(extra)}")
        family = obj.get("family")
        params = obj.get("params", {})
        span = float(obj.get("span", 1.0))
        if not isinstance(params, dict):
            raise InvalidModel("params must be an object")
        try:
            if family == "deterministic":
                _require_keys(params, {"weights"})
                return WeightModel.deterministic(params["weights"], span=span)
            if family == "gaussian_binary":
                _require_keys(params, {"mu", "sigma2"})
                return WeightModel.gaussian_binary(params["mu"], params["sigma2"], span=span)
            if family == "iid_count":
                _require_keys(params, {"count", "marginal", "marginal_params"}, {"envelope"})
                return WeightModel.iid_count(
                    params["count"],
                    params["marginal"],
                    params["marginal_params"],
                    envelope=params.get("envelope"),
                    span=span,
                )
            if family == "tabulated":
                _require_keys(params, {"entries"})
                return WeightModel.tabulated(params["entries"], span=span)
        except (KeyError, TypeError, ValueError) as exc:
            raise InvalidModel(f"malformed params for family {family!r}: {exc}") from exc
        raise InvalidModel(f"unknown family {family!r}")


def _require_keys(params: dict, required: set, optional: set = frozenset()):
    missing = required - set(params)
    extra = set(params) - required - optional
    if missing:
        raise InvalidModel(f"missing params: {sorted(missing)}")
    if extra:
        raise InvalidModel(f"unknown params: {sorted(extra)}")


# ---------------------------------------------------------------------------
# module-level operations
# ---------------------------------------------------------------------------


def sample(model: WeightModel, rng: np.random.Generator) -> np.ndarray:
    model.validate()
    return model.sample(rng)


def sample_many(model: WeightModel, n: int, rng: np.random.Generator) -> np.ndarray:
    model.validate()
    return model.sample_many(n, rng)


def _power_sums(w: np.ndarray, theta: float, weight_log_power: int = 0) -> np.ndarray:
    """Row sums of T^theta log^k T over positive entries, zeros contribute 0."""
    pos = w > 0.0
    terms = np.zeros_like(w)
    if pos.any():
        wp = w[pos]
        t = wp**theta
        if weight_log_power == 1:
            t = t * np.log(wp)
        elif weight_log_power == 2:
            t = t * np.log(wp) ** 2
        terms[pos] = t
    return terms.sum(axis=1)


def _mc_mean(model, rng, budget, row_fn, stability: bool = False):
    """Monte Carlo mean of a per-sequence functional, with optional
    half-sample stability flag for possibly heavy-tailed functionals."""
    if budget < 1:
        raise InvalidModel("budget must be >= 1")
    w = model.sample_many(int(budget), rng)
    vals = row_fn(w)
    res = mean_ci(vals)
    if not stability:
        return res, False
    half = mean_ci(vals[: max(1, len(vals) // 2)])
    joint = math.hypot(res.stderr, half.stderr)
    diverged = joint > 0 and abs(half.mean - res.mean) > 4.0 * joint
    return res, bool(diverged)


def _exact_stats(value: float) -> SummaryStats:
    return SummaryStats(float(value), 0.0, 0.0, 1, 0.95, float(value), float(value))


def moment(model: WeightModel, theta: float, budget: int, rng) -> SummaryStats:
    """E sum_j T_j^theta, closed form when declared (zero-width CI)."""
    if theta <= 0:
        raise InvalidModel("theta must be positive")
    model.validate()
    cf = model.m(theta)
    if cf is not None:
        return _exact_stats(cf)
    res, _ = _mc_mean(model, rng, budget, lambda w: _power_sums(w, theta))
    return res


def log_moment(model: WeightModel, alpha: float, budget: int, rng) -> SummaryStats:
    """E sum_j T_j^alpha log T_j with the 0 log 0 := 0 convention."""
    if alpha <= 0:
        raise InvalidModel("alpha must be positive")
    model.validate()
    cf = model.m_prime(alpha)
    if cf is not None:
        return _exact_stats(cf)
    res, _ = _mc_mean(model, rng, budget, lambda w: _power_sums(w, alpha, 1))
    return res


def log2_moment(model: WeightModel, alpha: float, budget: int, rng) -> SummaryStats:
    """E sum_j T_j^alpha log^2 T_j."""
    if alpha <= 0:
        raise InvalidModel("alpha must be positive")
    model.validate()
    cf = model.m_log2(alpha)
    if cf is not None:
        return _exact_stats(cf)
    res, _ = _mc_mean(model, rng, budget, lambda w: _power_sums(w, alpha, 2))
    return res


@dataclass(frozen=True)
class ConditionReport:
    """Estimates of every moment functional entering the standard conditions,
    plus the regular/boundary classification of the model at alpha.

    unstable lists fields whose running Monte Carlo estimate diverged between
    the half and full budget, the only certificate offered for the
    integrability conditions on heavy-tailed models.
    """

    alpha: float
    supercriticality: SummaryStats
    m_alpha: SummaryStats
    m_prime_alpha: SummaryStats
    log2_alpha: SummaryStats
    w1_log_w1: SummaryStats
    w1_log2_w1: SummaryStats
    xtilde_log_xtilde: SummaryStats
    classification: str  # "Regular" | "Boundary" | "Indeterminate"
    t1_ok: bool
    derivative_sign_violation: bool
    resolution: float
    unstable: tuple = ()


def _classify(m_prime: SummaryStats, exact: bool, resolution: float):
    violation = False
    if exact:
        if m_prime.mean == 0.0:
            cls = "Boundary"
        elif m_prime.mean < 0.0:
            cls = "Regular"
        else:
            cls = "Indeterminate"
            violation = True
        return cls, violation
    contains_zero = m_prime.ci_low <= 0.0 <= m_prime.ci_high
    if contains_zero and m_prime.half_width < resolution:
        return "Boundary", False
    if not contains_zero:
        if m_prime.mean < 0:
            return "Regular", False
        return "Indeterminate", True
    return "Indeterminate", False


def condition_report(model: WeightModel, alpha: float, budget: int, rng,
                     resolution: float = 1e-3) -> ConditionReport:
    """Estimate every condition functional and classify the model at alpha."""
    if alpha <= 0:
        raise InvalidModel("alpha must be positive")
    model.validate()

    cnt = model.mean_positive_count()
    if cnt is not None:
        sup = _exact_stats(cnt)
    else:
        sup, _ = _mc_mean(model, rng, budget, lambda w: (w > 0).sum(axis=1).astype(float))

    m_a = moment(model, alpha, budget, rng)
    m_p = log_moment(model, alpha, budget, rng)
    m_l2 = log2_moment(model, alpha, budget, rng)

    def _w1_fn(power):
        def fn(w):
            w1 = _power_sums(w, alpha)
            out = np.zeros_like(w1)
            pos = w1 > 0
            out[pos] = w1[pos] * np.log(w1[pos]) ** power
            return out
        return fn

    def _xt_fn(w):
        pos = w > 0
        terms = np.zeros_like(w)
        wp = w[pos]
        terms[pos] = wp**alpha * np.maximum(np.log(wp), 0.0)
        xt = terms.sum(axis=1)
        out = np.zeros_like(xt)
        p = xt > 0
        out[p] = xt[p] * np.log(xt[p])
        return out

    unstable = []
    w1l, d1 = _mc_mean(model, rng, budget, _w1_fn(1), stability=True)
    if d1:
        unstable.append("w1_log_w1")
    w1l2, d2 = _mc_mean(model, rng, budget, _w1_fn(2), stability=True)
    if d2:
        unstable.append("w1_log2_w1")
    xtl, d3 = _mc_mean(model, rng, budget, _xt_fn, stability=True)
    if d3:
        unstable.append("xtilde_log_xtilde")

    cls, violation = _classify(m_p, m_p.stderr == 0.0, resolution)
    return ConditionReport(
        alpha=float(alpha),
        supercriticality=sup,
        m_alpha=m_a,
        m_prime_alpha=m_p,
        log2_alpha=m_l2,
        w1_log_w1=w1l,
        w1_log2_w1=w1l2,
        xtilde_log_xtilde=xtl,
        classification=cls,
        t1_ok=bool(sup.mean > 1.0),
        derivative_sign_violation=violation,
        resolution=float(resolution),
        unstable=tuple(unstable),
    )
