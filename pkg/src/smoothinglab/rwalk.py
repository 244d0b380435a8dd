"""The size-biased random walk associated with a weight model, its first
passage machinery, and the harmonic functions of the walk killed on the
nonpositive halfline.

Position convention: the walk lives on the log scale, starting from
-log t when tree quantities at argument t are translated. Stopping times:
tau(a) is the first weak descent to (-inf, a], sigma(b) the first strict
ascent above b.

The occupation-count function counts visits of the walk started at x to
(0, x] strictly before the first return to a level >= x. On nonlattice walks
this is the classical renewal-function solution; on lattice walks the weak
ascent convention normalizes the ±1 walk to H_hat(x) = x, matching the
ladder-height function exactly there.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .brw import first_passage_line, grow_forest, line_power_sum
from .errors import InvalidModel, NoEnvelope, NotNormalized
from .stats import SummaryStats, mean_ci, zscore
from .weights import WeightModel

__all__ = [
    "IncrementLaw",
    "WalkPath",
    "WalkEstimate",
    "HarmonicHandle",
    "PairedReport",
    "make_increment_law",
    "simulate_until",
    "tanaka_H_hat",
    "H_ladder",
    "tabulate_H",
    "identity_handle",
    "verify_harmonic",
    "verify_stopped_harmonic",
    "overshoot_stats",
    "limit_formula",
    "many_to_one_verify",
    "many_to_one_stopped_verify",
]

DEFAULT_STEP_CAP = 1_000_000


@dataclass(frozen=True)
class IncrementLaw:
    """Law of one walk increment.

    kind "discrete": atoms with probabilities; "normal": exact tilted normal;
    "rejection": sampled by rejection against an untilted weight marginal.
    """

    kind: str
    atoms: np.ndarray | None = None
    probs: np.ndarray | None = None
    loc: float = 0.0
    scale: float = 1.0
    model: WeightModel | None = None
    alpha: float | None = None
    envelope: float | None = None
    source: str = "standalone"

    # -- constructors -----------------------------------------------------

    @staticmethod
    def discrete(atoms, probs, source="standalone") -> "IncrementLaw":
        atoms = np.asarray(atoms, dtype=np.float64)
        probs = np.asarray(probs, dtype=np.float64)
        order = np.argsort(atoms)
        return IncrementLaw("discrete", atoms=atoms[order], probs=probs[order], source=source)

    @staticmethod
    def pm1() -> "IncrementLaw":
        return IncrementLaw.discrete([-1.0, 1.0], [0.5, 0.5], source="pm1")

    @staticmethod
    def centered_normal(variance: float) -> "IncrementLaw":
        return IncrementLaw("normal", loc=0.0, scale=math.sqrt(variance), source="centered-normal")

    @staticmethod
    def normal(mean: float, variance: float, source="standalone") -> "IncrementLaw":
        return IncrementLaw("normal", loc=float(mean), scale=math.sqrt(variance), source=source)

    # -- sampling ----------------------------------------------------------

    def cdf_table(self) -> np.ndarray:
        c = np.cumsum(self.probs)
        c[-1] = 1.0
        return c

    def draw(self, rng: np.random.Generator, size) -> np.ndarray:
        """Vectorized exact sampling, any kind."""
        if self.kind == "normal":
            return rng.normal(self.loc, self.scale, size=size)
        if self.kind == "discrete":
            u = rng.random(size)
            return self.atoms[np.searchsorted(self.cdf_table(), u, side="right")]
        return self._draw_rejection(rng, size)

    def _draw_rejection(self, rng, size):
        n = int(np.prod(size)) if not np.isscalar(size) else int(size)
        out = np.empty(n)
        filled = 0
        cap = self.envelope**self.alpha
        while filled < n:
            k = max(1024, 2 * (n - filled))
            w = self.model._marginal_draw(k, rng)
            acc = w[rng.random(k) * cap <= w**self.alpha]
            take = min(acc.size, n - filled)
            out[filled : filled + take] = -np.log(acc[:take])
            filled += take
        return out.reshape(size) if not np.isscalar(size) else out

    # -- moments -----------------------------------------------------------

    def mean(self) -> float | None:
        if self.kind == "discrete":
            return float(np.sum(self.atoms * self.probs))
        if self.kind == "normal":
            return self.loc
        return None

    def variance(self) -> float | None:
        if self.kind == "discrete":
            m = self.mean()
            return float(np.sum(self.probs * (self.atoms - m) ** 2))
        if self.kind == "normal":
            return self.scale**2
        return None

    def _kernel_args(self):
        if self.kind == "normal":
            return kernels.KIND_NORMAL, self.loc, self.scale, None, None
        if self.kind == "discrete":
            return kernels.KIND_DISCRETE, 0.0, 0.0, self.atoms, self.cdf_table()
        return None


def make_increment_law(model: WeightModel, alpha: float, tol: float = 1e-9) -> IncrementLaw:
    """Size-biased increment law: P(S_1 in dx) = E sum_j T_j^alpha 1{-log T_j in dx}.

    Requires m(alpha) = 1 within tol. Deterministic and tabulated models give
    exact discrete atom laws (duplicate atoms merged); the two-lognormal
    family tilts to an exact normal; the i.i.d. block family is sampled by
    rejection with acceptance weight (T/T_sup)^alpha.
    """
    model.validate()
    m = model.m(alpha)
    if m is None:
        raise NotNormalized(
            "model has no closed-form m; attach one or verify normalization externally"
        )
    if abs(m - 1.0) > tol:
        raise NotNormalized(f"m(alpha) = {m:.12g} differs from 1 beyond tol {tol}")

    fam = model.family
    if fam == "deterministic":
        pairs = {}
        for w in model.params["weights"]:
            if w > 0:
                x = -math.log(w)
                pairs[x] = pairs.get(x, 0.0) + w**alpha
        return IncrementLaw.discrete(list(pairs), list(pairs.values()), source="model")
    if fam == "tabulated":
        pairs = {}
        for seq, p in model.params["entries"]:
            for w in seq:
                if w > 0:
                    x = -math.log(w)
                    pairs[x] = pairs.get(x, 0.0) + p * w**alpha
        return IncrementLaw.discrete(list(pairs), list(pairs.values()), source="model")
    if fam == "gaussian_binary":
        mu, s2 = model.params["mu"], model.params["sigma2"]
        return IncrementLaw.normal(mu - alpha * s2, s2, source="model")
    sup = model.weight_sup()
    if sup is None or not np.isfinite(sup):
        raise NoEnvelope(
            "rejection sampling needs a finite weight supremum; set the model envelope"
        )
    return IncrementLaw("rejection", model=model, alpha=float(alpha),
                        envelope=float(sup), source="model")


# ---------------------------------------------------------------------------
# paths and estimates
# ---------------------------------------------------------------------------


@dataclass
class WalkPath:
    start: float
    positions: np.ndarray  # S_0 .. S_N
    stop_reason: str  # "tau" | "sigma" | "cap"
    lower: float
    upper: float


@dataclass(frozen=True)
class WalkEstimate:
    """Monte Carlo walk functional with capped-replicate accounting.

    Capped paths are excluded from the estimate; flagged marks runs whose
    capped fraction exceeds 1%, after which the estimate should be treated
    as biased."""

    stats: SummaryStats
    capped_fraction: float

    @property
    def flagged(self) -> bool:
        return self.capped_fraction > 0.01


def simulate_until(law: IncrementLaw, x: float, lower: float, upper: float,
                   step_cap: int = DEFAULT_STEP_CAP, rng=None, chunk: int = 1024) -> WalkPath:
    """One path recorded until tau(lower), sigma(upper), or the step cap."""
    rng = np.random.default_rng(rng) if not isinstance(rng, np.random.Generator) else rng
    pos = [np.array([x])]
    if x <= lower:
        return WalkPath(x, np.array([x]), "tau", lower, upper)
    if x > upper:
        return WalkPath(x, np.array([x]), "sigma", lower, upper)
    s = x
    n = 0
    while n < step_cap:
        k = min(chunk, step_cap - n)
        seg = s + np.cumsum(law.draw(rng, k))
        hit = (seg <= lower) | (seg > upper)
        if hit.any():
            j = int(np.argmax(hit))
            pos.append(seg[: j + 1])
            reason = "tau" if seg[j] <= lower else "sigma"
            return WalkPath(x, np.concatenate(pos), reason, lower, upper)
        pos.append(seg)
        s = seg[-1]
        n += k
    return WalkPath(x, np.concatenate(pos), "cap", lower, upper)


def _tanaka_generic(rng, law, x, reps, cap):
    occ = np.zeros(reps)
    capped = np.zeros(reps, dtype=bool)
    if x <= 0:
        return occ, capped
    occ += 1.0
    pos = np.full(reps, float(x))
    active = np.arange(reps)
    n = 0
    while active.size and n < cap:
        pos[active] += law.draw(rng, active.size)
        n += 1
        p = pos[active]
        stop = p >= x
        inside = (~stop) & (p > 0.0)
        occ[active[inside]] += 1.0
        active = active[~stop]
    capped[active] = True
    return occ, capped


def tanaka_H_hat(law: IncrementLaw, x: float, reps: int,
                 step_cap: int = DEFAULT_STEP_CAP, rng=None) -> WalkEstimate:
    """Occupation-count harmonic function estimate at x (0 for x <= 0)."""
    rng = np.random.default_rng(rng) if not isinstance(rng, np.random.Generator) else rng
    if x <= 0:
        return WalkEstimate(mean_ci([0.0, 0.0]), 0.0)
    ka = law._kernel_args()
    if ka is None:
        occ, capped = _tanaka_generic(rng, law, x, reps, step_cap)
    else:
        occ, capped = kernels.tanaka_occupation(rng, *ka, x, reps, step_cap)
    done = ~capped
    if not done.any():
        raise InvalidModel("all tanaka replicates hit the step cap")
    return WalkEstimate(mean_ci(occ[done]), float(capped.mean()))


def _walk_exit(law, rng, x, lower, upper, reps, cap):
    ka = law._kernel_args()
    if ka is None:
        return kernels.walk_exit_generic(rng, law.draw, x, lower, upper, reps, cap)
    return kernels.walk_exit(rng, *ka, x, lower, upper, reps, cap)


def H_ladder(law: IncrementLaw, x: float, reps: int,
             step_cap: int = DEFAULT_STEP_CAP, rng=None) -> WalkEstimate:
    """H(x) = x - E_x S_tau, the ladder-height harmonic function (0 for x <= 0)."""
    rng = np.random.default_rng(rng) if not isinstance(rng, np.random.Generator) else rng
    if x <= 0:
        return WalkEstimate(mean_ci([0.0, 0.0]), 0.0)
    final, _, reason = _walk_exit(law, rng, x, 0.0, np.inf, reps, step_cap)
    done = reason == kernels.REASON_LOWER
    if not done.any():
        raise InvalidModel("all ladder replicates hit the step cap")
    s_tau = mean_ci(final[done])
    st = SummaryStats(x - s_tau.mean, s_tau.sd, s_tau.stderr, s_tau.n, s_tau.level,
                      x - s_tau.ci_high, x - s_tau.ci_low)
    return WalkEstimate(st, float(1.0 - done.mean()))


@dataclass
class HarmonicHandle:
    """Tabulated harmonic function: 0 on (-inf, 0], monotone interpolation on
    the table, unit-slope linear extension above it (growth bound)."""

    xs: np.ndarray
    values: np.ndarray

    def __call__(self, x):
        x = np.asarray(x, dtype=np.float64)
        out = np.interp(x, self.xs, self.values)
        out = np.where(x > self.xs[-1], self.values[-1] + (x - self.xs[-1]), out)
        return np.where(x <= 0.0, 0.0, out)


def tabulate_H(law: IncrementLaw, xs, reps: int, step_cap: int = DEFAULT_STEP_CAP,
               rng=None) -> HarmonicHandle:
    """Monte Carlo table of H on the grid xs (made nondecreasing)."""
    rng = np.random.default_rng(rng) if not isinstance(rng, np.random.Generator) else rng
    xs = np.asarray(xs, dtype=np.float64)
    vals = np.array([H_ladder(law, float(x), reps, step_cap, rng).stats.mean for x in xs])
    vals = np.maximum.accumulate(vals)  # H is nondecreasing; smooth MC noise
    return HarmonicHandle(np.concatenate([[0.0], xs]), np.concatenate([[0.0], vals]))


def identity_handle() -> HarmonicHandle:
    """Exact handle H(x) = x 1{x > 0} (skip-free-down lattice walks)."""
    return HarmonicHandle(np.array([0.0, 1.0]), np.array([0.0, 1.0]))


# ---------------------------------------------------------------------------
# verification reports
# ---------------------------------------------------------------------------


@dataclass
class HarmonicReport:
    xs: np.ndarray
    lhs: np.ndarray
    rhs: np.ndarray
    stderr: np.ndarray
    z: np.ndarray
    exact: bool
    passed: bool


def verify_harmonic(law: IncrementLaw, G, xs, reps: int, rng=None,
                    tol_multiplier: float = 4.0, atol: float = 1e-12) -> HarmonicReport:
    """Check G(x) = E G(x + S_1) 1{x + S_1 > 0} at each x.

    Discrete laws are checked exactly by summing over atoms; otherwise each
    side is compared by a z-score at the given multiplier. G must vanish on
    the nonpositive halfline.
    """
    rng = np.random.default_rng(rng) if not isinstance(rng, np.random.Generator) else rng
    xs = np.asarray(xs, dtype=np.float64)
    lhs = np.asarray(G(xs), dtype=np.float64)
    if law.kind == "discrete":
        rhs = np.empty_like(xs)
        for i, x in enumerate(xs):
            pts = x + law.atoms
            vals = np.asarray(G(pts), dtype=np.float64)
            rhs[i] = float(np.sum(law.probs * np.where(pts > 0.0, vals, 0.0)))
        err = np.abs(lhs - rhs)
        z = np.where(err <= atol, 0.0, np.inf)
        return HarmonicReport(xs, lhs, rhs, np.zeros_like(xs), z,
                              exact=True, passed=bool(np.all(err <= atol)))
    rhs = np.empty_like(xs)
    se = np.empty_like(xs)
    for i, x in enumerate(xs):
        s1 = x + law.draw(rng, reps)
        vals = np.where(s1 > 0.0, np.asarray(G(s1), dtype=np.float64), 0.0)
        st = mean_ci(vals)
        rhs[i], se[i] = st.mean, st.stderr
    z = np.array([zscore(l, 0.0, r, s) for l, r, s in zip(lhs, rhs, se)])
    return HarmonicReport(xs, lhs, rhs, se, z, exact=False,
                          passed=bool(np.all(np.abs(z) < tol_multiplier)))


@dataclass
class StoppedHarmonicReport:
    x: float
    y: float
    lhs: float
    rhs: SummaryStats
    z: float
    capped_fraction: float


def verify_stopped_harmonic(law: IncrementLaw, G, x: float, y: float, reps: int,
                            rng=None, step_cap: int = DEFAULT_STEP_CAP) -> StoppedHarmonicReport:
    """Check G(x) = E_x G(S_{sigma(y)}) 1{sigma(y) < tau} by simulation."""
    if not (0.0 < x < y):
        raise InvalidModel("need 0 < x < y")
    rng = np.random.default_rng(rng) if not isinstance(rng, np.random.Generator) else rng
    final, _, reason = _walk_exit(law, rng, x, 0.0, y, reps, step_cap)
    capped = reason == kernels.REASON_CAP
    up = reason == kernels.REASON_UPPER
    vals = np.zeros(reps)
    vals[up] = np.asarray(G(final[up]), dtype=np.float64)
    st = mean_ci(vals[~capped])
    lhs = float(np.asarray(G(np.array([x])), dtype=np.float64)[0])
    return StoppedHarmonicReport(x, y, lhs, st, zscore(lhs, 0.0, st.mean, st.stderr),
                                 float(capped.mean()))


@dataclass
class OvershootReport:
    x: float
    a: float
    overshoots: np.ndarray  # R_a of the paths that crossed a before tau
    killed_mean: SummaryStats  # E_x[R_a; sigma(a) < tau]
    crossing_fraction: float
    capped_fraction: float


def overshoot_stats(law: IncrementLaw, x: float, a: float, reps: int, rng=None,
                    step_cap: int = DEFAULT_STEP_CAP) -> OvershootReport:
    """Overshoot R_a = S_{sigma(a)} - a of the walk killed at tau(0)."""
    if not (a > x > 0):
        raise InvalidModel("killed overshoot needs a > x > 0")
    rng = np.random.default_rng(rng) if not isinstance(rng, np.random.Generator) else rng
    final, _, reason = _walk_exit(law, rng, x, 0.0, a, reps, step_cap)
    capped = reason == kernels.REASON_CAP
    up = reason == kernels.REASON_UPPER
    r = final[up] - a
    killed = np.zeros(reps)
    killed[up] = r
    return OvershootReport(x, a, r, mean_ci(killed[~capped]),
                           float(up.mean()), float(capped.mean()))


@dataclass
class LimitFormulaReport:
    x: float
    ys: np.ndarray
    estimates: list  # SummaryStats of y * 1{sigma(y) < tau} per y
    h_reference: SummaryStats  # H_ladder(x) with the same budget


def limit_formula(law: IncrementLaw, x: float, ys, reps: int, rng=None,
                  step_cap: int = DEFAULT_STEP_CAP) -> LimitFormulaReport:
    """Estimates of y P_x(sigma(y) < tau) along increasing y, with the
    ladder-function value at x as the convergence reference."""
    rng = np.random.default_rng(rng) if not isinstance(rng, np.random.Generator) else rng
    ys = np.asarray(ys, dtype=np.float64)
    ests = []
    for y in ys:
        if x <= 0:
            ests.append(mean_ci([0.0, 0.0]))
            continue
        _, _, reason = _walk_exit(law, rng, x, 0.0, float(y), reps, step_cap)
        ests.append(mean_ci(y * (reason == kernels.REASON_UPPER).astype(float)))
    href = H_ladder(law, x, reps, step_cap, rng).stats if x > 0 else mean_ci([0.0, 0.0])
    return LimitFormulaReport(x, ys, ests, href)


# ---------------------------------------------------------------------------
# many-to-one checks
# ---------------------------------------------------------------------------


@dataclass
class PairedReport:
    tree_side: SummaryStats
    walk_side: SummaryStats
    z: float

    @property
    def passed(self) -> bool:
        return abs(self.z) < 4.0


def _leaf_paths(levels, n):
    """(leaf count, n) matrix of additive positions along each leaf's path."""
    leaves = levels[n]
    m = leaves.X.size
    paths = np.empty((m, n))
    idx = np.arange(m)
    for g in range(n, 0, -1):
        lvl = levels[g]
        paths[:, g - 1] = lvl.X[idx]
        idx = lvl.parent[idx]
    return paths


def many_to_one_verify(model: WeightModel, alpha: float, n: int, g, reps: int,
                       rng=None, pop_cap: int = 1 << 21, chunk: int = 8192) -> PairedReport:
    """Lemma check: E g(S_1..S_n) = E sum_{|v|=n} L(v)^alpha g(positions).

    g maps an (m, n) matrix of path positions to m values and must be
    bounded. Both sides use `reps` replicates.
    """
    if n < 1:
        raise InvalidModel("n must be >= 1")
    rng = np.random.default_rng(rng) if not isinstance(rng, np.random.Generator) else rng
    law = make_increment_law(model, alpha)

    tree_vals = np.empty(reps)
    done = 0
    while done < reps:
        k = min(chunk, reps - done)
        levels = grow_forest(model, n, k, rng, pop_cap=pop_cap, keep_levels=True)
        leaves = levels[n]
        if leaves.X.size:
            paths = _leaf_paths(levels, n)
            gv = np.asarray(g(paths), dtype=np.float64)
            vals = np.bincount(leaves.tree, weights=leaves.L**alpha * gv, minlength=k)
        else:
            vals = np.zeros(k)
        tree_vals[done : done + k] = vals
        done += k

    inc = law.draw(rng, (reps, n))
    walk_vals = np.asarray(g(np.cumsum(inc, axis=1)), dtype=np.float64)

    ts, ws = mean_ci(tree_vals), mean_ci(walk_vals)
    return PairedReport(ts, ws, zscore(ts.mean, ts.stderr, ws.mean, ws.stderr))


def _stopped_walk_paths(law, b, reps, rng, step_cap, chunk=1024):
    """Ragged list of position arrays S_1..S_sigma(b) from 0; None if capped."""
    out = []
    for _ in range(reps):
        segs = []
        s = 0.0
        n = 0
        path = None
        while n < step_cap:
            k = min(chunk, step_cap - n)
            seg = s + np.cumsum(law.draw(rng, k))
            hit = seg > b
            if hit.any():
                j = int(np.argmax(hit))
                segs.append(seg[: j + 1])
                path = np.concatenate(segs)
                break
            segs.append(seg)
            s = seg[-1]
            n += k
        out.append(path)
    return out


def many_to_one_stopped_verify(model: WeightModel, alpha: float, a: float, g,
                               reps: int, rng=None,
                               step_cap: int = DEFAULT_STEP_CAP) -> PairedReport:
    """Stopped lemma check over the first passage line at level a.

    g maps a 1D array of multiplicative weights along a path to one bounded
    value. The tree side sums L^alpha g over the line; the walk side applies
    g to e^{-S_j}, j <= sigma(-log a).
    """
    if not (0.0 < a <= 1.0):
        raise InvalidModel("a must lie in (0, 1]")
    rng = np.random.default_rng(rng) if not isinstance(rng, np.random.Generator) else rng
    law = make_increment_law(model, alpha)
    b = -math.log(a)

    tree_vals = np.empty(reps)
    seeds = rng.integers(0, 2**63 - 1, size=reps)
    for i in range(reps):
        line = first_passage_line(model, a, seed=int(seeds[i]), step_cap=step_cap,
                                  keep_paths=True)
        total = 0.0
        for _, rec, path in line.iter_with_paths():
            total += rec.L**alpha * float(g(np.asarray(path)))
        tree_vals[i] = total

    walk_vals = []
    for path in _stopped_walk_paths(law, b, reps, rng, step_cap):
        if path is None:
            continue
        walk_vals.append(float(g(np.exp(-path))))
    ts, ws = mean_ci(tree_vals), mean_ci(np.asarray(walk_vals))
    return PairedReport(ts, ws, zscore(ts.mean, ts.stderr, ws.mean, ws.stderr))


def line_mean_power(model: WeightModel, alpha: float, a: float, reps: int, rng=None,
                    step_cap: int = DEFAULT_STEP_CAP) -> SummaryStats:
    """Mean of sum L^alpha over replicate first passage lines (martingale
    mean 1 when m(alpha) = 1)."""
    rng = np.random.default_rng(rng) if not isinstance(rng, np.random.Generator) else rng
    seeds = rng.integers(0, 2**63 - 1, size=reps)
    vals = [line_power_sum(first_passage_line(model, a, seed=int(s), step_cap=step_cap), alpha)
            for s in seeds]
    return mean_ci(vals)
