"""Weighted Ulam-Harris trees: growth, martingale sums, stopping lines.

Trees are stored as per-generation flat arrays (weight product, running max,
running min, parent index, child rank). Vertex words are reconstructed on
demand by walking parent pointers, so memory stays proportional to the
population. Forest helpers grow many independent replicate trees at once for
Monte Carlo statistics.

Two position conventions coexist deliberately: multiplicative weights L are
exact products of edge weights, while additive positions X accumulate
-log(weight) edge by edge. The additive form matches the associated random
walk float-for-float, which keeps deterministic many-to-one checks
bit-identical.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import GenerationMissing, InvalidModel, PopulationCapExceeded, StepCapExceeded
from .stats import SummaryStats, mean_ci
from .weights import WeightModel

__all__ = [
    "Vertex",
    "NodeRecord",
    "Generation",
    "Tree",
    "StoppingLine",
    "simulate",
    "additive_W",
    "derivative_Z",
    "first_passage_line",
    "line_power_sum",
    "disintegration_M",
    "truncated_M",
    "truncated_Z",
    "extinction_prob",
    "Forest",
    "grow_forest",
    "generation_sums",
    "martingale_pair_samples",
]

Vertex = tuple  # 1-based child indices along the path from the root

DEFAULT_POP_CAP = 1 << 21


@dataclass(frozen=True)
class NodeRecord:
    L: float
    lmax: float
    lmin: float


@dataclass
class Generation:
    L: np.ndarray
    lmax: np.ndarray
    lmin: np.ndarray
    parent: np.ndarray
    rank: np.ndarray

    @property
    def size(self) -> int:
        return int(self.L.size)


def _root_generation() -> Generation:
    one = np.ones(1)
    return Generation(one.copy(), one.copy(), one.copy(),
                      np.full(1, -1, dtype=np.int64), np.zeros(1, dtype=np.int32))


def _spawn(model: WeightModel, L, lmax, lmin, rng):
    """Children arrays of one generation; zero-weight children pruned at birth."""
    pop = L.size
    if pop == 0:
        return (np.empty(0), np.empty(0), np.empty(0),
                np.empty(0, dtype=np.int64), np.empty(0, dtype=np.int32))
    w = model.sample_many(pop, rng)
    if w.shape[1] == 0:
        return (np.empty(0), np.empty(0), np.empty(0),
                np.empty(0, dtype=np.int64), np.empty(0, dtype=np.int32))
    flat = w.ravel()
    keep = flat > 0.0
    kmax = w.shape[1]
    parent = np.repeat(np.arange(pop, dtype=np.int64), kmax)[keep]
    rank = np.tile(np.arange(1, kmax + 1, dtype=np.int32), pop)[keep]
    child_L = L[parent] * flat[keep]
    child_lmax = np.maximum(lmax[parent], child_L)
    child_lmin = np.minimum(lmin[parent], child_L)
    return child_L, child_lmax, child_lmin, parent, rank


@dataclass
class Tree:
    """A lazily grown tree, complete generation by generation."""

    model: WeightModel
    seed: int | None
    pop_cap: int
    generations: list = field(default_factory=list)

    @property
    def n_generations(self) -> int:
        """Index of the deepest complete generation."""
        return len(self.generations) - 1

    def generation(self, n: int) -> Generation:
        if not (0 <= n < len(self.generations)):
            raise GenerationMissing(f"generation {n} not grown (max {self.n_generations})")
        return self.generations[n]

    def population(self, n: int) -> int:
        return self.generation(n).size

    def vertex(self, n: int, i: int) -> Vertex:
        """Ulam-Harris word of vertex i in generation n."""
        word = []
        for g in range(n, 0, -1):
            gen = self.generation(g)
            word.append(int(gen.rank[i]))
            i = int(gen.parent[i])
        return tuple(reversed(word))

    def record(self, n: int, i: int) -> NodeRecord:
        gen = self.generation(n)
        return NodeRecord(float(gen.L[i]), float(gen.lmax[i]), float(gen.lmin[i]))


def simulate(model: WeightModel, n_max: int, pop_cap: int = DEFAULT_POP_CAP,
             seed=None) -> Tree:
    """Grow a tree to generation n_max, each vertex branching with an
    independent copy of the weight sequence.

    Raises PopulationCapExceeded (carrying the partial tree) when a
    generation would exceed pop_cap vertices. Extinct generations are stored
    empty so that generation sums remain well defined.
    """
    if n_max < 0:
        raise InvalidModel("n_max must be >= 0")
    if pop_cap < 1:
        raise InvalidModel("pop_cap must be >= 1")
    model.validate()
    rng = np.random.default_rng(seed)
    tree = Tree(model=model, seed=seed, pop_cap=int(pop_cap),
                generations=[_root_generation()])
    for _ in range(n_max):
        g = tree.generations[-1]
        L, lmax, lmin, parent, rank = _spawn(model, g.L, g.lmax, g.lmin, rng)
        if L.size > pop_cap:
            raise PopulationCapExceeded(
                f"generation {len(tree.generations)} would hold {L.size} > {pop_cap} vertices",
                partial=tree,
            )
        tree.generations.append(Generation(L, lmax, lmin, parent, rank))
    return tree


def additive_W(tree: Tree, alpha: float, n: int) -> float:
    """Generation-n additive sum of L^alpha."""
    g = tree.generation(n)
    return float(np.sum(g.L**alpha)) if g.size else 0.0


def derivative_Z(tree: Tree, alpha: float, n: int) -> float:
    """Generation-n derivative sum of L^alpha * (-log L)."""
    g = tree.generation(n)
    if g.size == 0:
        return 0.0
    return float(np.sum(g.L**alpha * (-np.log(g.L))))


def disintegration_M(tree: Tree, f, t: float, n: int) -> float:
    """Product of f(t L(v)) over generation n; empty generation gives 1."""
    if t < 0:
        raise InvalidModel("t must be >= 0")
    g = tree.generation(n)
    if g.size == 0:
        return 1.0
    vals = np.asarray(f(t * g.L), dtype=np.float64)
    if np.any(vals <= 0.0):
        return 0.0
    return float(np.exp(np.sum(np.log(vals))))


def truncated_M(tree: Tree, f, t: float, a: float, n: int) -> float:
    """Product restricted to vertices whose running max satisfies t L*(v) < a."""
    if a <= 0:
        raise InvalidModel("a must be positive")
    g = tree.generation(n)
    if g.size == 0:
        return 1.0
    keep = t * g.lmax < a
    if not keep.any():
        return 1.0
    vals = np.asarray(f(t * g.L[keep]), dtype=np.float64)
    if np.any(vals <= 0.0):
        return 0.0
    return float(np.exp(np.sum(np.log(vals))))


def truncated_Z(tree: Tree, alpha: float, t: float, a: float, H, n: int) -> float:
    """Truncated derivative sum sum (tL)^alpha H(-log(tL/a)) over {t L*(v) < a}.

    H must vanish on the nonpositive halfline (harmonic handle contract).
    """
    if not (a > 1.0):
        raise InvalidModel("truncation level a must exceed 1")
    g = tree.generation(n)
    if g.size == 0:
        return 0.0
    keep = t * g.lmax < a
    if not keep.any():
        return 0.0
    tl = t * g.L[keep]
    x = np.log(a) - np.log(tl)
    return float(np.sum(tl**alpha * np.asarray(H(x), dtype=np.float64)))


# ---------------------------------------------------------------------------
# stopping lines
# ---------------------------------------------------------------------------


@dataclass
class StoppingLine:
    """First-passage line: vertices whose weight first drops below the
    threshold, all strict ancestors still at or above it."""

    members: list  # (Vertex, NodeRecord) pairs
    threshold: float
    paths: list | None = None  # ancestor weights L(v(1))..L(v) per member

    @property
    def size(self) -> int:
        return len(self.members)

    def weights(self) -> np.ndarray:
        return np.array([rec.L for _, rec in self.members], dtype=np.float64)

    def iter_with_paths(self):
        if self.paths is None:
            raise InvalidModel("line was built without keep_paths")
        yield from ((word, rec, path) for (word, rec), path in zip(self.members, self.paths))


def first_passage_line(model: WeightModel, a: float, seed=None,
                       step_cap: int = 1_000_000, keep_paths: bool = False) -> StoppingLine:
    """Grow the tree on demand, descending only through vertices with L >= a,
    and collect the first vertices with L < a.

    Terminating needs sup_{|v|=n} L(v) -> 0 (regular or boundary models);
    step_cap bounds the number of visited vertices regardless. keep_paths
    additionally records the weight sequence along each member's path.
    """
    if a <= 0:
        raise InvalidModel("a must be positive")
    model.validate()
    rng = np.random.default_rng(seed)

    if 1.0 < a:
        root = ((), NodeRecord(1.0, 1.0, 1.0))
        return StoppingLine(members=[root], threshold=float(a),
                            paths=[np.empty(0)] if keep_paths else None)

    # trail[g] holds (rank, parent position, L) of the active vertices at
    # depth g; parent position indexes the depth g-1 active arrays
    trail = [(np.zeros(1, dtype=np.int32), np.full(1, -1, dtype=np.int64), np.ones(1))]
    act_L = np.ones(1)
    act_lmax = np.ones(1)
    act_lmin = np.ones(1)
    members = []  # (depth, rank, parent position, L, lmax, lmin)
    visited = 1
    depth = 0
    while act_L.size:
        L, lmax, lmin, parent, rank = _spawn(model, act_L, act_lmax, act_lmin, rng)
        depth += 1
        visited += L.size
        below = L < a
        for i in np.flatnonzero(below):
            members.append((depth, int(rank[i]), int(parent[i]),
                            float(L[i]), float(lmax[i]), float(lmin[i])))
        keep = ~below
        trail.append((rank[keep], parent[keep], L[keep]))
        act_L, act_lmax, act_lmin = L[keep], lmax[keep], lmin[keep]
        if visited > step_cap:
            raise StepCapExceeded(
                f"stopping line not closed within {step_cap} visited vertices",
                partial=_assemble_line(trail, members, a, keep_paths),
            )
    return _assemble_line(trail, members, a, keep_paths)


def _assemble_line(trail, members, a, keep_paths) -> StoppingLine:
    out = []
    paths = [] if keep_paths else None
    for depth, rank, ppos, L, lmax, lmin in members:
        word = [rank]
        chain = [L]
        p = ppos
        for g in range(depth - 1, 0, -1):
            ranks, parents, levels = trail[g]
            word.append(int(ranks[p]))
            chain.append(float(levels[p]))
            p = int(parents[p])
        out.append((tuple(reversed(word)), NodeRecord(L, lmax, lmin)))
        if keep_paths:
            paths.append(np.array(chain[::-1]))
    return StoppingLine(members=out, threshold=float(a), paths=paths)


def line_power_sum(line: StoppingLine, alpha: float) -> float:
    """sum L(v)^alpha over the stopping line."""
    if line.size == 0:
        return 0.0
    return float(np.sum(line.weights() ** alpha))


# ---------------------------------------------------------------------------
# replicate forests
# ---------------------------------------------------------------------------


@dataclass
class Forest:
    """One generation of many independent trees, as flat arrays.

    X is the additive position -log L accumulated edge by edge (the random
    walk convention); L is the exact multiplicative weight.
    """

    tree: np.ndarray  # tree id per vertex
    L: np.ndarray
    X: np.ndarray
    lmax: np.ndarray
    parent: np.ndarray
    prune_w: np.ndarray  # per-tree pruned L^alpha mass (bias bound for W)
    prune_z: np.ndarray  # per-tree pruned L^alpha(-log L) mass (bias bound for Z)


def grow_forest(model: WeightModel, n: int, reps: int, rng,
                pop_cap: int = DEFAULT_POP_CAP, keep_levels: bool = False,
                prune_alpha: float | None = None, prune_below: float = 0.0):
    """Grow `reps` independent trees to generation n simultaneously.

    Returns the final Forest, or all levels when keep_levels. With
    prune_below > 0, children whose L^prune_alpha falls at or below the
    threshold are dropped at birth; the discarded per-tree sums of L^alpha
    and L^alpha(-log L) are accumulated as expected-bias bounds for the
    additive and derivative sums (both are martingale masses).
    """
    model.validate()
    tree_id = np.arange(reps, dtype=np.int64)
    cur = Forest(tree_id, np.ones(reps), np.zeros(reps), np.ones(reps),
                 np.full(reps, -1, dtype=np.int64),
                 np.zeros(reps), np.zeros(reps))
    levels = [cur]
    for _ in range(n):
        pop = cur.L.size
        if pop == 0:
            nxt = Forest(cur.tree[:0], cur.L[:0], cur.X[:0], cur.lmax[:0],
                         cur.parent[:0], cur.prune_w, cur.prune_z)
        else:
            w = model.sample_many(pop, rng)
            if w.shape[1] == 0:
                nxt = Forest(cur.tree[:0], cur.L[:0], cur.X[:0], cur.lmax[:0],
                             cur.parent[:0], cur.prune_w, cur.prune_z)
            else:
                kmax = w.shape[1]
                flat = w.ravel()
                keep = flat > 0.0
                parent = np.repeat(np.arange(pop, dtype=np.int64), kmax)[keep]
                wk = flat[keep]
                L = cur.L[parent] * wk
                X = cur.X[parent] + (-np.log(wk))
                pw = cur.prune_w.copy()
                pz = cur.prune_z.copy()
                if prune_below > 0.0 and prune_alpha is not None:
                    la = L**prune_alpha
                    alive = la > prune_below
                    if not alive.all():
                        cut = ~alive
                        t_cut = cur.tree[parent[cut]]
                        np.add.at(pw, t_cut, la[cut])
                        np.add.at(pz, t_cut, la[cut] * X[cut])
                        parent, wk, L, X = parent[alive], wk[alive], L[alive], X[alive]
                lmax = np.maximum(cur.lmax[parent], L)
                tid = cur.tree[parent]
                counts = np.bincount(tid, minlength=reps)
                if counts.max(initial=0) > pop_cap:
                    raise PopulationCapExceeded(
                        f"a tree would hold {int(counts.max())} > {pop_cap} vertices in one generation",
                        partial=levels if keep_levels else cur,
                    )
                nxt = Forest(tid, L, X, lmax, parent, pw, pz)
        levels.append(nxt)
        cur = nxt
    return levels if keep_levels else cur


def generation_sums(forest: Forest, reps: int, alpha: float):
    """Per-tree additive and derivative sums of the forest generation."""
    la = forest.L**alpha
    w = np.bincount(forest.tree, weights=la, minlength=reps)
    z = np.bincount(forest.tree, weights=la * forest.X, minlength=reps)
    return w, z


def martingale_pair_samples(model: WeightModel, alpha: float, n: int, reps: int, rng,
                            kind: str = "W", t: float = 1.0, a: float = np.inf,
                            H=None, pop_cap: int = DEFAULT_POP_CAP):
    """Paired generation-n and generation-(n+1) statistics over replicate trees.

    kind "W": additive sums; "Z": derivative sums; "Ztrunc": the truncated
    derivative sums with harmonic handle H at arguments (t, a). Returns
    (stat_n, stat_n1) arrays of length reps.
    """
    if kind not in ("W", "Z", "Ztrunc"):
        raise InvalidModel(f"unknown martingale kind {kind!r}")
    if kind == "Ztrunc":
        if H is None:
            raise InvalidModel("Ztrunc needs a harmonic handle H")
        if not (a > 1.0):
            raise InvalidModel("truncation level a must exceed 1")
    levels = grow_forest(model, n + 1, reps, rng, pop_cap=pop_cap, keep_levels=True)
    out = []
    for forest in (levels[n], levels[n + 1]):
        if kind == "W":
            s, _ = generation_sums(forest, reps, alpha)
        elif kind == "Z":
            _, s = generation_sums(forest, reps, alpha)
        else:
            tl = t * forest.L
            keep = t * forest.lmax < a
            x = np.where(keep, np.log(a) - np.log(np.maximum(tl, 1e-300)), 0.0)
            contrib = np.where(keep, tl**alpha * np.asarray(H(x), dtype=np.float64), 0.0)
            s = np.bincount(forest.tree, weights=contrib, minlength=reps)
        out.append(s)
    return out[0], out[1]


def extinction_prob(model: WeightModel, n: int, reps: int, rng,
                    pop_cap: int = DEFAULT_POP_CAP) -> SummaryStats:
    """Fraction of replicate trees with no positive-weight vertex at
    generation n, with a normal-approximation CI."""
    if n < 1:
        raise InvalidModel("n must be >= 1")
    model.validate()
    tid = np.arange(reps, dtype=np.int64)
    for _ in range(n):
        pop = tid.size
        if pop == 0:
            break
        w = model.sample_many(pop, rng)
        if w.shape[1] == 0:
            tid = tid[:0]
            break
        keep = w.ravel() > 0.0
        tid = np.repeat(tid, w.shape[1])[keep]
        if tid.size > pop_cap * reps:
            raise PopulationCapExceeded(
                f"forest population {tid.size} exceeded {pop_cap * reps}", partial=None
            )
    alive = np.zeros(reps, dtype=bool)
    alive[np.unique(tid)] = True
    return mean_ci((~alive).astype(float))


# GaussianBinary fast path used by the fixpoint samplers


def gaussian_binary_wz_samples(model: WeightModel, alpha: float, n: int, reps: int, rng,
                               prune_below: float = 0.0):
    """(W_n, Z_n) samples for the two-lognormal-children family through the
    backend kernel; returns (w, z, prune_w, prune_z) arrays."""
    if model.family != "gaussian_binary":
        raise InvalidModel("kernel path only supports the gaussian_binary family")
    mu = model.params["mu"]
    sigma = float(np.sqrt(model.params["sigma2"]))
    vmax = np.inf if prune_below <= 0.0 else -np.log(prune_below) / alpha
    return kernels.binary_lognormal_wz(rng, mu, sigma, alpha, n, vmax, reps)
