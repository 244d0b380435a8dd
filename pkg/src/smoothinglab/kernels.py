"""Hot Monte Carlo loops with two interchangeable backends.

The numba backend JIT-compiles per-path scalar loops; the numpy backend runs
the same recursions vectorized over active paths. Both consume a
`numpy.random.Generator`, so each backend is reproducible seed-for-seed
(the two backends draw in different orders and therefore produce different,
equally valid realizations).

Backend selection: environment variable ``SMOOTHINGLAB_BACKEND`` set to
``numba`` or ``numpy``. Default is numba when importable, else numpy.
`benchmarks/bench_kernels.py` compares the two.
"""

from __future__ import annotations

import os

import numpy as np

__all__ = [
    "REASON_LOWER",
    "REASON_UPPER",
    "REASON_CAP",
    "active_backend",
    "walk_exit",
    "walk_exit_generic",
    "tanaka_occupation",
    "binary_lognormal_wz",
]

# stop reasons for walk_exit
REASON_LOWER = 0  # tau: first n with S_n <= lower
REASON_UPPER = 1  # sigma: first n with S_n > upper
REASON_CAP = 2  # step cap hit

KIND_NORMAL = 0
KIND_DISCRETE = 1

try:
    from numba import njit

    _HAS_NUMBA = True
except ImportError:  # pragma: no cover
    _HAS_NUMBA = False


def active_backend() -> str:
    """Resolve the backend name from the environment."""
    name = os.environ.get("SMOOTHINGLAB_BACKEND", "").strip().lower()
    if name in ("numba", "numpy"):
        if name == "numba" and not _HAS_NUMBA:
            raise RuntimeError("SMOOTHINGLAB_BACKEND=numba but numba is not importable")
        return name
    return "numba" if _HAS_NUMBA else "numpy"


# ---------------------------------------------------------------------------
# numpy implementations
# ---------------------------------------------------------------------------


def _draw_numpy(rng, kind, p0, p1, atoms, cdf, size):
    if kind == KIND_NORMAL:
        return p0 + p1 * rng.standard_normal(size)
    u = rng.random(size)
    return atoms[np.searchsorted(cdf, u, side="right")]


def walk_exit_numpy(rng, kind, p0, p1, atoms, cdf, x0, lower, upper, reps, cap):
    """First exit of (lower, upper] for `reps` paths started at x0.

    Returns (final position, step count, stop reason) arrays. Position and
    step count of capped paths are the state at the cap.
    """
    final = np.full(reps, float(x0))
    steps = np.zeros(reps, dtype=np.int64)
    reason = np.full(reps, REASON_CAP, dtype=np.int8)
    if x0 <= lower:
        reason[:] = REASON_LOWER
        return final, steps, reason
    if x0 > upper:
        reason[:] = REASON_UPPER
        return final, steps, reason

    pos = np.full(reps, float(x0))
    active = np.arange(reps)
    n = 0
    while active.size and n < cap:
        inc = _draw_numpy(rng, kind, p0, p1, atoms, cdf, active.size)
        pos[active] += inc
        n += 1
        p = pos[active]
        down = p <= lower
        up = p > upper
        done = down | up
        if done.any():
            idx = active[done]
            final[idx] = p[done]
            steps[idx] = n
            reason[idx] = np.where(down[done], REASON_LOWER, REASON_UPPER)
            active = active[~done]
    if active.size:
        final[active] = pos[active]
        steps[active] = cap
    return final, steps, reason


def tanaka_occupation_numpy(rng, kind, p0, p1, atoms, cdf, x, reps, cap):
    """Visits to (0, x] before the walk started at x first returns to >= x.

    Returns (occupation counts, capped flags). x <= 0 gives all zeros.
    """
    occ = np.zeros(reps)
    capped = np.zeros(reps, dtype=bool)
    if x <= 0.0:
        return occ, capped
    occ += 1.0  # S_0 = x lies in (0, x]
    pos = np.full(reps, float(x))
    active = np.arange(reps)
    n = 0
    while active.size and n < cap:
        inc = _draw_numpy(rng, kind, p0, p1, atoms, cdf, active.size)
        pos[active] += inc
        n += 1
        p = pos[active]
        stop = p >= x
        inside = (~stop) & (p > 0.0)
        occ[active[inside]] += 1.0
        active = active[~stop]
    capped[active] = True
    return occ, capped


def binary_lognormal_wz_numpy(rng, mu, sigma, alpha, n_gen, vmax, reps):
    """Generation-n additive and derivative sums for binary e^{-N(mu, sigma^2)}
    weight trees, one (W, Z) pair per replicate tree.

    Paths whose log-weight position reaches vmax are pruned at birth; the
    per-replicate pruned mass sums bound the expected truncation bias of W
    and Z (martingale property of the subtree contributions).
    """
    w = np.zeros(reps)
    z = np.zeros(reps)
    pw = np.zeros(reps)
    pz = np.zeros(reps)
    for r in range(reps):
        v = np.zeros(1)
        for _ in range(n_gen):
            x = np.repeat(v, 2) + (mu + sigma * rng.standard_normal(2 * v.size))
            if vmax < np.inf:
                keep = x < vmax
                cut = x[~keep]
                if cut.size:
                    lw = np.exp(-alpha * cut)
                    pw[r] += lw.sum()
                    pz[r] += (lw * cut).sum()
                v = x[keep]
            else:
                v = x
            if v.size == 0:
                break
        if v.size:
            lw = np.exp(-alpha * v)
            w[r] = lw.sum()
            z[r] = (lw * v).sum()
    return w, z, pw, pz


# ---------------------------------------------------------------------------
# numba implementations
# ---------------------------------------------------------------------------

if _HAS_NUMBA:

    @njit(cache=True)
    def _draw_nb(rng, kind, p0, p1, atoms, cdf):
        if kind == KIND_NORMAL:
            return p0 + p1 * rng.standard_normal()
        u = rng.random()
        return atoms[np.searchsorted(cdf, u, side="right")]

    @njit(cache=True)
    def walk_exit_numba(rng, kind, p0, p1, atoms, cdf, x0, lower, upper, reps, cap):
        final = np.empty(reps)
        steps = np.zeros(reps, dtype=np.int64)
        reason = np.empty(reps, dtype=np.int8)
        for r in range(reps):
            s = x0
            n = 0
            rc = REASON_CAP
            if s <= lower:
                rc = REASON_LOWER
            elif s > upper:
                rc = REASON_UPPER
            else:
                while n < cap:
                    s += _draw_nb(rng, kind, p0, p1, atoms, cdf)
                    n += 1
                    if s <= lower:
                        rc = REASON_LOWER
                        break
                    if s > upper:
                        rc = REASON_UPPER
                        break
            final[r] = s
            steps[r] = n
            reason[r] = rc
        return final, steps, reason

    @njit(cache=True)
    def tanaka_occupation_numba(rng, kind, p0, p1, atoms, cdf, x, reps, cap):
        occ = np.zeros(reps)
        capped = np.zeros(reps, dtype=np.bool_)
        if x <= 0.0:
            return occ, capped
        for r in range(reps):
            s = x
            c = 1.0
            n = 0
            hit_cap = True
            while n < cap:
                s += _draw_nb(rng, kind, p0, p1, atoms, cdf)
                n += 1
                if s >= x:
                    hit_cap = False
                    break
                if s > 0.0:
                    c += 1.0
            occ[r] = c
            capped[r] = hit_cap
        return occ, capped

    @njit(cache=True)
    def binary_lognormal_wz_numba(rng, mu, sigma, alpha, n_gen, vmax, reps):
        w = np.zeros(reps)
        z = np.zeros(reps)
        pw = np.zeros(reps)
        pz = np.zeros(reps)
        for r in range(reps):
            v = np.zeros(1)
            size = 1
            for _ in range(n_gen):
                nv = np.empty(2 * size)
                k = 0
                for i in range(size):
                    for _c in range(2):
                        x = v[i] + mu + sigma * rng.standard_normal()
                        if x < vmax:
                            nv[k] = x
                            k += 1
                        else:
                            lw = np.exp(-alpha * x)
                            pw[r] += lw
                            pz[r] += lw * x
                v = nv[:k]
                size = k
                if size == 0:
                    break
            acc_w = 0.0
            acc_z = 0.0
            for i in range(size):
                lw = np.exp(-alpha * v[i])
                acc_w += lw
                acc_z += lw * v[i]
            w[r] = acc_w
            z[r] = acc_z
        return w, z, pw, pz


# ---------------------------------------------------------------------------
# dispatch
# ---------------------------------------------------------------------------

_EMPTY = np.empty(0)


def _args(kind, p0, p1, atoms, cdf):
    atoms = _EMPTY if atoms is None else np.asarray(atoms, dtype=np.float64)
    cdf = _EMPTY if cdf is None else np.asarray(cdf, dtype=np.float64)
    return int(kind), float(p0), float(p1), atoms, cdf


def walk_exit(rng, kind, p0, p1, atoms, cdf, x0, lower, upper, reps, cap):
    kind, p0, p1, atoms, cdf = _args(kind, p0, p1, atoms, cdf)
    fn = walk_exit_numba if active_backend() == "numba" else walk_exit_numpy
    return fn(rng, kind, p0, p1, atoms, cdf, float(x0), float(lower), float(upper), int(reps), int(cap))


def tanaka_occupation(rng, kind, p0, p1, atoms, cdf, x, reps, cap):
    kind, p0, p1, atoms, cdf = _args(kind, p0, p1, atoms, cdf)
    fn = tanaka_occupation_numba if active_backend() == "numba" else tanaka_occupation_numpy
    return fn(rng, kind, p0, p1, atoms, cdf, float(x), int(reps), int(cap))


def binary_lognormal_wz(rng, mu, sigma, alpha, n_gen, vmax, reps):
    fn = binary_lognormal_wz_numba if active_backend() == "numba" else binary_lognormal_wz_numpy
    return fn(rng, float(mu), float(sigma), float(alpha), int(n_gen), float(vmax), int(reps))


def walk_exit_generic(rng, draw, x0, lower, upper, reps, cap, chunk=256):
    """walk_exit for laws only available through a draw(rng, size) callable.

    Always runs on the numpy engine; used for rejection-sampled increment laws.
    """
    final = np.full(reps, float(x0))
    steps = np.zeros(reps, dtype=np.int64)
    reason = np.full(reps, REASON_CAP, dtype=np.int8)
    if x0 <= lower:
        reason[:] = REASON_LOWER
        return final, steps, reason
    if x0 > upper:
        reason[:] = REASON_UPPER
        return final, steps, reason
    pos = np.full(reps, float(x0))
    active = np.arange(reps)
    n = 0
    while active.size and n < cap:
        inc = draw(rng, active.size)
        pos[active] += inc
        n += 1
        p = pos[active]
        down = p <= lower
        up = p > upper
        done = down | up
        if done.any():
            idx = active[done]
            final[idx] = p[done]
            steps[idx] = n
            reason[idx] = np.where(down[done], REASON_LOWER, REASON_UPPER)
            active = active[~done]
    if active.size:
        final[active] = pos[active]
        steps[active] = cap
    return final, steps, reason
