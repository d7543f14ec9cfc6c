"""Non-intersection survival of pairs and tuples of lattice walks from the origin.

Every walk starts at the origin and all walks step once per unit of time.
Walks are split into two groups; the pair (or tuple) dies at the first time
``t`` at which the union of group-1 sites visited in (0, t] meets the union of
group-2 sites visited in (0, t].  The origin is never recorded, a simultaneous
arrival at a common site counts, and a site reached by one group at time t
that the other group visited earlier counts at time t.

Walk ``i`` of pair ``p`` draws from stream ``(seed, p << 8 | i)``, so results
do not depend on how pairs are scheduled across workers.
"""
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from . import rng, sites
from .errors import CoordinateOverflowError, InvalidParameterError, UndefinedEstimatorError
from .rng import SeedSpec, derive_stream
from .walks import WalkState, lattice_step

DEFAULT_H_LAG = 10_000
MAX_WALKS = 255
MAX_STEPS_LIMIT = sites.COORD_LIMIT - 1

_MOVES = ((1, 0, 0), (-1, 0, 0), (0, 1, 0), (0, -1, 0), (0, 0, 1), (0, 0, -1))


def walk_stream_id(pair_index, walk_index):
    return (pair_index << 8) | walk_index


# -- reference trackers (pure Python) --------------------------------------

class TupleTracker:
    """``m + n`` walks from the origin; group 1 is walks[:m], group 2 walks[m:].

    Intended for tests, inspection and small runs; bulk experiments use the
    compiled kernel below, which consumes streams identically.
    """

    def __init__(self, m=1, n=1):
        if m < 1 or n < 1 or m + n > MAX_WALKS:
            raise InvalidParameterError("group sizes must be >= 1 and total <= 255")
        self.m, self.n = m, n
        self.walks = [WalkState.origin() for _ in range(m + n)]
        self.visited = (set(), set())
        self.first_intersection_step = None

    @property
    def steps_taken(self):
        return self.walks[0].steps_taken

    def group(self, i):
        return 0 if i < self.m else 1

    def step(self, directions):
        """Move every walk one step; ``directions`` holds one index 0..5 per walk.

        Returns True if this step produced the first intersection.
        """
        if self.first_intersection_step is not None:
            raise InvalidParameterError("tracker already intersected")
        t = self.steps_taken + 1
        new = []
        for i, d in enumerate(directions):
            dx = _MOVES[d]
            p = self.walks[i].position
            q = (p[0] + dx[0], p[1] + dx[1], p[2] + dx[2])
            self.walks[i] = WalkState(q, t)
            new.append(q)
        hit = False
        g1 = [s for i, s in enumerate(new) if self.group(i) == 0]
        g2 = [s for i, s in enumerate(new) if self.group(i) == 1]
        if set(g1) & set(g2):
            hit = True
        if any(s in self.visited[1] for s in g1) or any(s in self.visited[0] for s in g2):
            hit = True
        self.visited[0].update(g1)
        self.visited[1].update(g2)
        if hit:
            self.first_intersection_step = t
        return hit


class PairTracker(TupleTracker):
    def __init__(self):
        super().__init__(1, 1)

    @property
    def walk_a(self):
        return self.walks[0]

    @property
    def walk_b(self):
        return self.walks[1]

    @property
    def visited_a(self):
        return self.visited[0]

    @property
    def visited_b(self):
        return self.visited[1]


def pair_streams(seed, pair_index, walks=2):
    master = seed.master_seed if isinstance(seed, SeedSpec) else int(seed)
    return [derive_stream(SeedSpec(master, walk_stream_id(pair_index, i))) for i in range(walks)]


def advance_pair(tracker, streams, target_step):
    """Advance to ``target_step`` or to the first intersection, whichever is first."""
    if target_step <= tracker.steps_taken:
        raise InvalidParameterError("target_step must exceed the current step count")
    while tracker.first_intersection_step is None and tracker.steps_taken < target_step:
        tracker.step([int(rng.step6(s.state)) for s in streams])
    return tracker


# -- compiled kernel ----------------------------------------------------------

@njit(cache=True, nogil=True)
def _simulate(seed, pair_index, m, w, max_steps, k1, s1, k2, s2, gen, states, pos, keys):
    """First intersection time in 1..max_steps, max_steps + 1 if none, -1 on overflow."""
    for i in range(w):
        rng.init_state(states[i], seed, np.uint64((pair_index << 8) | i))
        pos[i, 0] = 0
        pos[i, 1] = 0
        pos[i, 2] = 0
    for t in range(1, max_steps + 1):
        for i in range(w):
            lattice_step(states[i], pos[i])
            if not sites.in_range(pos[i, 0], pos[i, 1], pos[i, 2]):
                return -1
            keys[i] = sites.pack(pos[i, 0], pos[i, 1], pos[i, 2])
        for i in range(m):
            if sites.contains(k2, s2, gen, keys[i]):
                return t
        for i in range(m, w):
            if sites.contains(k1, s1, gen, keys[i]):
                return t
        for i in range(m):
            for j in range(m, w):
                if keys[i] == keys[j]:
                    return t
        for i in range(m):
            sites.insert(k1, s1, gen, keys[i])
        for i in range(m, w):
            sites.insert(k2, s2, gen, keys[i])
    return max_steps + 1


@njit(cache=True, nogil=True)
def _first_intersections(seed, start, stop, m, n, max_steps, cap1, cap2, out):
    w = m + n
    k1 = np.zeros(cap1, dtype=np.uint64)
    s1 = np.zeros(cap1, dtype=np.int64)
    k2 = np.zeros(cap2, dtype=np.uint64)
    s2 = np.zeros(cap2, dtype=np.int64)
    states = np.zeros((w, rng.STATE_SIZE), dtype=np.uint64)
    pos = np.zeros((w, 3), dtype=np.int64)
    keys = np.zeros(w, dtype=np.uint64)
    for p in range(start, stop):
        out[p - start] = _simulate(seed, p, m, w, max_steps, k1, s1, k2, s2,
                                   np.int64(p - start + 1), states, pos, keys)


def first_intersection_times(seed, start, stop, max_steps, m=1, n=1):
    """First-intersection times for pairs ``start..stop-1`` (``max_steps + 1`` = survived)."""
    if max_steps > MAX_STEPS_LIMIT:
        raise CoordinateOverflowError(f"max_steps above {MAX_STEPS_LIMIT} may overflow packed sites")
    out = np.zeros(stop - start, dtype=np.int64)
    cap1 = sites.capacity_for(min(m * max_steps, 1 << 26))
    cap2 = sites.capacity_for(min(n * max_steps, 1 << 26))
    _first_intersections(np.uint64(seed), start, stop, m, n, max_steps, cap1, cap2, out)
    if (out < 0).any():
        raise CoordinateOverflowError("lattice coordinate left the packable range")
    return out


def survivor_counts(times, checkpoints):
    """Number of entries of ``times`` strictly greater than each checkpoint."""
    t = np.sort(np.asarray(times))
    return (t.size - np.searchsorted(t, np.asarray(checkpoints), side="right")).astype(np.int64)


def count_range(seed, start, stop, max_steps, checkpoints, m=1, n=1, threads=1):
    """Survivor counts for pair indices ``start..stop-1``.

    With ``threads > 1`` the range is split into contiguous slices run on a
    thread pool; counts are summed, so the result is scheduling independent.
    """
    if threads <= 1 or stop - start < 2 * threads:
        return survivor_counts(first_intersection_times(seed, start, stop, max_steps, m, n),
                               checkpoints)
    edges = np.linspace(start, stop, threads + 1).astype(int)
    with ThreadPoolExecutor(threads) as pool:
        parts = pool.map(lambda ab: survivor_counts(
            first_intersection_times(seed, ab[0], ab[1], max_steps, m, n), checkpoints),
            zip(edges[:-1], edges[1:]))
        return np.sum(list(parts), axis=0)


# -- estimators ---------------------------------------------------------------

@dataclass(frozen=True)
class Estimate:
    value: float
    se: float


def k_value(M, Mn, n):
    """(log M - log M(n)) / log n with a delta-method standard error."""
    if n < 2:
        raise InvalidParameterError("k(n) needs n >= 2")
    if Mn <= 0:
        raise UndefinedEstimatorError(f"M({n}) = 0")
    if M <= 0 or Mn > M:
        raise InvalidParameterError("need 0 < M(n) <= M")
    p = Mn / M
    return Estimate((math.log(M) - math.log(Mn)) / math.log(n),
                    math.sqrt((1 - p) / Mn) / math.log(n))


def h_value(Mn, Mnm, n, lag):
    """(log M(n) - log M(n+lag)) / (log(n+lag) - log n) with a delta-method error.

    Given M(n), M(n+lag) is binomial, so Var log M(n+lag)/M(n) is about
    1/M(n+lag) - 1/M(n).
    """
    if n < 1 or lag < 1:
        raise InvalidParameterError("need n >= 1 and lag >= 1")
    if Mn <= 0 or Mnm <= 0:
        raise UndefinedEstimatorError(f"zero survivor count at n={n} or n+lag={n + lag}")
    if Mnm > Mn:
        raise InvalidParameterError("counts must be nonincreasing")
    denom = math.log(n + lag) - math.log(n)
    return Estimate((math.log(Mn) - math.log(Mnm)) / denom,
                    math.sqrt(max(0.0, 1 / Mnm - 1 / Mn)) / denom)


def wilson_interval(k, total, z=1.96):
    if total <= 0:
        raise InvalidParameterError("total must be positive")
    p = k / total
    denom = 1 + z * z / total
    centre = (p + z * z / (2 * total)) / denom
    half = z * math.sqrt(p * (1 - p) / total + z * z / (4 * total * total)) / denom
    return centre - half, centre + half


@dataclass
class SurvivalTable:
    M: int
    checkpoints: list
    counts: list
    h_lag: int = DEFAULT_H_LAG
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.checkpoints = [int(c) for c in self.checkpoints]
        self.counts = [int(c) for c in self.counts]
        if len(self.checkpoints) != len(self.counts):
            raise InvalidParameterError("one count per checkpoint")

    def count(self, n):
        if n == 0:
            return self.M
        try:
            return self.counts[self.checkpoints.index(n)]
        except ValueError:
            raise InvalidParameterError(f"{n} is not a checkpoint") from None

    def fraction(self, n):
        return self.count(n) / self.M

    def k(self, n):
        return k_estimator(self, n)

    def h(self, n, lag=None):
        return h_estimator(self, n, self.h_lag if lag is None else lag)

    def wilson(self, n):
        return wilson_interval(self.count(n), self.M)

    def rows(self):
        """Table rows (n, M(n), k, se_k, h, se_h); undefined estimators are None."""
        out = []
        for n, c in zip(self.checkpoints, self.counts):
            k = h = None
            try:
                k = self.k(n)
            except (UndefinedEstimatorError, InvalidParameterError):
                pass
            if n + self.h_lag in self.checkpoints:
                try:
                    h = self.h(n)
                except UndefinedEstimatorError:
                    pass
            out.append((n, c, k and k.value, k and k.se, h and h.value, h and h.se))
        return out


def k_estimator(table, n):
    return k_value(table.M, table.count(n), n)


def h_estimator(table, n, m_lag=DEFAULT_H_LAG):
    return h_value(table.count(n), table.count(n + m_lag), n, m_lag)


def _validate(M, max_steps, checkpoints):
    if M <= 0:
        raise InvalidParameterError("M must be positive")
    if not checkpoints:
        raise InvalidParameterError("checkpoint list is empty")
    cps = list(checkpoints)
    if cps != sorted(set(cps)) or cps[0] < 1 or cps[-1] > max_steps:
        raise InvalidParameterError("checkpoints must be sorted, distinct and within [1, max_steps]")
    if max_steps > MAX_STEPS_LIMIT:
        raise CoordinateOverflowError(f"max_steps above {MAX_STEPS_LIMIT} may overflow packed sites")


def run_tuple_experiment(m, n, M, max_steps, checkpoints, seed, threads=1, h_lag=DEFAULT_H_LAG):
    if m < 1 or n < 1 or m + n > MAX_WALKS:
        raise InvalidParameterError("group sizes must be >= 1 and total <= 255")
    _validate(M, max_steps, checkpoints)
    master = seed.master_seed if isinstance(seed, SeedSpec) else int(seed)
    counts = count_range(master, 0, M, max_steps, checkpoints, m, n, threads)
    return SurvivalTable(M, list(checkpoints), counts.tolist(), h_lag,
                         {"seed": master, "m": m, "n": n, "max_steps": max_steps})


def run_survival_experiment(M, max_steps, checkpoints, seed, threads=1, h_lag=DEFAULT_H_LAG):
    return run_tuple_experiment(1, 1, M, max_steps, checkpoints, seed, threads, h_lag)

