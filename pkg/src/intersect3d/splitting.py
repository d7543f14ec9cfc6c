"""Multilevel splitting on pairs of curves.

An ensemble of ``P`` copies of a pair is pushed through successive shells:
every particle is extended by one shell, dead particles are dropped, the
survival fraction is recorded, and the survivors are resampled
(multinomially, with replacement) back to ``P``.  The product of the recorded
fractions is an unbiased estimate of the survival probability of the initial
pair; confidence intervals come from independent replicate ensembles, since
resampling correlates the particles of one ensemble.

Randomness is addressed by position, never by execution order: the walk
attached to curve ``c`` of slot ``i`` at shell ``n`` of replicate ``r`` uses
stream ``(EXTEND, r, n, i, c)``, and the resampling draw of that shell uses
``(RESAMPLE, r, n)``.  Results are therefore independent of thread count.
"""
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from numba import njit
from scipy import stats

from . import pathspace, rng, walks
from .errors import ExtinctionError, InvalidParameterError

TAG_EXTEND = 1
TAG_RESAMPLE = 2
TAG_CONE = 3
TAG_DIRECT = 4
_WIDTHS = (4, 16, 12, 24, 1)

XI_REFERENCE = 0.57
BURN_IN = 2
MIN_WINDOW = 3

ENDPOINT_ANGLE = "endpoint-angle"
SEP_INDICATOR = "sep-indicator"
HALFSPACE_FRACTION = "halfspace-fraction"
FUNCTIONALS = (ENDPOINT_ANGLE, SEP_INDICATOR, HALFSPACE_FRACTION)


def _sid(tag, replicate, shell, slot=0, role=0):
    return rng.stream_id(tag, replicate, shell, slot, role, widths=_WIDTHS)


@njit(cache=True, nogil=True)
def _uniforms(seed, sid, n):
    st = np.zeros(rng.STATE_SIZE, dtype=np.uint64)
    rng.init_state(st, seed, sid)
    out = np.empty(n)
    for i in range(n):
        out[i] = rng.next_double(st)
    return out


def multinomial_indices(seed, sid, n_survivors, size):
    """Sorted ancestor indices: ``size`` uniform draws from range(n_survivors)."""
    u = _uniforms(np.uint64(seed), np.uint64(sid), size)
    return np.sort(np.minimum((u * n_survivors).astype(np.int64), n_survivors - 1))


# -- functionals of a pair ------------------------------------------------------

def tail_depth(pair):
    """Truncation depth used for marginal functionals: half the shell index,
    rounded down, limited to what the lattice resolves."""
    return min(pair.shell_index // 2, pathspace.resolvable_depth(pair.unit))


def halfspace_fraction(pair):
    """Share of the sites of both tails lying on their own side (x > 0 for a,
    x < 0 for b)."""
    tail = pathspace.pi_k(pair, tail_depth(pair))
    own = int((tail.a[:, 0] > 0).sum()) + int((tail.b[:, 0] < 0).sum())
    return own / (len(tail.a) + len(tail.b))


def functional_value(pair, name):
    # the endpoints belong to every tail, so this one needs no truncation
    if name == ENDPOINT_ANGLE:
        return pathspace.endpoint_angle(pair)
    if name == SEP_INDICATOR:
        return float(pathspace.sep_test(pair))
    if name == HALFSPACE_FRACTION:
        return halfspace_fraction(pair)
    raise InvalidParameterError(f"unknown functional {name!r}")


# -- ensembles ----------------------------------------------------------------------

@dataclass
class ShellRecord:
    """What one shell did to an ensemble (measured before resampling)."""

    size: int
    survivors: int
    sep_count: int
    ess: float
    distinct_ancestors: int
    functionals: dict = field(default_factory=dict)

    @property
    def fraction(self):
        return self.survivors / self.size


@dataclass
class ParticleEnsemble:
    particles: list
    target_size: int
    seed: int
    replicate: int = 0
    history: list = field(default_factory=list)
    resample_log: list = field(default_factory=list)

    @classmethod
    def start(cls, initial, size, seed, replicate=0):
        if size < 1:
            raise InvalidParameterError("ensemble size must be positive")
        if not initial.alive:
            raise InvalidParameterError("initial pair must be alive")
        return cls([initial] * size, size, seed, replicate)

    @property
    def shell(self):
        return self.particles[0].shell_index

    @property
    def fractions(self):
        return [h.fraction for h in self.history]

    @property
    def ess_history(self):
        return [h.ess for h in self.history]

    @property
    def q_hat(self):
        return float(np.prod(self.fractions)) if self.history else 1.0


def _extend_slots(particles, slots, seed, replicate, shell, scratch):
    sa = np.zeros(rng.STATE_SIZE, dtype=np.uint64)
    sb = np.zeros(rng.STATE_SIZE, dtype=np.uint64)
    out = []
    for i in slots:
        rng.init_state(sa, np.uint64(seed), np.uint64(_sid(TAG_EXTEND, replicate, shell, i, 0)))
        rng.init_state(sb, np.uint64(seed), np.uint64(_sid(TAG_EXTEND, replicate, shell, i, 1)))
        out.append(pathspace.extend_one_shell(particles[i], (sa, sb), scratch=scratch))
    return out


def extend_all(particles, seed, replicate, shell, threads=1):
    """Extend every particle by one shell; order and results do not depend on ``threads``."""
    n = len(particles)
    if threads <= 1 or n < 2 * threads:
        return _extend_slots(particles, range(n), seed, replicate, shell, None)
    bounds = np.linspace(0, n, threads + 1).astype(int)
    with ThreadPoolExecutor(threads) as pool:
        parts = pool.map(
            lambda k: _extend_slots(particles, range(bounds[k], bounds[k + 1]), seed,
                                    replicate, shell, pathspace._Scratch()),
            range(threads))
        return [p for part in parts for p in part]


def evolve_ensemble(ens, threads=1, functionals=(ENDPOINT_ANGLE,), constraint=None):
    """Extend, kill, record, resample.

    ``constraint`` is an optional predicate; particles failing it are killed
    as well (used to impose extra conditioning).  Raises ExtinctionError if
    nothing survives.  Returns ``ens``, updated in place.
    """
    if not ens.particles:
        raise InvalidParameterError("cannot evolve an empty ensemble")
    shell = ens.shell + 1
    extended = extend_all(ens.particles, ens.seed, ens.replicate, shell, threads)
    alive = [p for p in extended if p.alive and (constraint is None or constraint(p))]
    s = len(alive)
    rec = ShellRecord(size=len(extended), survivors=s, sep_count=0, ess=float(s),
                      distinct_ancestors=0)
    if s == 0:
        ens.history.append(rec)
        raise ExtinctionError(shell)
    rec.sep_count = sum(pathspace.sep_test(p) for p in alive)
    for name in functionals:
        rec.functionals[name] = np.array([functional_value(p, name) for p in alive])
    idx = multinomial_indices(ens.seed, _sid(TAG_RESAMPLE, ens.replicate, shell), s,
                              ens.target_size)
    rec.distinct_ancestors = int(np.unique(idx).size)
    ens.particles = [alive[i] for i in idx]
    ens.history.append(rec)
    ens.resample_log.append(idx)
    return ens


# -- replicated runs -------------------------------------------------------------------

@dataclass
class SplittingRun:
    """R independent ensembles pushed through ``shells`` shells.

    ``fractions[r, j]`` is the survival fraction of replicate r at shell j+1;
    ``sep[r, j]`` the number of survivors in SEP, ``alive[r, j]`` the number
    of survivors.
    """

    fractions: np.ndarray
    alive: np.ndarray
    sep: np.ndarray
    functionals: dict
    particles: int
    seed: int
    meta: dict = field(default_factory=dict)

    @property
    def replicates(self):
        return self.fractions.shape[0]

    @property
    def shells(self):
        return self.fractions.shape[1]

    def q_per_replicate(self):
        """(R, shells + 1) array of running products, column 0 being 1."""
        q = np.cumprod(self.fractions, axis=1)
        return np.hstack([np.ones((self.replicates, 1)), q])

    def pooled(self, name, shell):
        """All recorded values of functional ``name`` at ``shell`` (1-based)."""
        return np.concatenate([v[shell - 1] for v in self.functionals[name]])


def run_replicate(initial, shells, particles, seed, replicate, threads=1,
                  functionals=(ENDPOINT_ANGLE,)):
    ens = ParticleEnsemble.start(initial, particles, seed, replicate)
    for _ in range(shells):
        evolve_ensemble(ens, threads, functionals)
    return ens


def collect_run(histories, particles, seed, functionals=(ENDPOINT_ANGLE,)):
    """Assemble a SplittingRun from per-replicate lists of ShellRecords."""
    fr = np.array([[h.fraction for h in hist] for hist in histories], dtype=float)
    alive = np.array([[h.survivors for h in hist] for hist in histories], dtype=np.int64)
    sep = np.array([[h.sep_count for h in hist] for hist in histories], dtype=np.int64)
    fvals = {name: [[h.functionals[name] for h in hist] for hist in histories]
             for name in functionals}
    return SplittingRun(fr, alive, sep, fvals, particles, seed)


def run_splitting(initial, shells, particles, replicates, seed, threads=1,
                  functionals=(ENDPOINT_ANGLE,)):
    if shells < 1 or replicates < 1:
        raise InvalidParameterError("need at least one shell and one replicate")
    hists = [run_replicate(initial, shells, particles, seed, r, threads, functionals).history
             for r in range(replicates)]
    return collect_run(hists, particles, seed, functionals)


def direct_survival(initial, shells, seed, start, stop):
    """Plain Monte Carlo over trials ``start..stop-1``: independent extensions of
    ``initial`` without resampling.  Returns per-shell counts of survivors and
    of survivors in SEP."""
    alive = np.zeros(shells, dtype=np.int64)
    sep = np.zeros(shells, dtype=np.int64)
    sa = np.zeros(rng.STATE_SIZE, dtype=np.uint64)
    sb = np.zeros(rng.STATE_SIZE, dtype=np.uint64)
    for t in range(start, stop):
        pair = initial
        for n in range(1, shells + 1):
            rng.init_state(sa, np.uint64(seed), np.uint64(_sid(TAG_DIRECT, 0, n, t, 0)))
            rng.init_state(sb, np.uint64(seed), np.uint64(_sid(TAG_DIRECT, 0, n, t, 1)))
            pair = pathspace.extend_one_shell(pair, (sa, sb))
            if not pair.alive:
                break
            alive[n - 1] += 1
            sep[n - 1] += pathspace.sep_test(pair)
    return alive, sep


# -- estimators ----------------------------------------------------------------------

@dataclass(frozen=True)
class Interval:
    value: float
    se: float
    low: float
    high: float

    @classmethod
    def from_replicates(cls, samples, value=None, z=1.96):
        samples = np.asarray(samples, dtype=float)
        v = float(samples.mean()) if value is None else float(value)
        se = float(samples.std(ddof=1) / math.sqrt(samples.size)) if samples.size > 1 else math.inf
        return cls(v, se, v - z * se, v + z * se)


def _fraction_matrix(source):
    if isinstance(source, SplittingRun):
        return source.fractions
    fr = np.asarray(source, dtype=float)
    return fr[None, :] if fr.ndim == 1 else fr


def estimate_q(source, n):
    """Mean over replicates of the product of the first ``n`` fractions."""
    fr = _fraction_matrix(source)
    if not 0 <= n <= fr.shape[1]:
        raise InvalidParameterError(f"shell {n} outside 0..{fr.shape[1]}")
    if n == 0:
        return Interval(1.0, 0.0, 1.0, 1.0)
    return Interval.from_replicates(np.prod(fr[:, :n], axis=1))


def estimate_xi(source, n0=BURN_IN, n1=None):
    """Exponent from q-hat ratios over shells n0..n1.

    The point estimate uses the replicate-averaged q-hat; the interval uses
    the spread of the per-replicate window slopes.
    """
    fr = _fraction_matrix(source)
    n1 = fr.shape[1] if n1 is None else n1
    if n0 < 0 or n1 - n0 < MIN_WINDOW or n1 > fr.shape[1]:
        raise InvalidParameterError(f"window {n0}..{n1} needs n1 - n0 >= {MIN_WINDOW}")
    logs = -np.log(fr[:, n0:n1])
    per_rep = logs.mean(axis=1)
    q = np.cumprod(fr, axis=1).mean(axis=0)
    q = np.concatenate([[1.0], q])
    value = float(-(math.log(q[n1]) - math.log(q[n0])) / (n1 - n0))
    return Interval.from_replicates(per_rep, value)


@dataclass
class QSequence:
    ns: np.ndarray
    q: np.ndarray
    q_scaled: np.ndarray
    ratios: np.ndarray
    ratio_se: np.ndarray
    increments: np.ndarray
    spearman_rho: float
    spearman_p: float
    xi_ref: float

    @property
    def decreasing(self):
        return self.spearman_rho < 0 and self.spearman_p < 0.05


def q_ratio_convergence(source, xi_ref=XI_REFERENCE):
    """Successive ratios of q-hat, their Cauchy increments, and a rank test
    for a downward trend of the per-replicate increments."""
    fr = _fraction_matrix(source)
    R, N = fr.shape
    q = np.concatenate([[1.0], np.cumprod(fr, axis=1).mean(axis=0)])
    ns = np.arange(N + 1)
    ratios = q[1:] / q[:-1]
    ratio_se = fr.std(axis=0, ddof=1) / math.sqrt(R) if R > 1 else np.full(N, math.inf)
    inc = np.abs(np.diff(fr, axis=1))
    if inc.shape[1] >= 2 and np.ptp(inc) > 0:
        x = np.tile(np.arange(inc.shape[1]), R)
        res = stats.spearmanr(x, inc.ravel())
        rho, p = float(res.statistic), float(res.pvalue)
    else:
        rho, p = 0.0, 1.0
    return QSequence(ns, q, np.exp(ns * xi_ref) * q, ratios, ratio_se,
                     np.abs(np.diff(ratios)), rho, p, xi_ref)


def estimate_rho1(run):
    """Per shell: P(SEP | alive) averaged over replicates, with a replicate-level
    interval (lower end clipped at 0)."""
    out = []
    for j in range(run.shells):
        freq = run.sep[:, j] / run.alive[:, j]
        iv = Interval.from_replicates(freq)
        out.append(Interval(iv.value, iv.se, max(0.0, iv.low), iv.high))
    return out


def ks_critical(n1, n2, level=0.01):
    """Asymptotic two-sample Kolmogorov-Smirnov critical value."""
    c = math.sqrt(-0.5 * math.log(level / 2))
    return c * math.sqrt((n1 + n2) / (n1 * n2))


@dataclass
class MixingDiagnostic:
    functional: str
    ns: np.ndarray
    distances: np.ndarray
    sizes: np.ndarray
    beta: float
    slope_p: float
    residuals: np.ndarray
    critical: float
    saturated: bool

    @property
    def passed(self):
        below = self.distances[-1] < self.critical
        if self.saturated:
            return bool(below)
        return bool(self.beta > 0 and self.slope_p < 0.05 and below)


def mixing_from_runs(run1, run2, functional=ENDPOINT_ANGLE, shells=None, level=0.01):
    shells = list(shells or range(1, min(run1.shells, run2.shells) + 1))
    D, sizes = [], []
    for n in shells:
        x, y = run1.pooled(functional, n), run2.pooled(functional, n)
        D.append(stats.ks_2samp(x, y).statistic)
        sizes.append((x.size, y.size))
    D = np.array(D, dtype=float)
    sizes = np.array(sizes)
    ns = np.array(shells, dtype=float)
    crit = ks_critical(*sizes[-1], level=level)
    floors = np.array([ks_critical(a, b, level) for a, b in sizes])
    saturated = bool(np.all(D < floors)) or bool(np.any(D <= 0))
    if saturated or len(shells) < 3:
        return MixingDiagnostic(functional, ns, D, sizes, 0.0, 1.0, np.zeros_like(D), crit,
                                True)
    fit = stats.linregress(ns, np.log(D))
    resid = np.log(D) - (fit.intercept + fit.slope * ns)
    # one-sided: decay means a negative slope
    p = fit.pvalue / 2 if fit.slope < 0 else 1 - fit.pvalue / 2
    return MixingDiagnostic(functional, ns, D, sizes, -float(fit.slope), float(p), resid, crit,
                            False)


def mixing_distance(pair1, pair2, shells, functional=ENDPOINT_ANGLE, particles=1000,
                    replicates=20, seed=0, seed2=None, threads=1, first_shell=1):
    """Two-sample KS distance between a functional's laws under the ensembles
    started from ``pair1`` and ``pair2``, shell by shell."""
    if functional not in FUNCTIONALS:
        raise InvalidParameterError(f"unknown functional {functional!r}")
    seed2 = seed if seed2 is None else seed2
    r1 = run_splitting(pair1, shells, particles, replicates, seed, threads, (functional,))
    r2 = run_splitting(pair2, shells, particles, replicates, seed2, threads, (functional,))
    return mixing_from_runs(r1, r2, functional, range(first_shell, shells + 1))


# -- cones ------------------------------------------------------------------------------

@njit(cache=True, nogil=True)
def _cone_shell(pos, alive, seed, replicate_base, shell, axis, half_angle, sigma, eta):
    st = np.zeros(rng.STATE_SIZE, dtype=np.uint64)
    r_out = math.e
    for i in range(pos.shape[0]):
        rng.init_state(st, seed, np.uint64(replicate_base | (np.uint64(shell) << np.uint64(25))
                                            | np.uint64(i << 1)))
        alive[i] = walks.cone_advance(st, pos[i], axis, half_angle, r_out, sigma, eta, True)
        pos[i] /= r_out


def cone_fractions(cone, shells, particles, replicate, seed, sigma=0.01):
    """Per-shell survival fractions of one splitting ensemble of Gaussian walkers
    kept inside ``cone``; positions are rescaled by 1/e after every shell."""
    axis = np.array(cone.axis)
    pos = np.tile(axis, (particles, 1))
    alive = np.zeros(particles, dtype=np.bool_)
    base = np.uint64(_sid(TAG_CONE, replicate, 0))
    out = np.zeros(shells)
    for n in range(1, shells + 1):
        _cone_shell(pos, alive, np.uint64(seed), base, n, axis, float(cone.half_angle),
                    float(sigma), walks.ADAPTIVE_ETA)
        s = int(alive.sum())
        out[n - 1] = s / particles
        if s == 0:
            raise ExtinctionError(n)
        idx = multinomial_indices(seed, _sid(TAG_CONE, replicate, n, 0, 1), s, particles)
        pos = pos[alive][idx]
    return out


@dataclass(frozen=True)
class ConeEstimate:
    alpha: Interval
    fractions: np.ndarray


def cone_exponent_from_fractions(fractions):
    """Mean per-shell -log survival of the replicate-averaged product; the
    interval uses the spread of per-replicate slopes."""
    fr = np.atleast_2d(np.asarray(fractions, dtype=float))
    per_rep = -np.log(fr).mean(axis=1)
    q = np.cumprod(fr, axis=1).mean(axis=0)
    # + 0.0 turns -0.0 into 0.0
    return Interval.from_replicates(per_rep + 0.0, -math.log(q[-1]) / fr.shape[1] + 0.0)


def estimate_cone_exponent(cone, shells, particles, replicates, seed, sigma=0.01):
    """Exponent of the probability of staying in ``cone`` from radius 1 to e**n."""
    if shells < 1 or replicates < 1:
        raise InvalidParameterError("need at least one shell and one replicate")
    fr = np.array([cone_fractions(cone, shells, particles, r, seed, sigma)
                   for r in range(replicates)])
    return ConeEstimate(cone_exponent_from_fractions(fr), fr)
