"""Walk steppers (simple random walk on Z^3 and Gaussian increments) and the
exact-law validation trials built on them.

Gaussian trials that must resolve a boundary use position-dependent step
sizes: the step standard deviation is a fixed fraction of the distance to
the nearest boundary that matters, floored at ``sigma`` times the boundary
scale.  Because the step size is chosen from the current position only, the
chain is Brownian motion observed at a sequence of stopping times; the only
discretisation error is a boundary crossing that happens strictly between
two observations.  That error is removed to leading order by a Brownian
bridge test: after a step between points at distances d1, d2 from a locally
flat boundary, the path is declared to have crossed with probability
exp(-2 d1 d2 / s**2), s being the step sd.
"""
import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from . import rng
from .errors import InvalidParameterError
from .sites import COORD_LIMIT

LATTICE = "lattice"
GAUSSIAN = "gaussian"
BACKENDS = (LATTICE, GAUSSIAN)

# fraction of the boundary distance used as step sd by the adaptive trials
ADAPTIVE_ETA = 0.3

# stream-id tags for bulk trials; trial index occupies the low 40 bits
TAG_RUIN = 1
TAG_BALL = 2
TAG_CONE = 3
TAG_RADIUS = 4
TAG_MARTINGALE = 5


def trial_stream_base(tag):
    return tag << 40


@njit(cache=True, nogil=True, inline='always')
def lattice_step(state, pos):
    d = rng.step6(state)
    pos[0] += (d == 0) - (d == 1)
    pos[1] += (d == 2) - (d == 3)
    pos[2] += (d == 4) - (d == 5)


@njit(cache=True, nogil=True)
def _lattice_run(pos, state, r2, cap):
    steps = 0
    while steps < cap:
        lattice_step(state, pos)
        steps += 1
        if pos[0] * pos[0] + pos[1] * pos[1] + pos[2] * pos[2] >= r2:
            return steps, True
    return steps, False


@njit(cache=True, nogil=True)
def _gauss_run(pos, state, sigma, r2, cap):
    inc = np.empty(3)
    steps = 0
    while steps < cap:
        rng.gaussian3_into(state, sigma, inc)
        pos[0] += inc[0]
        pos[1] += inc[1]
        pos[2] += inc[2]
        steps += 1
        if pos[0] * pos[0] + pos[1] * pos[1] + pos[2] * pos[2] >= r2:
            return steps, True
    return steps, False


@dataclass(frozen=True)
class WalkState:
    position: tuple
    steps_taken: int = 0
    backend: str = LATTICE

    def __post_init__(self):
        if self.backend not in BACKENDS:
            raise InvalidParameterError(f"unknown backend {self.backend!r}")
        if len(self.position) != 3:
            raise InvalidParameterError("position must have three coordinates")
        if self.backend == LATTICE:
            object.__setattr__(self, "position", tuple(int(c) for c in self.position))
        else:
            object.__setattr__(self, "position", tuple(float(c) for c in self.position))

    @classmethod
    def origin(cls, backend=LATTICE):
        return cls((0, 0, 0), 0, backend)

    @property
    def norm(self):
        return math.sqrt(sum(c * c for c in self.position))


@dataclass(frozen=True)
class ShellConfig:
    """Shells are spheres of radius ``base_radius * ratio**n`` in lattice units."""

    base_radius: float = 32.0
    ratio: float = field(default=math.e)
    min_base_radius: float = 32.0

    def __post_init__(self):
        if self.min_base_radius <= 0:
            raise InvalidParameterError("min_base_radius must be positive")
        if not self.base_radius >= self.min_base_radius:
            raise InvalidParameterError(
                f"base_radius {self.base_radius} below configured minimum {self.min_base_radius}")
        if self.ratio <= 1:
            raise InvalidParameterError("shell ratio must exceed 1")

    def radius(self, n):
        return self.base_radius * self.ratio ** n


@dataclass(frozen=True)
class ConeSpec:
    axis: tuple = (1.0, 0.0, 0.0)
    half_angle: float = math.pi / 2

    def __post_init__(self):
        # half-angle pi is the whole space (the excluded ray is polar)
        if not 0 < self.half_angle <= math.pi:
            raise InvalidParameterError(f"cone half-angle must lie in (0, pi], got {self.half_angle}")
        a = np.asarray(self.axis, dtype=float)
        norm = float(np.linalg.norm(a))
        if a.shape != (3,) or norm == 0:
            raise InvalidParameterError("cone axis must be a nonzero 3-vector")
        object.__setattr__(self, "axis", tuple(float(c) for c in a / norm))

    @property
    def unconstrained(self):
        return self.half_angle >= math.pi


def run_until_radius(state, stream, radius, step_cap, sigma=0.01):
    """Advance ``state`` until ``|position| >= radius`` or ``step_cap`` steps.

    Returns ``(new_state, hit)``.  ``sigma`` is the Gaussian per-coordinate
    step sd and is ignored by the lattice backend.
    """
    if not radius > state.norm:
        raise InvalidParameterError(f"radius {radius} must exceed current |position| {state.norm}")
    if step_cap <= 0:
        raise InvalidParameterError("step_cap must be positive")
    r2 = float(radius) ** 2
    if state.backend == LATTICE:
        if radius >= COORD_LIMIT:
            raise InvalidParameterError("radius beyond packable lattice range")
        pos = np.array(state.position, dtype=np.int64)
        steps, hit = _lattice_run(pos, stream.state, r2, int(step_cap))
    else:
        if not sigma > 0:
            raise InvalidParameterError("sigma must be positive")
        pos = np.array(state.position, dtype=np.float64)
        steps, hit = _gauss_run(pos, stream.state, float(sigma), r2, int(step_cap))
    return WalkState(tuple(pos.tolist()), state.steps_taken + int(steps), state.backend), bool(hit)


@njit(cache=True, nogil=True)
def _hitting_steps_bulk(seed, base, trials, backend_gauss, sigma, radius, cap, out_steps, out_hit):
    st = np.zeros(rng.STATE_SIZE, dtype=np.uint64)
    r2 = radius * radius
    for t in range(trials):
        rng.init_state(st, seed, np.uint64(base + t))
        if backend_gauss:
            pos = np.zeros(3)
            s, h = _gauss_run(pos, st, sigma, r2, cap)
        else:
            ipos = np.zeros(3, dtype=np.int64)
            s, h = _lattice_run(ipos, st, r2, cap)
        out_steps[t] = s
        out_hit[t] = h


def hitting_steps(seed, trials, radius, step_cap, backend=LATTICE, sigma=0.01):
    """Independent runs from the origin to ``radius``; returns (steps, hit) arrays."""
    steps = np.zeros(trials, dtype=np.int64)
    hit = np.zeros(trials, dtype=np.bool_)
    _hitting_steps_bulk(np.uint64(seed), trial_stream_base(TAG_RADIUS), trials,
                        backend == GAUSSIAN, float(sigma), float(radius), int(step_cap), steps, hit)
    return steps, hit


@njit(cache=True, nogil=True)
def _martingale_bulk(seed, base, trials, nsteps, out):
    st = np.zeros(rng.STATE_SIZE, dtype=np.uint64)
    pos = np.zeros(3, dtype=np.int64)
    for t in range(trials):
        rng.init_state(st, seed, np.uint64(base + t))
        pos[:] = 0
        for _ in range(nsteps):
            lattice_step(st, pos)
        out[t, :] = pos


def lattice_endpoints(seed, trials, nsteps):
    """Positions of ``trials`` independent lattice walks after ``nsteps`` steps."""
    out = np.zeros((trials, 3), dtype=np.int64)
    _martingale_bulk(np.uint64(seed), trial_stream_base(TAG_MARTINGALE), trials, nsteps, out)
    return out


# -- gambler's ruin --------------------------------------------------------

@njit(cache=True, nogil=True)
def _ruin(state, start_x, n, gauss, sigma):
    if gauss:
        x = float(start_x)
        while True:
            g0, _ = rng.normal_pair(state)
            x += sigma * g0
            if x <= 0.0:
                return False
            if x >= n:
                return True
    pos = np.zeros(3, dtype=np.int64)
    pos[0] = start_x
    while True:
        lattice_step(state, pos)
        if pos[0] <= 0:
            return False
        if pos[0] >= n:
            return True


@njit(cache=True, nogil=True)
def _ruin_bulk(seed, base, trials, start_x, n, gauss, sigma):
    st = np.zeros(rng.STATE_SIZE, dtype=np.uint64)
    wins = 0
    for t in range(trials):
        rng.init_state(st, seed, np.uint64(base + t))
        if _ruin(st, start_x, n, gauss, sigma):
            wins += 1
    return wins


def _check_ruin(start_x, n):
    if start_x < 1 or n <= start_x:
        raise InvalidParameterError("need 1 <= start_x < n")


def gamblers_ruin_trial(start_x, n, stream, backend=LATTICE, sigma=0.01):
    """True iff the walk started at x=start_x reaches the plane x=n before x=0."""
    _check_ruin(start_x, n)
    return bool(_ruin(stream.state, int(start_x), int(n), backend == GAUSSIAN, float(sigma)))


def gamblers_ruin_successes(seed, trials, n, start_x=1, backend=LATTICE, sigma=0.01):
    _check_ruin(start_x, n)
    return int(_ruin_bulk(np.uint64(seed), trial_stream_base(TAG_RUIN) + (n << 24), trials,
                          int(start_x), int(n), backend == GAUSSIAN, float(sigma)))


# -- hitting a small ball ----------------------------------------------------

@njit(cache=True, nogil=True)
def _ball_hit(state, k, sigma, escape, eta, bridge):
    if k <= 0.0:
        return True
    a = np.exp(-k)
    g0, g1 = rng.normal_pair(state)
    g2, _ = rng.normal_pair(state)
    nrm = np.sqrt(g0 * g0 + g1 * g1 + g2 * g2)
    p = np.array([g0 / nrm, g1 / nrm, g2 / nrm])
    inc = np.empty(3)
    floor = sigma * a
    while True:
        r = np.sqrt(p[0] * p[0] + p[1] * p[1] + p[2] * p[2])
        if r <= a:
            return True
        if r >= escape:
            return False
        s = eta * (r - a)
        if s < floor:
            s = floor
        rng.gaussian3_into(state, s, inc)
        p += inc
        if bridge:
            r2 = np.sqrt(p[0] * p[0] + p[1] * p[1] + p[2] * p[2])
            if r2 > a and rng.next_double(state) < np.exp(-2.0 * (r - a) * (r2 - a) / (s * s)):
                return True


@njit(cache=True, nogil=True)
def _ball_bulk(seed, base, trials, k, sigma, escape, eta, bridge):
    st = np.zeros(rng.STATE_SIZE, dtype=np.uint64)
    hits = 0
    for t in range(trials):
        rng.init_state(st, seed, np.uint64(base + t))
        if _ball_hit(st, k, sigma, escape, eta, bridge):
            hits += 1
    return hits


def _check_ball(k, sigma, escape_radius):
    if k < 0:
        raise InvalidParameterError("k must be non-negative")
    if not 0 < sigma <= 0.01:
        raise InvalidParameterError("sigma must lie in (0, 0.01]")
    if escape_radius < math.exp(5) * (1 - 1e-12):
        raise InvalidParameterError("escape_radius must be at least e**5")


def ball_hitting_trial(k, stream, escape_radius=math.exp(5), sigma=0.01, bridge=True):
    """Gaussian walker from a uniform point of the unit sphere; True iff it enters
    the ball of radius e**-k before leaving radius ``escape_radius``."""
    _check_ball(k, sigma, escape_radius)
    return bool(_ball_hit(stream.state, float(k), float(sigma), float(escape_radius), ADAPTIVE_ETA, bridge))


def ball_hitting_successes(seed, trials, k, escape_radius=math.exp(5), sigma=0.01, bridge=True):
    _check_ball(k, sigma, escape_radius)
    return int(_ball_bulk(np.uint64(seed), trial_stream_base(TAG_BALL), trials, float(k),
                          float(sigma), float(escape_radius), ADAPTIVE_ETA, bridge))


def ball_truncation_law(k, escape_radius):
    """Exact probability for Brownian motion from the unit sphere to hit radius
    e**-k before radius ``escape_radius``."""
    a = math.exp(-k)
    return (1 - 1 / escape_radius) / (1 / a - 1 / escape_radius)


# -- cones --------------------------------------------------------------------

@njit(cache=True, nogil=True)
def cone_boundary_distance(p, axis, half_angle):
    r = np.sqrt(p[0] * p[0] + p[1] * p[1] + p[2] * p[2])
    if r == 0.0:
        return 0.0
    c = (p[0] * axis[0] + p[1] * axis[1] + p[2] * axis[2]) / r
    c = min(1.0, max(-1.0, c))
    gap = half_angle - np.arccos(c)
    if gap <= 0.0:
        return -1.0
    if gap >= np.pi / 2:
        return r
    return r * np.sin(gap)


@njit(cache=True, nogil=True)
def cone_advance(state, p, axis, half_angle, r_out, sigma, eta, bridge):
    """Move ``p`` until |p| >= r_out (True) or it leaves the cone (False)."""
    inc = np.empty(3)
    free = half_angle >= np.pi
    while True:
        r = np.sqrt(p[0] * p[0] + p[1] * p[1] + p[2] * p[2])
        if r >= r_out:
            return True
        dc = r_out - r
        if free:
            d = dc
        else:
            dc = cone_boundary_distance(p, axis, half_angle)
            if dc < 0.0:
                return False
            d = min(dc, r_out - r)
        s = eta * d
        if s < sigma * r:
            s = sigma * r
        rng.gaussian3_into(state, s, inc)
        p += inc
        if bridge and not free:
            d2 = cone_boundary_distance(p, axis, half_angle)
            if d2 > 0.0 and rng.next_double(state) < np.exp(-2.0 * dc * d2 / (s * s)):
                return False


@njit(cache=True, nogil=True)
def _cone_shells(state, axis, half_angle, n, sigma, eta, bridge):
    p = axis.copy()
    for j in range(1, n + 1):
        if not cone_advance(state, p, axis, half_angle, np.exp(j), sigma, eta, bridge):
            return j - 1
    return n


@njit(cache=True, nogil=True)
def _cone_bulk(seed, base, trials, axis, half_angle, n, sigma, eta, bridge, out):
    st = np.zeros(rng.STATE_SIZE, dtype=np.uint64)
    for t in range(trials):
        rng.init_state(st, seed, np.uint64(base + t))
        out[t] = _cone_shells(st, axis, half_angle, n, sigma, eta, bridge)


def cone_survival_trial(cone, n, stream, sigma=0.01, bridge=True):
    """True iff a Gaussian walker from the axis point at radius 1 stays in the
    cone until it first reaches radius e**n."""
    if n < 0:
        raise InvalidParameterError("n must be non-negative")
    axis = np.array(cone.axis)
    return int(_cone_shells(stream.state, axis, float(cone.half_angle), int(n),
                            float(sigma), ADAPTIVE_ETA, bridge)) == n


def cone_survival_fractions(cone, n_max, trials, seed, sigma=0.01, bridge=True):
    """Fraction of trials still inside the cone at radius e**j, for j = 1..n_max."""
    out = np.zeros(trials, dtype=np.int64)
    _cone_bulk(np.uint64(seed), trial_stream_base(TAG_CONE), trials, np.array(cone.axis),
               float(cone.half_angle), int(n_max), float(sigma), ADAPTIVE_ETA, bridge, out)
    return np.array([(out >= j).mean() for j in range(1, n_max + 1)])


def fit_log_survival(ns, fractions):
    """Least-squares slope of -log(survival) on n; returns (alpha, r_squared)."""
    ns = np.asarray(ns, dtype=float)
    y = np.log(np.asarray(fractions, dtype=float))
    slope, intercept = np.polyfit(ns, y, 1)
    resid = y - (slope * ns + intercept)
    ss_tot = float(((y - y.mean()) ** 2).sum())
    r2 = 1.0 - float((resid ** 2).sum()) / ss_tot if ss_tot > 0 else 1.0
    return -float(slope), r2
