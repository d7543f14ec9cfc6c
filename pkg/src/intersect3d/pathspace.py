"""Pairs of lattice curves from the origin to an outer sphere, and the shell
extension chain on them.

Coordinates are integer lattice sites.  ``unit`` is the current outer radius
in lattice units: every geometric predicate measures radii relative to it.

Two extension modes exist:

* ``rescale=False`` keeps coordinates fixed and lets ``unit`` grow by e per
  shell.  Exact, but the cost of one shell grows like e**(2n).
* ``rescale=True`` (the default) shrinks the extended pair by e and rounds it
  back onto the lattice, so ``unit`` stays at the base radius and every shell
  costs the same.  Rounding maps a unit lattice step to at most one unit step,
  so coarsened curves remain nearest-neighbour paths.  Sites that merge under
  rounding are not re-tested; disjointness is decided at the resolution at
  which the new sites were generated.
"""
import json
import math
import struct
from dataclasses import dataclass, field, replace

import numpy as np
from numba import njit

from . import sites
from .errors import InvalidParameterError, InvalidStateError, ResolutionError
from .walks import ShellConfig, lattice_step

E = math.e
SEP_OUTER = 1.0
SEP_INNER = math.exp(-0.5)
SEP_BODY = math.exp(-1 / 8)
SEP_ENTRY = math.exp(-1 / 16)
MIN_RESOLVED = 2.0
FORMAT_VERSION = 1
_MAGIC = b"CPR1"

_OK, _DEAD, _FULL, _CAPPED, _MORE = 0, 1, 2, 3, 4


def _as_points(points):
    arr = np.ascontiguousarray(np.asarray(points, dtype=np.int32))
    if arr.ndim != 2 or arr.shape[1] != 3 or arr.shape[0] < 1:
        raise InvalidParameterError("a curve needs an (L, 3) array of lattice sites")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class Curve:
    points: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "points", _as_points(self.points))
        if self.points[0].any():
            raise InvalidStateError("a curve must start at the origin")

    def __len__(self):
        return self.points.shape[0]

    def __eq__(self, other):
        return isinstance(other, Curve) and np.array_equal(self.points, other.points)

    @property
    def endpoint(self):
        return self.points[-1]

    def radii(self):
        return np.sqrt((self.points.astype(np.float64) ** 2).sum(axis=1))

    def crossing_index(self, radius):
        """Index of the first site at distance >= radius, or None."""
        hits = np.flatnonzero(self.radii() >= radius)
        return int(hits[0]) if hits.size else None

    def crossing_log(self, unit):
        """First-crossing indices of radii unit * e**-j for j = 0, 1, ... while
        the radius stays resolvable; indices decrease with j."""
        out = []
        j = 0
        while unit * math.exp(-j) >= MIN_RESOLVED:
            idx = self.crossing_index(unit * math.exp(-j))
            if idx is None:
                break
            out.append(idx)
            j += 1
        return out


@dataclass(frozen=True, eq=False)
class CurvePair:
    a: Curve
    b: Curve
    shell_index: int = 0
    shell_config: ShellConfig = field(default_factory=ShellConfig)
    alive: bool = True
    unit: float = None
    rescaled: bool = True

    def __post_init__(self):
        if self.unit is None:
            object.__setattr__(self, "unit", float(self.shell_config.base_radius))

    def __eq__(self, other):
        return (isinstance(other, CurvePair) and self.a == other.a and self.b == other.b
                and self.shell_index == other.shell_index and self.alive == other.alive
                and self.unit == other.unit)

    def disjoint(self):
        sa = {tuple(p) for p in self.a.points.tolist()} - {(0, 0, 0)}
        sb = {tuple(p) for p in self.b.points.tolist()} - {(0, 0, 0)}
        return not (sa & sb)


# -- initial configurations -------------------------------------------------

def lattice_geodesic(start, target):
    """Nearest-neighbour path from ``start`` to ``target`` tracking the straight segment.

    At each step the coordinate lagging furthest behind its share of the
    segment moves; ties go to the lowest axis.
    """
    start = np.asarray(start, dtype=np.int64)
    target = np.asarray(target, dtype=np.int64)
    delta = target - start
    total = int(np.abs(delta).sum())
    pts = [start.copy()]
    cur = start.copy()
    done = np.zeros(3, dtype=np.int64)
    for s in range(1, total + 1):
        lag = np.abs(delta) * s / total - done
        j = int(np.argmax(lag))
        done[j] += 1
        cur[j] += 1 if delta[j] > 0 else -1
        pts.append(cur.copy())
    return np.array(pts)


def _truncate(pts, radius):
    r = np.sqrt((pts.astype(np.float64) ** 2).sum(axis=1))
    hits = np.flatnonzero(r >= radius)
    if not hits.size:
        raise InvalidParameterError("curve does not reach the outer radius")
    return pts[: hits[0] + 1]


def _make_pair(pa, pb, config):
    pair = CurvePair(Curve(pa), Curve(pb), 0, config)
    if not pair.disjoint():
        raise InvalidStateError("initial curves share a site other than the origin")
    return pair


def initial_pair(kind="diametric-lines", shell_config=None, *, endpoints=None, curves=None,
                 gap=None):
    """Build a shell-0 pair.

    ``kind`` is ``diametric-lines``, ``given-endpoints`` (``endpoints=(w1, w2)``),
    ``explicit`` (``curves=(points_a, points_b)``) or ``angular-gap`` (``gap`` is
    the angle between endpoints as a fraction of pi; curve a runs along +x and
    curve b stays in the half-plane y >= 1 of the xy-plane so the two are
    disjoint even for tiny gaps).
    """
    config = shell_config or ShellConfig()
    R = config.base_radius
    if kind == "diametric-lines":
        n = int(math.ceil(R))
        line = np.zeros((n + 1, 3), dtype=np.int64)
        line[:, 0] = np.arange(n + 1)
        return _make_pair(line, -line, config)
    if kind == "given-endpoints":
        if endpoints is None or len(endpoints) != 2:
            raise InvalidParameterError("given-endpoints needs two endpoints")
        paths = []
        for w in endpoints:
            if math.dist(w, (0, 0, 0)) < R:
                raise InvalidParameterError(f"endpoint {tuple(w)} lies inside the base radius")
            paths.append(_truncate(lattice_geodesic((0, 0, 0), w), R))
        return _make_pair(paths[0], paths[1], config)
    if kind == "explicit":
        if curves is None or len(curves) != 2:
            raise InvalidParameterError("explicit needs two curves")
        return _make_pair(np.asarray(curves[0]), np.asarray(curves[1]), config)
    if kind == "angular-gap":
        if gap is None or not 0 < gap <= 1:
            raise InvalidParameterError("gap must lie in (0, 1]")
        theta = gap * math.pi
        a = initial_pair("diametric-lines", config).a.points
        far = R + 2
        w = (int(round(far * math.cos(theta))), max(1, int(round(far * math.sin(theta)))), 0)
        tail = lattice_geodesic((0, 1, 0), w)
        b = _truncate(np.vstack([np.zeros((1, 3), dtype=np.int64), tail]), R)
        return _make_pair(a, b, config)
    raise InvalidParameterError(f"unknown initial pair kind {kind!r}")


def endpoint_angle(pair):
    ea = pair.a.endpoint.astype(float)
    eb = pair.b.endpoint.astype(float)
    c = ea @ eb / (np.linalg.norm(ea) * np.linalg.norm(eb))
    return math.acos(max(-1.0, min(1.0, c)))


# -- extension kernel -----------------------------------------------------------

@njit(cache=True, nogil=True)
def _grow(buf, n):
    if n < buf.shape[0]:
        return buf
    out = np.empty((buf.shape[0] * 2, 3), dtype=np.int32)
    out[:n] = buf[:n]
    return out


@njit(cache=True, nogil=True)
def _start(pts):
    pos = np.empty(3, dtype=np.int64)
    pos[0] = pts[-1, 0]
    pos[1] = pts[-1, 1]
    pos[2] = pts[-1, 2]
    return pos


@njit(cache=True, nogil=True)
def _walk_hash(pos, state, r2, own_k, own_s, other_k, other_s, gen, load_cap, count, buf, nb,
               steps, cap):
    while pos[0] * pos[0] + pos[1] * pos[1] + pos[2] * pos[2] < r2:
        if nb == buf.shape[0]:
            return _MORE, nb, steps, count
        if steps >= cap:
            return _CAPPED, nb, steps, count
        lattice_step(state, pos)
        steps += 1
        if not sites.in_range(pos[0], pos[1], pos[2]):
            return _CAPPED, nb, steps, count
        buf[nb, 0] = pos[0]
        buf[nb, 1] = pos[1]
        buf[nb, 2] = pos[2]
        nb += 1
        if pos[0] == 0 and pos[1] == 0 and pos[2] == 0:
            continue
        key = sites.pack(pos[0], pos[1], pos[2])
        if sites.contains(other_k, other_s, gen, key):
            return _DEAD, nb, steps, count
        if sites.insert(own_k, own_s, gen, key):
            count += 1
            if count > load_cap:
                return _FULL, nb, steps, count
    return _OK, nb, steps, count


@njit(cache=True, nogil=True)
def _attach(pts, state, r2, own_k, own_s, other_k, other_s, gen, load_cap, count, cap):
    """Walk from pts[-1] until |x|^2 >= r2; returns (status, new sites, n new, count)."""
    buf = np.empty((1024, 3), dtype=np.int32)
    pos = _start(pts)
    nb = 0
    steps = 0
    while True:
        st, nb, steps, count = _walk_hash(pos, state, r2, own_k, own_s, other_k, other_s, gen,
                                          load_cap, count, buf, nb, steps, cap)
        if st != _MORE:
            return st, buf, nb, count
        buf = _grow(buf, nb)


@njit(cache=True, nogil=True)
def _extend_kernel(pa, pb, r_out, state_a, state_b, ka, sa, kb, sb, gen, cap):
    load_cap = ka.shape[0] // 2
    sites.fill_from_points(ka, sa, gen, pa)
    sites.fill_from_points(kb, sb, gen, pb)
    r2 = r_out * r_out
    st, new_a, na, count = _attach(pa, state_a, r2, ka, sa, kb, sb, gen, load_cap,
                                   pa.shape[0], cap)
    empty = np.empty((0, 3), dtype=np.int32)
    if st != _OK:
        return st, empty, empty
    st, new_b, nb, count = _attach(pb, state_b, r2, kb, sb, ka, sa, gen, load_cap,
                                   pb.shape[0], cap)
    if st != _OK:
        return st, empty, empty
    out_a = np.empty((pa.shape[0] + na, 3), dtype=np.int32)
    out_a[: pa.shape[0]] = pa
    out_a[pa.shape[0]:] = new_a[:na]
    out_b = np.empty((pb.shape[0] + nb, 3), dtype=np.int32)
    out_b[: pb.shape[0]] = pb
    out_b[pb.shape[0]:] = new_b[:nb]
    return _OK, out_a, out_b


# Dense occupancy grid, used when the bounding box is small.  A byte cell holds
# (generation << 2) | owner bits, with bit 1 for curve a and bit 2 for curve b;
# generations run 1..63 and the grid is cleared when they wrap.

GRID_MAX_CELLS = 1 << 26


@njit(cache=True, nogil=True, inline='always')
def _gidx(x, y, z, side, off):
    return ((x + off) * side + (y + off)) * side + (z + off)


@njit(cache=True, nogil=True)
def _grid_fill(grid, side, off, tag, pts, own):
    for i in range(pts.shape[0]):
        x, y, z = np.int64(pts[i, 0]), np.int64(pts[i, 1]), np.int64(pts[i, 2])
        if x == 0 and y == 0 and z == 0:
            continue
        idx = _gidx(x, y, z, side, off)
        v = grid[idx]
        grid[idx] = ((v & np.uint8(3)) if (v ^ tag) < 4 else np.uint8(0)) | tag | own


@njit(cache=True, nogil=True)
def _walk_grid(pos, state, r2, grid, side, off, tag, own, other, buf, nb, steps, cap):
    while pos[0] * pos[0] + pos[1] * pos[1] + pos[2] * pos[2] < r2:
        if nb == buf.shape[0]:
            return _MORE, nb, steps
        if steps >= cap:
            return _CAPPED, nb, steps
        lattice_step(state, pos)
        steps += 1
        buf[nb, 0] = pos[0]
        buf[nb, 1] = pos[1]
        buf[nb, 2] = pos[2]
        nb += 1
        if pos[0] == 0 and pos[1] == 0 and pos[2] == 0:
            continue
        idx = _gidx(pos[0], pos[1], pos[2], side, off)
        v = grid[idx]
        live = (v ^ tag) < 4
        if live and (v & other) != 0:
            return _DEAD, nb, steps
        grid[idx] = ((v & np.uint8(3)) if live else np.uint8(0)) | tag | own
    return _OK, nb, steps


@njit(cache=True, nogil=True)
def _attach_grid(pts, state, r2, grid, side, off, tag, own, other, cap):
    buf = np.empty((1024, 3), dtype=np.int32)
    pos = _start(pts)
    nb = 0
    steps = 0
    while True:
        st, nb, steps = _walk_grid(pos, state, r2, grid, side, off, tag, own, other, buf, nb,
                                   steps, cap)
        if st != _MORE:
            return st, buf, nb
        buf = _grow(buf, nb)


@njit(cache=True, nogil=True)
def _extend_grid(pa, pb, r_out, state_a, state_b, grid, side, gen, cap):
    off = side // 2
    tag = np.uint8(gen << 2)
    _grid_fill(grid, side, off, tag, pa, np.uint8(1))
    _grid_fill(grid, side, off, tag, pb, np.uint8(2))
    r2 = r_out * r_out
    empty = np.empty((0, 3), dtype=np.int32)
    st, new_a, na = _attach_grid(pa, state_a, r2, grid, side, off, tag, np.uint8(1),
                                 np.uint8(2), cap)
    if st != _OK:
        return st, empty, empty
    st, new_b, nb = _attach_grid(pb, state_b, r2, grid, side, off, tag, np.uint8(2),
                                 np.uint8(1), cap)
    if st != _OK:
        return st, empty, empty
    out_a = np.empty((pa.shape[0] + na, 3), dtype=np.int32)
    out_a[: pa.shape[0]] = pa
    out_a[pa.shape[0]:] = new_a[:na]
    out_b = np.empty((pb.shape[0] + nb, 3), dtype=np.int32)
    out_b[: pb.shape[0]] = pb
    out_b[pb.shape[0]:] = new_b[:nb]
    return _OK, out_a, out_b


@njit(cache=True, nogil=True)
def coarsen(pts, factor):
    """Shrink by ``factor``, round to the lattice, drop consecutive repeats."""
    out = np.empty_like(pts)
    inv = 1.0 / factor
    n = 0
    for i in range(pts.shape[0]):
        x = np.int32(np.floor(pts[i, 0] * inv + 0.5))
        y = np.int32(np.floor(pts[i, 1] * inv + 0.5))
        z = np.int32(np.floor(pts[i, 2] * inv + 0.5))
        if n > 0 and out[n - 1, 0] == x and out[n - 1, 1] == y and out[n - 1, 2] == z:
            continue
        out[n, 0] = x
        out[n, 1] = y
        out[n, 2] = z
        n += 1
    return out[:n].copy()


@njit(cache=True, nogil=True)
def _max_abs(pts):
    m = 0
    for i in range(pts.shape[0]):
        for j in range(3):
            m = max(m, abs(np.int64(pts[i, j])))
    return m


@njit(cache=True, nogil=True)
def _max_norm2(pts):
    m = 0
    for i in range(pts.shape[0]):
        x, y, z = np.int64(pts[i, 0]), np.int64(pts[i, 1]), np.int64(pts[i, 2])
        m = max(m, x * x + y * y + z * z)
    return m


class _Scratch:
    """Reusable site tables and occupancy grid for the extension kernels.

    Not thread-safe: give each worker its own instance.
    """

    def __init__(self, n_sites=1 << 14):
        self.tables = None
        self.cap = 0
        self.gen = 0
        self._alloc(n_sites)
        self.grid = np.zeros(0, dtype=np.int32)
        self.side = 0
        self.grid_gen = 0

    def _alloc(self, n_sites):
        cap = sites.capacity_for(n_sites)
        self.tables = (sites.new_table(cap), sites.new_table(cap))
        self.cap = cap
        self.gen = 0

    def grow(self):
        self._alloc(self.cap)

    def next_gen(self, n_sites):
        if n_sites * 2 > self.cap:
            self._alloc(n_sites * 2)
        self.gen += 1
        return self.gen

    def grid_for(self, r_out):
        """Grid covering |x|_inf <= ceil(r_out) + 1, or None if too large."""
        side = 2 * (int(math.ceil(r_out)) + 2) + 1
        if side ** 3 > GRID_MAX_CELLS:
            return None
        if side > self.side:
            self.grid = np.zeros(side ** 3, dtype=np.uint8)
            self.side = side
            self.grid_gen = 0
        self.grid_gen += 1
        if self.grid_gen >= 64:
            self.grid[:] = 0
            self.grid_gen = 1
        return self.grid_gen


_default_scratch = _Scratch()


def extend_points(pa, pb, r_out, state_a, state_b, scratch=None):
    """Attach walks to both curves until radius ``r_out``.

    Returns (alive, new_a, new_b); the stream states are consumed.  If a site
    table fills up the attempt is replayed from saved stream states with a
    larger table, so results never depend on table size.
    """
    scratch = scratch or _default_scratch
    cap = int(1000 * r_out * r_out) + 1_000_000
    reach = max(_max_abs(pa), _max_abs(pb))
    gen = scratch.grid_for(r_out) if reach <= math.ceil(r_out) + 1 else None
    if gen is not None:
        st, out_a, out_b = _extend_grid(pa, pb, float(r_out), state_a, state_b,
                                        scratch.grid, scratch.side, gen, cap)
        if st == _CAPPED:
            raise InvalidStateError("extension exceeded its step cap")
        return st == _OK, out_a, out_b
    saved = (state_a.copy(), state_b.copy())
    while True:
        gen = scratch.next_gen(pa.shape[0] + pb.shape[0] + 64)
        (ka, sa), (kb, sb) = scratch.tables
        st, out_a, out_b = _extend_kernel(pa, pb, float(r_out), state_a, state_b,
                                          ka, sa, kb, sb, np.int64(gen), cap)
        if st == _FULL:
            state_a[:] = saved[0]
            state_b[:] = saved[1]
            scratch.grow()
            continue
        if st == _CAPPED:
            raise InvalidStateError("extension exceeded its step cap or coordinate range")
        return st == _OK, out_a, out_b


def extend_one_shell(pair, streams, rescale=None, scratch=None):
    """Extend both curves to the next shell; the result is dead if they meet.

    ``streams`` is a pair of ``RandomStream`` (or raw state arrays), one per curve.
    """
    if not pair.alive:
        raise InvalidStateError("cannot extend a dead pair")
    rescale = pair.rescaled if rescale is None else rescale
    sa, sb = (getattr(s, "state", s) for s in streams)
    alive, na, nb = extend_points(pair.a.points, pair.b.points, pair.unit * E, sa, sb, scratch)
    if not alive:
        return replace(pair, shell_index=pair.shell_index + 1, alive=False)
    if rescale:
        na, nb = coarsen(na, E), coarsen(nb, E)
        unit = pair.unit
    else:
        unit = pair.unit * E
    return CurvePair(Curve(na), Curve(nb), pair.shell_index + 1, pair.shell_config, True,
                     unit, rescale)


# -- separation event ----------------------------------------------------------

@njit(cache=True, nogil=True)
def _sep_curve(pts, unit, sign, axis):
    runmax = 0.0
    for i in range(pts.shape[0]):
        x = sign * pts[i, axis] / unit
        r = np.sqrt(float(pts[i, 0]) ** 2 + float(pts[i, 1]) ** 2 + float(pts[i, 2]) ** 2) / unit
        new_max = r > runmax
        if new_max:
            runmax = r
        if runmax < SEP_INNER:
            continue
        rho = min(runmax, SEP_OUTER)
        if x < SEP_BODY * rho:
            return False
        if new_max and x < SEP_ENTRY * min(r, SEP_OUTER):
            return False
    return True


def _check_span(pair_or_tail):
    for pts in (pair_or_tail.a.points, pair_or_tail.b.points):
        if math.sqrt(_max_norm2(pts)) < pair_or_tail.unit - 1:
            raise InvalidStateError("curve does not span the separation annulus")


def sep_test(pair, axis=0):
    """Curve a in the +x separation region and curve b in the -x one.

    With rho(i) the running maximum of |gamma|/unit clamped to
    [e**-0.5, 1], every site past the first visit to radius e**-0.5 must have
    x/unit >= e**(-1/8) rho(i), and each site that raises the running maximum
    must have x/unit >= e**(-1/16) |gamma|/unit (x replaced by -x for curve b).
    ``axis`` = 1 or 2 measures along y or z instead; experiments use x.
    """
    if axis not in (0, 1, 2):
        raise InvalidParameterError(f"axis must be 0, 1 or 2, got {axis!r}")
    _check_span(pair)
    unit = float(pair.unit)
    return bool(_sep_curve(pair.a.points, unit, 1.0, axis)
                and _sep_curve(pair.b.points, unit, -1.0, axis))


# -- truncation -----------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class PairTail:
    """Suffixes of both curves, with the unit they are measured against."""

    a: np.ndarray
    b: np.ndarray
    unit: float
    depth: int

    def __eq__(self, other):
        return (isinstance(other, PairTail) and np.array_equal(self.a, other.a)
                and np.array_equal(self.b, other.b))


def resolvable_depth(unit):
    return int(math.floor(math.log(unit / MIN_RESOLVED)))


def _first_at(pts, radius):
    r = np.sqrt((np.asarray(pts, dtype=np.float64) ** 2).sum(axis=1))
    hits = np.flatnonzero(r >= radius)
    if hits.size:
        return int(hits[0])
    # rounding after rescaling can leave the tip up to one unit short of the sphere
    if r.max() >= radius - 1:
        return int(np.argmax(r))
    raise InvalidStateError(f"curve never reaches radius {radius}")


def pi_k(pair, k):
    """Suffix of each curve from its first visit to radius unit * e**-k."""
    if k < 0:
        raise InvalidParameterError("k must be non-negative")
    radius = pair.unit * math.exp(-k)
    if radius < MIN_RESOLVED:
        raise ResolutionError(f"depth {k} resolves below {MIN_RESOLVED} lattice units")
    pa = pair.a.points if isinstance(pair, CurvePair) else pair.a
    pb = pair.b.points if isinstance(pair, CurvePair) else pair.b
    return PairTail(pa[_first_at(pa, radius):], pb[_first_at(pb, radius):], pair.unit, k)


def eq_k(pair1, pair2, k):
    return pi_k(pair1, k) == pi_k(pair2, k)


# -- serialisation ----------------------------------------------------------------

def to_bytes(pair):
    """Versioned binary record: header, then per curve a length prefix and
    int8 coordinate deltas from the origin."""
    head = struct.pack("<4sHiddB", _MAGIC, FORMAT_VERSION, pair.shell_index,
                       float(pair.shell_config.base_radius), float(pair.unit),
                       (1 if pair.alive else 0) | (2 if pair.rescaled else 0))
    body = []
    for c in (pair.a, pair.b):
        d = np.diff(c.points.astype(np.int64), axis=0)
        if d.size and np.abs(d).max() > 127:
            raise InvalidParameterError("curve step too large for delta encoding")
        body.append(struct.pack("<I", len(d)) + d.astype(np.int8).tobytes())
    return head + b"".join(body)


def from_bytes(blob, shell_config=None):
    size = struct.calcsize("<4sHiddB")
    magic, version, n, base, unit, flags = struct.unpack_from("<4sHiddB", blob)
    if magic != _MAGIC or version != FORMAT_VERSION:
        raise InvalidParameterError("not a curve-pair record of a known version")
    off = size
    curves = []
    for _ in range(2):
        (L,) = struct.unpack_from("<I", blob, off)
        off += 4
        d = np.frombuffer(blob, dtype=np.int8, count=3 * L, offset=off).reshape(L, 3)
        off += 3 * L
        curves.append(Curve(np.vstack([np.zeros((1, 3)), np.cumsum(d, axis=0)])))
    config = shell_config or ShellConfig(base, min_base_radius=min(base, 32.0))
    return CurvePair(curves[0], curves[1], n, config, bool(flags & 1), unit, bool(flags & 2))


def to_json(pair):
    return json.dumps({
        "version": FORMAT_VERSION,
        "shell_index": pair.shell_index,
        "base_radius": pair.shell_config.base_radius,
        "unit": pair.unit,
        "alive": pair.alive,
        "rescaled": pair.rescaled,
        "a": pair.a.points.tolist(),
        "b": pair.b.points.tolist(),
    })


def from_json(text):
    d = json.loads(text)
    if d.get("version") != FORMAT_VERSION:
        raise InvalidParameterError("unknown curve-pair JSON version")
    base = d["base_radius"]
    config = ShellConfig(base, min_base_radius=min(base, 32.0))
    return CurvePair(Curve(d["a"]), Curve(d["b"]), d["shell_index"], config, d["alive"],
                     d["unit"], d["rescaled"])
