import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from intersect3d import pathspace, rng
from intersect3d.errors import InvalidParameterError, InvalidStateError, ResolutionError
from intersect3d.pathspace import Curve, CurvePair, initial_pair
from intersect3d.splitting import direct_survival
from intersect3d.walks import ShellConfig

CFG = ShellConfig(32.0)
MOVES = np.array([(1, 0, 0), (-1, 0, 0), (0, 1, 0), (0, -1, 0), (0, 0, 1), (0, 0, -1)])


def _states(seed, sid):
    sa = rng.derive_stream(rng.SeedSpec(seed, 2 * sid))
    sb = rng.derive_stream(rng.SeedSpec(seed, 2 * sid + 1))
    return sa, sb


def _line(n, axis=0, sign=1):
    pts = np.zeros((n + 1, 3), dtype=np.int64)
    pts[:, axis] = sign * np.arange(n + 1)
    return pts


# -- initial pairs -------------------------------------------------------------------

def test_diametric_lines():
    pair = initial_pair("diametric-lines", ShellConfig(50.0))
    assert pair.alive and pair.disjoint()
    assert pair.a.endpoint.tolist() == [50, 0, 0]
    assert pair.b.endpoint.tolist() == [-50, 0, 0]
    assert pathspace.endpoint_angle(pair) == pytest.approx(math.pi)


def test_given_endpoints_identical_is_invalid():
    with pytest.raises(InvalidStateError):
        initial_pair("given-endpoints", CFG, endpoints=((32, 0, 0), (32, 0, 0)))


def test_given_endpoints_geodesics():
    pair = initial_pair("given-endpoints", CFG, endpoints=((0, 40, 0), (0, 0, -40)))
    for c in (pair.a, pair.b):
        steps = np.abs(np.diff(c.points, axis=0)).sum(axis=1)
        assert np.all(steps == 1)
        assert c.radii()[-1] >= 32 > c.radii()[-2]
    with pytest.raises(InvalidParameterError):
        initial_pair("given-endpoints", CFG, endpoints=((5, 0, 0), (0, 40, 0)))


def test_explicit_sharing_a_site_is_invalid():
    a = _line(32)
    b = np.vstack([[0, 0, 0], [0, 1, 0], [1, 1, 0], [2, 1, 0], [3, 1, 0], [3, 0, 0],
                   [3, -1, 0], [3, -2, 0]])
    with pytest.raises(InvalidStateError):
        initial_pair("explicit", CFG, curves=(a, b))


def test_curves_must_start_at_origin():
    with pytest.raises(InvalidStateError):
        Curve(np.array([[1, 0, 0], [2, 0, 0]]))


@pytest.mark.parametrize("gap", [0.5, 0.1, 0.01])
def test_angular_gap_pairs(gap):
    pair = initial_pair("angular-gap", CFG, gap=gap)
    assert pair.alive and pair.disjoint()
    assert pathspace.endpoint_angle(pair) == pytest.approx(gap * math.pi, abs=0.1)
    with pytest.raises(InvalidParameterError):
        initial_pair("angular-gap", CFG, gap=0)


def test_unknown_kind():
    with pytest.raises(InvalidParameterError):
        initial_pair("spiral", CFG)


def test_crossing_log_indices_decrease_with_depth():
    log = initial_pair("diametric-lines", CFG).a.crossing_log(32.0)
    assert log[0] == 32
    assert all(a > b for a, b in zip(log, log[1:]))


# -- extension -------------------------------------------------------------------------

def test_dead_pair_cannot_be_extended():
    pair = initial_pair("diametric-lines", CFG)
    dead = pathspace.extend_one_shell(pair, _states(1, 0))
    while dead.alive:
        dead = pathspace.extend_one_shell(dead, _states(1, dead.shell_index))
    with pytest.raises(InvalidStateError):
        pathspace.extend_one_shell(dead, _states(1, 99))


def test_unrescaled_extension_reaches_next_shell_and_is_disjoint():
    pair = initial_pair("diametric-lines", CFG)
    pair = CurvePair(pair.a, pair.b, 0, CFG, rescaled=False)
    n_alive = 0
    for sid in range(60):
        out = pathspace.extend_one_shell(pair, _states(5, sid))
        assert out.shell_index == 1
        if not out.alive:
            continue
        n_alive += 1
        assert out.disjoint()
        assert out.unit == pytest.approx(32 * math.e)
        for new, old in ((out.a, pair.a), (out.b, pair.b)):
            assert np.array_equal(new.points[: len(old)], old.points)
            steps = np.abs(np.diff(new.points, axis=0)).sum(axis=1)
            assert np.all(steps == 1)
            r = new.radii()
            assert r[-1] >= out.unit and np.all(r[:-1] < out.unit)
    assert 0 < n_alive < 60


def test_touching_curves_die():
    # b starts one site away from a's tip region; nearly every extension meets
    a = _line(32)
    b = np.vstack([[0, 0, 0], [0, 1, 0]] + [[i, 1, 0] for i in range(1, 33)])
    pair = initial_pair("explicit", CFG, curves=(a, b))
    dead = sum(not pathspace.extend_one_shell(pair, _states(6, s)).alive for s in range(100))
    assert dead >= 90


def test_rescaled_extension_keeps_the_unit():
    pair = initial_pair("diametric-lines", CFG)
    out = pathspace.extend_one_shell(pair, _states(2, 3))
    assert out.unit == 32.0 and out.rescaled
    if out.alive:
        assert out.disjoint()
        assert 32 <= out.a.radii()[-1] <= 34


def test_hash_and_grid_backends_agree(monkeypatch):
    pair = initial_pair("diametric-lines", CFG)
    grid = [pathspace.extend_one_shell(pair, _states(8, s), scratch=pathspace._Scratch())
            for s in range(30)]
    monkeypatch.setattr(pathspace, "GRID_MAX_CELLS", 0)
    small = pathspace._Scratch(n_sites=16)  # forces table growth and replay
    hashed = [pathspace.extend_one_shell(pair, _states(8, s), scratch=small) for s in range(30)]
    assert grid == hashed


def test_direct_first_shell_regression():
    initial = initial_pair("diametric-lines", CFG)
    alive, sep = direct_survival(initial, 1, 2024, 0, 2000)
    assert alive.tolist() == REGRESSION_ALIVE
    assert 0 < alive[0] < 2000
    assert direct_survival(initial, 1, 2024, 0, 2000)[0].tolist() == REGRESSION_ALIVE


REGRESSION_ALIVE = [1509]


def test_first_shell_survival_is_scale_stable():
    trials = 2000
    q = []
    for r0 in (16.0, 64.0):
        cfg = ShellConfig(r0, min_base_radius=8.0)
        alive, _ = direct_survival(initial_pair("diametric-lines", cfg), 1, 77, 0, trials)
        q.append(alive[0] / trials)
    se = math.sqrt(sum(p * (1 - p) / trials for p in q))
    assert abs(q[0] - q[1]) <= 3 * se


# -- separation event ----------------------------------------------------------------------

def _pair(a, b, unit=32.0):
    return CurvePair(Curve(a), Curve(b), 0, CFG, True, unit)


def test_sep_diametric_lines():
    assert pathspace.sep_test(initial_pair("diametric-lines", CFG))


def test_sep_same_side_fails():
    assert not pathspace.sep_test(_pair(_line(32), _line(32)))


def test_sep_excursion_below_body_margin_fails():
    R = 1000
    a = _line(R)
    # at rho = 1 (the last site) pull x just below e^(-1/8) * R
    dip = math.floor(math.exp(-1 / 8) * R) - 1
    tail = np.array([[R, 1, 0], [dip, 1, 0], [R, 2, 0]])
    bad = np.vstack([a, tail])
    pair = _pair(bad, -_line(R), unit=float(R))
    assert not pathspace.sep_test(pair)
    ok = np.vstack([a, [[R, 1, 0], [dip + 2, 1, 0], [R, 2, 0]]])
    assert pathspace.sep_test(_pair(ok, -_line(R), unit=float(R)))


def test_sep_entry_margin():
    R = 1000
    # records at x/|gamma| about 0.92: inside the body margin, outside the entry one
    pts = np.vstack([_line(900), [[900, y, 0] for y in range(1, 401)],
                     [[900 + i, 400, 0] for i in range(1, 21)]])
    assert not pathspace.sep_test(_pair(pts, -_line(R), unit=float(R)))


def test_sep_needs_span():
    with pytest.raises(InvalidStateError):
        pathspace.sep_test(_pair(_line(10), -_line(10)))


@st.composite
def curves(draw, R=40):
    moves = draw(st.lists(st.integers(0, 5), min_size=0, max_size=60))
    pts = np.vstack([[0, 0, 0], np.cumsum(MOVES[moves], axis=0)]) if moves else np.zeros((1, 3))
    pts = pts.astype(np.int64)
    end = pts[-1].copy()
    d = draw(st.sampled_from([0, 1, 2]))
    s = draw(st.sampled_from([1, -1]))
    ext = []
    while math.dist(end, (0, 0, 0)) < R:
        end[d] += s
        ext.append(end.copy())
    return np.vstack([pts] + ([np.array(ext)] if ext else []))


@settings(max_examples=80, deadline=None)
@given(curves(), curves())
def test_sep_reflection_symmetry(a, b):
    pair = _pair(a, b, unit=40.0)
    base = pathspace.sep_test(pair)
    flip_y = np.array([1, -1, 1])
    assert pathspace.sep_test(_pair(a * flip_y, b * flip_y, 40.0)) == base
    flip_x = np.array([-1, 1, 1])
    assert pathspace.sep_test(_pair(b * flip_x, a * flip_x, 40.0)) == base


@settings(max_examples=40, deadline=None)
@given(curves(), curves(), st.sampled_from([1, 2]))
def test_sep_axis_is_a_coordinate_permutation(a, b, axis):
    base = pathspace.sep_test(_pair(a, b, unit=40.0))
    swap = [axis if i == 0 else 0 if i == axis else i for i in range(3)]
    assert pathspace.sep_test(_pair(a[:, swap], b[:, swap], 40.0), axis=axis) == base


def test_sep_axis_validated():
    with pytest.raises(InvalidParameterError):
        pathspace.sep_test(initial_pair("diametric-lines", CFG), axis=3)


# -- truncation -------------------------------------------------------------------------------

def _evolved(seed=3, shells=3):
    pair = initial_pair("diametric-lines", CFG)
    sid = 0
    while pair.shell_index < shells:
        nxt = pathspace.extend_one_shell(pair, _states(seed, sid))
        sid += 1
        if nxt.alive:
            pair = nxt
    return pair


def test_pi_zero_is_the_terminal_crossing():
    pair = initial_pair("diametric-lines", CFG)
    tail = pathspace.pi_k(pair, 0)
    assert tail.a.tolist() == [[32, 0, 0]] and tail.b.tolist() == [[-32, 0, 0]]


def test_pi_k_is_a_suffix_and_nests():
    pair = _evolved()
    for k2 in range(1, pathspace.resolvable_depth(pair.unit) + 1):
        deep = pathspace.pi_k(pair, k2)
        for k1 in range(k2 + 1):
            assert pathspace.pi_k(deep, k1) == pathspace.pi_k(pair, k1)
        n = len(deep.a)
        assert np.array_equal(deep.a, pair.a.points[-n:])


def test_pi_k_resolution_limit():
    pair = initial_pair("diametric-lines", CFG)
    assert pathspace.resolvable_depth(32.0) == 2  # 32 e^-2 = 4.3 >= 2 > 32 e^-3
    pathspace.pi_k(pair, 2)
    with pytest.raises(ResolutionError):
        pathspace.pi_k(pair, 3)
    with pytest.raises(InvalidParameterError):
        pathspace.pi_k(pair, -1)


def test_eq_k_reflexive_and_projective():
    p, q = _evolved(3), _evolved(4)
    depth = pathspace.resolvable_depth(p.unit)
    for k in range(depth + 1):
        assert pathspace.eq_k(p, p, k)
    for k in range(depth + 1):
        if pathspace.eq_k(p, q, k):
            assert all(pathspace.eq_k(p, q, j) for j in range(k + 1))


def test_eq_k_ignores_the_inner_part():
    R = 100.0
    a1 = _line(100)
    # same tail beyond radius R e^-1 = 36.8, different route inside it
    inner = np.vstack([[0, 0, 0], [0, 1, 0]] + [[i, 1, 0] for i in range(1, 20)]
                      + [[19, 0, 0]])
    a2 = np.vstack([inner, _line(100)[20:]])
    p1, p2 = _pair(a1, -_line(100), R), _pair(a2, -_line(100), R)
    assert pathspace.eq_k(p1, p2, 1)
    assert not pathspace.eq_k(p1, p2, 3)  # depth 3 reaches radius 5, inside the detour


def test_eq_k_sees_a_tail_difference():
    R = 100.0
    a2 = _line(100).copy()
    a2 = np.vstack([a2[:90], [[89, 1, 0], [90, 1, 0], [90, 0, 0]], a2[91:]])
    p1, p2 = _pair(_line(100), -_line(100), R), _pair(a2, -_line(100), R)
    assert pathspace.eq_k(p1, p2, 0)  # both tails are the single site (100, 0, 0)
    assert not pathspace.eq_k(p1, p2, 1)


# -- serialisation ------------------------------------------------------------------------------

@pytest.mark.parametrize("seed", [3, 4, 5])
def test_binary_and_json_roundtrip(seed):
    pair = _evolved(seed, 2)
    assert pathspace.from_bytes(pathspace.to_bytes(pair)) == pair
    assert pathspace.from_json(pathspace.to_json(pair)) == pair


def test_binary_rejects_unknown_record():
    blob = bytearray(pathspace.to_bytes(initial_pair("diametric-lines", CFG)))
    blob[:4] = b"XXXX"
    with pytest.raises(InvalidParameterError):
        pathspace.from_bytes(bytes(blob))


def test_coarsen_drops_repeats():
    pts = np.array([[0, 0, 0], [1, 0, 0], [2, 0, 0], [3, 0, 0], [4, 0, 0]], dtype=np.int32)
    out = pathspace.coarsen(pts, math.e)
    assert out.tolist() == [[0, 0, 0], [1, 0, 0]]


def test_pi_zero_tolerates_a_rounded_tip():
    # rescaling rounds the tip to the lattice, possibly a fraction of a unit inside
    tail = pathspace.pi_k(_pair(_line(31), -_line(32)), 0)
    assert tail.a.tolist() == [[31, 0, 0]]
    with pytest.raises(InvalidStateError):
        pathspace.pi_k(_pair(_line(30), -_line(32)), 0)
