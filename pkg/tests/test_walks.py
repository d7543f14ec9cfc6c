import math

import numpy as np
import pytest

from intersect3d import rng, walks
from intersect3d.errors import InvalidParameterError
from intersect3d.walks import ConeSpec, ShellConfig, WalkState


def _stream(seed=1, sid=0):
    return rng.derive_stream(rng.SeedSpec(seed, sid))


def _within_3sigma(successes, trials, p):
    return abs(successes / trials - p) <= 3 * math.sqrt(p * (1 - p) / trials)


# -- state types ------------------------------------------------------------------

def test_shell_radii_increase():
    cfg = ShellConfig(32.0)
    radii = [cfg.radius(n) for n in range(6)]
    assert radii[0] == 32.0
    assert all(b > a for a, b in zip(radii, radii[1:]))
    assert radii[1] == pytest.approx(32 * math.e)


def test_shell_minimum_enforced():
    with pytest.raises(InvalidParameterError):
        ShellConfig(16.0)
    assert ShellConfig(16.0, min_base_radius=8.0).radius(0) == 16.0


def test_walk_state_validation():
    with pytest.raises(InvalidParameterError):
        WalkState((0, 0, 0), backend="spline")
    with pytest.raises(InvalidParameterError):
        WalkState((0, 0))


# -- run_until_radius -------------------------------------------------------------

def test_radius_one_takes_one_step():
    for sid in range(20):
        state, hit = walks.run_until_radius(WalkState.origin(), _stream(1, sid), 1, 10)
        assert hit and state.steps_taken == 1 and state.norm == 1
        assert sum(abs(c) for c in state.position) == 1


def test_radius_ten_always_hit():
    steps, hit = walks.hitting_steps(3, 10_000, 10.0, 10**6)
    assert hit.all()
    assert steps.min() >= 10


def test_hit_state_is_at_or_beyond_radius():
    s = _stream(4, 0)
    state = WalkState.origin()
    for radius in (2.5, 5.0, 7.3, 12.0):
        state, hit = walks.run_until_radius(state, s, radius, 10**6)
        assert hit and state.norm >= radius
        # one lattice step cannot overshoot by more than one unit
        assert state.norm < radius + 1


def test_step_cap_exhaustion_is_not_an_error():
    state, hit = walks.run_until_radius(WalkState.origin(), _stream(), 1000.0, 5)
    assert not hit and state.steps_taken == 5 and state.norm < 1000


def test_gaussian_mean_hitting_steps():
    sigma = 0.01
    steps, hit = walks.hitting_steps(5, 10_000, 1.0, 10**7, walks.GAUSSIAN, sigma)
    assert hit.all()
    assert steps.mean() == pytest.approx(1 / (3 * sigma**2), rel=0.05)


def test_gaussian_single_run():
    state, hit = walks.run_until_radius(WalkState.origin(walks.GAUSSIAN), _stream(), 0.5,
                                        10**7, sigma=0.01)
    assert hit and state.norm >= 0.5 and state.backend == walks.GAUSSIAN


@pytest.mark.parametrize("radius,cap", [(0.0, 10), (-1.0, 10), (5.0, 0)])
def test_run_until_radius_rejects(radius, cap):
    with pytest.raises(InvalidParameterError):
        walks.run_until_radius(WalkState.origin(), _stream(), radius, cap)


def test_lattice_martingale():
    ends = walks.lattice_endpoints(9, 20_000, 100)
    assert np.all(np.abs(ends).sum(axis=1) <= 100)
    # Var of each coordinate after N steps is N/3
    se = math.sqrt(100 / 3 / ends.shape[0])
    assert np.all(np.abs(ends.mean(axis=0)) <= 3 * se)


# -- gambler's ruin ------------------------------------------------------------------

@pytest.mark.parametrize("n", [2, 4, 10])
def test_gamblers_ruin_one_over_n(n):
    trials = 1_000_000
    assert _within_3sigma(walks.gamblers_ruin_successes(21, trials, n), trials, 1 / n)


def test_gamblers_ruin_gaussian_backend():
    trials = 100_000
    hits = walks.gamblers_ruin_successes(22, trials, 4, backend=walks.GAUSSIAN, sigma=0.05)
    # the overshoot of a discrete Gaussian walk biases the law slightly
    assert abs(hits / trials - 0.25) < 0.02


def test_gamblers_ruin_other_start():
    trials = 200_000
    assert _within_3sigma(walks.gamblers_ruin_successes(23, trials, 5, start_x=2), trials, 0.4)


def test_gamblers_ruin_trial_and_errors():
    s = _stream()
    results = {walks.gamblers_ruin_trial(1, 2, s) for _ in range(50)}
    assert results == {True, False}
    for start, n in ((0, 4), (4, 4), (5, 4)):
        with pytest.raises(InvalidParameterError):
            walks.gamblers_ruin_trial(start, n, s)


# -- hitting a small ball --------------------------------------------------------------

def test_truncation_law_is_close_to_exact():
    for k in (1, 2):
        exact = math.exp(-k)
        assert 0 < exact - walks.ball_truncation_law(k, math.exp(5)) < math.exp(-5)


@pytest.mark.parametrize("k", [1, 2])
def test_ball_hitting_matches_exp_minus_k(k):
    trials = 20_000
    p = walks.ball_hitting_successes(31, trials, k) / trials
    assert abs(p - math.exp(-k)) <= 0.01


def test_ball_radius_zero_depth_always_hit():
    s = _stream()
    assert all(walks.ball_hitting_trial(0, s) for _ in range(100))


def test_ball_rejects_bad_parameters():
    s = _stream()
    with pytest.raises(InvalidParameterError):
        walks.ball_hitting_trial(1, s, sigma=0.1)
    with pytest.raises(InvalidParameterError):
        walks.ball_hitting_trial(1, s, escape_radius=10.0)
    with pytest.raises(InvalidParameterError):
        walks.ball_hitting_trial(-1, s)


# -- cones --------------------------------------------------------------------------------

def test_full_space_cone_always_survives():
    cone = ConeSpec(half_angle=math.pi)
    s = _stream()
    assert all(walks.cone_survival_trial(cone, 1, s) for _ in range(200))
    assert np.all(walks.cone_survival_fractions(cone, 2, 500, 3) == 1.0)


def test_half_space_log_survival_is_linear():
    fr = walks.cone_survival_fractions(ConeSpec(half_angle=math.pi / 2), 3, 40_000, 41)
    alpha, r2 = walks.fit_log_survival([1, 2, 3], fr)
    assert alpha > 0 and r2 >= 0.95


def test_narrower_cone_has_larger_exponent():
    wide = walks.cone_survival_fractions(ConeSpec(half_angle=math.pi / 2), 3, 20_000, 42)
    narrow = walks.cone_survival_fractions(ConeSpec(half_angle=math.pi / 4), 3, 20_000, 43)
    assert walks.fit_log_survival([1, 2, 3], narrow)[0] > walks.fit_log_survival([1, 2, 3], wide)[0]


def test_cone_boundary_distance():
    axis = np.array([1.0, 0.0, 0.0])
    assert walks.cone_boundary_distance(np.array([2.0, 0, 0]), axis, math.pi / 2) == 2.0
    assert walks.cone_boundary_distance(np.array([-1.0, 0, 0]), axis, math.pi / 2) == -1.0
    d = walks.cone_boundary_distance(np.array([1.0, 1.0, 0]), axis, math.pi / 2)
    assert d == pytest.approx(1.0)


@pytest.mark.parametrize("angle", [0.0, -0.1, 4.0])
def test_degenerate_cone_rejected(angle):
    with pytest.raises(InvalidParameterError):
        ConeSpec(half_angle=angle)


def test_cone_axis_is_normalised():
    assert ConeSpec(axis=(0, 0, 5)).axis == (0.0, 0.0, 1.0)
    with pytest.raises(InvalidParameterError):
        ConeSpec(axis=(0, 0, 0))
