import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import special

from intersect3d import splitting
from intersect3d.errors import ExtinctionError, InvalidParameterError
from intersect3d.pathspace import initial_pair
from intersect3d.splitting import ParticleEnsemble, SplittingRun
from intersect3d.walks import ConeSpec, ShellConfig

CFG = ShellConfig(32.0)
SMALL = ShellConfig(16.0, min_base_radius=8.0)


def _synthetic(fr, sep=None, alive=None):
    fr = np.atleast_2d(np.asarray(fr, dtype=float))
    alive = np.full(fr.shape, 100) if alive is None else np.asarray(alive)
    sep = np.zeros(fr.shape, dtype=int) if sep is None else np.asarray(sep)
    return SplittingRun(fr, alive, sep, {}, 100, 0)


# -- resampling ---------------------------------------------------------------------

def test_multinomial_indices():
    idx = splitting.multinomial_indices(3, 17, 10, 1000)
    assert idx.size == 1000 and idx.min() >= 0 and idx.max() <= 9
    assert np.all(np.diff(idx) >= 0)
    assert np.array_equal(idx, splitting.multinomial_indices(3, 17, 10, 1000))
    assert not np.array_equal(idx, splitting.multinomial_indices(3, 18, 10, 1000))
    counts = np.bincount(idx, minlength=10)
    assert counts.min() > 60  # each ancestor drawn about 100 times


# -- estimators on synthetic input ------------------------------------------------------

def test_q_at_shell_zero_is_one():
    assert splitting.estimate_q(_synthetic([[0.5, 0.5]]), 0).value == 1.0


def test_q_is_replicate_mean_of_products():
    run = _synthetic([[0.5, 0.5], [0.8, 0.5]])
    iv = splitting.estimate_q(run, 2)
    assert iv.value == pytest.approx((0.25 + 0.4) / 2)
    assert iv.low < iv.value < iv.high


def test_xi_of_synthetic_geometric_fractions_is_exact():
    fr = np.full((20, 8), math.exp(-0.57))
    xi = splitting.estimate_xi(fr, 2, 8)
    assert xi.value == pytest.approx(0.57, abs=1e-12)
    assert xi.se == pytest.approx(0.0, abs=1e-12)


def test_xi_window_too_short():
    fr = np.full((2, 8), 0.5)
    with pytest.raises(InvalidParameterError):
        splitting.estimate_xi(fr, 2, 4)
    with pytest.raises(InvalidParameterError):
        splitting.estimate_xi(fr, 2, 9)


def test_geometric_q_has_zero_increments():
    qs = splitting.q_ratio_convergence(np.full((5, 8), 0.56))
    assert np.allclose(qs.increments, 0.0)
    assert np.allclose(qs.ratios, 0.56)
    assert not qs.decreasing
    # display scaling is pure presentation
    assert np.allclose(qs.q_scaled[1:] / qs.q_scaled[:-1], math.exp(0.57) * qs.ratios)


def test_converging_ratios_trend_down():
    rng = np.random.default_rng(0)
    n = np.arange(8)
    fr = 0.56 + 0.2 * np.exp(-n) + 0.002 * rng.standard_normal((20, 8))
    qs = splitting.q_ratio_convergence(fr)
    assert qs.spearman_rho < 0 and qs.decreasing


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(0.01, 1.0), min_size=1, max_size=10))
def test_q_hat_nonincreasing(fractions):
    run = _synthetic([fractions])
    q = [splitting.estimate_q(run, n).value for n in range(len(fractions) + 1)]
    assert all(b <= a for a, b in zip(q, q[1:]))


def test_rho1_intervals_clip_at_zero():
    run = _synthetic(np.full((3, 2), 0.5), sep=[[0, 10], [0, 20], [1, 30]],
                     alive=[[100, 100]] * 3)
    est = splitting.estimate_rho1(run)
    assert est[0].value == pytest.approx(1 / 300)
    assert est[0].low == 0.0
    assert est[1].value == pytest.approx(0.2)
    assert 0 < est[1].low < 0.2 < est[1].high


def test_ks_critical_value_matches_kolmogorov_law():
    n1, n2 = 40_000, 50_000
    c = splitting.ks_critical(n1, n2, 0.01)
    assert special.kolmogorov(c * math.sqrt(n1 * n2 / (n1 + n2))) == pytest.approx(0.01, rel=1e-6)


def test_mixing_decay_detected_on_synthetic_runs():
    rng = np.random.default_rng(1)
    shells, R, P = 6, 4, 500

    def fake(shift):
        vals = [[rng.normal(shift * math.exp(-1.5 * j), 1, P) for j in range(shells)]
                for _ in range(R)]
        return SplittingRun(np.full((R, shells), 0.5), np.full((R, shells), P),
                            np.zeros((R, shells), int), {"endpoint-angle": vals}, P, 0)

    diag = splitting.mixing_from_runs(fake(0.0), fake(8.0))
    assert not diag.saturated and diag.beta > 0 and diag.slope_p < 0.05
    assert diag.distances[-1] < diag.critical and diag.passed
    assert np.all((0 <= diag.distances) & (diag.distances <= 1))


# -- functionals -------------------------------------------------------------------------

def test_functionals_of_diametric_lines():
    pair = initial_pair("diametric-lines", CFG)
    assert splitting.functional_value(pair, "endpoint-angle") == pytest.approx(math.pi)
    assert splitting.functional_value(pair, "sep-indicator") == 1.0
    assert splitting.functional_value(pair, "halfspace-fraction") == 1.0
    assert splitting.tail_depth(pair) == 0
    with pytest.raises(InvalidParameterError):
        splitting.functional_value(pair, "winding")


# -- ensembles ------------------------------------------------------------------------------

def test_ensemble_start_validation():
    pair = initial_pair("diametric-lines", SMALL)
    with pytest.raises(InvalidParameterError):
        ParticleEnsemble.start(pair, 0, 1)
    ens = ParticleEnsemble.start(pair, 5, 1)
    assert ens.q_hat == 1.0 and ens.shell == 0


def test_forced_extinction_reports_the_shell():
    pair = initial_pair("diametric-lines", SMALL)
    ens = ParticleEnsemble.start(pair, 50, 1)
    splitting.evolve_ensemble(ens)
    with pytest.raises(ExtinctionError) as err:
        splitting.evolve_ensemble(ens, constraint=lambda p: False)
    assert err.value.shell == 2


def test_evolution_bookkeeping():
    pair = initial_pair("diametric-lines", SMALL)
    ens = splitting.run_replicate(pair, 3, 300, 9, 0, functionals=splitting.FUNCTIONALS)
    assert len(ens.particles) == 300 and ens.shell == 3
    assert all(p.alive for p in ens.particles)
    for rec in ens.history:
        assert 0 < rec.survivors <= rec.size == 300
        assert 1 <= rec.distinct_ancestors <= rec.survivors
        assert rec.functionals["endpoint-angle"].size == rec.survivors
        assert 0 <= rec.sep_count <= rec.survivors
    assert ens.q_hat == pytest.approx(np.prod(ens.fractions))
    assert len(ens.resample_log) == 3


def test_evolution_is_deterministic_and_thread_independent():
    pair = initial_pair("diametric-lines", SMALL)
    a = splitting.run_replicate(pair, 3, 200, 4, 1)
    b = splitting.run_replicate(pair, 3, 200, 4, 1, threads=3)
    assert a.fractions == b.fractions
    assert all(p == q for p, q in zip(a.particles, b.particles))
    c = splitting.run_replicate(pair, 3, 200, 4, 2)
    assert a.fractions != c.fractions


def test_first_shell_fraction_matches_direct_survival():
    pair = initial_pair("diametric-lines", CFG)
    ens = splitting.run_replicate(pair, 1, 1000, 31, 0)
    p1 = ens.fractions[0]
    q_direct = 1509 / 2000  # regression value of the direct estimate (test_pathspace)
    se = math.sqrt(p1 * (1 - p1) / 1000 + q_direct * (1 - q_direct) / 2000)
    assert abs(p1 - q_direct) <= 3 * se


def test_run_splitting_shapes():
    pair = initial_pair("diametric-lines", SMALL)
    run = splitting.run_splitting(pair, 2, 100, 3, 5)
    assert run.fractions.shape == (3, 2) and run.q_per_replicate()[:, 0].tolist() == [1, 1, 1]
    assert run.pooled("endpoint-angle", 1).size == run.alive[:, 0].sum()
    with pytest.raises(InvalidParameterError):
        splitting.run_splitting(pair, 0, 100, 3, 5)


def test_mixing_identical_ensembles_have_zero_distance():
    pair = initial_pair("diametric-lines", SMALL)
    diag = splitting.mixing_distance(pair, pair, 3, particles=150, replicates=2, seed=8)
    assert np.all(diag.distances == 0)
    assert diag.saturated and diag.passed


def test_mixing_same_law_is_at_noise_floor():
    pair = initial_pair("diametric-lines", SMALL)
    diag = splitting.mixing_distance(pair, pair, 3, particles=300, replicates=3, seed=8,
                                     seed2=9)
    floors = [splitting.ks_critical(a, b) for a, b in diag.sizes]
    assert np.all(diag.distances < floors)
    assert diag.saturated and diag.passed


def test_mixing_rejects_unknown_functional():
    pair = initial_pair("diametric-lines", SMALL)
    with pytest.raises(InvalidParameterError):
        splitting.mixing_distance(pair, pair, 3, functional="winding")


# -- cones ----------------------------------------------------------------------------------

def test_full_space_cone_exponent_is_zero():
    est = splitting.estimate_cone_exponent(ConeSpec(half_angle=math.pi), 3, 200, 3, 1)
    assert est.alpha.value == 0.0 and np.all(est.fractions == 1.0)


def test_half_space_cone_exponent_positive_and_ordered():
    half = splitting.estimate_cone_exponent(ConeSpec(half_angle=math.pi / 2), 3, 1000, 5, 2)
    third = splitting.estimate_cone_exponent(ConeSpec(half_angle=math.pi / 3), 3, 1000, 5, 3)
    assert half.alpha.value > 0 and half.alpha.low > 0
    assert third.alpha.value > half.alpha.value


def test_cone_fractions_deterministic():
    cone = ConeSpec(half_angle=math.pi / 2)
    a = splitting.cone_fractions(cone, 2, 300, 0, 7)
    assert np.array_equal(a, splitting.cone_fractions(cone, 2, 300, 0, 7))
    assert not np.array_equal(a, splitting.cone_fractions(cone, 2, 300, 1, 7))
