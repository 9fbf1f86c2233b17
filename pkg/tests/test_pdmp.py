import math

import numpy as np
import pytest
from scipy.stats import chi2

from dwellsys import (
    GridSet,
    ModeSet,
    PdmpConfig,
    ProjPoint,
    ReachConfig,
    chi_integral,
    chi_per_jump,
    chi_time_average,
    ics_compute,
    invariant_histogram,
    nu_support_check,
    sample_dwell,
    simulate,
    thicken_by_flow,
)

PI = math.pi
D = np.diag([1.0, -1.0])


def rotation(phi):
    return np.array([[math.cos(phi), -math.sin(phi)], [math.sin(phi), math.cos(phi)]])


def regression_modes():
    """Two conjugated hyperbolic modes with transversal eigendirections."""
    return ModeSet([D, rotation(PI / 3) @ D @ rotation(PI / 3).T])


def regression_config(seed=11):
    return PdmpConfig(modes=regression_modes(), transition=[[0.0, 1.0], [1.0, 0.0]],
                      rate=1.0, tau=1.0, seed=seed)


ALTERNATE = [[0.0, 1.0], [1.0, 0.0]]


class TestPdmpConfig:
    def test_rejects_bad_transition(self):
        modes = regression_modes()
        with pytest.raises(ValueError):
            PdmpConfig(modes, [[0.5, 0.5], [1.0, 0.0]], 1.0, 1.0, 0)  # diagonal mass
        with pytest.raises(ValueError):
            PdmpConfig(modes, [[0.0, 0.5], [1.0, 0.0]], 1.0, 1.0, 0)  # rows not stochastic
        with pytest.raises(ValueError):
            PdmpConfig(ModeSet([D]), [[0.0]], 1.0, 1.0, 0)  # single mode
        with pytest.raises(ValueError):
            PdmpConfig(modes, ALTERNATE, -1.0, 1.0, 0)
        with pytest.raises(ValueError):
            PdmpConfig(modes, ALTERNATE, 1.0, 0.0, 0)


class TestSampleDwell:
    def test_moments_and_support(self):
        rng = np.random.default_rng(0)
        draws = np.array([sample_dwell(1.0, 1.0, rng) for _ in range(100000)])
        assert draws.min() >= 1.0
        assert draws.mean() == pytest.approx(2.0, abs=0.02)
        assert np.median(draws) == pytest.approx(1.0 + math.log(2.0), abs=0.02)

    def test_rejects_bad_params(self):
        rng = np.random.default_rng(0)
        with pytest.raises(ValueError):
            sample_dwell(0.0, 1.0, rng)
        with pytest.raises(ValueError):
            sample_dwell(1.0, -1.0, rng)


class TestSimulate:
    def test_two_modes_alternate(self):
        trace = simulate(regression_config(), 200)
        assert np.all(np.diff(trace.labels) != 0)

    def test_zero_modes_constant(self):
        cfg = PdmpConfig(ModeSet([np.zeros((2, 2))] * 2), ALTERNATE, 1.0, 1.0, 3)
        trace = simulate(cfg, 100)
        assert np.allclose(trace.points, trace.points[0])
        assert np.allclose(trace.log_growth, 0.0)

    def test_dwell_validity(self):
        trace = simulate(regression_config(), 2000)
        assert np.all(trace.dwells() >= 1.0)

    def test_jump_statistics(self):
        trace = simulate(regression_config(seed=11), 6000)
        t = 1e4
        assert trace.horizon >= t
        n_t = int(np.searchsorted(trace.jump_times, t, side="right") - 1)
        assert 0.48 <= n_t / t <= 0.52
        # T_n / n within 3 sigma of tau + 1/rate (CLT: sd of a dwell is 1)
        n = trace.n_steps
        assert abs(trace.jump_times[-1] / n - 2.0) <= 3.0 / math.sqrt(n)

    def test_seed_determinism(self):
        a = simulate(regression_config(seed=9), 500)
        b = simulate(regression_config(seed=9), 500)
        assert np.array_equal(a.jump_times, b.jump_times)
        assert np.array_equal(a.points, b.points)
        assert np.array_equal(a.log_growth, b.log_growth)

    def test_label_chain_matches_transition_rows(self):
        modes = ModeSet([D, rotation(1.0) @ D @ rotation(1.0).T, rotation(2.0) @ D @ rotation(2.0).T])
        q = np.array([[0.0, 0.3, 0.7], [0.6, 0.0, 0.4], [0.2, 0.8, 0.0]])
        cfg = PdmpConfig(modes, q, 1.0, 0.5, 17)
        trace = simulate(cfg, 12000)
        for i in range(3):
            here = np.nonzero(trace.labels[:-1] == i)[0]
            nxt = trace.labels[here + 1]
            counts = np.bincount(nxt, minlength=3).astype(float)
            expected = q[i] * here.size
            keep = expected > 0
            stat = float(((counts[keep] - expected[keep]) ** 2 / expected[keep]).sum())
            assert stat < chi2.ppf(0.99, keep.sum() - 1)


class TestChiTimeAverage:
    def test_zero_modes(self):
        cfg = PdmpConfig(ModeSet([np.zeros((2, 2))] * 2), ALTERNATE, 1.0, 1.0, 3)
        est = chi_time_average(simulate(cfg, 200))
        assert abs(est.value) <= 1e-15  # identity flow, only unit-norm roundoff

    def test_identity_multiples_exact(self):
        c = 0.8
        cfg = PdmpConfig(ModeSet([c * np.eye(2)] * 2), ALTERNATE, 1.0, 1.0, 3)
        est = chi_time_average(simulate(cfg, 500))
        assert est.value == pytest.approx(c, rel=1e-10)

    def test_golden_regression_value(self):
        # frozen from a 1e5-jump seeded run; tolerance 3x batch-means sigma
        trace = simulate(regression_config(seed=11), 100000)
        est = chi_time_average(trace)
        assert est.value == pytest.approx(0.7073631937723917, abs=1e-12)
        assert abs(est.value - 0.70736) <= 3.0 * est.stderr + 1e-4

    def test_shift_covariance_exact(self):
        c = 0.3
        base = regression_config(seed=5)
        shifted = PdmpConfig(ModeSet([m + c * np.eye(2) for m in base.modes]),
                             ALTERNATE, 1.0, 1.0, 5)
        v0 = chi_time_average(simulate(base, 3000)).value
        v1 = chi_time_average(simulate(shifted, 3000)).value
        assert abs(v1 - v0 - c) <= 1e-10


class TestInvariantHistogram:
    def test_zero_modes_degenerate(self):
        cfg = PdmpConfig(ModeSet([np.zeros((2, 2))] * 2), ALTERNATE, 1.0, 1.0, 3)
        trace = simulate(cfg, 300, q0=ProjPoint.from_angle(1.0))
        hist = invariant_histogram(trace, burn_in=30, n_bins=64)
        marginal = hist.angle_marginal()
        assert marginal[GridSet(64, np.zeros(64, bool)).cell_of(1.0)] == pytest.approx(1.0)

    def test_rotations_give_uniform_marginal(self):
        modes = ModeSet([np.array([[0.0, 1.0], [-1.0, 0.0]]),
                         np.array([[0.0, 2.0], [-2.0, 0.0]])])
        cfg = PdmpConfig(modes, ALTERNATE, 1.0, 1.0, 5)
        trace = simulate(cfg, 30000)
        hist = invariant_histogram(trace, burn_in=3000, n_bins=64)
        counts = hist.counts.sum(axis=1)
        expected = counts.sum() / 64.0
        stat = float(((counts - expected) ** 2 / expected).sum())
        assert stat < chi2.ppf(0.99, 63)

    def test_two_seeds_same_law(self):
        # uniqueness consistency: independent chains agree within chi2
        hists = []
        for seed in (21, 22):
            trace = simulate(regression_config(seed=seed), 40000)
            hists.append(invariant_histogram(trace, burn_in=4000, n_bins=32))
        c1 = hists[0].counts.sum(axis=1)
        c2 = hists[1].counts.sum(axis=1)
        keep = (c1 + c2) > 20
        pooled = (c1[keep] + c2[keep]) / 2.0
        stat = float((((c1[keep] - pooled) ** 2 + (c2[keep] - pooled) ** 2) / pooled).sum())
        assert stat < chi2.ppf(0.995, int(keep.sum()) - 1) * 2

    def test_burn_in_bounds(self):
        trace = simulate(regression_config(), 100)
        with pytest.raises(ValueError):
            invariant_histogram(trace, burn_in=100, n_bins=16)


class TestChiIntegral:
    def test_identity_multiples(self):
        c = 0.6
        cfg = PdmpConfig(ModeSet([c * np.eye(2)] * 2), ALTERNATE, 1.0, 1.0, 3)
        trace = simulate(cfg, 2000)
        hist = invariant_histogram(trace, burn_in=200, n_bins=64)
        est = chi_integral(cfg, hist, n_mc=4000, rng=1)
        assert est.value == pytest.approx(c, abs=3.0 * est.stderr + 1e-8)

    def test_normalization_self_test(self):
        cfg = regression_config()
        trace = simulate(cfg, 20000)
        hist = invariant_histogram(trace, burn_in=2000, n_bins=128)
        norm = chi_integral(cfg, hist, n_mc=40000, rng=2, integrand="one")
        assert abs(norm.value - 1.0) <= 3.0 * norm.stderr

    def test_cross_validates_time_average(self):
        cfg = regression_config()
        trace = simulate(cfg, 40000)
        hist = invariant_histogram(trace, burn_in=4000, n_bins=256)
        ct = chi_time_average(trace)
        ci = chi_integral(cfg, hist, n_mc=40000, rng=3)
        assert ct.agrees_with(ci, n_sigma=3.0)

    def test_shift_covariance_within_mc_error(self):
        # exact at the measure level; the estimate carries c * (mean s)/E[s]
        c = 0.3
        base = regression_config(seed=5)
        shifted = PdmpConfig(ModeSet([m + c * np.eye(2) for m in base.modes]),
                             ALTERNATE, 1.0, 1.0, 5)
        tr_b = simulate(base, 15000)
        tr_s = simulate(shifted, 15000)
        h_b = invariant_histogram(tr_b, 1500, 128)
        h_s = invariant_histogram(tr_s, 1500, 128)
        n_mc = 20000
        v_b = chi_integral(base, h_b, n_mc=n_mc, rng=9).value
        v_s = chi_integral(shifted, h_s, n_mc=n_mc, rng=9).value
        # std of the dwell mean is (1/rate)/sqrt(n); scale by c * factor
        tol = 3.0 * abs(c) * (1.0 / base.rate) / math.sqrt(n_mc) / 2.0 + 1e-6
        assert abs(v_s - v_b - c) <= 3 * tol

    def test_scaling_against_per_jump_rate(self):
        cfg = regression_config()
        trace = simulate(cfg, 50000)
        ct = chi_time_average(trace)
        pj = chi_per_jump(trace)
        factor = cfg.rate / (cfg.tau * cfg.rate + 1.0)
        combined = math.hypot(ct.stderr, pj.stderr * factor)
        assert abs(ct.value - pj.value * factor) <= 3.0 * combined


class TestNuSupport:
    def test_full_grid_never_outside(self):
        cfg = regression_config()
        trace = simulate(cfg, 3000)
        full = GridSet(128, np.ones(128, dtype=bool))
        rep = nu_support_check(cfg, trace, full, n_samples=2000)
        assert rep.outside_fraction == 0.0

    def test_regression_support_inside_thickened_ics(self):
        cfg = regression_config()
        trace = simulate(cfg, 30000)
        d_set = ics_compute(cfg.modes, ReachConfig(tau=cfg.tau, n=512, n_durations=16))[0]
        rep = nu_support_check(cfg, trace, d_set, n_samples=20000)
        assert rep.outside_fraction <= 0.01

    def test_thicken_contains_set(self):
        d_set = GridSet(128, np.eye(128, dtype=bool)[40])
        thick = thicken_by_flow(d_set, regression_modes(), 1.0)
        assert d_set.issubset(thick)
        assert thick.count() > d_set.count()

    def test_zero_tau_thickening_degenerates_to_set(self):
        d_set = GridSet(128, np.eye(128, dtype=bool)[40]).dilate(3)
        thick = thicken_by_flow(d_set, regression_modes(), 0.0)
        assert d_set.issubset(thick)
        assert thick.count() <= d_set.dilate(1).count()


class TestDimensionThree:
    def test_simulation_and_estimators(self):
        # skew-symmetric modes are isometries: chi must vanish
        a = np.array([[0.0, 1.0, 0.0], [-1.0, 0.0, 0.0], [0.0, 0.0, 0.0]])
        b = np.array([[0.0, 0.0, 0.5], [0.0, 0.0, 0.0], [-0.5, 0.0, 0.0]])
        cfg = PdmpConfig(ModeSet([a, b]), ALTERNATE, 1.0, 0.5, 7)
        trace = simulate(cfg, 4000)
        assert abs(chi_time_average(trace).value) <= 1e-10
        hist = invariant_histogram(trace, burn_in=400, n_bins=200)
        assert hist.cloud is not None and hist.total == 3600
        est = chi_integral(cfg, hist, n_mc=4000, rng=4)
        assert abs(est.value) <= 3.0 * est.stderr + 1e-6
