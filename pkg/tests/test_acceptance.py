"""Acceptance gate: every criterion at its stated budget and tolerance,
one printed PASS/FAIL line each (shown in the pytest terminal summary).

Run with `pytest tests/test_acceptance.py -v`.
"""

import math
import time

import numpy as np
import pytest
from conftest import record_acceptance

import dwellsys as ds

PI = math.pi
D = np.diag([1.0, -1.0])
J = np.array([[0.0, 1.0], [-1.0, 0.0]])
TWO_MODE = ds.ModeSet([D, J])


def rotation(phi):
    return np.array([[math.cos(phi), -math.sin(phi)], [math.sin(phi), math.cos(phi)]])


def regression_modes():
    return ds.ModeSet([D, rotation(PI / 3) @ D @ rotation(PI / 3).T])


def hausdorff_angle(a: ds.GridSet, b: ds.GridSet) -> float:
    ia, ib = np.nonzero(a.mask)[0], np.nonzero(b.mask)[0]
    if ia.size == 0 or ib.size == 0:
        return PI
    d = np.abs(ia[:, None] - ib[None, :])
    d = np.minimum(d, a.n - d)
    return int(max(d.min(axis=1).max(), d.min(axis=0).max())) * PI / a.n


@pytest.fixture(scope="module")
def regression_trace():
    cfg = ds.PdmpConfig(modes=regression_modes(), transition=[[0.0, 1.0], [1.0, 0.0]],
                        rate=1.0, tau=1.0, seed=11)
    return cfg, ds.simulate(cfg, 100000)


@pytest.fixture(scope="module")
def regression_ics():
    return ds.ics_compute(regression_modes(),
                          ds.ReachConfig(tau=1.0, n=512, n_durations=16))[0]


def test_criterion_1_example31_control_set():
    modes = ds.example31_modes(0.0, PI / 2)
    n, tol = 1024, 2 * PI / 1024
    worst, slowest = 0.0, 0.0
    for tau in (0.05, 0.5, 1.0, 3.0):
        t0 = time.monotonic()
        cands = ds.ics_compute(modes, ds.ReachConfig(tau=tau, n=n, n_durations=32))
        elapsed = time.monotonic() - t0
        oracle = ds.example31_oracle(tau, 0.0, PI / 2).mask(n)
        dist = hausdorff_angle(cands[0], oracle) if len(cands) == 1 else PI
        worst = max(worst, dist)
        slowest = max(slowest, elapsed)
    ok = worst <= tol + 1e-12 and slowest <= 60.0
    record_acceptance(1, "example31-control-set", ok,
                      f"worst Hausdorff {worst:.2e} rad (tol {tol:.2e}), slowest {slowest:.1f}s")
    assert ok


def test_criterion_2_connectivity_transition():
    modes = ds.example31_modes(0.0, PI / 2)
    tau_star = ds.example31_oracle(1.0, 0.0, PI / 2).tau_critical

    def n_components(tau):
        cands = ds.ics_compute(modes, ds.ReachConfig(tau=tau, n=1024, n_durations=32))
        return sum(len(c.components()) for c in cands)

    low, high = n_components(0.5 * tau_star), n_components(2.0 * tau_star)
    lo, hi = 0.5 * tau_star, 2.0 * tau_star
    while hi - lo > 0.01 * tau_star:
        mid = 0.5 * (lo + hi)
        if n_components(mid) == 1:
            lo = mid
        else:
            hi = mid
    detected = 0.5 * (lo + hi)
    ok = low == 1 and high == 2 and abs(detected - tau_star) <= 0.05 * tau_star
    record_acceptance(2, "connectivity-transition", ok,
                      f"components {low}/{high}, transition {detected:.4f} vs tau* {tau_star:.4f}")
    assert ok


def test_criterion_3_periodization_consistency():
    worst_pair = 0.0
    for tau in (0.1, 1.0):
        per = ds.lambda_periodic(TWO_MODE, tau, max_bangs=4, seed=0)
        rnd = ds.lambda_random(TWO_MODE, tau, n_signals=2000, horizon=200.0, seed=7)
        worst_pair = max(worst_pair, abs(per.value - rnd.value))

    rng = np.random.default_rng(3)
    worst_single = 0.0
    for _ in range(10):
        a = rng.standard_normal((2, 2))
        a *= rng.uniform(0.5, 2.0) / np.linalg.norm(a, 2)
        alpha = ds.spectral_abscissa(a)
        single = ds.ModeSet([a])
        per = ds.lambda_periodic(single, tau=1.0, max_bangs=1, seed=0)
        rnd = ds.lambda_random(single, tau=1.0, n_signals=1, horizon=200.0, seed=0)
        worst_single = max(worst_single, abs(per.value - alpha), abs(rnd.value - alpha))

    ok = worst_pair <= 0.05 and worst_single <= 0.02
    record_acceptance(3, "periodization-consistency", ok,
                      f"cross-estimator gap {worst_pair:.4f} (tol 0.05), "
                      f"single-mode gap {worst_single:.4f} (tol 0.02)")
    assert ok


def test_criterion_4_monotonicity_in_tau():
    taus = [2.0, 1.0, 0.5, 0.25, 0.0]
    values = {}
    warm = None
    for tau in taus:  # descending, warm-started so duration ranges nest
        est = ds.lambda_periodic(TWO_MODE, tau, max_bangs=4, t_max=30.0, seed=0,
                                 warm_starts=warm)
        block = est.witness.period_block
        warm = [(tuple(m for m, _ in block.bangs), [d for _, d in block.bangs])]
        values[tau] = est.value
    ordered = [values[t] for t in (0.0, 0.25, 0.5, 1.0, 2.0)]
    ok = all(b <= a + 1e-6 for a, b in zip(ordered, ordered[1:]))
    record_acceptance(4, "lambda-monotone-in-tau", ok,
                      "values " + ", ".join(f"{v:.8f}" for v in ordered))
    assert ok


def test_criterion_5_jump_statistics(regression_trace):
    cfg, trace = regression_trace
    t = 1e4
    n_t = int(np.searchsorted(trace.jump_times, t, side="right") - 1)
    rate = n_t / t

    rng = np.random.default_rng(0)
    draws = np.array([ds.sample_dwell(1.0, 1.0, rng) for _ in range(100000)])
    mean_dwell = float(draws.mean())

    ok = 0.48 <= rate <= 0.52 and 1.98 <= mean_dwell <= 2.02
    record_acceptance(5, "pdmp-jump-statistics", ok,
                      f"N_t/t {rate:.4f}, mean dwell {mean_dwell:.4f}")
    assert ok


def test_criterion_6_chi_cross_validation(regression_trace):
    cfg, trace = regression_trace
    hist = ds.invariant_histogram(trace, burn_in=10000, n_bins=512)
    chi_t = ds.chi_time_average(trace)
    chi_i = ds.chi_integral(cfg, hist, n_mc=100000, rng=1)
    norm = ds.chi_integral(cfg, hist, n_mc=100000, rng=2, integrand="one")
    per_jump = ds.chi_per_jump(trace)
    factor = cfg.rate / (cfg.tau * cfg.rate + 1.0)

    agree = chi_t.agrees_with(chi_i, n_sigma=3.0)
    norm_ok = abs(norm.value - 1.0) <= 3.0 * norm.stderr
    scaling_gap = abs(chi_t.value - per_jump.value * factor)
    scaling_ok = scaling_gap <= 3.0 * math.hypot(chi_t.stderr, per_jump.stderr * factor)
    ok = agree and norm_ok and scaling_ok
    record_acceptance(6, "chi-cross-validation", ok,
                      f"time {chi_t.value:.5f}+-{chi_t.stderr:.5f} vs "
                      f"integral {chi_i.value:.5f}+-{chi_i.stderr:.5f}, "
                      f"normalization {norm.value:.5f}, scaling gap {scaling_gap:.2e}")
    assert ok


def test_criterion_7_measure_support(regression_trace, regression_ics):
    cfg, trace = regression_trace
    d_set = regression_ics
    dilated = d_set.dilate(2)
    angles = trace.angles()[10001:]
    cells = np.minimum((angles / (PI / d_set.n)).astype(np.int64), d_set.n - 1)
    inside = float(dilated.mask[cells].mean())

    report = ds.nu_support_check(cfg, trace, d_set, n_samples=50000)
    ok = inside >= 0.99 and report.outside_fraction <= 0.01
    record_acceptance(7, "measure-support", ok,
                      f"mu inside {inside:.4f}, nu outside {report.outside_fraction:.4f}")
    assert ok


def test_criterion_8_property_suite(regression_ics):
    """Compact rerun of the invariant properties named by the gate; the
    full versions live in the per-module test files."""
    checks = {}
    rng = np.random.default_rng(0)

    # matrix exponential semigroup law
    worst = 0.0
    for _ in range(5):
        a = rng.standard_normal((3, 3))
        a *= rng.uniform(0.5, 5.0) / np.linalg.norm(a, 2)
        s, t = rng.uniform(0.0, 10.0, size=2)
        lhs = ds.expm(a, s + t)
        rhs = ds.expm(a, s) @ ds.expm(a, t)
        worst = max(worst, np.linalg.norm(lhs - rhs, 2) / max(1.0, np.linalg.norm(lhs, 2)))
    checks["expm-semigroup"] = worst <= 1e-10

    # concatenation associativity
    sigs = [ds.sample_random(0.5, 3, 6.0, rng_seed=k) for k in range(3)]
    checks["concat-associative"] = (
        ds.concat(ds.concat(sigs[0], sigs[1]), sigs[2]).bangs
        == ds.concat(sigs[0], ds.concat(sigs[1], sigs[2])).bangs)

    # radial growth additivity
    modes = TWO_MODE
    u1 = ds.DwellSignal([(0, 1.3), (1, 2.0)], 1.0)
    u2 = ds.DwellSignal([(1, 1.7), (0, 1.1)], 1.0)
    p = ds.ProjPoint.from_angle(0.9)
    g_all, _ = ds.radial_log_growth(ds.concat(u1, u2), modes, p)
    g1, mid = ds.radial_log_growth(u1, modes, p)
    g2, _ = ds.radial_log_growth(u2, modes, mid)
    checks["radial-additivity"] = abs(g_all - g1 - g2) <= 1e-9

    # cot-law flow match for the double integrator
    n_mat = np.array([[0.0, 1.0], [0.0, 0.0]])
    worst = 0.0
    for psi0 in (0.02, 1.0, 2.8):
        for t in (1.0, 40.0, 100.0):
            got = ds.proj_flow(n_mat, t, ds.ProjPoint.from_angle(psi0)).angle()
            want = math.atan2(1.0, 1.0 / math.tan(psi0) + t) % PI
            worst = max(worst, abs(got - want))
    checks["cot-law"] = worst <= 1e-8

    # shift covariance of all four estimators
    c = 0.3
    shifted = ds.ModeSet([m + c * np.eye(2) for m in TWO_MODE])
    p0 = ds.lambda_periodic(TWO_MODE, 0.5, max_bangs=2, seed=0).value
    p1 = ds.lambda_periodic(shifted, 0.5, max_bangs=2, seed=0).value
    r0 = ds.lambda_random(TWO_MODE, 0.5, n_signals=20, horizon=40.0, seed=3).value
    r1 = ds.lambda_random(shifted, 0.5, n_signals=20, horizon=40.0, seed=3).value
    checks["shift-lambda"] = abs(p1 - p0 - c) <= 1e-10 and abs(r1 - r0 - c) <= 1e-10

    base_cfg = ds.PdmpConfig(regression_modes(), [[0.0, 1.0], [1.0, 0.0]], 1.0, 1.0, 5)
    shift_cfg = ds.PdmpConfig(ds.ModeSet([m + c * np.eye(2) for m in regression_modes()]),
                              [[0.0, 1.0], [1.0, 0.0]], 1.0, 1.0, 5)
    tr_b = ds.simulate(base_cfg, 8000)
    tr_s = ds.simulate(shift_cfg, 8000)
    ct_gap = abs(ds.chi_time_average(tr_s).value - ds.chi_time_average(tr_b).value - c)
    h_b = ds.invariant_histogram(tr_b, 800, 128)
    h_s = ds.invariant_histogram(tr_s, 800, 128)
    ci_b = ds.chi_integral(base_cfg, h_b, n_mc=20000, rng=9).value
    ci_s = ds.chi_integral(shift_cfg, h_s, n_mc=20000, rng=9).value
    mc_tol = 9.0 * c / base_cfg.rate / math.sqrt(20000) / 2.0 + 1e-6
    checks["shift-chi"] = ct_gap <= 1e-10 and abs(ci_s - ci_b - c) <= mc_tol

    # dwell-positive invariance of the computed control set
    cfg = ds.ReachConfig(tau=1.0, n=512, n_durations=16)
    stepped = ds.step_reach(regression_ics, regression_modes(), cfg)
    checks["ics-invariance"] = stepped.issubset(regression_ics.dilate(1))

    # grid refinement convergence on the closed-form example
    ex_modes = ds.example31_modes(0.0, PI / 2)
    dists = []
    for n in (256, 512):
        got = ds.ics_compute(ex_modes, ds.ReachConfig(tau=2.0, n=n, n_durations=16))[0]
        oracle = ds.example31_oracle(2.0, 0.0, PI / 2).mask(n)
        dists.append(hausdorff_angle(got, oracle))
    checks["refinement"] = abs(dists[1] - dists[0]) <= PI / 256 + 1e-12

    # seed determinism of the stochastic pieces
    t1 = ds.simulate(base_cfg, 300)
    t2 = ds.simulate(base_cfg, 300)
    s1 = ds.sample_random(0.5, 3, 15.0, rng_seed=42)
    s2 = ds.sample_random(0.5, 3, 15.0, rng_seed=42)
    checks["seed-determinism"] = (np.array_equal(t1.points, t2.points)
                                  and s1.bangs == s2.bangs)

    # irreducibility is conjugation invariant
    ok_conj = True
    for k in range(3):
        r = rng.standard_normal((2, 2)) + 2.5 * np.eye(2)
        conj = ds.ModeSet([r @ m @ np.linalg.inv(r) for m in TWO_MODE])
        ok_conj &= ds.is_irreducible(conj).is_irreducible
    checks["irreducibility-conjugation"] = ok_conj

    failed = sorted(name for name, good in checks.items() if not good)
    ok = not failed
    record_acceptance(8, "property-suite", ok,
                      "all properties hold" if ok else "failed: " + ", ".join(failed))
    assert ok, failed
