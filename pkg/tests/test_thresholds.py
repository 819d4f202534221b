import math
import time

import numpy as np
import pytest

from noisypbc.control import controlled_vector
from noisypbc.equilibria import analyze_map
from noisypbc.maps import logistic, piecewise as make_piecewise, vector_function
from noisypbc.thresholds import (DCProblem, FourEquilibria, ThresholdError, alpha0_lower, alpha1_estimate,
                                 analyze_thresholds, cycle_free, dc_trace, dc_trace_csv, find_boundary,
                                 find_two_cycles, fit_L_delta, gm_values, hat_limits, interval_extremum)


def four_problem(m, analysis, delta=None):
    q = FourEquilibria.from_analysis(analysis)
    fit = fit_L_delta(analysis, m, delta)
    _, g_m, _ = gm_values(m, q, fit.delta)
    return q, fit, DCProblem.four(q, fit.delta, g_m)


@pytest.fixture(scope="module")
def ricker2_wide(ricker2, ricker2_analysis):
    """Ricker second iterate with the trap extended by delta = 0.15."""
    return analyze_thresholds(ricker2, ricker2_analysis, delta=0.15, beta=0.249)


@pytest.fixture(scope="module")
def toy_map():
    # inner slope -2 at K1 = 1 and K3 = 3, outer slope -6 from distance 0.25 on; symmetric about 2
    branches = [(0, 0.6, "4*x"), (0.6, 0.75, "2.4-6*(x-0.6)"), (0.75, 1.25, "1-2*(x-1)"),
                (1.25, 2, "0.5+2*(x-1.25)"), (2, 2.75, "4-(0.5+2*((4-x)-1.25))"), (2.75, 3.25, "3-2*(x-3)"),
                (3.25, 3.4, "4-(2.4-6*((4-x)-0.6))"), (3.4, "inf", "1.6-(x-3.4)/10")]
    return make_piecewise([{"lo": a, "hi": b, "expr": e} for a, b, e in branches], [0, "inf"], truncate=10)


# interval extremum

def test_identity_control_extremum():
    x, v = interval_extremum(logistic(3.0), 1.0, 0.0, 1.0, "max")
    assert x == pytest.approx(1.0) and v == pytest.approx(1.0)


@pytest.mark.parametrize("beta", [0.0, 0.3, 0.54, 0.58])
def test_piecewise_extremum_points(piecewise, beta):
    assert interval_extremum(piecewise, beta, 0.0, 1.0, "max")[0] == pytest.approx(0.9, abs=1e-6)
    assert interval_extremum(piecewise, beta, 1.2, 2.32857, "min")[0] == pytest.approx(1.5, abs=1e-6)


@pytest.mark.parametrize("beta", [0.6, 0.7, 0.9])
def test_piecewise_minimiser_moves_inside_for_large_beta(piecewise, beta):
    # on (1.2, 1.5) the derivative of G vanishes where sqrt(x - 1.2) = (1 - beta) c / 2
    c = 0.6 / (0.42 * math.sqrt(0.3))
    oracle = 1.2 + ((1 - beta) * c / 2) ** 2
    assert oracle < 1.5
    x, value = interval_extremum(piecewise, beta, 1.2, 2.32857, "min")
    # a smooth minimum is flat, so the argument is only resolved to about the square root of the value tolerance
    assert x == pytest.approx(oracle, abs=1e-4)
    exact = controlled_vector(piecewise, beta)(np.array([oracle]))[0]
    assert value == pytest.approx(exact, abs=1e-9)


def test_ricker2_peak_left_of_trap_clears_the_trap(ricker2, ricker2_analysis):
    q, fit, _ = four_problem(ricker2, ricker2_analysis)
    hi = q.K1 - fit.delta
    _, value = interval_extremum(ricker2, 0.0, 0.0, hi, "max")
    grid = np.linspace(0.0, hi, 400_001)
    assert value == pytest.approx(float(np.max(vector_function(ricker2)(grid))), abs=1e-9)
    assert value > q.K3 + fit.delta


# L and delta

def test_piecewise_fit(piecewise, piecewise_analysis):
    fit = fit_L_delta(piecewise_analysis, piecewise)
    assert fit.L == pytest.approx(27 / 23, abs=1e-5)
    assert fit.delta == 0.0


def test_ricker2_fit(ricker2, ricker2_analysis):
    fit = fit_L_delta(ricker2_analysis, ricker2)
    assert fit.L_raw == pytest.approx(1.65, abs=0.05)
    assert fit.delta > 0


def test_toy_fit_stops_at_the_outer_kink(toy_map):
    fit = fit_L_delta(analyze_map(toy_map), toy_map)
    assert fit.L_raw == pytest.approx(2.0, abs=1e-6)
    # beyond the kink the ratio is (0.5 + 6 (h - 0.25)) / h, which stays below 1.01 * 2 up to h = 1/3.98
    assert 0.25 <= fit.delta <= 1 / 3.98


def test_delta_override_out_of_range(ricker2, ricker2_analysis):
    with pytest.raises(ThresholdError):
        fit_L_delta(ricker2_analysis, ricker2, delta=5.0)


# alpha0

def test_piecewise_alpha0(piecewise_report):
    assert piecewise_report.alpha0 == pytest.approx(27 / 50, abs=1e-3)


def test_ricker2_alpha0_with_wide_trap(ricker2_wide):
    assert ricker2_wide.alpha0 <= 0.249
    assert ricker2_wide.delta > 0.022


@pytest.mark.parametrize("delta", [None, 0.05, 0.15])
def test_alpha0_below_ratio_bound(ricker2, ricker2_analysis, delta):
    q = FourEquilibria.from_analysis(ricker2_analysis)
    fit = fit_L_delta(ricker2_analysis, ricker2, delta)
    alpha0, _ = alpha0_lower(fit, q, ricker2)
    assert alpha0 <= fit.L / (fit.L + 1) + 1e-6


# d/c sequences and limits

def test_ricker2_stalls_at_first_step(ricker2_wide):
    assert ricker2_wide.k0 == 1
    assert ricker2_wide.d_seq[1] == ricker2_wide.d_seq[0] == pytest.approx(0.213826 - 0.15, abs=1e-5)
    assert ricker2_wide.d_hat == ricker2_wide.d_seq[0]


def test_piecewise_sequences_at_058(piecewise, piecewise_report):
    r = piecewise_report
    assert r.k0 is None
    d, c = np.array(r.d_seq), np.array(r.c_seq)
    assert np.all(np.diff(d) <= 0) and np.all(np.diff(c) >= 0)
    moving = d[:-1] - r.d_hat > 1e-9
    assert moving.sum() > 5 and np.all(np.diff(d)[moving] < 0)
    moving = r.c_hat - c[:-1] > 1e-9
    assert moving.sum() > 5 and np.all(np.diff(c)[moving] > 0)
    assert 0.9749 - 1e-4 <= r.d_hat < 1.0
    assert 1.2 < r.c_hat <= 1.2755 + 1e-4
    G = controlled_vector(piecewise, 0.58)
    assert abs(G(np.array([r.d_hat]))[0] - r.c_hat) < 1e-8
    assert abs(G(np.array([r.c_hat]))[0] - r.d_hat) < 1e-8


def test_piecewise_limits_near_threshold(piecewise, piecewise_analysis):
    _, _, problem = four_problem(piecewise, piecewise_analysis)
    hats = hat_limits(dc_trace(piecewise, 0.6040, problem), piecewise, problem)
    assert hats.certified
    assert (hats.d_hat, hats.c_hat) == pytest.approx((0.95, 1.3497), abs=5e-3)


def test_stall_when_left_peak_is_low(piecewise, piecewise_analysis):
    # with the right end of the problem below the left peak the first step cannot move d
    q = FourEquilibria.from_analysis(piecewise_analysis)
    problem = DCProblem(q.K0, q.K1, q.K3, 3.0, (q.K0, q.K1), (q.K3, 3.0))
    trace = dc_trace(piecewise, 0.9, problem)
    _, peak = interval_extremum(piecewise, 0.9, q.K0, q.K1, "max")
    assert peak <= q.K3
    assert trace.k0 == 1 and trace.d_seq[1] == trace.d_seq[0]
    hats = hat_limits(trace, piecewise, problem)
    assert hats.d_hat == trace.d_seq[0]


def test_d_hat_and_c_hat_between_kappa_points(piecewise_report):
    r = piecewise_report
    assert r.kappa_lo - 1e-9 <= r.d_hat < 1.0 - r.delta
    assert 1.2 + r.delta < r.c_hat <= r.kappa_hi + 1e-9


def test_beta_monotonicity_of_traces(piecewise, piecewise_analysis):
    _, _, problem = four_problem(piecewise, piecewise_analysis)
    low, high = dc_trace(piecewise, 0.56, problem), dc_trace(piecewise, 0.59, problem)
    k = min(len(low.d_seq), len(high.d_seq)) - 1
    for i in range(1, min(k, 40)):
        assert low.d_seq[i] > high.d_seq[i]
        assert high.c_seq[i] > low.c_seq[i]


def test_nested_invariance(piecewise, piecewise_analysis):
    _, _, problem = four_problem(piecewise, piecewise_analysis)
    beta = 0.58
    trace = dc_trace(piecewise, beta, problem)
    G = controlled_vector(piecewise, beta)
    for k in range(1, min(len(trace.d_seq), 60)):
        lo, hi = trace.d_seq[k], trace.c_seq[k - 1]
        y = G(np.linspace(lo, hi, 500))
        assert np.all((y >= lo - 1e-12) & (y <= hi + 1e-12))


# cycle-free threshold

def test_piecewise_underline_alpha(piecewise_report):
    assert piecewise_report.underline_alpha == pytest.approx(0.604, abs=5e-3)
    assert piecewise_report.underline_alpha >= piecewise_report.alpha0
    assert piecewise_report.noise_helps


def test_ricker2_underline_alpha_with_wide_trap(ricker2_wide):
    assert ricker2_wide.underline_alpha < 0.249
    assert ricker2_wide.underline_alpha == pytest.approx(ricker2_wide.alpha0, abs=1e-5)
    assert not ricker2_wide.noise_helps


def test_dichotomy(piecewise, piecewise_report, ricker2_wide):
    r = piecewise_report
    betas = np.linspace(r.alpha0 + 1e-3, r.underline_alpha - 1e-3, 6)
    assert all(find_two_cycles(piecewise, float(b)) for b in betas)
    assert r.underline_alpha - r.alpha0 > 1e-4
    assert abs(ricker2_wide.underline_alpha - ricker2_wide.alpha0) < 1e-4


def test_cycle_free_above_threshold(piecewise, piecewise_analysis, piecewise_report):
    _, _, problem = four_problem(piecewise, piecewise_analysis)
    assert cycle_free(piecewise, piecewise_report.underline_alpha + 1e-3, problem)
    assert not cycle_free(piecewise, 0.58, problem)


def test_find_boundary_on_a_step():
    res = find_boundary(lambda b: b > 0.3141, 0.0, 1.0, 50, 1e-6)
    assert res.found and res.monotone
    assert res.value == pytest.approx(0.3141, abs=1e-5)


# two-cycles

def test_two_cycles_at_058(piecewise):
    pairs = find_two_cycles(piecewise, 0.58)
    assert len(pairs) == 2
    assert pairs[0] == pytest.approx((0.9, 1.5), abs=5e-3)
    assert pairs[1] == pytest.approx((0.9749, 1.2755), abs=5e-3)


@pytest.mark.parametrize("beta", [0.62, 1.0])
def test_no_two_cycles(piecewise, beta):
    assert find_two_cycles(piecewise, beta) == []


# slope estimate

def test_alpha1_estimate_arithmetic():
    oracle = (9.8 * 1.65 - 1) / (10.8 * 2.65)
    assert alpha1_estimate(0.249, 9.8, 1.65) == pytest.approx(oracle, rel=1e-12)
    assert oracle == pytest.approx(0.530, abs=1e-3)
    assert alpha1_estimate(0.3, 1.0, 1.0) == 0.3


@pytest.mark.parametrize("L1, L3", [(2.0, 3.0), (9.8, 1.65), (50.0, 0.5)])
def test_alpha1_second_term_below_ratio_bound(L1, L3):
    value = alpha1_estimate(0.0, L1, L3)
    assert value < L3 / (L3 + 1)


def test_alpha1_with_infinite_slope():
    assert alpha1_estimate(0.1, math.inf, 3.0) == pytest.approx(0.75)


# theory checks with orbits

def test_trap_invariance_above_alpha0(piecewise, piecewise_report):
    r = piecewise_report
    lo, hi = 1.0 - r.delta, 1.2 + r.delta
    xs = np.linspace(lo, hi, 500)
    for beta in np.linspace(r.alpha0 + 1e-3, 0.99, 20):
        y = controlled_vector(piecewise, float(beta))(xs)
        assert np.all((y >= lo - 1e-12) & (y <= hi + 1e-12))


def test_deterministic_convergence_above_underline_alpha(piecewise, piecewise_analysis, piecewise_report):
    from noisypbc.stochastic import convergence_probability
    res = convergence_probability(piecewise, piecewise_report.underline_alpha + 0.01, 0.0, n_runs=500,
                                  x0=(1e-6, piecewise_report.g_m), analysis=piecewise_analysis)
    assert res.fraction == 1.0


def test_report_serialises(piecewise_report):
    d = piecewise_report.to_dict()
    assert d["k0"] == "inf"
    assert "underline alpha_0" in piecewise_report.text()
    assert dc_trace_csv(piecewise_report).startswith("k,d_k,c_k\n0,")


def test_non_four_map_is_rejected(ricker3, ricker3_analysis):
    with pytest.raises(ThresholdError):
        analyze_thresholds(ricker3, ricker3_analysis)


def test_criterion_runtime(piecewise):
    start = time.perf_counter()
    analyze_thresholds(piecewise, beta=0.58)
    assert time.perf_counter() - start < 10.0
