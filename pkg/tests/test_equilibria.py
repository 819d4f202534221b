import math

import numpy as np
import pytest

from noisypbc.equilibria import NothingToStabilize, analyze_map, find_equilibria, one_sided_lipschitz, \
    sign_pattern_check
from noisypbc.maps import map_from_dict, map_to_dict, piecewise, ricker, scalar_function


def bisect_root(f, a, b, tol=1e-12):
    fa = f(a)
    while b - a > tol:
        mid = 0.5 * (a + b)
        fm = f(mid)
        if (fm > 0) == (fa > 0):
            a, fa = mid, fm
        else:
            b = mid
    return 0.5 * (a + b)


def test_ricker_on_truncated_domain():
    a = analyze_map(ricker(2.7, truncate=5))
    assert a.equilibria == pytest.approx((0.0, 1.0), abs=1e-12)
    assert a.sign_pattern == ("+", "-")
    assert a.top_is_infinite and a.j0 == 2


def test_piecewise_without_window_has_six_equilibria(piecewise):
    d = map_to_dict(piecewise)
    d.pop("window")
    a = analyze_map(map_from_dict(d))
    assert a.equilibria == pytest.approx((0, 1, 1.1, 1.2, 41 / 14, 3), abs=1e-9)


def test_piecewise_window_keeps_five(piecewise_analysis):
    assert piecewise_analysis.equilibria == pytest.approx((0, 1, 1.1, 1.2, 41 / 14), abs=1e-9)
    assert piecewise_analysis.j0 == 4 and not piecewise_analysis.top_is_infinite


def test_ricker2_equilibria_against_bisection(ricker2, ricker2_analysis):
    g = scalar_function(ricker2)

    def h(x):
        return g(x) - x

    oracle = [0.0, bisect_root(h, 0.1, 0.5), 1.0, bisect_root(h, 1.5, 2.0)]
    assert ricker2_analysis.equilibria == pytest.approx(oracle, abs=1e-10)
    assert ricker2_analysis.equilibria[1:] == pytest.approx((0.214, 1.0, 1.786), abs=1e-3)
    for K in ricker2_analysis.equilibria:
        assert abs(g(K) - K) < 1e-9
    assert ricker2_analysis.sign_pattern == ("+", "-", "+", "-")


def test_ricker3_has_seven_positive_equilibria(ricker3_analysis):
    assert sum(K > 0 for K in ricker3_analysis.equilibria) == 7


def test_piecewise_one_sided_constants(piecewise_analysis):
    # the supremum is the limit at K itself; the last digits come from cancellation at tiny distances
    c = piecewise_analysis.constants_at(1)
    assert c.right == pytest.approx(27 / 23, abs=1e-5)
    assert math.isinf(c.left)
    c3 = piecewise_analysis.constants_at(3)
    assert c3.left == pytest.approx(27 / 23, abs=1e-5)
    assert math.isinf(c3.right)


def test_ricker2_left_constant_is_large(ricker2, ricker2_analysis):
    K1 = ricker2_analysis.equilibria[1]
    assert one_sided_lipschitz(ricker2, K1, "left", (0.0, K1)) > 9.8


@pytest.mark.parametrize("name", ["piecewise", "ricker2", "ricker3", "ricker4"])
def test_finite_constants_bound_the_signed_ratio(name, request):
    # left of K: g(x) - K <= L- (K - x); right of K: K - g(x) <= L+ (x - K)
    m = request.getfixturevalue(name)
    a = request.getfixturevalue(f"{name}_analysis")
    g = scalar_function(m)
    eqs = list(a.equilibria) + [a.upper]
    for c in a.lipschitz:
        j = c.index
        if math.isfinite(c.left):
            for x in np.linspace(eqs[j - 1], c.K, 2001)[1:-1]:
                assert c.left * (c.K - x) - (g(x) - c.K) >= -1e-6
        if math.isfinite(c.right):
            for x in np.linspace(c.K, eqs[j + 1], 2001)[1:-1]:
                assert c.right * (x - c.K) - (c.K - g(x)) >= -1e-6


def test_sign_pattern_alternates(ricker2_analysis, ricker4_analysis):
    assert sign_pattern_check(ricker2_analysis).ok
    assert sign_pattern_check(ricker4_analysis).ok


def test_identity_map_violates_sign_pattern():
    a = find_equilibria(piecewise([{"lo": 0, "hi": 2, "expr": "x"}], [0, 2]))
    report = sign_pattern_check(a)
    assert not report.ok and report.first_violation == 0
    assert a.zero_runs == ((0.0, 2.0),)


def test_tangential_zero_is_flagged_not_listed():
    # g(x) - x = x (x - 1)^2 (2 - x) / 4 touches zero at 1 without changing sign
    a = find_equilibria(piecewise([{"lo": 0, "hi": 3, "expr": "x + x*(x-1)^2*(2-x)/4"}], [0, 3]))
    assert a.equilibria == pytest.approx((0.0, 2.0))
    assert a.tangential == pytest.approx((1.0,), abs=1e-6)
    assert sign_pattern_check(a).ok


def test_single_equilibrium_has_nothing_to_stabilize():
    with pytest.raises(NothingToStabilize):
        analyze_map(map_from_dict({"kind": "logistic", "r": 0.5}))


def test_to_dict_is_json_safe(piecewise_analysis):
    d = piecewise_analysis.to_dict()
    assert d["j0"] == 4 and d["i0"] == 1
    assert d["lipschitz"][0]["left"] == "inf"
