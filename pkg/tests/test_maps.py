import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from noisypbc.maps import (MapSpecError, OutOfDomainError, builtin_map, builtin_names, dump_map, eval_map,
                           iterate, knot_gaps, load_map, logistic, map_from_dict, map_to_dict, piecewise, ricker,
                           vector_function)


def test_ricker_fixed_point_at_one():
    assert eval_map(ricker(2.7), 1.0) == 1.0


def test_second_ricker_iterate_peak_below_first_positive_equilibrium(ricker2):
    # closed form: the peak of x exp(r(1 - x)) is exp(r - 1)/r, reached at x = 1/r
    r = 2.7
    xs = np.linspace(0.0, 0.2143, 200_001)
    assert float(np.max(vector_function(ricker2)(xs))) == pytest.approx(math.exp(r - 1) / r, abs=1e-6)
    assert math.exp(r - 1) / r == pytest.approx(2.027, abs=1e-3)


def test_piecewise_branches_meet_at_first_knot(piecewise):
    left = 163 / 63 * 0.9
    right = 0.9 + 0.6 / (0.42 * math.sqrt(0.1)) * math.sqrt(1 - 0.9)
    assert eval_map(piecewise, 0.9) == pytest.approx(left, rel=1e-15)
    assert left == pytest.approx(2.3286, abs=1e-4)
    assert abs(left - right) < 1e-3


def test_out_of_domain_is_rejected():
    with pytest.raises(OutOfDomainError):
        eval_map(logistic(3.9), 1.5)
    with pytest.raises(OutOfDomainError):
        eval_map(ricker(2.0), float("nan"))
    with pytest.raises(OutOfDomainError):
        eval_map(ricker(2.0), np.array([0.5, -1.0]))


def test_iterate_once_is_the_map():
    m = ricker(2.7)
    assert iterate(m, 1) is m
    xs = np.linspace(0, 4, 50)
    assert np.array_equal(eval_map(iterate(m, 1), xs), eval_map(m, xs))


def test_nested_iterates_flatten():
    m = iterate(iterate(ricker(3.0), 2), 3)
    assert m.kind == "iterate" and m.k == 6 and m.base.kind == "ricker"


@pytest.mark.parametrize("k", [0, -1, 1.5])
def test_iterate_rejects_bad_k(k):
    with pytest.raises(MapSpecError):
        iterate(ricker(2.0), k)


@settings(max_examples=200, deadline=None)
@given(st.floats(min_value=0.0, max_value=4.0), st.floats(min_value=0.5, max_value=4.0))
def test_composition(x, r):
    f = ricker(r)
    ff = eval_map(f, eval_map(f, x))
    assert abs(eval_map(iterate(f, 2), x) - ff) <= 1e-12 * (1 + abs(ff))


@pytest.mark.parametrize("k", [2, 3, 4])
@pytest.mark.parametrize("f", [ricker(2.7), logistic(3.3)], ids=["ricker", "logistic"])
def test_equilibria_of_f_persist_in_iterates(f, k):
    fixed = [0.0, 1.0] if f.kind == "ricker" else [0.0, 1.0 - 1.0 / f.r]
    g = iterate(f, k)
    for K in fixed:
        assert abs(eval_map(g, K) - K) <= 1e-12


def test_builtin_corpus_is_continuous():
    assert set(builtin_names()) >= {"piecewise", "ricker2", "ricker3", "ricker4"}
    for name in builtin_names():
        assert all(gap <= 1e-9 for _, gap in knot_gaps(builtin_map(name)))


def test_discontinuous_map_loads_and_reports_the_jump():
    m = piecewise([{"lo": 0, "hi": 1, "expr": "2*x"}, {"lo": 1, "hi": 2, "expr": "x + 0.5"}], [0, 2])
    assert knot_gaps(m) == [(1.0, pytest.approx(0.5))]


@pytest.mark.parametrize("bad, msg", [
    ({"kind": "ricker"}, "missing field"),
    ({"kind": "spiral", "r": 1}, "unknown map kind"),
    ({"kind": "ricker", "r": -1}, "positive r"),
    ({"kind": "piecewise", "domain": [0, 2], "branches": [{"lo": 0, "hi": 1, "expr": "x"}]}, "before the domain end"),
    ({"kind": "piecewise", "domain": [0, 2], "branches": [{"lo": 0, "hi": 1, "expr": "x"},
                                                         {"lo": 1.5, "hi": 2, "expr": "x"}]}, "gap"),
    ({"kind": "piecewise", "domain": [0, 1], "branches": [{"lo": 0, "hi": 1, "expr": "x.y"}]}, "unsupported"),
    ({"kind": "ricker", "r": 2, "window": [3, 1]}, "window"),
])
def test_bad_map_descriptions(bad, msg):
    with pytest.raises(MapSpecError, match=msg):
        map_from_dict(bad)


@settings(max_examples=50, deadline=None)
@given(st.floats(min_value=0.1, max_value=5.0), st.integers(min_value=1, max_value=4),
       st.floats(min_value=6.0, max_value=20.0))
def test_json_round_trip(r, k, truncate):
    m = iterate(ricker(r, truncate=truncate), k)
    again = map_from_dict(json.loads(dump_map(m)))
    assert again == m
    assert map_to_dict(again) == map_to_dict(m)


def test_piecewise_round_trip_keeps_values(piecewise):
    again = map_from_dict(json.loads(dump_map(piecewise)))
    xs = np.linspace(0, 3.5, 1001)
    assert np.array_equal(vector_function(again)(xs), vector_function(piecewise)(xs))
    assert again.window == pytest.approx((0.0, 41 / 14))


def test_load_map_sources(tmp_path, ricker2):
    path = tmp_path / "m.json"
    path.write_text(dump_map(ricker2))
    assert load_map(str(path)) == ricker2
    assert load_map("ricker2") == ricker2
    assert load_map("ricker2.json") == ricker2
    assert load_map(map_to_dict(ricker2)) == ricker2
    with pytest.raises(MapSpecError):
        load_map("no-such-map")
    bad = tmp_path / "bad.json"
    bad.write_text("{")
    with pytest.raises(MapSpecError, match="invalid JSON"):
        load_map(str(bad))


def test_default_truncation():
    assert ricker(2.7).upper == pytest.approx(2 * math.exp(1.7) / 2.7)
    assert ricker(0.5).upper == pytest.approx(2 * math.exp(-0.5) / 0.5)
    assert ricker(2.7, truncate=5).upper == 5.0
