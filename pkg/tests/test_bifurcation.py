import numpy as np
import pytest

from noisypbc.bifurcation import (BifurcationDiagram, attractor_sets, default_x0_set, diagram_csv,
                                  last_bifurcation, sweep)
from noisypbc.control import ParameterError
from noisypbc.plotting import diagram_svg
from noisypbc.thresholds import find_two_cycles


def odd(analysis):
    return analysis.equilibria[1::2]


@pytest.fixture(scope="module")
def ricker2_det(ricker2):
    return sweep(ricker2, (0.1, 0.3), n_alpha=201)


@pytest.fixture(scope="module")
def piecewise_det(piecewise):
    return sweep(piecewise, (0.45, 0.65), n_alpha=201)


def test_default_initial_points(piecewise):
    x0s = default_x0_set(piecewise)
    assert x0s.size == 8
    assert 0 < x0s[0] < x0s[-1] < 41 / 14


def test_samples_shape_and_transient(ricker2_det):
    d = ricker2_det
    assert d.samples.shape == (201, 120, 8)
    assert d.transient == 2000 and d.n_seeds == 1
    assert d.step == pytest.approx(0.001)


def test_ricker2_deterministic_collapse(ricker2_det, ricker2_analysis):
    alpha_star = last_bifurcation(ricker2_det, odd(ricker2_analysis))
    assert alpha_star == pytest.approx(0.235, abs=0.015)
    sets = attractor_sets(ricker2_det)
    K = np.array(odd(ricker2_analysis))
    assert any(np.min(np.abs(K - c)) > 0.01 for c in sets[0])
    for centres in sets[-1:]:
        assert all(np.min(np.abs(K - c)) < 1e-3 for c in centres)


def test_two_cycle_clusters_match_detected_cycles(piecewise, piecewise_analysis):
    d = sweep(piecewise, (0.579, 0.581), n_alpha=3, x0s=np.linspace(0.05, 2.9, 40))
    centres = attractor_sets(d)[1]
    pairs = find_two_cycles(piecewise, 0.58)
    cycle_points = [p for pair in pairs for p in pair]
    # only the attracting pair {0.9, 1.5} can appear; {0.975, 1.275} repels
    present = [pair for pair in pairs if all(min(abs(c - p) for c in centres) < 1e-2 for p in pair)]
    assert present == [pytest.approx((0.9, 1.5), abs=1e-6)]
    known = cycle_points + list(odd(piecewise_analysis))
    for c in centres:
        assert min(abs(c - p) for p in known) < 1e-2


def test_empty_samples_give_empty_sets():
    d = BifurcationDiagram("none", np.array([0.1, 0.2]), np.full((2, 5, 3), np.nan), np.zeros(3), 1, 0.0,
                           "bernoulli", 0, 2000, 5)
    assert attractor_sets(d) == [[], []]
    assert last_bifurcation(d, [1.0]) is None


def test_not_reached_sentinel(ricker2, ricker2_analysis):
    d = sweep(ricker2, (0.1, 0.15), n_alpha=6, transient=500, keep=20)
    assert last_bifurcation(d, odd(ricker2_analysis)) is None


def test_deterministic_estimate_respects_the_cycle_free_threshold(piecewise_det, piecewise_analysis,
                                                                   piecewise_report):
    alpha_star = last_bifurcation(piecewise_det, odd(piecewise_analysis))
    assert alpha_star <= piecewise_report.underline_alpha + piecewise_det.step + 5e-3


def test_grid_refinement_is_stable(piecewise, piecewise_det, piecewise_analysis):
    coarse = sweep(piecewise, (0.45, 0.65), n_alpha=101)
    a_fine = last_bifurcation(piecewise_det, odd(piecewise_analysis))
    a_coarse = last_bifurcation(coarse, odd(piecewise_analysis))
    assert abs(a_fine - a_coarse) <= coarse.step + 1e-12


def test_noise_lowers_the_collapse_point(ricker2, ricker2_analysis):
    det = sweep(ricker2, (0.16, 0.3), n_alpha=141)
    noisy = sweep(ricker2, (0.16, 0.3), n_alpha=141, ell=0.15)
    assert last_bifurcation(noisy, odd(ricker2_analysis)) <= last_bifurcation(det, odd(ricker2_analysis))


def test_noisy_sweep_does_not_depend_on_threads(ricker3):
    kw = dict(n_alpha=30, ell=0.06, transient=300, keep=10)
    a = sweep(ricker3, (0.8, 0.93), threads=1, **kw)
    b = sweep(ricker3, (0.8, 0.93), threads=3, **kw)
    assert np.array_equal(a.samples, b.samples, equal_nan=True)


@pytest.mark.parametrize("kw", [dict(alpha_range=(0.5, 0.4)), dict(alpha_range=(0.2, 1.0)),
                                dict(alpha_range=(0.1, 0.3), ell=0.15), dict(alpha_range=(0.2, 0.3), transient=100),
                                dict(alpha_range=(0.2, 0.3), n_alpha=1)])
def test_invalid_sweeps(ricker2, kw):
    with pytest.raises(ParameterError):
        sweep(ricker2, **kw)


def test_csv_layout(ricker2):
    det = sweep(ricker2, (0.2, 0.3), n_alpha=2, transient=200, keep=3, x0s=[0.5, 1.5])
    rows = diagram_csv(det).splitlines()
    assert rows[0] == "alpha,sample,x0_id,seed"
    assert len(rows) == 1 + 2 * 3 * 2
    assert rows[1].endswith(",0,")
    noisy = sweep(ricker2, (0.2, 0.3), n_alpha=2, transient=200, keep=3, x0s=[0.5], ell=0.1, n_seeds=2)
    assert [r.split(",")[3] for r in diagram_csv(noisy).splitlines()[1:4]] == ["0", "0", "0"]


def test_svg_is_byte_stable(ricker2):
    d = sweep(ricker2, (0.2, 0.3), n_alpha=20, transient=200, keep=10)
    one = diagram_svg(d, ylim=(0, 2.1), alpha_star=0.235)
    two = diagram_svg(d, ylim=(0, 2.1), alpha_star=0.235)
    assert one == two
    assert 'width="1200pt"' in one and 'height="800pt"' in one
    assert diagram_svg(d, width=600, height=400) != one
