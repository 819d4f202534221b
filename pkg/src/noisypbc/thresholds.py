"""Control thresholds for a map with four equilibria ``K0 < K1 < K2 < K3`` (and a top ``K4``).

Pipeline, in the order :func:`analyze_thresholds` runs it:

1. :func:`fit_L_delta` picks the inner constant ``L`` and the extension ``delta``.
2. :func:`alpha0_lower` gives the control making ``(K1 - delta, K3 + delta)`` a trap.
3. ``g_m`` and ``g_m2`` decide whether orbits can circulate around the trap at all.
4. :func:`dc_trace` grows the trap outwards as the sequences ``d_k`` and ``c_k``.
   When they never stall their limits form a two-cycle of ``G(beta, .)``.
5. :func:`underline_alpha` is the smallest control for which no such cycle blocks convergence.
6. :func:`alpha1_estimate` is a cheaper upper estimate built from slope bounds.

The d/c machinery is written against :class:`DCProblem` so the block analysis can
reuse it with block-local end points.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np
from scipy.optimize import brentq, minimize_scalar

from .control import controlled_vector
from .equilibria import EquilibriumAnalysis, _jsonable, analyze_map, ratio_supremum
from .maps import MapSpec, analysis_window, scalar_function, vector_function

__all__ = [
    "ThresholdError",
    "FourEquilibria",
    "LDeltaFit",
    "DCProblem",
    "DCTrace",
    "HatLimits",
    "BoundarySearch",
    "ThresholdReport",
    "interval_extremum",
    "fit_L_delta",
    "alpha0_predicate",
    "alpha0_lower",
    "gm_values",
    "dc_trace",
    "dc_sequences",
    "hat_limits",
    "cycle_free",
    "find_boundary",
    "underline_alpha",
    "find_two_cycles",
    "alpha1_estimate",
    "derivative_bounds",
    "analyze_thresholds",
    "dc_trace_csv",
]

EXTREMUM_GRID = 10_000
TIE_TOL = 1e-9
REFINE_TOL = 1e-10
MARGIN = 1e-3
MAX_BETA = 1.0 - 1e-3
L_INFLATION = 1.01
ALPHA0_SCAN, ALPHA0_TOL = 200, 1e-6
ALPHA_SCAN, ALPHA_TOL = 400, 1e-5
DC_MAX_K = 256
DC_HARD_CAP = 20_000
DC_PROGRESS = 1e-9
CYCLE_TOL = 1e-8
NOISE_FREE_GAP = 1e-4


class ThresholdError(ValueError):
    """A threshold could not be computed (bad fit, wrong number of equilibria, empty set)."""


# ---------------------------------------------------------------------------
# extrema of G(beta, .)


def interval_extremum(m: MapSpec, beta: float, a: float, b: float, mode: str = "max",
                      n: int = EXTREMUM_GRID) -> tuple[float, float]:
    """Extremum of ``G(beta, .)`` on ``[a, b]``.

    ``mode="max"`` returns the largest maximiser and ``mode="min"`` the
    smallest minimiser. Grid values within 1e-9 of the extreme count as ties.
    The chosen grid point is refined by a bounded golden-section search.
    Returns ``(argpoint, value)``.
    """
    if not a < b:
        raise ValueError(f"empty interval [{a}, {b}]")
    if mode not in ("max", "min"):
        raise ValueError("mode must be 'max' or 'min'")
    G = controlled_vector(m, beta)
    xs = np.linspace(a, b, n)
    with np.errstate(invalid="ignore", over="ignore"):
        vals = G(xs)
    sign = 1.0 if mode == "max" else -1.0
    s = sign * vals
    best = np.nanmax(s)
    ties = np.nonzero(s >= best - TIE_TOL)[0]
    i = int(ties[-1]) if mode == "max" else int(ties[0])
    x_best, v_best = float(xs[i]), float(s[i])
    lo, hi = xs[max(i - 1, 0)], xs[min(i + 1, n - 1)]
    Gs = _scalar_G(m, beta)
    res = minimize_scalar(lambda t: -sign * Gs(t), bounds=(lo, hi), method="bounded",
                          options={"xatol": REFINE_TOL})
    if -res.fun > v_best + TIE_TOL:
        x_best, v_best = float(res.x), float(-res.fun)
    return x_best, sign * v_best


def _scalar_G(m: MapSpec, beta: float) -> Callable[[float], float]:
    g = scalar_function(m)
    return lambda x: (1.0 - beta) * g(x) + beta * x


# ---------------------------------------------------------------------------
# four-equilibrium context and the (L, delta) fit


@dataclass(frozen=True)
class FourEquilibria:
    K0: float
    K1: float
    K2: float
    K3: float
    K4: float
    upper: float

    @classmethod
    def from_analysis(cls, analysis: EquilibriumAnalysis) -> FourEquilibria:
        if analysis.j0 != 4:
            raise ThresholdError(
                f"the four-equilibrium analysis needs K0..K3 plus a top K4; found j0={analysis.j0}")
        e = analysis.equilibria
        return cls(e[0], e[1], e[2], e[3], analysis.K(4), analysis.upper)

    @property
    def min_gap(self) -> float:
        pts = [self.K0, self.K1, self.K2, self.K3] + ([self.K4] if math.isfinite(self.K4) else [])
        return min(b - a for a, b in zip(pts, pts[1:]))


@dataclass(frozen=True)
class LDeltaFit:
    """``L`` bounds the inner ratios at K1 and K3; ``delta`` extends them outwards."""

    L: float
    delta: float
    L_raw: float
    inflated: bool
    source: str
    extension_ratio: float
    min_gap: float

    @property
    def degenerate(self) -> bool:
        """``L <= 1``: the inner intervals already contract, so no control is needed."""
        return self.L <= 1.0


def _extension_profile(m: MapSpec, K: float, side: str, reach: float):
    """Distances ``h`` from ``K`` on ``side`` and the running max of the absolute ratio up to ``h``."""
    f = vector_function(m)
    geo = reach * 0.8 ** np.arange(1, 200)
    geo = geo[geo >= 1e-10]
    uni = np.linspace(0, reach, 4002)[1:-1]
    h = np.unique(np.concatenate([geo, uni]))
    x = K - h if side == "left" else K + h
    with np.errstate(invalid="ignore", divide="ignore", over="ignore"):
        r = np.abs(f(x) - K) / h
    r = np.where(np.isnan(r), np.inf, r)
    return h, np.maximum.accumulate(r)


def fit_L_delta(analysis: EquilibriumAnalysis, m: MapSpec, delta: float | None = None) -> LDeltaFit:
    """Fit ``L`` on ``(K1, K2)`` and ``(K2, K3)`` and the largest admissible ``delta``.

    ``L_raw`` is the larger of the two inner ratio suprema. The search for
    ``delta`` uses ``L = 1.01 L_raw`` and takes the largest grid distance ``h``
    below the smallest equilibrium gap such that the ratios on ``(K1 - h, K1)``
    and ``(K3, K3 + h)`` stay at most ``L``. When no positive ``h`` qualifies
    the reported ``L`` is ``L_raw`` itself. An explicit ``delta`` skips the
    search and keeps the inflated ``L``; ``extension_ratio`` then records the
    largest ratio actually seen on the extensions.
    """
    q = FourEquilibria.from_analysis(analysis)
    f = vector_function(m)
    K1, K3 = q.K1, q.K3
    inner_left = ratio_supremum(lambda x: np.abs(f(x) - K1) / (x - K1), K1, "right", (K1, q.K2))
    inner_right = ratio_supremum(lambda x: np.abs(K3 - f(x)) / (K3 - x), K3, "left", (q.K2, K3))
    L_raw = max(inner_left, inner_right)
    if not math.isfinite(L_raw):
        raise ThresholdError("an inner one-sided ratio is unbounded; no finite L exists")
    L = L_INFLATION * L_raw
    gap = q.min_gap
    reach = gap * (1 - 1e-9)
    hl, rl = _extension_profile(m, K1, "left", reach)
    hr, rr = _extension_profile(m, K3, "right", reach)

    def largest(h, r):
        ok = np.nonzero(r <= L)[0]
        return float(h[ok[-1]]) if ok.size else 0.0

    if delta is None:
        d = min(largest(hl, rl), largest(hr, rr))
        source = "fitted"
    else:
        d = float(delta)
        if not 0.0 <= d < gap:
            raise ThresholdError(f"delta={d} must lie in [0, {gap})")
        source = "override"
    if d > 0:
        ext = max(float(np.max(rl[hl <= d], initial=0.0)), float(np.max(rr[hr <= d], initial=0.0)))
        return LDeltaFit(L, d, L_raw, True, source, ext, gap)
    return LDeltaFit(L_raw, 0.0, L_raw, False, source, 0.0, gap)


# ---------------------------------------------------------------------------
# threshold searches over beta


@dataclass(frozen=True)
class BoundarySearch:
    """Result of locating the end of a set of betas by scan plus bisection."""

    value: float | None
    monotone: bool
    found: bool
    scan_betas: tuple[float, ...] = ()
    scan_values: tuple[bool, ...] = ()


def find_boundary(pred: Callable[[float], bool], lo: float, hi: float, n_scan: int, tol: float,
                  kind: str = "inf") -> BoundarySearch:
    """Locate ``inf`` (an up-set) or ``sup`` (a down-set) of ``{beta in (lo, hi): pred(beta)}``.

    A scan of ``n_scan`` interior points checks the expected monotone shape;
    bisection between the last failing and first passing scan point then
    narrows the boundary to ``tol``. The returned value is the passing end of
    the final bracket. When the scan is not monotone the search still uses the
    outermost passing point (the literal infimum or supremum at scan
    resolution) and reports ``monotone=False``.
    """
    betas = np.linspace(lo, hi, n_scan + 2)[1:-1]
    vals = [bool(pred(float(b))) for b in betas]
    if not any(vals):
        return BoundarySearch(None, True, False, tuple(betas.tolist()), tuple(vals))
    if kind == "inf":
        first = vals.index(True)
        monotone = all(vals[first:])
        outside = lo if first == 0 else float(betas[first - 1])
        inside = float(betas[first])
    elif kind == "sup":
        last = len(vals) - 1 - vals[::-1].index(True)
        monotone = all(vals[: last + 1])
        outside = hi if last == len(vals) - 1 else float(betas[last + 1])
        inside = float(betas[last])
    else:
        raise ValueError("kind must be 'inf' or 'sup'")
    while abs(inside - outside) > tol:
        mid = 0.5 * (inside + outside)
        if pred(mid):
            inside = mid
        else:
            outside = mid
    return BoundarySearch(inside, monotone, True, tuple(betas.tolist()), tuple(vals))


# ---------------------------------------------------------------------------
# alpha0


def alpha0_predicate(m: MapSpec, q: FourEquilibria, beta: float, delta: float) -> bool:
    """``min G(beta) on [K1-delta, K2] > K1-delta`` and ``max G(beta) on [K2, K3+delta] < K3+delta``."""
    lo = q.K1 - delta
    hi = q.K3 + delta
    _, vmin = interval_extremum(m, beta, lo, q.K2, "min")
    if not vmin > lo:
        return False
    _, vmax = interval_extremum(m, beta, q.K2, hi, "max")
    return vmax < hi


def alpha0_lower(fit: LDeltaFit, q: FourEquilibria, m: MapSpec) -> tuple[float, BoundarySearch | None]:
    """The trap threshold: ``L/(L+1)`` for ``delta = 0``, otherwise the infimum of the trap predicate.

    Returns ``(value, search)``; ``search`` is ``None`` in the closed-form case.
    """
    if fit.delta == 0.0:
        return fit.L / (fit.L + 1.0), None
    lo = max((fit.L - 1.0) / (fit.L + 1.0), 0.0)
    search = find_boundary(lambda b: alpha0_predicate(m, q, b, fit.delta), lo, 1.0,
                           ALPHA0_SCAN, ALPHA0_TOL, "inf")
    if not search.found:
        raise ThresholdError(
            f"trap predicate never holds on ({lo:.6g}, 1) with delta={fit.delta:.6g}; the fit is unusable")
    return search.value, search


def gm_values(m: MapSpec, q: FourEquilibria, delta: float) -> tuple[float, float, float]:
    """``(x_m, g_m, g_m2)``: the largest maximiser of g on ``[K0, K1-delta]``, the maximum,
    and the minimum of g on ``[K3+delta, g_m]`` (``nan`` when that interval is empty)."""
    x_m, g_m = interval_extremum(m, 0.0, q.K0, q.K1 - delta, "max")
    if g_m > q.K3 + delta:
        _, g_m2 = interval_extremum(m, 0.0, q.K3 + delta, g_m, "min")
    else:
        g_m2 = math.nan
    return x_m, g_m, g_m2


# ---------------------------------------------------------------------------
# d_k / c_k


@dataclass(frozen=True)
class DCProblem:
    """End points for the d/c recursion and the cycle-freedom predicate.

    ``d`` moves left from ``d0`` inside ``[left, d0]``; ``c`` moves right from
    ``c0`` inside ``[c0, right]``. The predicate compares the maximum of G on
    ``pred_left`` with ``c_hat`` and the minimum on ``pred_right`` with ``d_hat``.
    """

    left: float
    d0: float
    c0: float
    right: float
    pred_left: tuple[float, float]
    pred_right: tuple[float, float]

    @classmethod
    def four(cls, q: FourEquilibria, delta: float, g_m: float) -> DCProblem:
        return cls(q.K0, q.K1 - delta, q.K3 + delta, g_m, (q.K0, q.K1), (q.K3, g_m))


@dataclass
class DCTrace:
    beta: float
    d_seq: list[float]
    c_seq: list[float]
    k0: int | None
    status: str

    @property
    def infinite(self) -> bool:
        return self.k0 is None


def _grid(a: float, b: float) -> np.ndarray:
    n = max(4000, int(math.ceil(10_000 * (b - a)))) + 1
    return np.linspace(a, b, n)


def _left_crossing(xs, vals, Gs, d: float, c: float) -> float | None:
    """Largest ``x < d`` with ``G(x) > c`` refined to the crossing, or ``None`` if there is none."""
    j = int(np.searchsorted(xs, d, side="left")) - 1
    width = 64
    hi = j
    while hi >= 0:
        lo = max(0, hi - width + 1)
        hits = np.nonzero(vals[lo:hi + 1] > c)[0]
        if hits.size:
            i = lo + int(hits[-1])
            right = float(xs[i + 1]) if i + 1 <= j else d
            if Gs(right) > c:
                return right
            return brentq(lambda x: Gs(x) - c, float(xs[i]), right, xtol=1e-15)
        hi = lo - 1
        width *= 2
    return None


def _right_crossing(xs, vals, Gs, c: float, d: float) -> float | None:
    """Smallest ``x > c`` with ``G(x) < d`` refined to the crossing, or ``None``."""
    j = int(np.searchsorted(xs, c, side="right"))
    n = xs.size
    width = 64
    lo = j
    while lo < n:
        hi = min(n - 1, lo + width - 1)
        hits = np.nonzero(vals[lo:hi + 1] < d)[0]
        if hits.size:
            i = lo + int(hits[0])
            left = float(xs[i - 1]) if i - 1 >= j else c
            if Gs(left) < d:
                return left
            return brentq(lambda x: Gs(x) - d, left, float(xs[i]), xtol=1e-15)
        lo = hi + 1
        width *= 2
    return None


def dc_trace(m: MapSpec, beta: float, problem: DCProblem, max_k: int = DC_MAX_K,
             hard_cap: int = DC_HARD_CAP) -> DCTrace:
    """The sequences ``d_0, d_1, ...`` and ``c_0, c_1, ...`` for ``G(beta, .)``.

    ``d_k`` is the point left of ``d_{k-1}`` where the running maximum of G
    (scanning leftwards) first exceeds ``c_{k-1}``; if it never does, ``d``
    stalls. ``c_k`` mirrors this to the right against ``d_k``. ``k0`` is the
    first ``k >= 1`` with ``d_k = d_{k+1}`` or ``c_k = c_{k+1}``. Without a stall,
    the recursion is declared infinite once ``max_k`` steps have run and the
    last step moved the pair by less than 1e-9 (or after ``hard_cap`` steps).
    """
    G = controlled_vector(m, beta)
    Gs = _scalar_G(m, beta)
    xl = _grid(problem.left, problem.d0)
    xr = _grid(problem.c0, problem.right) if problem.right > problem.c0 else np.array([problem.c0])
    with np.errstate(invalid="ignore", over="ignore"):
        gl, gr = G(xl), G(xr)
    d, c = problem.d0, problem.c0
    ds, cs = [d], [c]
    k = 0
    while True:
        k += 1
        nd = _left_crossing(xl, gl, Gs, d, c)
        stalled = nd is None
        nd = d if stalled else min(nd, d)
        nc = _right_crossing(xr, gr, Gs, c, nd)
        stalled = stalled or nc is None
        nc = c if nc is None else max(nc, c)
        ds.append(nd)
        cs.append(nc)
        if stalled:
            return DCTrace(beta, ds, cs, max(1, k - 1), "stalled")
        progress = (d - nd) + (nc - c)
        d, c = nd, nc
        if k >= max_k and progress < DC_PROGRESS:
            return DCTrace(beta, ds, cs, None, "infinite")
        if k >= hard_cap:
            return DCTrace(beta, ds, cs, None, "capped")


def dc_sequences(m: MapSpec, beta: float, fit: LDeltaFit, g_m: float, q: FourEquilibria,
                 max_k: int = DC_MAX_K) -> DCTrace:
    """:func:`dc_trace` for the four-equilibrium problem."""
    return dc_trace(m, beta, DCProblem.four(q, fit.delta, g_m), max_k=max_k)


@dataclass(frozen=True)
class HatLimits:
    d_hat: float
    c_hat: float
    certified: bool


def hat_limits(trace: DCTrace, m: MapSpec, problem: DCProblem | None = None) -> HatLimits:
    """Limits of the d/c sequences.

    A stalled trace ends at its limits. Otherwise the limit of ``d`` is
    polished as the root of ``G(G(x)) - x`` just below the last ``d``, ``c_hat``
    is its image, and the pair is certified when ``|G(c_hat) - d_hat| < 1e-8``.
    """
    d_last, c_last = trace.d_seq[-1], trace.c_seq[-1]
    if not trace.infinite:
        return HatLimits(d_last, c_last, True)
    Gs = _scalar_G(m, trace.beta)

    def F(x):
        return Gs(Gs(x)) - x

    floor = problem.left if problem is not None else d_last - 1.0
    f0 = F(d_last)
    d_hat = d_last
    if f0 != 0.0:
        step = 1e-12
        prev = d_last
        while True:
            x = max(d_last - step, floor)
            fx = F(x)
            if fx == 0.0:
                d_hat = x
                break
            if (fx > 0) != (f0 > 0):
                d_hat = brentq(F, x, prev, xtol=1e-15)
                break
            if x <= floor:
                break
            prev = x
            step *= 2.0
    c_hat = Gs(d_hat)
    certified = abs(Gs(c_hat) - d_hat) < CYCLE_TOL and abs(d_hat - d_last) < 1e-3
    if not certified:
        return HatLimits(d_last, c_last, abs(Gs(c_last) - d_last) < CYCLE_TOL)
    return HatLimits(d_hat, c_hat, True)


def cycle_free(m: MapSpec, beta: float, problem: DCProblem) -> bool:
    """``max G on pred_left < c_hat`` or ``min G on pred_right > d_hat`` at ``beta``."""
    trace = dc_trace(m, beta, problem)
    hats = hat_limits(trace, m, problem)
    _, vmax = interval_extremum(m, beta, *problem.pred_left, "max")
    if vmax < hats.c_hat:
        return True
    a, b = problem.pred_right
    if not a < b:
        return False
    _, vmin = interval_extremum(m, beta, a, b, "min")
    return vmin > hats.d_hat


def underline_alpha(m: MapSpec, problem: DCProblem | None, alpha0: float) -> tuple[float, BoundarySearch | None]:
    """Smallest control above ``alpha0`` for which :func:`cycle_free` holds (``alpha0`` without a problem)."""
    if problem is None:
        return alpha0, None
    search = find_boundary(lambda b: cycle_free(m, b, problem), alpha0, MAX_BETA,
                           ALPHA_SCAN, ALPHA_TOL, "inf")
    if not search.found:
        raise ThresholdError(f"no control below {MAX_BETA} removes the two-cycle obstruction")
    return search.value, search


# ---------------------------------------------------------------------------
# two-cycles and the slope-based estimate


def find_two_cycles(m: MapSpec, beta: float, interval: tuple[float, float] | None = None,
                    n: int = 10_000) -> list[tuple[float, float]]:
    """Two-cycles ``{p, q}`` of ``G(beta, .)`` with a point in ``interval`` (default: analysis window).

    Roots of ``G(G(x)) - x`` come from a grid scan plus Brent refinement.
    Fixed points (``|G(x) - x| < 1e-8``) are dropped. Each remaining root ``p``
    is paired with ``q = G(p)`` when ``|G(q) - p| < 1e-8``, which also catches
    partners where ``G(G(x)) - x`` only touches zero.
    """
    if not 0.0 <= beta <= 1.0:
        raise ValueError("beta must lie in [0, 1]")
    a, b = interval if interval is not None else analysis_window(m)
    G = controlled_vector(m, beta)
    Gs = _scalar_G(m, beta)
    xs = np.linspace(a, b, n)
    with np.errstate(invalid="ignore", over="ignore"):
        F = G(G(xs)) - xs
    roots = list(xs[F == 0.0])
    s = np.sign(F)
    for i in np.nonzero(s[:-1] * s[1:] < 0)[0]:
        roots.append(brentq(lambda x: Gs(Gs(x)) - x, xs[i], xs[i + 1], xtol=1e-13))
    pairs: list[tuple[float, float]] = []
    for p in roots:
        p = float(p)
        gp = Gs(p)
        if abs(gp - p) < CYCLE_TOL:
            continue
        if abs(Gs(gp) - p) < CYCLE_TOL:
            pair = (min(p, gp), max(p, gp))
            if all(abs(pair[0] - u) > 1e-6 or abs(pair[1] - v) > 1e-6 for u, v in pairs):
                pairs.append(pair)
    return sorted(pairs)


def alpha1_estimate(alpha0: float, L1: float, L3: float) -> float:
    """``max(alpha0, (L1 L3 - 1) / ((L1 + 1)(L3 + 1)))``, with infinite slopes taken as limits."""
    if math.isinf(L1) and math.isinf(L3):
        second = 1.0
    elif math.isinf(L1):
        second = L3 / (L3 + 1.0)
    elif math.isinf(L3):
        second = L1 / (L1 + 1.0)
    else:
        second = (L1 * L3 - 1.0) / ((L1 + 1.0) * (L3 + 1.0))
    return max(alpha0, second)


def steepest_descent(m: MapSpec, a: float, b: float, n: int = 20_001) -> float:
    """``-min g'`` on ``[a, b]`` estimated by secant slopes on a dense grid."""
    if not a < b:
        return 0.0
    xs = np.linspace(a, b, n)
    ys = vector_function(m)(xs)
    return float(-np.min(np.diff(ys) / np.diff(xs)))


def derivative_bounds(m: MapSpec, x_m: float, d1: float, c1: float, g_m: float) -> tuple[float, float]:
    """Slope bounds ``L1`` on ``[x_m, d1]`` and ``L3`` on ``[c1, g_m]``."""
    return steepest_descent(m, x_m, d1), steepest_descent(m, c1, g_m)


# ---------------------------------------------------------------------------
# report


@dataclass
class ThresholdReport:
    map_label: str
    equilibria: tuple[float, ...]
    top: float
    L: float
    delta: float
    L_raw: float
    L_inflated: bool
    delta_source: str
    extension_ratio: float
    alpha0: float
    x_m: float
    g_m: float
    g_m2: float
    cond1: bool
    branch: str
    beta: float
    kappa_lo: float
    kappa_hi: float
    d_seq: list[float]
    c_seq: list[float]
    k0: int | None
    dc_status: str
    d_hat: float
    c_hat: float
    hat_certified: bool
    underline_alpha: float
    underline_alpha_monotone: bool
    alpha1: float
    L1: float
    L3: float
    d1_0: float
    c1_0: float
    two_cycles: list[tuple[float, float]] = field(default_factory=list)
    notes: list[str] = field(default_factory=list)

    @property
    def noise_helps(self) -> bool:
        return self.underline_alpha - self.alpha0 >= NOISE_FREE_GAP

    def to_dict(self) -> dict:
        d = asdict(self)
        d["k0"] = "inf" if self.k0 is None else self.k0
        return _jsonable(d)

    def text(self) -> str:
        k0 = "inf" if self.k0 is None else str(self.k0)
        lines = [
            f"map: {self.map_label}",
            "equilibria K0..K3: " + ", ".join(f"{k:.6g}" for k in self.equilibria[:4])
            + f"; top K4: {self.top:.6g}",
            f"inner constant L = {self.L:.6g} (raw {self.L_raw:.6g}), extension delta = {self.delta:.6g} [{self.delta_source}]",
            f"trap threshold alpha0 (underline alpha_0) = {self.alpha0:.6f}",
            f"g_m = {self.g_m:.6g} at x_m = {self.x_m:.6g}; g_m2 = {self.g_m2:.6g}; circulation possible: {self.cond1} ({self.branch})",
            f"at beta = {self.beta:.6g}: kappa_lo = {self.kappa_lo:.6g}, kappa_hi = {self.kappa_hi:.6g}, k0 = {k0}, "
            f"d_hat = {self.d_hat:.6g}, c_hat = {self.c_hat:.6g} (certified {self.hat_certified})",
            f"cycle-free threshold (underline alpha) = {self.underline_alpha:.6f}",
            f"slope-based estimate alpha1 = {self.alpha1:.6f} (L1 = {self.L1:.6g}, L3 = {self.L3:.6g})",
            "two-cycles at beta: " + ("none" if not self.two_cycles else
                                       "; ".join(f"{{{p:.6g}, {q:.6g}}}" for p, q in self.two_cycles)),
        ]
        lines += [f"note: {n}" for n in self.notes]
        return "\n".join(lines) + "\n"


def dc_trace_csv(report: ThresholdReport) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["k", "d_k", "c_k"])
    for k, (d, c) in enumerate(zip(report.d_seq, report.c_seq)):
        w.writerow([k, repr(float(d)), repr(float(c))])
    return buf.getvalue()


def analyze_thresholds(m: MapSpec, analysis: EquilibriumAnalysis | None = None,
                       delta: float | None = None, beta: float | None = None) -> ThresholdReport:
    """Run the full four-equilibrium pipeline.

    ``beta`` selects where the d/c traces, kappa points and two-cycles are
    reported; by default it is the midpoint of ``(alpha0, underline_alpha)``,
    or ``alpha0 + 1e-3`` when the two coincide.
    """
    analysis = analysis or analyze_map(m)
    q = FourEquilibria.from_analysis(analysis)
    fit = fit_L_delta(analysis, m, delta)
    notes = []
    if fit.degenerate:
        notes.append("L <= 1: the inner intervals contract without control")
    alpha0, _ = alpha0_lower(fit, q, m)
    x_m, g_m, g_m2 = gm_values(m, q, fit.delta)
    lo, hi = q.K1 - fit.delta, q.K3 + fit.delta
    if not g_m > hi:
        cond1, branch = False, "sup of G left of the trap stays below K3+delta"
    elif not g_m2 < lo:
        cond1, branch = False, "inf of G right of the trap stays above K1-delta"
    else:
        cond1, branch = True, "circulation around the trap possible"
    problem = DCProblem.four(q, fit.delta, g_m) if g_m > hi else None
    ua, search = underline_alpha(m, problem if cond1 else None, alpha0)
    monotone = True if search is None else search.monotone
    if not monotone:
        notes.append("cycle-freedom predicate was not monotone on the beta scan")

    if beta is None:
        beta = 0.5 * (alpha0 + ua) if ua - alpha0 >= NOISE_FREE_GAP else min(alpha0 + MARGIN, MAX_BETA)
    if problem is not None:
        kappa_lo, _ = interval_extremum(m, beta, q.K0, lo, "max")
        kappa_hi, _ = interval_extremum(m, beta, hi, g_m, "min")
        trace = dc_trace(m, beta, problem)
        hats = hat_limits(trace, m, problem)
        trace0 = dc_trace(m, 0.0, problem, max_k=1, hard_cap=1)
        d1_0, c1_0 = trace0.d_seq[1], trace0.c_seq[1]
        L1, L3 = derivative_bounds(m, x_m, d1_0, c1_0, g_m)
        d_seq, c_seq, k0, status = trace.d_seq, trace.c_seq, trace.k0, trace.status
    else:
        kappa_lo = kappa_hi = math.nan
        d_seq, c_seq, k0, status = [lo], [hi], 1, "not needed"
        hats = HatLimits(lo, hi, True)
        d1_0, c1_0, L1, L3 = lo, hi, math.nan, math.nan
    alpha1 = alpha1_estimate(alpha0, L1, L3) if problem is not None else alpha0
    return ThresholdReport(
        map_label=m.label, equilibria=tuple(analysis.equilibria), top=q.K4,
        L=fit.L, delta=fit.delta, L_raw=fit.L_raw, L_inflated=fit.inflated, delta_source=fit.source,
        extension_ratio=fit.extension_ratio, alpha0=alpha0, x_m=x_m, g_m=g_m, g_m2=g_m2,
        cond1=cond1, branch=branch, beta=beta, kappa_lo=kappa_lo, kappa_hi=kappa_hi,
        d_seq=list(map(float, d_seq)), c_seq=list(map(float, c_seq)), k0=k0, dc_status=status,
        d_hat=hats.d_hat, c_hat=hats.c_hat, hat_certified=hats.certified,
        underline_alpha=ua, underline_alpha_monotone=monotone, alpha1=alpha1, L1=L1, L3=L3,
        d1_0=d1_0, c1_0=c1_0, two_cycles=find_two_cycles(m, beta), notes=notes,
    )
