"""Equilibria of the uncontrolled map, their sign structure and one-sided constants.

Equilibria are numbered ``K_0 < K_1 < ...``. When the domain is unbounded and
no analysis window is set, the top equilibrium ``K_{j0}`` is ``+inf`` and
grids stop at the map's truncation bound instead.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy.optimize import brentq, minimize_scalar

from .maps import MapSpec, analysis_window, scalar_function, vector_function

__all__ = [
    "NothingToStabilize",
    "OneSidedConstants",
    "EquilibriumAnalysis",
    "SignPatternReport",
    "find_equilibria",
    "analyze_map",
    "one_sided_lipschitz",
    "ratio_supremum",
    "sign_pattern_check",
    "sup_on_interval",
]

POINTS_PER_UNIT = 10_000
MIN_GRID = 1_000
ROOT_TOL = 1e-12
RESIDUAL_TOL = 1e-9
GEOMETRIC_RATIO = 0.8
FINEST_DISTANCE = 1e-10
UNIFORM_POINTS = 2_000
INFINITE_SLOPE = 0.2


class NothingToStabilize(ValueError):
    """Fewer than two equilibria were found, so there is no target to stabilise."""


@dataclass(frozen=True)
class OneSidedConstants:
    """Left and right constants at the odd-indexed equilibrium ``K_index``."""

    index: int
    K: float
    left: float
    right: float


@dataclass(frozen=True)
class EquilibriumAnalysis:
    equilibria: tuple[float, ...]
    top_is_infinite: bool
    upper: float
    sign_pattern: tuple[str, ...]
    lipschitz: tuple[OneSidedConstants, ...]
    boundary_left: float
    boundary_right: float | None
    tangential: tuple[float, ...] = ()
    zero_runs: tuple[tuple[float, float], ...] = ()

    @property
    def j0(self) -> int:
        n = len(self.equilibria)
        return n if self.top_is_infinite else n - 1

    @property
    def i0(self) -> int:
        return math.floor(self.j0 / 2 - 1)

    def K(self, j: int) -> float:
        """``K_j``, with ``+inf`` for the top index when it is infinite."""
        if j < len(self.equilibria):
            return self.equilibria[j]
        if j == self.j0 and self.top_is_infinite:
            return math.inf
        raise IndexError(f"no equilibrium K_{j}")

    def K_finite(self, j: int) -> float:
        """``K_j`` with an infinite top replaced by the grid bound."""
        v = self.K(j)
        return self.upper if math.isinf(v) else v

    def constants_at(self, j: int) -> OneSidedConstants:
        for c in self.lipschitz:
            if c.index == j:
                return c
        raise KeyError(f"no one-sided constants stored for K_{j}")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["j0"] = self.j0
        d["i0"] = self.i0
        return _jsonable(d)


def _jsonable(obj):
    if isinstance(obj, float):
        if math.isinf(obj):
            return "inf" if obj > 0 else "-inf"
        if math.isnan(obj):
            return None
        return obj
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.floating):
        return _jsonable(float(obj))
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


# ---------------------------------------------------------------------------
# root finding


def _roots(m: MapSpec, a: float, b: float, points_per_unit: int, tol: float):
    """Sign-change roots, exact grid zeros, tangential touches and zero runs of g(x) - x."""
    n = max(MIN_GRID, int(math.ceil(points_per_unit * (b - a)))) + 1
    xs = np.linspace(a, b, n)
    h = vector_function(m)(xs) - xs
    g = scalar_function(m)

    def hs(x):
        return g(x) - x

    roots: list[float] = []
    touches: list[float] = []
    runs: list[tuple[float, float]] = []
    zero = h == 0.0
    sign = np.sign(h)
    i = 0
    while i < n:
        if zero[i]:
            j = i
            while j + 1 < n and zero[j + 1]:
                j += 1
            if j == i and 0 < i < n - 1 and sign[i - 1] == sign[i + 1]:
                touches.append(float(xs[i]))
            else:
                roots.append(float(xs[i]))
            if j > i:
                roots.append(float(xs[j]))
                runs.append((float(xs[i]), float(xs[j])))
            i = j + 1
        else:
            i += 1
    change = np.nonzero((sign[:-1] * sign[1:]) < 0)[0]
    for i in change:
        roots.append(float(brentq(hs, xs[i], xs[i + 1], xtol=tol, rtol=4 * np.finfo(float).eps)))

    # tangential touches: interior local minima of |h| without a sign change
    absh = np.abs(h)
    inner = np.arange(1, n - 1)
    cand = inner[(absh[inner] <= absh[inner - 1]) & (absh[inner] <= absh[inner + 1])
                 & (absh[inner] < 1e-6) & (sign[inner - 1] == sign[inner + 1]) & (sign[inner] != 0)]
    for i in cand:
        res = minimize_scalar(lambda x: abs(hs(x)), bounds=(xs[i - 1], xs[i + 1]),
                              method="bounded", options={"xatol": tol})
        x = float(res.x)
        if abs(hs(x)) <= RESIDUAL_TOL * max(1.0, abs(x)):
            touches.append(x)
    # a window end that is an equilibrium up to rounding
    if abs(h[-1]) <= RESIDUAL_TOL * max(1.0, abs(b)) and not zero[-1]:
        roots.append(float(b))
    if abs(h[0]) <= RESIDUAL_TOL * max(1.0, abs(a)) and not zero[0]:
        roots.append(float(a))
    return _dedupe(roots, 10 * tol), _dedupe(touches, 10 * tol), runs


def _dedupe(values, tol):
    out: list[float] = []
    for v in sorted(values):
        if not out or v - out[-1] > max(tol, 1e-9):
            out.append(v)
    return out


# ---------------------------------------------------------------------------
# one-sided constants


def sup_on_interval(fn, a: float, b: float, n: int = 10_000) -> tuple[float, float]:
    """Supremum of a scalar-valued vectorised ``fn`` on ``[a, b]`` by grid plus golden refinement.

    Returns ``(argpoint, value)``.
    """
    xs = np.linspace(a, b, n)
    with np.errstate(invalid="ignore", divide="ignore"):
        vals = np.asarray(fn(xs), dtype=float)
    vals = np.where(np.isnan(vals), -np.inf, vals)
    i = int(np.argmax(vals))
    best_x, best_v = float(xs[i]), float(vals[i])
    lo, hi = xs[max(i - 1, 0)], xs[min(i + 1, n - 1)]
    if hi > lo:
        res = minimize_scalar(lambda t: -float(fn(np.array([t]))[0]), bounds=(lo, hi),
                              method="bounded", options={"xatol": 1e-10})
        if -res.fun > best_v:
            best_x, best_v = float(res.x), float(-res.fun)
    return best_x, best_v


def ratio_supremum(ratio, K: float, side: str, window: tuple[float, float]) -> float:
    """Supremum of ``ratio(x)`` over ``window`` on one side of ``K``.

    The grid combines distances shrinking geometrically towards ``K`` (when the
    window touches ``K``) with a uniform grid, and the best grid point is
    refined by a bounded golden-section search. When the ratio grows like a
    negative power of the distance over the finest three decades the result
    is ``+inf``.
    """
    a, b = float(window[0]), float(window[1])
    if not a < b:
        raise ValueError(f"empty window {window}")
    if side == "left":
        if b > K:
            raise ValueError("left window must lie left of K")
        reach, span, near, sign = b == K, K - a, K - b, -1.0
    elif side == "right":
        if a < K:
            raise ValueError("right window must lie right of K")
        reach, span, near, sign = a == K, b - K, a - K, 1.0
    else:
        raise ValueError("side must be 'left' or 'right'")

    dist = np.linspace(near, span, UNIFORM_POINTS + 2)[1:-1]
    geo = np.empty(0)
    if reach:
        count = int(math.floor(math.log(FINEST_DISTANCE / span) / math.log(GEOMETRIC_RATIO))) + 1
        geo = span * GEOMETRIC_RATIO ** np.arange(1, max(count, 1) + 1)
        geo = geo[geo >= FINEST_DISTANCE]
    with np.errstate(invalid="ignore", divide="ignore", over="ignore"):
        r_geo = ratio(K + sign * geo) if geo.size else np.empty(0)
        r_uni = ratio(K + sign * dist)

    if geo.size:
        if not np.all(np.isfinite(r_geo)):
            return math.inf
        fine = geo <= FINEST_DISTANCE * 1e3
        if np.count_nonzero(fine) >= 3 and np.all(r_geo[fine] > 0):
            slope = np.polyfit(np.log(geo[fine]), np.log(r_geo[fine]), 1)[0]
            if slope < -INFINITE_SLOPE:
                return math.inf

    all_d = np.concatenate([geo, dist])
    all_r = np.concatenate([r_geo, r_uni])
    all_r = np.where(np.isnan(all_r), -np.inf, all_r)
    order = np.argsort(all_d)
    all_d, all_r = all_d[order], all_r[order]
    i = int(np.argmax(all_r))
    best = float(all_r[i])
    lo_d = all_d[max(i - 1, 0)]
    hi_d = all_d[min(i + 1, all_d.size - 1)]
    if hi_d > lo_d:
        res = minimize_scalar(lambda d: -float(ratio(np.array([K + sign * d]))[0]),
                              bounds=(lo_d, hi_d), method="bounded", options={"xatol": 1e-12})
        if np.isfinite(res.fun):
            best = max(best, float(-res.fun))
    return best


def one_sided_lipschitz(m: MapSpec, K: float, side: str, window: tuple[float, float]) -> float:
    """Smallest constant bounding the one-sided ratio at ``K`` over ``window``.

    ``side="left"`` uses ``(g(x) - K) / (K - x)`` on a window left of ``K``;
    ``side="right"`` uses ``(K - g(x)) / (x - K)`` on a window right of ``K``.
    Ratios that blow up like a negative power of the distance to ``K`` give
    ``+inf``.
    """
    f = vector_function(m)
    if side == "left":
        return ratio_supremum(lambda x: (f(x) - K) / (K - x), K, side, window)
    return ratio_supremum(lambda x: (K - f(x)) / (x - K), K, side, window)


def _boundary_left(m: MapSpec, eqs, upper_end: float) -> float:
    """-min over [K1, K_j0] of (g(x) - K0)/(x - K0)."""
    K0, K1 = eqs[0], eqs[1]
    f = vector_function(m)
    _, v = sup_on_interval(lambda x: -(f(x) - K0) / (x - K0), K1, upper_end)
    return v


def _boundary_right(m: MapSpec, eqs, top: float) -> float:
    """max over [K0, K_{j0-1}] of (g(x) - K_j0)/(K_j0 - x)."""
    f = vector_function(m)
    _, v = sup_on_interval(lambda x: (f(x) - top) / (top - x), eqs[0], eqs[-2])
    return v


# ---------------------------------------------------------------------------
# pattern


@dataclass(frozen=True)
class SignPatternReport:
    ok: bool
    pattern: tuple[str, ...]
    first_violation: int | None
    message: str


def _interval_sign(m: MapSpec, p: float, q: float) -> str:
    xs = np.linspace(p, q, 67)[1:-1]
    h = vector_function(m)(xs) - xs
    if np.all(h > 0):
        return "+"
    if np.all(h < 0):
        return "-"
    if np.all(h == 0):
        return "0"
    if np.all(h >= 0):
        return "+0"
    if np.all(h <= 0):
        return "-0"
    return "mixed"


def sign_pattern_check(analysis: EquilibriumAnalysis) -> SignPatternReport:
    """Confirm that g(x) - x alternates sign across intervals, starting positive."""
    for j, s in enumerate(analysis.sign_pattern):
        want = "+" if j % 2 == 0 else "-"
        if s not in (want, want + "0"):
            return SignPatternReport(False, analysis.sign_pattern, j,
                                     f"interval {j} has sign {s!r}, expected {want!r}")
    return SignPatternReport(True, analysis.sign_pattern, None, "alternating")


# ---------------------------------------------------------------------------
# driver


def find_equilibria(m: MapSpec, points_per_unit: int = POINTS_PER_UNIT, tol: float = ROOT_TOL,
                    window: tuple[float, float] | None = None) -> EquilibriumAnalysis:
    """Locate equilibria on the analysis window and compute the one-sided constants."""
    a, b = window if window is not None else analysis_window(m)
    eqs, touches, runs = _roots(m, a, b, points_per_unit, tol)
    touches = [t for t in touches if all(abs(t - e) > 1e-9 for e in eqs)]
    top_inf = m.unbounded and m.window is None and window is None
    if top_inf and eqs and abs(eqs[-1] - b) <= 1e-9:
        top_inf = False

    bounds = list(eqs) + ([b] if top_inf else [])
    pattern = tuple(_interval_sign(m, p, q) for p, q in zip(bounds, bounds[1:]))

    j0 = len(eqs) if top_inf else len(eqs) - 1
    consts = []
    if len(eqs) >= 2:
        for j in range(1, j0, 2):
            K = eqs[j]
            right_end = eqs[j + 1] if j + 1 < len(eqs) else b
            left = one_sided_lipschitz(m, K, "left", (eqs[j - 1], K))
            right = one_sided_lipschitz(m, K, "right", (K, right_end))
            consts.append(OneSidedConstants(j, K, left, right))
        top_end = b if top_inf else eqs[-1]
        b_left = _boundary_left(m, eqs, top_end) if top_end > eqs[1] else -math.inf
        b_right = None if top_inf else _boundary_right(m, eqs, eqs[-1])
    else:
        b_left, b_right = -math.inf, None
    return EquilibriumAnalysis(
        equilibria=tuple(eqs),
        top_is_infinite=top_inf,
        upper=float(b),
        sign_pattern=pattern,
        lipschitz=tuple(consts),
        boundary_left=b_left,
        boundary_right=b_right,
        tangential=tuple(touches),
        zero_runs=tuple(runs),
    )


def analyze_map(m: MapSpec, require_target: bool = True, **kwargs) -> EquilibriumAnalysis:
    """:func:`find_equilibria` plus the check that something can be stabilised."""
    analysis = find_equilibria(m, **kwargs)
    if require_target and len(analysis.equilibria) < 2:
        raise NothingToStabilize(
            f"{m.label}: found {len(analysis.equilibria)} equilibria, need at least two")
    return analysis
