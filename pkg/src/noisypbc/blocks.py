"""Block decomposition for maps with many equilibria, and per-block control thresholds.

Each odd-indexed equilibrium ``K_{2i+1}`` is classified by which one-sided
constant is smaller: ``I+`` when the right constant wins (or ties), ``I-``
otherwise. Walking the odd equilibria from left to right, each run of ``I-``
followed by a run of ``I+`` forms a block ``V_odd`` in which orbits may
circulate around a trap; everything before the first such block is ``V0`` and
everything after the last one is ``V_tilde``.

For a ``V_odd`` block the deterministic thresholds ``beta0`` (stop orbits from
leaving the block) and ``beta1`` (stop two-cycles inside it) reuse the d/c
machinery of :mod:`noisypbc.thresholds` with block-local end points. The
stochastic thresholds ``beta21 .. beta24`` and ``beta3`` then describe when a
noisy control ``alpha + ell xi`` does better than any constant one.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .equilibria import EquilibriumAnalysis, _jsonable
from .maps import MapSpec
from .thresholds import (
    ALPHA_SCAN,
    ALPHA_TOL,
    MAX_BETA,
    NOISE_FREE_GAP,
    DCProblem,
    ThresholdReport,
    cycle_free,
    dc_trace,
    find_boundary,
    hat_limits,
    interval_extremum,
)

__all__ = [
    "UncontrollableEquilibrium",
    "SideClassification",
    "Block",
    "BlockDecomposition",
    "StochasticBlockThresholds",
    "AdmissibleRegion",
    "classify_sides",
    "build_blocks",
    "global_control_bound",
    "block_problem",
    "stochastic_block_thresholds",
    "admissible_alpha_ell",
]

BETA0_SCAN = 200
BOUND_MARGIN = 1e-3


class UncontrollableEquilibrium(ValueError):
    """Both one-sided constants at an odd equilibrium are infinite."""


def _ratio_bound(L: float) -> float:
    """``L / (L + 1)`` extended by 1 at infinity."""
    return 1.0 if math.isinf(L) else L / (L + 1.0)


# ---------------------------------------------------------------------------
# classification


@dataclass(frozen=True)
class SideClassification:
    """Membership of each ``i`` in ``I = {0..i0}`` and the bound ``bar_L``.

    ``reassigned`` lists indices whose right constant is larger than the left
    one but still at most ``bar_L``: once the control exceeds
    ``bar_L / (bar_L + 1)`` such an equilibrium attracts from both sides, so it
    is treated as ``I+`` and cannot start a block.
    """

    plus: tuple[int, ...]
    minus: tuple[int, ...]
    bar_L: float
    constants: tuple[float, ...]
    reassigned: tuple[int, ...] = ()

    @property
    def first_stage_bound(self) -> float:
        return _ratio_bound(self.bar_L)


def classify_sides(analysis: EquilibriumAnalysis) -> SideClassification:
    """Split the odd equilibria into ``I+`` and ``I-`` and compute ``bar_L``.

    ``L_{2i+1}`` is the smaller of the two one-sided constants; ties go to
    ``I+``. ``bar_L`` is the largest of the ``L_{2i+1}``, the left boundary
    constant at ``K0`` and, with a finite top, the right boundary constant at
    ``K_{j0}``.
    """
    plus, minus, Ls = [], [], []
    for i in range(analysis.i0 + 1):
        c = analysis.constants_at(2 * i + 1)
        if math.isinf(c.left) and math.isinf(c.right):
            raise UncontrollableEquilibrium(
                f"K_{2 * i + 1} = {c.K:.6g}: both one-sided constants are infinite")
        Ls.append(min(c.left, c.right))
        (plus if c.right <= c.left else minus).append(i)
    candidates = list(Ls) + [analysis.boundary_left]
    if analysis.boundary_right is not None:
        candidates.append(analysis.boundary_right)
    bar_L = max(candidates)
    reassigned = tuple(i for i in minus if analysis.constants_at(2 * i + 1).right <= bar_L)
    if reassigned:
        plus = sorted(plus + list(reassigned))
        minus = [i for i in minus if i not in reassigned]
    return SideClassification(tuple(plus), tuple(minus), float(bar_L), tuple(Ls), reassigned)


# ---------------------------------------------------------------------------
# blocks


@dataclass(frozen=True)
class Block:
    """A group of consecutive intervals ``(K_p, K_{p+1})``, ``p`` in ``intervals``.

    For ``V_odd`` blocks ``markers = (a, b, c)``: the block spans
    ``[K_{2a}, K_{2c}]``, ``b`` is its first ``I-`` index and the trap is
    ``(K_{2b-1}, K_{2b+1})``. In block-local numbering ``m = b - a - 1`` and
    ``r = c - b + 1``.
    """

    kind: str
    intervals: tuple[int, ...]
    s: int | None = None
    markers: tuple[int, int, int] | None = None
    beta0: float | None = None
    beta0_monotone: bool = True
    beta1: float | None = None
    beta1_monotone: bool = True
    g_m: float | None = None
    outside_assumption: bool = False
    error: str | None = None

    @property
    def label(self) -> str:
        return f"V_{2 * self.s + 1}" if self.kind == "V_odd" else self.kind

    @property
    def m_local(self) -> int | None:
        return None if self.markers is None else self.markers[1] - self.markers[0] - 1

    @property
    def r_local(self) -> int | None:
        return None if self.markers is None else self.markers[2] - self.markers[1] + 1


@dataclass(frozen=True)
class BlockDecomposition:
    map_label: str
    i0: int
    j0: int
    sides: SideClassification
    blocks: tuple[Block, ...]
    markers: tuple[int, ...]

    @property
    def bar_L(self) -> float:
        return self.sides.bar_L

    @property
    def first_stage_bound(self) -> float:
        return self.sides.first_stage_bound

    def odd_blocks(self) -> list[Block]:
        return [b for b in self.blocks if b.kind == "V_odd"]

    def to_dict(self) -> dict:
        d = {
            "map": self.map_label,
            "i0": self.i0,
            "j0": self.j0,
            "I_plus": list(self.sides.plus),
            "I_minus": list(self.sides.minus),
            "reassigned_to_I_plus": list(self.sides.reassigned),
            "L_odd": list(self.sides.constants),
            "bar_L": self.bar_L,
            "first_stage_bound": self.first_stage_bound,
            "markers": list(self.markers),
            "blocks": [dict(asdict(b), label=b.label, m=b.m_local, r=b.r_local) for b in self.blocks],
        }
        return _jsonable(d)

    def text(self) -> str:
        lines = [
            f"map: {self.map_label}",
            f"odd equilibria I = 0..{self.i0}; I+ = {list(self.sides.plus)}, I- = {list(self.sides.minus)}",
            f"bar_L = {self.bar_L:.6g}; first-stage bound bar_L/(bar_L+1) = {self.first_stage_bound:.6f}",
        ]
        if self.sides.reassigned:
            lines.append(f"moved to I+ (attracting from both sides above the first-stage bound): "
                         f"{list(self.sides.reassigned)}")
        for b in self.blocks:
            span = f"intervals {b.intervals[0]}..{b.intervals[-1]}"
            line = f"{b.label}: {span}"
            if b.kind == "V_odd":
                line += f" (m = {b.m_local}, r = {b.r_local})"
                if b.beta0 is not None:
                    line += f", beta0 = {b.beta0:.6f}"
                if b.beta1 is not None:
                    line += f", beta1 = {b.beta1:.6f}"
                if b.outside_assumption:
                    line += " [r < 2]"
                if b.error:
                    line += f" [indeterminate: {b.error}]"
            lines.append(line)
        return "\n".join(lines) + "\n"


def _next_in(members, after: int) -> int | None:
    later = [j for j in members if j > after]
    return min(later) if later else None


def _walk(sides: SideClassification, i0: int, j0: int) -> tuple[list[Block], list[int]]:
    end = math.ceil(j0 / 2)
    blocks: list[Block] = []
    if 0 in sides.minus:
        nxt = _next_in(sides.plus, 0)
        m0 = end if nxt is None else nxt
        blocks.append(Block("V0", tuple(range(0, min(2 * m0, j0)))))
    else:
        m0 = 0
    markers = [m0]
    cur, s = m0, 0
    while True:
        odd = _next_in(sides.minus, cur)
        if odd is None or odd >= end:
            break
        nxt = _next_in(sides.plus, odd)
        even = end if nxt is None else nxt
        intervals = tuple(range(2 * cur, min(2 * even, j0)))
        blocks.append(Block("V_odd", intervals, s=s, markers=(cur, odd, even),
                            outside_assumption=even - odd + 1 < 2))
        markers += [odd, even]
        cur, s = even, s + 1
    if 2 * cur < j0:
        blocks.append(Block("V_tilde", tuple(range(2 * cur, j0))))
    return blocks, markers


@dataclass(frozen=True)
class _BlockPoints:
    """Block-local equilibria: ``K(j)`` is ``K_{2a + j}`` with an infinite top clipped."""

    analysis: EquilibriumAnalysis
    a: int
    b: int
    c: int

    def K(self, j: int) -> float:
        idx = min(2 * self.a + j, self.analysis.j0)
        return self.analysis.K_finite(idx)

    def K_raw(self, j: int) -> float:
        return self.analysis.K(min(2 * self.a + j, self.analysis.j0))

    @property
    def m(self) -> int:
        return self.b - self.a - 1

    @property
    def top(self) -> int:
        """Block-local index of the upper end, ``2 (m + r)``."""
        return 2 * (self.c - self.a)


def _beta0_predicate(m: MapSpec, P: _BlockPoints, beta: float) -> bool:
    top = P.top
    _, vmin = interval_extremum(m, beta, P.K(1), P.K(top), "min")
    if not vmin > P.K(0):
        return False
    if math.isinf(P.K_raw(top)):
        return True
    _, vmax = interval_extremum(m, beta, P.K(0), P.K(top - 1), "max")
    return vmax < P.K(top)


def block_problem(m: MapSpec, P: _BlockPoints) -> tuple[DCProblem, float, float]:
    """The block's d/c problem, ``g_m`` and ``g_m2`` (``nan`` when ``g_m`` stays below the trap)."""
    mm = P.m
    d0, c0 = P.K(2 * mm + 1), P.K(2 * mm + 3)
    _, g_m = interval_extremum(m, 0.0, P.K(0), d0, "max")
    g_m2 = interval_extremum(m, 0.0, c0, g_m, "min")[1] if g_m > c0 else math.nan
    problem = DCProblem(P.K(0), d0, c0, max(g_m, c0), (P.K(0), d0), (c0, max(g_m, c0)))
    return problem, g_m, g_m2


def _block_thresholds(m: MapSpec, analysis: EquilibriumAnalysis, block: Block, floor: float) -> Block:
    P = _BlockPoints(analysis, *block.markers)
    search = find_boundary(lambda b: _beta0_predicate(m, P, b), floor, 1.0, BETA0_SCAN, ALPHA_TOL, "inf")
    if not search.found:
        return replace(block, error="beta0: the block-confinement set is empty")
    beta0 = search.value
    problem, g_m, g_m2 = block_problem(m, P)
    if not g_m > problem.c0 or not g_m2 < problem.d0:
        return replace(block, beta0=beta0, beta0_monotone=search.monotone, beta1=beta0, g_m=g_m)
    s1 = find_boundary(lambda b: cycle_free(m, b, problem), beta0, MAX_BETA, ALPHA_SCAN, ALPHA_TOL, "inf")
    if not s1.found:
        return replace(block, beta0=beta0, beta0_monotone=search.monotone, g_m=g_m,
                       error=f"beta1: no control below {MAX_BETA} removes the two-cycles")
    return replace(block, beta0=beta0, beta0_monotone=search.monotone, beta1=s1.value,
                   beta1_monotone=s1.monotone, g_m=g_m)


def build_blocks(m: MapSpec, analysis: EquilibriumAnalysis, sides: SideClassification | None = None,
                 thresholds: bool = True, threads: int = 4) -> BlockDecomposition:
    """Decompose ``(K0, K_{j0})`` into blocks and attach ``beta0``/``beta1`` to each ``V_odd`` block.

    The walk alternates between the next ``I-`` index and the next ``I+``
    index; a missing ``I+`` index closes the block at the top. Per-block
    thresholds run in a thread pool.
    """
    sides = sides or classify_sides(analysis)
    blocks, markers = _walk(sides, analysis.i0, analysis.j0)
    if thresholds:
        floor = max(sides.first_stage_bound, 0.0)
        odd = [i for i, b in enumerate(blocks) if b.kind == "V_odd"]
        with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
            done = list(pool.map(lambda i: _block_thresholds(m, analysis, blocks[i], floor), odd))
        for i, b in zip(odd, done):
            blocks[i] = b
    return BlockDecomposition(m.label, analysis.i0, analysis.j0, sides, tuple(blocks), tuple(markers))


def global_control_bound(decomposition: BlockDecomposition, analysis: EquilibriumAnalysis) -> float:
    """Recommended constant control: the largest of the first-stage bound, the
    boundary bounds at ``K0`` and ``K_{j0}``, and every block's ``beta1``, plus 1e-3.

    Raises ``ValueError`` naming the block when a block threshold is indeterminate.
    """
    terms = [decomposition.first_stage_bound, _ratio_bound(analysis.boundary_left)]
    if analysis.boundary_right is not None:
        terms.append(_ratio_bound(analysis.boundary_right))
    for b in decomposition.odd_blocks():
        if b.error or b.beta1 is None:
            raise ValueError(f"{b.label}: threshold indeterminate ({b.error or 'not computed'})")
        terms.append(b.beta1)
    return min(max(terms) + BOUND_MARGIN, MAX_BETA)


# ---------------------------------------------------------------------------
# stochastic thresholds


@dataclass(frozen=True)
class AdmissibleRegion:
    """Pairs ``(alpha, ell)`` with ``alpha`` in ``(alpha_lo, alpha_hi)`` and
    ``ell`` in ``(max(target - alpha, 0), min(upper - alpha, alpha - lower))``.

    ``status`` is ``"noise helps"``, ``"noise unnecessary"`` (then
    ``target == lower`` and any small ``ell`` keeps the deterministic result)
    or ``"empty"``.
    """

    status: str
    lower: float
    target: float
    upper: float
    alpha_lo: float
    alpha_hi: float

    def ell_bounds(self, alpha: float) -> tuple[float, float]:
        return max(self.target - alpha, 0.0), min(self.upper - alpha, alpha - self.lower)

    def contains(self, alpha: float, ell: float) -> bool:
        if self.status == "empty" or not self.alpha_lo < alpha < self.alpha_hi:
            return False
        lo, hi = self.ell_bounds(alpha)
        inside_lo = ell > lo if self.status == "noise helps" else ell >= lo
        return inside_lo and ell < hi

    def sample(self, rng: np.random.Generator | None = None) -> tuple[float, float]:
        """The midpoint pair, or a uniform draw from the region when ``rng`` is given."""
        if self.status == "empty":
            raise ValueError("the admissible region is empty")
        if rng is None:
            alpha = 0.5 * (self.alpha_lo + self.alpha_hi)
            lo, hi = self.ell_bounds(alpha)
            return alpha, 0.5 * (lo + hi)
        while True:
            alpha = float(rng.uniform(self.alpha_lo, self.alpha_hi))
            lo, hi = self.ell_bounds(alpha)
            if hi > lo:
                ell = float(rng.uniform(lo, hi))
                if self.contains(alpha, ell):
                    return alpha, ell

    def to_dict(self) -> dict:
        return _jsonable(asdict(self))

    def text(self) -> str:
        if self.status == "empty":
            return "admissible (alpha, ell): none\n"
        a, e = self.sample()
        return (f"admissible (alpha, ell) [{self.status}]: alpha in ({self.alpha_lo:.6f}, {self.alpha_hi:.6f}), "
                f"ell in (max({self.target:.6f} - alpha, 0), min({self.upper:.6f} - alpha, alpha - {self.lower:.6f})); "
                f"midpoint alpha = {a:.6f}, ell = {e:.6f}\n")


def _region(lower: float, target: float, upper: float, four: bool) -> AdmissibleRegion:
    if target - lower < NOISE_FREE_GAP:
        return AdmissibleRegion("noise unnecessary", lower, lower, upper, lower, upper)
    hi = target if four else upper
    lo = 0.5 * (lower + target)
    if not lo < hi:
        return AdmissibleRegion("empty", lower, target, upper, lo, hi)
    return AdmissibleRegion("noise helps", lower, target, upper, lo, hi)


@dataclass
class StochasticBlockThresholds:
    block: str
    branch: str
    beta0: float
    kappa_lo: float
    kappa_hi: float
    tau: int | None = None
    theta: int | None = None
    beta21: float | None = None
    beta22: float | None = None
    beta23: float | None = None
    beta24: float | None = None
    beta2_lo: float | None = None
    beta2_hi: float | None = None
    beta3: float | None = None
    stabilization_bound: float | None = None
    region: AdmissibleRegion | None = None
    notes: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["region"] = None if self.region is None else self.region.to_dict()
        return _jsonable(d)

    def text(self) -> str:
        def f(v):
            return "-" if v is None else (f"{v:.6f}" if isinstance(v, float) else str(v))
        lines = [
            f"block {self.block}: {self.branch}",
            f"beta0 = {f(self.beta0)}; kappa_lo(beta0) = {f(self.kappa_lo)}, kappa_hi(beta0) = {f(self.kappa_hi)}",
            f"tau = {f(self.tau)}, theta = {f(self.theta)}",
            f"beta21 = {f(self.beta21)}, beta22 = {f(self.beta22)}, beta23 = {f(self.beta23)}, beta24 = {f(self.beta24)}",
            f"(beta2_lo, beta2_hi) = ({f(self.beta2_lo)}, {f(self.beta2_hi)}); beta3 = {f(self.beta3)}",
        ]
        if self.stabilization_bound is not None:
            lines.append(f"deterministic stabilization bound = {self.stabilization_bound:.6f}")
        lines += [f"note: {n}" for n in self.notes]
        text = "\n".join(lines) + "\n"
        if self.region is not None:
            text += self.region.text()
        return text


def _sup(m, beta, a, b):
    return interval_extremum(m, beta, a, b, "max")[1] if a < b else (1.0 - beta) * float(m(a)) + beta * a


def _inf(m, beta, a, b):
    return interval_extremum(m, beta, a, b, "min")[1] if a < b else (1.0 - beta) * float(m(a)) + beta * a


def stochastic_block_thresholds(m: MapSpec, analysis: EquilibriumAnalysis, block: Block) -> StochasticBlockThresholds:
    """``tau``, ``theta``, ``beta21 .. beta24``, ``beta3`` and the admissible region of one ``V_odd`` block.

    ``tau``, ``theta`` and ``beta21 .. beta24`` are always reported. Branches,
    checked in order: circulation impossible already at ``beta0``;
    the ``beta22`` set is empty (``beta21`` stabilizes); the ``beta24`` set is
    empty (``beta23`` stabilizes); ``beta22 <= beta23`` (circulation between the
    outer intervals impossible, ``beta22`` stabilizes); an empty intersection
    of ``(beta21, beta22)`` and ``(beta23, beta24)`` (no stochastic
    improvement); otherwise ``beta3`` and a noisy region.
    """
    if block.kind != "V_odd" or block.beta0 is None:
        raise ValueError("stochastic thresholds need a V_odd block with beta0 computed")
    P = _BlockPoints(analysis, *block.markers)
    mm, top = P.m, P.top
    beta0 = block.beta0
    problem, g_m, _ = block_problem(m, P)
    d0, c0 = problem.d0, problem.c0
    if not g_m > c0:
        return StochasticBlockThresholds(
            block.label, "circulation impossible: g stays below the trap's upper end", beta0,
            math.nan, math.nan, stabilization_bound=beta0,
            region=_region(beta0, beta0, MAX_BETA, False))
    kappa_lo, top_left = interval_extremum(m, beta0, P.K(0), d0, "max")
    kappa_hi, bottom_right = interval_extremum(m, beta0, c0, g_m, "min")
    out = StochasticBlockThresholds(block.label, "", beta0, kappa_lo, kappa_hi)
    tau = min(s for s in range(mm + 1) if P.K(2 * s + 1) >= kappa_lo)
    last = top // 2 - 1
    theta = max(s for s in range(mm + 1, last + 1) if P.K(2 * s + 1) <= kappa_hi)
    T0, T1 = P.K(2 * tau), P.K(2 * tau + 1)
    H1, H2 = P.K(2 * theta + 1), P.K(2 * theta + 2)
    M1, M3 = d0, c0
    out.tau, out.theta = tau, theta

    def p21(b):
        return _sup(m, b, T1, M1) < M3 and _sup(m, b, T0, T1) < H2

    def p23(b):
        return _inf(m, b, M3, H1) > T1 and _inf(m, b, H1, H2) > T0

    s21 = find_boundary(p21, beta0, 1.0, BETA0_SCAN, ALPHA_TOL, "inf")
    s23 = find_boundary(p23, beta0, 1.0, BETA0_SCAN, ALPHA_TOL, "inf")
    if not (s21.found and s23.found):
        out.branch = "indeterminate: the beta21 or beta23 set is empty"
        return out
    out.beta21 = b21 = beta0 if p21(beta0) else s21.value
    out.beta23 = b23 = beta0 if p23(beta0) else s23.value
    for name, s in (("beta21", s21), ("beta23", s23)):
        if not s.monotone:
            out.notes.append(f"{name} predicate was not monotone on the beta scan")
    s22 = find_boundary(lambda b: _sup(m, b, T0, T1) > H1, b21, 1.0, BETA0_SCAN, ALPHA_TOL, "sup")
    s24 = find_boundary(lambda b: _inf(m, b, H1, H2) < T1, b23, 1.0, BETA0_SCAN, ALPHA_TOL, "sup")
    out.beta22 = s22.value
    out.beta24 = s24.value
    if not (top_left > c0 and bottom_right < d0):
        out.branch = "circulation impossible at beta0"
        out.stabilization_bound = beta0
        out.region = _region(beta0, beta0, MAX_BETA, False)
        return out
    if not s22.found:
        out.branch = "beta22 set empty: beta21 is the stabilization bound"
        out.stabilization_bound = b21
        out.region = _region(b21, b21, MAX_BETA, False)
        return out
    if not s24.found:
        out.branch = "beta24 set empty: beta23 is the stabilization bound"
        out.stabilization_bound = b23
        out.region = _region(b23, b23, MAX_BETA, False)
        return out
    if s22.value <= b23:
        out.branch = "circulation impossible: beta22 <= beta23"
        out.stabilization_bound = max(s22.value, b21)
        out.region = _region(out.stabilization_bound, out.stabilization_bound, MAX_BETA, False)
        return out
    lo2, hi2 = max(b21, b23), min(s22.value, s24.value)
    out.beta2_lo, out.beta2_hi = lo2, hi2
    if not lo2 < hi2:
        out.branch = "no stochastic improvement: (beta21, beta22) and (beta23, beta24) do not intersect"
        out.region = AdmissibleRegion("empty", lo2, lo2, hi2, lo2, lo2)
        return out
    local = DCProblem(problem.left, d0, c0, problem.right, (T0, T1), (H1, H2))
    s3 = find_boundary(lambda b: cycle_free(m, b, local), lo2, hi2, ALPHA_SCAN, ALPHA_TOL, "inf")
    if not s3.found:
        out.branch = "indeterminate: the beta3 set is empty inside (beta2_lo, beta2_hi)"
        out.region = AdmissibleRegion("empty", lo2, hi2, hi2, lo2, lo2)
        return out
    if not s3.monotone:
        out.notes.append("beta3 predicate was not monotone on the beta scan")
    out.beta3 = b3 = lo2 if cycle_free(m, lo2, local) else s3.value
    out.region = _region(lo2, b3, hi2, False)
    out.branch = ("noise unnecessary: beta3 = beta2_lo" if out.region.status == "noise unnecessary"
                  else "noise helps: beta2_lo < beta3")
    return out


def containment_check(m: MapSpec, analysis: EquilibriumAnalysis, block: Block,
                      st: StochasticBlockThresholds, beta: float) -> tuple[bool, float, float]:
    """Whether ``d_hat(beta)`` lies in ``(K_{2tau}, K_{2tau+1})`` and ``c_hat(beta)`` in
    ``(K_{2theta+1}, K_{2theta+2})`` (block-local indices). Returns ``(ok, d_hat, c_hat)``."""
    P = _BlockPoints(analysis, *block.markers)
    problem, _, _ = block_problem(m, P)
    hats = hat_limits(dc_trace(m, beta, problem), m, problem)
    ok = (P.K(2 * st.tau) < hats.d_hat < P.K(2 * st.tau + 1)
          and P.K(2 * st.theta + 1) < hats.c_hat < P.K(2 * st.theta + 2))
    return ok, hats.d_hat, hats.c_hat


def admissible_alpha_ell(source: ThresholdReport | StochasticBlockThresholds) -> AdmissibleRegion:
    """The noisy-control region for a four-equilibrium report or a block.

    Four equilibria: ``alpha`` in ``((alpha0 + ua) / 2, ua)`` and ``ell`` in
    ``(ua - alpha, min(1 - alpha, alpha - alpha0))`` with ``ua`` the cycle-free
    threshold. Blocks: ``alpha`` in ``((beta2_lo + beta3) / 2, beta2_hi)`` and
    ``ell`` in ``(beta3 - alpha, min(alpha - beta2_lo, beta2_hi - alpha))``.
    """
    if isinstance(source, ThresholdReport):
        return _region(source.alpha0, source.underline_alpha, 1.0, True)
    if source.region is None:
        return AdmissibleRegion("empty", math.nan, math.nan, math.nan, math.nan, math.nan)
    return source.region
