"""Property suites run by ``noisypbc verify``.

Each suite checks one structural fact about the controlled map on sampled
inputs and reports the number of checks, the number of violations and up to
five counterexamples. Suites that do not apply to a map (for example the d/c
checks on a map without four equilibria) pass with zero checks and say why.
"""

from __future__ import annotations

import time
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np

from .blocks import build_blocks, classify_sides, global_control_bound
from .control import controlled_vector
from .equilibria import EquilibriumAnalysis, _jsonable, analyze_map
from .maps import MapSpec, builtin_map, builtin_names, knot_gaps, vector_function
from .stochastic import NoiseModel, convergence_probability, high_noise_run_stats
from .thresholds import FourEquilibria, ThresholdReport, analyze_thresholds, dc_trace, DCProblem

__all__ = ["PropertyResult", "SUITES", "GLOBAL_SUITES", "run_verify", "verify_report_text"]

IDENTITY_TOL = 1e-12
LIMIT_TOL = 1e-8
CONTINUITY_TOL = 1e-9
MAX_EXAMPLES = 5
ENDPOINT_TOL = 1e-12


@dataclass
class PropertyResult:
    suite: str
    map: str
    checks: int
    violations: int
    seconds: float = 0.0
    note: str = ""
    counterexamples: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return self.violations == 0

    def to_dict(self) -> dict:
        d = asdict(self)
        d["passed"] = self.passed
        return _jsonable(d)


class _Context:
    """Lazily computed analysis, threshold report and block decomposition for one map."""

    def __init__(self, m: MapSpec, seed: int):
        self.m = m
        self.rng = np.random.default_rng(seed)
        self._analysis = None
        self._report = None
        self._blocks = None

    @property
    def analysis(self) -> EquilibriumAnalysis:
        if self._analysis is None:
            self._analysis = analyze_map(self.m)
        return self._analysis

    @property
    def four(self) -> bool:
        return self.analysis.j0 == 4

    @property
    def report(self) -> ThresholdReport:
        if self._report is None:
            self._report = analyze_thresholds(self.m, self.analysis)
        return self._report

    @property
    def blocks(self):
        if self._blocks is None:
            self._blocks = build_blocks(self.m, self.analysis)
        return self._blocks

    def control_bound(self) -> float:
        if self.four:
            return min(self.report.underline_alpha + 0.01, 0.999)
        return min(global_control_bound(self.blocks, self.analysis) + 0.01, 0.999)

    def sample_points(self, n: int) -> np.ndarray:
        a = self.analysis
        return self.rng.uniform(a.equilibria[0], a.K_finite(a.j0), n)


class _Tally:
    def __init__(self):
        self.checks = 0
        self.violations = 0
        self.examples: list = []

    def check(self, ok: bool, example) -> None:
        self.checks += 1
        if not ok:
            self.violations += 1
            if len(self.examples) < MAX_EXAMPLES:
                self.examples.append(example)

    def result(self, suite: str, label: str, note: str = "") -> PropertyResult:
        return PropertyResult(suite, label, self.checks, self.violations, note=note,
                              counterexamples=self.examples)


def suite_continuity(ctx: _Context) -> PropertyResult:
    """Adjacent branches of a piecewise map agree at every knot to 1e-9."""
    t = _Tally()
    for knot, gap in knot_gaps(ctx.m):
        t.check(gap <= CONTINUITY_TOL, {"knot": knot, "jump": gap})
    return t.result("continuity", ctx.m.label, "" if t.checks else "no knots")


def suite_reparametrization(ctx: _Context) -> PropertyResult:
    """``G(mu, x) = (1 - mu_hat) G(mu0, x) + mu_hat x`` with ``mu_hat = (mu - mu0)/(1 - mu0)``,
    plus ``G(0, x) = g(x)`` and ``G(1, x) = x``."""
    t = _Tally()
    g = vector_function(ctx.m)
    xs = ctx.sample_points(200)
    mu0 = ctx.rng.uniform(0.0, 0.99, xs.size)
    mu = mu0 + (1.0 - mu0) * ctx.rng.uniform(0.0, 1.0, xs.size)
    gx = g(xs)
    G = lambda v, x, gx: (1.0 - v) * gx + v * x  # noqa: E731
    lhs = G(mu, xs, gx)
    mu_hat = (mu - mu0) / (1.0 - mu0)
    rhs = (1.0 - mu_hat) * G(mu0, xs, gx) + mu_hat * xs
    scale = np.maximum(1.0, np.abs(gx) + np.abs(xs))
    for x, a, b, s, u, u0 in zip(xs, lhs, rhs, scale, mu, mu0):
        t.check(abs(a - b) <= IDENTITY_TOL * s, {"x": x, "mu": u, "mu0": u0, "difference": a - b})
    for x, v in zip(xs[:50], gx[:50]):
        t.check(controlled_vector(ctx.m, 0.0)(np.array([x]))[0] == v, {"x": x, "which": "G(0,x)"})
        t.check(abs(controlled_vector(ctx.m, 1.0)(np.array([x]))[0] - x) <= IDENTITY_TOL * max(1, abs(x)),
                {"x": x, "which": "G(1,x)"})
    return t.result("reparametrization", ctx.m.label)


def suite_ordering(ctx: _Context) -> PropertyResult:
    """For ``1 > a > b > 0``: ``g > G(b) > G(a) > x`` where ``g > x`` and the reverse where ``g < x``."""
    t = _Tally()
    g = vector_function(ctx.m)
    xs = ctx.sample_points(300)
    a = ctx.rng.uniform(0.01, 0.99, xs.size)
    b = a * ctx.rng.uniform(0.01, 0.99, xs.size)
    gx = g(xs)
    Ga, Gb = (1 - a) * gx + a * xs, (1 - b) * gx + b * xs
    for x, v, ga, gb, ai, bi in zip(xs, gx, Ga, Gb, a, b):
        gap = abs(v - x)
        if gap < 1e-9 * max(1.0, abs(x)):
            continue
        if v > x:
            ok = v > gb > ga > x
        else:
            ok = v < gb < ga < x
        t.check(bool(ok), {"x": x, "a": ai, "b": bi})
    return t.result("ordering", ctx.m.label)


def suite_limit(ctx: _Context) -> PropertyResult:
    """Every orbit labelled converged ends at a point with ``|g(x) - x| <= 1e-8``."""
    t = _Tally()
    alpha = ctx.control_bound()
    a = ctx.analysis
    res = convergence_probability(ctx.m, alpha, 0.0, NoiseModel(seed=7), n_runs=60, horizon=20_000,
                                  x0=(a.equilibria[0], a.K_finite(a.j0)), analysis=a)
    g = vector_function(ctx.m)
    for r in res.runs:
        if r.outcome.kind == "converged":
            K = r.outcome.limit
            resid = abs(float(g(np.array([K]))[0]) - K)
            t.check(resid <= LIMIT_TOL, {"x0": r.x0, "limit": K, "residual": resid})
    return t.result("limit", ctx.m.label, f"alpha = {alpha:.6f}, converged runs {res.n_converged}/{res.n_runs}")


def suite_trap(ctx: _Context) -> PropertyResult:
    """Trap invariance.

    Closed intervals allow 1e-12 of rounding at their end points, which are
    computed equilibria. Four equilibria: for controls above ``alpha0`` the open interval
    ``(K1 - delta, K3 + delta)`` maps into itself, and for controls above
    ``L/(L+1)`` so does ``[K1, K3]``. Otherwise: above the first-stage bound the
    range ``(K0, K_top)`` maps into itself and, for ``i`` in ``I+`` with
    ``i + 1`` in ``I-``, so does ``[K_{2i+1}, K_{2i+3}]``.
    """
    t = _Tally()
    g = vector_function(ctx.m)
    rng = ctx.rng

    def probe(lo, hi, alpha_lo, closed, n=500):
        xs = rng.uniform(lo, hi, n)
        if closed:
            xs[:2] = lo, hi
        al = rng.uniform(alpha_lo, 0.999, n)
        ys = (1 - al) * g(xs) + al * xs
        slack = ENDPOINT_TOL * max(1.0, abs(hi))
        for x, a, y in zip(xs, al, ys):
            ok = (lo - slack <= y <= hi + slack) if closed else (lo < y < hi)
            t.check(bool(ok), {"x": x, "alpha": a, "image": y, "interval": [lo, hi]})

    if ctx.four:
        r = ctx.report
        q = FourEquilibria.from_analysis(ctx.analysis)
        probe(q.K1 - r.delta, q.K3 + r.delta, r.alpha0 + 1e-3, False)
        probe(q.K1, q.K3, r.L / (r.L + 1) + 1e-3, True)
        note = f"alpha0 = {r.alpha0:.6f}, delta = {r.delta:.6g}"
    else:
        sides = classify_sides(ctx.analysis)
        a = ctx.analysis
        bound = min(global_control_bound(ctx.blocks, a), 0.998)
        probe(a.equilibria[0], a.K_finite(a.j0), bound, True)
        for i in sides.plus:
            if i + 1 in sides.minus:
                probe(a.K(2 * i + 1), a.K(2 * i + 3), bound, True)
        note = f"control bound {bound:.6f}"
    return t.result("trap", ctx.m.label, note)


def _dc_problems(ctx: _Context) -> list[tuple[DCProblem, float]]:
    if ctx.four:
        r = ctx.report
        if not r.g_m > ctx.analysis.equilibria[3] + r.delta:
            return []
        q = FourEquilibria.from_analysis(ctx.analysis)
        return [(DCProblem.four(q, r.delta, r.g_m), r.alpha0)]
    return []


def suite_dc_monotone(ctx: _Context) -> PropertyResult:
    """``d_k`` decreases and ``c_k`` increases strictly until the stall, and for
    larger controls ``d_k`` is smaller and ``c_k`` larger."""
    t = _Tally()
    problems = _dc_problems(ctx)
    for problem, lower in problems:
        betas = np.linspace(lower, 0.99, 10)[1:]
        traces = [dc_trace(ctx.m, float(b), problem, max_k=64) for b in betas]
        for tr in traces:
            last = len(tr.d_seq) - 1
            for k in range(1, last + 1):
                d0, d1, c0, c1 = tr.d_seq[k - 1], tr.d_seq[k], tr.c_seq[k - 1], tr.c_seq[k]
                if (not tr.infinite and k == last) or (tr.infinite and d1 == d0 and c1 == c0):
                    ok = d1 <= d0 and c1 >= c0
                else:
                    ok = d1 < d0 and c1 > c0
                t.check(ok, {"beta": tr.beta, "k": k, "d": [d0, d1], "c": [c0, c1]})
        for lo_tr, hi_tr in zip(traces, traces[1:]):
            # the last entry of a stalled trace repeats the stalled value instead of a new crossing
            n = min(len(tr.d_seq) - (0 if tr.infinite else 1) for tr in (lo_tr, hi_tr))
            for k in range(1, n):
                t.check(hi_tr.d_seq[k] <= lo_tr.d_seq[k] + 1e-12 and hi_tr.c_seq[k] >= lo_tr.c_seq[k] - 1e-12,
                        {"k": k, "betas": [lo_tr.beta, hi_tr.beta]})
    return t.result("dc-monotone", ctx.m.label, "" if problems else "no d/c problem for this map")


def suite_k0_dichotomy(ctx: _Context) -> PropertyResult:
    """``underline alpha > alpha0`` exactly when some control above ``alpha0`` has ``k0 = inf``."""
    t = _Tally()
    problems = _dc_problems(ctx)
    if not ctx.four:
        return t.result("k0-dichotomy", ctx.m.label, "no four-equilibrium structure")
    r = ctx.report
    if not problems or not r.cond1:
        t.check(r.underline_alpha == r.alpha0, {"alpha0": r.alpha0, "underline_alpha": r.underline_alpha})
        return t.result("k0-dichotomy", ctx.m.label, "no circulation possible, thresholds coincide")
    problem, _ = problems[0]
    betas = np.linspace(r.alpha0, r.underline_alpha if r.noise_helps else r.alpha0 + 0.05, 8)[1:-1]
    infinite = [float(b) for b in betas if dc_trace(ctx.m, float(b), problem).infinite]
    if r.noise_helps:
        t.check(bool(infinite), {"alpha0": r.alpha0, "underline_alpha": r.underline_alpha, "betas": betas.tolist()})
    else:
        t.check(not infinite, {"alpha0": r.alpha0, "infinite_at": infinite})
    above = dc_trace(ctx.m, min(r.underline_alpha + 0.02, 0.99), problem)
    t.check(not above.infinite or r.underline_alpha > r.alpha0,
            {"beta": above.beta, "status": above.status})
    return t.result("k0-dichotomy", ctx.m.label,
                    f"alpha0 = {r.alpha0:.6f}, underline alpha = {r.underline_alpha:.6f}, "
                    f"k0 = inf at {len(infinite)}/{len(betas)} sampled controls")


def suite_no_circulation(ctx: _Context) -> PropertyResult:
    """At the recommended constant control, 500 orbits from random points converge."""
    t = _Tally()
    alpha = ctx.control_bound()
    res = convergence_probability(ctx.m, alpha, 0.0, NoiseModel(seed=11), n_runs=500, horizon=20_000,
                                  analysis=ctx.analysis)
    for r in res.runs:
        t.check(r.outcome.kind == "converged", {"x0": r.x0, "outcome": r.outcome.label()})
    return t.result("no-circulation", ctx.m.label, f"alpha = {alpha:.6f}")


def suite_run_frequency(seed: int) -> list[PropertyResult]:
    """Sliding-window frequencies of consecutive near-1 noise values match ``p^J`` within 3 SE."""
    out = []
    for kind, eps, J in (("bernoulli", 0.1, 5), ("uniform", 0.1, 3), ("gaussian", 0.5, 2), ("uniform", 0.1, 0)):
        t = _Tally()
        start = time.perf_counter()
        st = high_noise_run_stats(NoiseModel(kind, seed=seed), eps, J, 1_000_000)
        t.check(st.within(3.0), {"frequency": st.frequency, "expected": st.expected, "se": st.standard_error})
        res = t.result("run-frequency", f"{kind} eps={eps} J={J}",
                       f"frequency {st.frequency:.6g} vs {st.expected:.6g} (z = {st.z:.2f})")
        res.seconds = time.perf_counter() - start
        out.append(res)
    return out


SUITES: dict[str, Callable[[_Context], PropertyResult]] = {
    "continuity": suite_continuity,
    "reparametrization": suite_reparametrization,
    "ordering": suite_ordering,
    "limit": suite_limit,
    "trap": suite_trap,
    "dc-monotone": suite_dc_monotone,
    "k0-dichotomy": suite_k0_dichotomy,
    "no-circulation": suite_no_circulation,
}
GLOBAL_SUITES = {"run-frequency": suite_run_frequency}


def run_verify(maps: list[MapSpec] | None = None, only: list[str] | None = None, seed: int = 0) -> list[PropertyResult]:
    """Run the selected suites (default: all) on ``maps`` (default: the built-in corpus)."""
    names = list(SUITES) + list(GLOBAL_SUITES)
    chosen = names if not only else only
    unknown = [n for n in chosen if n not in names]
    if unknown:
        raise ValueError(f"unknown suite(s) {unknown}; available: {names}")
    maps = maps if maps is not None else [builtin_map(n) for n in builtin_names()]
    results = []
    for i, m in enumerate(maps):
        ctx = _Context(m, seed + i)
        for name in chosen:
            if name not in SUITES:
                continue
            start = time.perf_counter()
            try:
                res = SUITES[name](ctx)
            except Exception as exc:  # a crash inside a suite is a failure with the error attached
                res = PropertyResult(name, m.label, 1, 1, note="error",
                                     counterexamples=[{"error": f"{type(exc).__name__}: {exc}"}])
            res.seconds = time.perf_counter() - start
            results.append(res)
    for name in chosen:
        if name in GLOBAL_SUITES:
            results.extend(GLOBAL_SUITES[name](seed))
    return results


def verify_report_text(results: list[PropertyResult], timings: bool = True) -> str:
    """One line per suite; ``timings=False`` leaves out wall-clock seconds so the text is reproducible."""
    lines = []
    for r in results:
        status = "PASS" if r.passed else "FAIL"
        line = f"{status} {r.suite:18s} {r.map:28s} checks={r.checks} violations={r.violations}"
        if timings:
            line += f" ({r.seconds:.1f}s)"
        if r.note:
            line += f"  {r.note}"
        lines.append(line)
        for ex in r.counterexamples:
            lines.append(f"    counterexample: {ex}")
    failed = sum(not r.passed for r in results)
    lines.append(f"{len(results) - failed}/{len(results)} suites passed")
    return "\n".join(lines) + "\n"

