"""Noisy control ``alpha_n = alpha + ell xi_n``: noise models, orbits, outcome labels and ensembles.

Every run owns an independent random stream derived from ``(seed, run index)``
through :class:`numpy.random.SeedSequence`, so a single run of an ensemble can
be replayed on its own with :func:`stoch_orbit`. Noise is drawn in chunks of
4096 values; the scalar and vectorised paths consume the stream identically.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.stats import binomtest, norm

from .control import OrbitRecord, ParameterError, run_orbit
from .equilibria import EquilibriumAnalysis, analyze_map
from .maps import MapSpec, vector_function
from .thresholds import interval_extremum

__all__ = [
    "NOISE_KINDS",
    "NoiseModel",
    "sample_noise",
    "noise_stream",
    "stoch_orbit",
    "Outcome",
    "classify_outcome",
    "default_x0_range",
    "RunResult",
    "EnsembleResult",
    "convergence_probability",
    "ensemble_csv",
    "RunStats",
    "high_noise_run_stats",
]

NOISE_KINDS = ("bernoulli", "uniform", "gaussian")
CHUNK = 4096
TAIL = 100
HISTORY = 200
MIN_CLASSIFY = 200
CIRCULATION_CHANGES = 10
STILL_STEP = 1e-13
STILL_COUNT = 50
DEFAULT_HORIZON = 100_000
DEFAULT_TOL = 1e-5
DEFAULT_RUNS = 200
X0_MARGIN = 1e-3


@dataclass(frozen=True)
class NoiseModel:
    """Distribution of ``xi``: ``bernoulli`` (+-1 with probability 1/2),
    ``uniform`` on ``[-1, 1]`` or ``gaussian`` (normal with standard deviation
    ``sd`` clipped to ``[-1, 1]``)."""

    kind: str = "bernoulli"
    seed: int = 0
    sd: float = 0.5

    def __post_init__(self):
        if self.kind not in NOISE_KINDS:
            raise ParameterError(f"unknown noise kind {self.kind!r}; choose from {NOISE_KINDS}")
        if not self.sd > 0:
            raise ParameterError("gaussian noise needs sd > 0")
        if not 0 <= int(self.seed) < 2 ** 64:
            raise ParameterError("seed must be a 64-bit unsigned integer")

    def draw(self, rng: np.random.Generator, n: int) -> np.ndarray:
        if self.kind == "bernoulli":
            return np.where(rng.random(n) < 0.5, -1.0, 1.0)
        if self.kind == "uniform":
            return 2.0 * rng.random(n) - 1.0
        return np.clip(self.sd * rng.standard_normal(n), -1.0, 1.0)

    def upper_tail(self, eps: float) -> float:
        """Exact ``P(xi >= 1 - eps)``."""
        t = 1.0 - eps
        if self.kind == "bernoulli":
            return 1.0 if t <= -1.0 else (0.5 if t <= 1.0 else 0.0)
        if self.kind == "uniform":
            return float(min(max((1.0 - t) / 2.0, 0.0), 1.0))
        if t > 1.0:
            return 0.0
        if t <= -1.0:
            return 1.0
        return float(norm.sf(t / self.sd))


def _rng(seed: int, run: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(int(run),)))


def sample_noise(model: NoiseModel, n: int, run: int = 0) -> np.ndarray:
    """The first ``n`` values of run ``run``'s noise stream."""
    if n < 1:
        raise ParameterError("n must be at least 1")
    rng = _rng(model.seed, run)
    parts = [model.draw(rng, CHUNK) for _ in range(-(-n // CHUNK))]
    return np.concatenate(parts)[:n]


def noise_stream(model: NoiseModel, run: int = 0) -> Callable[[int], float]:
    """A function returning ``xi_1, xi_2, ...`` of run ``run`` on successive calls."""
    rng = _rng(model.seed, run)
    buffer: list[float] = []

    def draw(n):
        if not buffer:
            buffer.extend(model.draw(rng, CHUNK)[::-1].tolist())
        return buffer.pop()

    return draw


def _check_alpha_ell(alpha: float, ell: float) -> None:
    if ell < 0:
        raise ParameterError("noise amplitude ell must be non-negative")
    if not (alpha + ell < 1.0 and alpha - ell > 0.0):
        raise ParameterError(f"need 0 < alpha - ell and alpha + ell < 1, got alpha={alpha}, ell={ell}")


def stoch_orbit(m: MapSpec, alpha: float, ell: float, noise: NoiseModel, x0: float,
                horizon: int = DEFAULT_HORIZON, run: int = 0, stop_on_cycle: bool = False) -> OrbitRecord:
    """Orbit of ``x -> G(alpha + ell xi_n, x)`` using run ``run``'s noise stream.

    With ``ell = 0`` every control equals ``alpha`` exactly, so the orbit is
    bit-identical to the constant-control deterministic orbit.
    """
    _check_alpha_ell(alpha, ell)
    xi = noise_stream(noise, run)
    return run_orbit(m, x0, horizon, lambda n: alpha + ell * xi(n), stop_on_cycle=stop_on_cycle)


# ---------------------------------------------------------------------------
# outcome labels


@dataclass
class Outcome:
    """``kind`` is one of ``converged``, ``two-cycle``, ``circulating``, ``escaped``, ``undecided``."""

    kind: str
    steps_used: int
    residual: float = math.nan
    limit: float | None = None
    pair: tuple[float, float] | None = None
    visits: dict[int, int] = field(default_factory=dict)

    def label(self) -> str:
        if self.kind == "converged":
            return f"converged to {self.limit:.10g}"
        if self.kind == "two-cycle":
            return f"two-cycle {{{self.pair[0]:.6g}, {self.pair[1]:.6g}}}"
        if self.kind == "circulating":
            return "circulating " + ", ".join(f"I{k}:{v}" for k, v in sorted(self.visits.items()))
        return self.kind


def _classify(tail: np.ndarray, steps: int, converged: bool, escaped: bool, changes: int,
              equilibria: np.ndarray, tol: float) -> Outcome:
    if escaped:
        return Outcome("escaped", steps)
    last = float(tail[-1])
    k = int(np.argmin(np.abs(equilibria - last)))
    K = float(equilibria[k])
    if converged and abs(last - K) <= tol:
        return Outcome("converged", steps, abs(last - K), limit=K)
    if steps + 1 < MIN_CLASSIFY:
        return Outcome("undecided", steps)
    window = tail[-TAIL:]
    dev = float(np.max(np.abs(window - K)))
    if dev <= tol:
        return Outcome("converged", steps, dev, limit=K)
    even, odd = window[::2], window[1::2]
    spread = max(float(np.ptp(even)), float(np.ptp(odd)))
    if spread < tol and abs(float(even.mean()) - float(odd.mean())) > tol:
        p, q = sorted((float(even.mean()), float(odd.mean())))
        return Outcome("two-cycle", steps, spread, pair=(p, q))
    if changes >= CIRCULATION_CHANGES:
        idx, counts = np.unique(np.searchsorted(equilibria, tail), return_counts=True)
        return Outcome("circulating", steps, visits={int(i): int(c) for i, c in zip(idx, counts)})
    return Outcome("undecided", steps)


def _index_changes(states: np.ndarray, equilibria: np.ndarray) -> int:
    half = states[len(states) // 2:]
    idx = np.searchsorted(equilibria, half)
    return int(np.count_nonzero(np.diff(idx)))


def classify_outcome(orbit: OrbitRecord, analysis: EquilibriumAnalysis, tol: float = DEFAULT_TOL) -> Outcome:
    """Label an orbit.

    ``converged``: the orbit stopped as stationary next to an equilibrium, or
    its final 100 states lie within ``tol`` of one equilibrium. ``two-cycle``:
    the final states alternate between two clusters of diameter below ``tol``.
    ``circulating``: the interval index changes at least 10 times over the
    final half. Orbits shorter than 200 states that did not stop as stationary
    are ``undecided``.
    """
    eqs = np.asarray(analysis.equilibria, dtype=float)
    changes = _index_changes(orbit.states, eqs)
    return _classify(orbit.states, orbit.steps, orbit.converged, orbit.escaped, changes, eqs, tol)


# ---------------------------------------------------------------------------
# ensembles


def default_x0_range(m: MapSpec, analysis: EquilibriumAnalysis) -> tuple[float, float]:
    """``(K0 + 1e-3, top - 1e-3)``: ``top`` is the maximum of g on ``[K0, K1]`` for
    four equilibria and the finite top ``K_{j0}`` (or grid bound) otherwise."""
    K0 = analysis.equilibria[0]
    if analysis.j0 == 4:
        _, top = interval_extremum(m, 0.0, K0, analysis.equilibria[1], "max")
        top = min(top, m.upper)
    else:
        top = analysis.K_finite(analysis.j0)
    return K0 + X0_MARGIN, top - X0_MARGIN


@dataclass
class RunResult:
    run_id: int
    x0: float
    outcome: Outcome


@dataclass
class EnsembleResult:
    alpha: float
    ell: float
    noise: NoiseModel
    horizon: int
    seed: int
    runs: list[RunResult]
    tol: float

    @property
    def n_runs(self) -> int:
        return len(self.runs)

    @property
    def n_converged(self) -> int:
        return sum(r.outcome.kind == "converged" for r in self.runs)

    @property
    def fraction(self) -> float:
        return self.n_converged / self.n_runs

    def wilson_interval(self) -> tuple[float, float]:
        ci = binomtest(self.n_converged, self.n_runs).proportion_ci(0.95, method="wilson")
        return float(ci.low), float(ci.high)

    def counts(self) -> dict[str, int]:
        out: dict[str, int] = {}
        for r in self.runs:
            out[r.outcome.kind] = out.get(r.outcome.kind, 0) + 1
        return out

    def limits(self) -> dict[float, int]:
        out: dict[float, int] = {}
        for r in self.runs:
            if r.outcome.kind == "converged":
                out[r.outcome.limit] = out.get(r.outcome.limit, 0) + 1
        return out

    def text(self) -> str:
        lo, hi = self.wilson_interval()
        lines = [
            f"alpha = {self.alpha:.6g}, ell = {self.ell:.6g}, noise = {self.noise.kind}, "
            f"runs = {self.n_runs}, horizon = {self.horizon}, seed = {self.seed}",
            f"converged fraction = {self.fraction:.4f} (Wilson 95%: [{lo:.4f}, {hi:.4f}])",
            "outcomes: " + ", ".join(f"{k} {v}" for k, v in sorted(self.counts().items())),
            "limits: " + (", ".join(f"{k:.10g} x{v}" for k, v in sorted(self.limits().items())) or "none"),
        ]
        return "\n".join(lines) + "\n"


def _initial_points(x0, n_runs: int, seed: int, m: MapSpec, analysis: EquilibriumAnalysis) -> np.ndarray:
    if x0 is None:
        x0 = default_x0_range(m, analysis)
    if callable(x0):
        return np.array([float(x0(np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(i, 0)))))
                         for i in range(n_runs)])
    if isinstance(x0, (tuple, list)) and len(x0) == 2:
        lo, hi = float(x0[0]), float(x0[1])
        return np.array([np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(i, 0))).uniform(lo, hi)
                         for i in range(n_runs)])
    return np.full(n_runs, float(x0))


def _simulate(m: MapSpec, alpha: float, ell: float, noise: NoiseModel, x0s: np.ndarray, horizon: int,
              eqs: np.ndarray, tol: float, stop_on_cycle: bool) -> list[Outcome]:
    """Advance all runs together; runs leave the active set when they stop."""
    n = x0s.size
    f = vector_function(m)
    lo, hi = float(m.domain[0]), m.upper
    gens = [_rng(noise.seed, i) for i in range(n)]
    x = x0s.astype(float).copy()
    prev = np.full(n, np.nan)
    hist = np.full((HISTORY, n), np.nan)
    hist[0] = x
    still = np.zeros(n, dtype=int)
    still2 = np.zeros(n, dtype=int)
    steps = np.zeros(n, dtype=int)
    changes = np.zeros(n, dtype=int)
    converged = np.zeros(n, dtype=bool)
    escaped = np.zeros(n, dtype=bool)
    idx = np.searchsorted(eqs, x)
    act = np.arange(n)
    half = horizon // 2
    xi = np.empty((n, CHUNK))
    for step in range(1, horizon + 1):
        pos = (step - 1) % CHUNK
        if pos == 0:
            xi = np.stack([noise.draw(g, CHUNK) for g in gens])
        xa = x[act]
        a = alpha + ell * xi[act, pos]
        with np.errstate(invalid="ignore", over="ignore", divide="ignore"):
            y = (1.0 - a) * f(xa) + a * xa
        bad = ~((y >= lo) & (y <= hi))
        done = bad.copy()
        escaped[act[bad]] = True
        ok = ~bad
        ga, ya = act[ok], y[ok]
        x_old = xa[ok]
        x[ga] = ya
        steps[ga] = step
        hist[step % HISTORY, ga] = ya
        moved = np.abs(ya - x_old) < STILL_STEP
        still[ga] = np.where(moved, still[ga] + 1, 0)
        fin = np.zeros(act.size, dtype=bool)
        fin[ok] = still[ga] >= STILL_COUNT
        converged[act[fin]] = True
        done |= fin
        if stop_on_cycle:
            near = np.abs(ya - prev[ga]) < STILL_STEP
            still2[ga] = np.where(near, still2[ga] + 1, 0)
            lock = np.zeros(act.size, dtype=bool)
            lock[ok] = (still2[ga] >= STILL_COUNT) & (step + 1 >= MIN_CLASSIFY)
            done |= lock
        prev[ga] = x_old
        if step > half:
            new_idx = np.searchsorted(eqs, ya)
            changes[ga] += new_idx != idx[ga]
            idx[ga] = new_idx
        elif step == half:
            idx[ga] = np.searchsorted(eqs, ya)
        if done.any():
            act = act[~done]
            if act.size == 0:
                break
    outcomes = []
    for i in range(n):
        k = int(steps[i])
        count = min(k + 1, HISTORY)
        order = [(k - j) % HISTORY for j in range(count - 1, -1, -1)]
        tail = hist[order, i]
        outcomes.append(_classify(tail, k, bool(converged[i]), bool(escaped[i]), int(changes[i]), eqs, tol))
    return outcomes


def convergence_probability(m: MapSpec, alpha: float, ell: float, noise: NoiseModel | str = "bernoulli",
                            n_runs: int = DEFAULT_RUNS, horizon: int = DEFAULT_HORIZON, x0=None,
                            analysis: EquilibriumAnalysis | None = None, tol: float = DEFAULT_TOL,
                            stop_on_cycle: bool = True) -> EnsembleResult:
    """Fraction of ``n_runs`` noisy orbits labelled ``converged``.

    ``x0`` may be a number, a ``(low, high)`` range sampled uniformly per run,
    a callable taking a generator, or ``None`` for :func:`default_x0_range`.
    Run ``i`` uses the noise stream ``(noise.seed, i)``; its initial point is
    drawn from the separate stream ``(noise.seed, (i, 0))``.
    """
    if n_runs < 30:
        raise ParameterError("n_runs must be at least 30")
    if isinstance(noise, str):
        noise = NoiseModel(noise)
    _check_alpha_ell(alpha, ell)
    analysis = analysis or analyze_map(m)
    x0s = _initial_points(x0, n_runs, noise.seed, m, analysis)
    eqs = np.asarray(analysis.equilibria, dtype=float)
    outcomes = _simulate(m, alpha, ell, noise, x0s, horizon, eqs, tol, stop_on_cycle)
    runs = [RunResult(i, float(x0s[i]), o) for i, o in enumerate(outcomes)]
    return EnsembleResult(alpha, ell, noise, horizon, noise.seed, runs, tol)


def ensemble_csv(result: EnsembleResult) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["run_id", "seed", "outcome", "limit", "steps", "x0"])
    for r in result.runs:
        o = r.outcome
        limit = "" if o.limit is None else repr(o.limit)
        if o.pair is not None:
            limit = f"{o.pair[0]!r};{o.pair[1]!r}"
        w.writerow([r.run_id, result.seed, o.kind, limit, o.steps_used, repr(r.x0)])
    return buf.getvalue()


# ---------------------------------------------------------------------------
# runs of large noise values


@dataclass(frozen=True)
class RunStats:
    """Share of length-``window`` stretches in which every ``xi >= 1 - eps``."""

    frequency: float
    expected: float
    standard_error: float
    window: int
    windows: int
    p_single: float

    @property
    def z(self) -> float:
        return (self.frequency - self.expected) / self.standard_error if self.standard_error > 0 else 0.0

    def within(self, k: float = 3.0) -> bool:
        return abs(self.frequency - self.expected) <= k * self.standard_error


def high_noise_run_stats(model: NoiseModel, eps: float, J: int, n_samples: int = 1_000_000,
                         run: int = 0) -> RunStats:
    """Sliding-window frequency of ``J`` consecutive draws with ``xi >= 1 - eps``.

    ``J = 0`` is treated as a window of one draw. The standard error is the
    exact one for i.i.d. draws, accounting for the overlap between windows.
    """
    if J < 0:
        raise ParameterError("J must be non-negative")
    w = max(J, 1)
    if n_samples < w:
        raise ParameterError("n_samples must be at least the window length")
    hits = (sample_noise(model, n_samples, run) >= 1.0 - eps).astype(np.int64)
    csum = np.concatenate([[0], np.cumsum(hits)])
    full = (csum[w:] - csum[:-w]) == w
    N = full.size
    p = model.upper_tail(eps)
    q = p ** w
    var = q - q * q
    for k in range(1, min(w, N)):
        var += 2.0 * (1.0 - k / N) * (p ** (w + k) - q * q)
    se = math.sqrt(max(var, 0.0) / N)
    return RunStats(float(full.mean()), q, se, w, N, p)
