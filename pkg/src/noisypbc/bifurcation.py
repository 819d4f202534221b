"""Sweeps of the control ``alpha`` and the last-bifurcation estimate.

For each ``alpha`` on the grid, orbits start from a fixed set of initial
points (and, with noise, several seeds each), run through a transient and then
record ``keep`` states. All orbits of a chunk of the grid advance together as
one numpy array. Noise for grid point ``i`` and seed ``s`` comes from the
stream ``SeedSequence(seed, spawn_key=(i, s))``, so results do not depend on
chunking or thread scheduling.
"""

from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .control import ParameterError
from .maps import MapSpec, analysis_window, vector_function
from .stochastic import NoiseModel

__all__ = [
    "BifurcationDiagram",
    "default_x0_set",
    "sweep",
    "attractor_sets",
    "last_bifurcation",
    "diagram_csv",
    "DET_CLUSTER_TOL",
    "NOISY_CLUSTER_TOL",
    "TARGET_BAND",
]

DEFAULT_N_ALPHA = 400
DEFAULT_TRANSIENT = 2000
DEFAULT_KEEP = 120
DEFAULT_X0_COUNT = 8
DEFAULT_SEEDS = 4
DET_CLUSTER_TOL = 5e-3
NOISY_CLUSTER_TOL = 2e-2
TARGET_BAND = 5e-3
CHUNK_STEPS = 512
ALPHAS_PER_TASK = 25


@dataclass
class BifurcationDiagram:
    """``samples[i, k, j]`` is the ``k``-th kept state of orbit ``j`` at ``alphas[i]``.

    Orbit ``j`` starts at ``x0s[j // n_seeds]`` with noise seed ``j % n_seeds``.
    Orbits that left the domain hold NaN from the escape on.
    """

    map_label: str
    alphas: np.ndarray
    samples: np.ndarray
    x0s: np.ndarray
    n_seeds: int
    ell: float
    noise: str
    seed: int
    transient: int
    keep: int

    @property
    def noisy(self) -> bool:
        return self.ell > 0

    @property
    def step(self) -> float:
        return float(self.alphas[1] - self.alphas[0]) if self.alphas.size > 1 else 0.0

    def values_at(self, i: int) -> np.ndarray:
        v = self.samples[i].ravel()
        return v[np.isfinite(v)]


def default_x0_set(m: MapSpec, count: int = DEFAULT_X0_COUNT) -> np.ndarray:
    """``count`` evenly spaced interior points of the analysis window."""
    lo, hi = analysis_window(m)
    return np.linspace(lo, hi, count + 2)[1:-1]


def _sweep_chunk(m: MapSpec, alphas: np.ndarray, first_index: int, x0s: np.ndarray, n_seeds: int,
                 ell: float, noise: NoiseModel, transient: int, keep: int) -> np.ndarray:
    f = vector_function(m)
    lo, hi = float(m.domain[0]), m.upper
    n_a, n_o = alphas.size, x0s.size * n_seeds
    x = np.tile(np.repeat(x0s, n_seeds), (n_a, 1))
    base = np.repeat(alphas[:, None], n_o, axis=1)
    out = np.full((n_a, keep, n_o), np.nan)
    gens = []
    if ell > 0:
        gens = [[np.random.default_rng(np.random.SeedSequence(noise.seed, spawn_key=(first_index + i, s)))
                 for s in range(n_seeds)] for i in range(n_a)]
    total = transient + keep
    xi = None
    for n in range(total):
        pos = n % CHUNK_STEPS
        if ell > 0 and pos == 0:
            width = min(CHUNK_STEPS, total - n)
            xi = np.empty((width, n_a, n_o))
            for i in range(n_a):
                draws = np.stack([noise.draw(g, width) for g in gens[i]], axis=1)
                xi[:, i, :] = np.tile(draws, (1, x0s.size))
        a = base + ell * xi[pos] if ell > 0 else base
        with np.errstate(invalid="ignore", over="ignore", divide="ignore"):
            x = (1.0 - a) * f(x) + a * x
        x = np.where((x >= lo) & (x <= hi), x, np.nan)
        if n >= transient:
            out[:, n - transient, :] = x
    return out


def sweep(m: MapSpec, alpha_range: tuple[float, float], n_alpha: int = DEFAULT_N_ALPHA, ell: float = 0.0,
          noise: NoiseModel | str = "bernoulli", x0s=None, transient: int = DEFAULT_TRANSIENT,
          keep: int = DEFAULT_KEEP, n_seeds: int = DEFAULT_SEEDS, threads: int = 1) -> BifurcationDiagram:
    """Attractor samples on ``n_alpha`` evenly spaced controls in ``[lo, hi]``.

    Controls ``alpha + ell xi`` must stay inside ``(0, 1)`` for every grid
    point. Without noise a single seed is used.
    """
    lo, hi = map(float, alpha_range)
    if not (0.0 <= lo < hi < 1.0):
        raise ParameterError(f"need 0 <= lo < hi < 1, got ({lo}, {hi})")
    if transient < 200:
        raise ParameterError("transient must be at least 200")
    if keep < 1 or n_alpha < 2:
        raise ParameterError("keep must be >= 1 and n_alpha >= 2")
    if isinstance(noise, str):
        noise = NoiseModel(noise)
    if ell < 0 or (ell > 0 and not (lo - ell > 0.0 and hi + ell < 1.0)):
        raise ParameterError(f"alpha +- ell must stay in (0, 1) on the whole grid (ell={ell})")
    n_seeds = n_seeds if ell > 0 else 1
    x0s = default_x0_set(m) if x0s is None else np.asarray(x0s, dtype=float)
    alphas = np.linspace(lo, hi, n_alpha)
    starts = list(range(0, n_alpha, ALPHAS_PER_TASK))

    def task(start):
        stop = min(start + ALPHAS_PER_TASK, n_alpha)
        return _sweep_chunk(m, alphas[start:stop], start, x0s, n_seeds, ell, noise, transient, keep)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(task, starts))
    else:
        parts = [task(s) for s in starts]
    return BifurcationDiagram(m.label, alphas, np.concatenate(parts, axis=0), x0s, n_seeds, float(ell),
                              noise.kind, noise.seed, transient, keep)


def _clusters(values: np.ndarray, tol: float) -> list[float]:
    """Centres of the single-linkage clusters of sorted ``values`` split at gaps above ``tol``."""
    if values.size == 0:
        return []
    v = np.sort(values)
    cuts = np.nonzero(np.diff(v) > tol)[0] + 1
    return [float(part.mean()) for part in np.split(v, cuts)]


def attractor_sets(diagram: BifurcationDiagram, cluster_tol: float | None = None) -> list[list[float]]:
    """Cluster centres of the kept samples at every grid point."""
    if cluster_tol is None:
        cluster_tol = NOISY_CLUSTER_TOL if diagram.noisy else DET_CLUSTER_TOL
    return [_clusters(diagram.values_at(i), cluster_tol) for i in range(diagram.alphas.size)]


def last_bifurcation(diagram: BifurcationDiagram, targets, band: float = TARGET_BAND,
                     cluster_tol: float | None = None) -> float | None:
    """Smallest grid control from which on every cluster centre lies within ``band`` of a target.

    Returns ``None`` when even the largest grid control does not qualify.
    """
    t = np.asarray(list(targets), dtype=float)
    sets = attractor_sets(diagram, cluster_tol)
    found = None
    for i in range(len(sets) - 1, -1, -1):
        centres = sets[i]
        if not centres or any(np.min(np.abs(t - c)) > band for c in centres):
            break
        found = float(diagram.alphas[i])
    return found


def diagram_csv(diagram: BifurcationDiagram) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["alpha", "sample", "x0_id", "seed"])
    n_seeds = diagram.n_seeds
    for i, a in enumerate(diagram.alphas):
        block = diagram.samples[i]
        for j in range(block.shape[1]):
            x0_id, s = divmod(j, n_seeds)
            seed = s if diagram.noisy else ""
            for v in block[:, j]:
                if math.isfinite(v):
                    w.writerow([repr(float(a)), repr(float(v)), x0_id, seed])
    return buf.getvalue()
