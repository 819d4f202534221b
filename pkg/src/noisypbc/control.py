"""The controlled map G(v, x) = (1 - v) g(x) + v x and deterministic controlled orbits."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .maps import MapSpec, eval_map, scalar_function, vector_function

__all__ = [
    "ParameterError",
    "controlled_value",
    "controlled_vector",
    "ControlSchedule",
    "OrbitRecord",
    "pbc_orbit",
    "run_orbit",
    "orbit_to_csv",
    "MAX_CONTROL",
]

STILL_STEP = 1e-13
STILL_COUNT = 50
MIN_CYCLE_STATES = 200
MAX_CONTROL = 1.0 - 1e-3


class ParameterError(ValueError):
    """A control parameter lies outside its admissible range."""


def controlled_value(m: MapSpec, v: float, x):
    """``G(v, x) = (1 - v) g(x) + v x`` with domain and parameter checks."""
    if not 0.0 <= v <= 1.0:
        raise ParameterError(f"control v={v} is outside [0, 1]")
    gx = eval_map(m, x)
    if np.ndim(x) == 0:
        return (1.0 - v) * gx + v * float(x)
    return (1.0 - v) * gx + v * np.asarray(x, dtype=float)


def controlled_vector(m: MapSpec, v: float) -> Callable[[np.ndarray], np.ndarray]:
    """Unchecked vectorised ``x -> G(v, x)`` for grid scans."""
    f = vector_function(m)
    return lambda x: (1.0 - v) * f(x) + v * x


@dataclass(frozen=True)
class ControlSchedule:
    """Where the control values ``alpha_1, alpha_2, ...`` come from.

    ``constant``  the same value every step
    ``interval``  values in ``[low, high]``; the midpoint, or seeded uniform draws
    ``sequence``  an explicit list, repeated cyclically if the orbit is longer
    """

    mode: str
    value: float = 0.0
    low: float = 0.0
    high: float = 0.0
    selector: str = "midpoint"
    seed: int = 0
    values: tuple[float, ...] = ()

    def __post_init__(self):
        if self.mode == "constant":
            if not 0.0 <= self.value < 1.0:
                raise ParameterError(f"constant control {self.value} is outside [0, 1)")
        elif self.mode == "interval":
            if not 0.0 <= self.low <= self.high <= MAX_CONTROL:
                raise ParameterError(
                    f"interval control needs 0 <= low <= high <= {MAX_CONTROL}, got [{self.low}, {self.high}]")
            if self.selector not in ("midpoint", "random"):
                raise ParameterError(f"unknown selector {self.selector!r}")
        elif self.mode == "sequence":
            if not self.values:
                raise ParameterError("sequence control needs at least one value")
            if any(not 0.0 <= v < 1.0 for v in self.values):
                raise ParameterError("sequence control values must lie in [0, 1)")
        else:
            raise ParameterError(f"unknown schedule mode {self.mode!r}")

    @classmethod
    def constant(cls, alpha: float) -> ControlSchedule:
        return cls("constant", value=float(alpha))

    @classmethod
    def interval(cls, low: float, high: float, selector: str = "midpoint", seed: int = 0) -> ControlSchedule:
        return cls("interval", low=float(low), high=float(high), selector=selector, seed=int(seed))

    @classmethod
    def sequence(cls, values: Sequence[float]) -> ControlSchedule:
        return cls("sequence", values=tuple(float(v) for v in values))

    def generator(self) -> Callable[[int], float]:
        """A function returning ``alpha_n`` for ``n = 1, 2, ...`` (called in order)."""
        if self.mode == "constant":
            value = self.value
            return lambda n: value
        if self.mode == "sequence":
            values = self.values
            size = len(values)
            return lambda n: values[(n - 1) % size]
        if self.selector == "midpoint":
            mid = 0.5 * (self.low + self.high)
            return lambda n: mid
        rng = np.random.default_rng(self.seed)
        low, width = self.low, self.high - self.low
        buffer: list[float] = []

        def draw(n):
            if not buffer:
                buffer.extend((low + width * rng.random(4096))[::-1].tolist())
            return buffer.pop()

        return draw


@dataclass
class OrbitRecord:
    """One trajectory: ``states[n + 1] = G(controls[n + 1], states[n])``; ``controls[0]`` is NaN."""

    initial: float
    states: np.ndarray
    controls: np.ndarray
    converged: bool = False
    escaped: bool = False
    cycle_locked: bool = False
    outcome: object = field(default=None)

    @property
    def steps(self) -> int:
        return len(self.states) - 1

    @property
    def final(self) -> float:
        return float(self.states[-1])


def run_orbit(m: MapSpec, x0: float, horizon: int, next_alpha: Callable[[int], float],
              stop_on_cycle: bool = False) -> OrbitRecord:
    """Iterate ``x -> (1 - a) g(x) + a x`` with ``a = next_alpha(n)`` for ``n = 1..horizon``.

    Stops early after 50 consecutive steps with ``|x_{n+1} - x_n| < 1e-13``.
    With ``stop_on_cycle`` it also stops after 50 consecutive steps with
    ``|x_{n+2} - x_n| < 1e-13`` once at least 200 states exist. Leaving
    ``[domain start, upper]`` or producing a non-finite value ends the orbit as
    escaped; the offending value is not stored.
    """
    if horizon < 1:
        raise ParameterError("horizon must be at least 1")
    g = scalar_function(m)
    lo, hi = float(m.domain[0]), m.upper
    x = float(x0)
    if not lo <= x <= hi:
        raise ParameterError(f"x0={x0} is outside [{lo}, {hi}]")
    states = [x]
    controls = [math.nan]
    still = 0
    still2 = 0
    converged = escaped = locked = False
    prev = math.nan
    for n in range(1, horizon + 1):
        a = next_alpha(n)
        y = (1.0 - a) * g(x) + a * x
        if not (lo <= y <= hi):
            escaped = True
            break
        states.append(y)
        controls.append(a)
        if abs(y - x) < STILL_STEP:
            still += 1
            if still >= STILL_COUNT:
                converged = True
                break
        else:
            still = 0
        if stop_on_cycle:
            if abs(y - prev) < STILL_STEP:
                still2 += 1
                if still2 >= STILL_COUNT and len(states) >= MIN_CYCLE_STATES:
                    locked = True
                    break
            else:
                still2 = 0
        prev = x
        x = y
    return OrbitRecord(float(x0), np.array(states), np.array(controls), converged, escaped, locked)


def pbc_orbit(m: MapSpec, schedule: ControlSchedule, x0: float, horizon: int,
              stop_on_cycle: bool = False) -> OrbitRecord:
    """Deterministic controlled orbit following ``schedule``."""
    return run_orbit(m, x0, horizon, schedule.generator(), stop_on_cycle=stop_on_cycle)


def orbit_to_csv(record: OrbitRecord) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["n", "x", "alpha"])
    for n, (x, a) in enumerate(zip(record.states, record.controls)):
        w.writerow([n, repr(float(x)), "" if math.isnan(a) else repr(float(a))])
    return buf.getvalue()
