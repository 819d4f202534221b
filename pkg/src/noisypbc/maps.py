"""Scalar maps: description, evaluation, composition and JSON round-tripping.

A :class:`MapSpec` describes one of four families:

``ricker``     ``x * exp(r * (1 - x))`` on ``[0, inf)``
``logistic``   ``r * x * (1 - x)`` on ``[0, 1]``
``piecewise``  closed-form branches on consecutive half-open intervals ``(lo, hi]``
``iterate``    the ``k``-fold composition of another map

Unbounded domains carry a finite ``truncate`` bound that is used wherever a
grid has to cover the domain. An optional ``window`` restricts the equilibrium
analysis to a sub-interval (for instance to drop an equilibrium that no
control can stabilise).
"""

from __future__ import annotations

import bisect
import json
import math
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Callable, Iterable

import numpy as np

from .expr import CompiledExpr, ExpressionError, compile_expr, eval_constant

__all__ = [
    "Branch",
    "MapSpec",
    "MapSpecError",
    "OutOfDomainError",
    "ricker",
    "logistic",
    "piecewise",
    "iterate",
    "eval_map",
    "vector_function",
    "scalar_function",
    "knot_gaps",
    "analysis_window",
    "map_from_dict",
    "map_to_dict",
    "load_map",
    "dump_map",
    "builtin_names",
    "builtin_map",
]

KINDS = ("ricker", "logistic", "piecewise", "iterate")
CONTINUITY_TOL = 1e-9


class MapSpecError(ValueError):
    """The map description is inconsistent or incomplete."""


class OutOfDomainError(ValueError):
    """A point outside the map's domain was passed to :func:`eval_map`."""


@dataclass(frozen=True)
class Branch:
    """One closed-form piece ``expr`` valid on ``(lo, hi]``."""

    lo: float
    hi: float
    expr: str


@dataclass(frozen=True)
class MapSpec:
    kind: str
    domain: tuple[float, float]
    r: float | None = None
    k: int = 1
    branches: tuple[Branch, ...] = ()
    base: MapSpec | None = None
    truncate: float | None = None
    window: tuple[float, float] | None = None
    name: str = field(default="", compare=False)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise MapSpecError(f"unknown map kind {self.kind!r}; expected one of {KINDS}")
        lo, hi = self.domain
        if not (math.isfinite(lo) and lo < hi):
            raise MapSpecError(f"invalid domain {self.domain}")
        if self.kind in ("ricker", "logistic"):
            if self.r is None or not self.r > 0:
                raise MapSpecError(f"{self.kind} map needs a positive r")
        if self.kind == "iterate":
            if self.base is None:
                raise MapSpecError("iterate needs a base map")
            if int(self.k) != self.k or self.k < 1:
                raise MapSpecError("iterate needs an integer k >= 1")
        if self.kind == "piecewise":
            _check_branches(self.branches, self.domain)
        if self.truncate is not None:
            if not (math.isfinite(self.truncate) and lo < self.truncate):
                raise MapSpecError(f"truncate must be finite and above {lo}")
            if math.isfinite(hi) and self.truncate > hi:
                raise MapSpecError("truncate lies outside a bounded domain")
        if self.window is not None:
            a, b = self.window
            if not (lo <= a < b and b <= self.upper):
                raise MapSpecError(f"window {self.window} is not inside [{lo}, {self.upper}]")

    @property
    def unbounded(self) -> bool:
        return math.isinf(self.domain[1])

    @property
    def upper(self) -> float:
        """Finite right end used for grids: the domain end or the truncation."""
        if not self.unbounded:
            return float(self.domain[1])
        if self.truncate is not None:
            return float(self.truncate)
        return _default_truncate(self)

    @property
    def label(self) -> str:
        if self.name:
            return self.name
        if self.kind == "iterate":
            return f"{self.base.label}^{self.k}"
        if self.kind in ("ricker", "logistic"):
            return f"{self.kind}(r={self.r:g})"
        return "piecewise"

    def __call__(self, x):
        return eval_map(self, x)


def _check_branches(branches: tuple[Branch, ...], domain: tuple[float, float]) -> None:
    if not branches:
        raise MapSpecError("piecewise map needs at least one branch")
    lo, hi = domain
    if branches[0].lo > lo:
        raise MapSpecError(f"branches start at {branches[0].lo}, after the domain start {lo}")
    for left, right in zip(branches, branches[1:]):
        if left.hi != right.lo:
            raise MapSpecError(f"branches leave a gap or overlap between {left.hi} and {right.lo}")
    for b in branches:
        if not b.lo < b.hi:
            raise MapSpecError(f"empty branch interval ({b.lo}, {b.hi}]")
        try:
            compile_expr(b.expr)
        except ExpressionError as exc:
            raise MapSpecError(f"branch on ({b.lo}, {b.hi}]: {exc}") from None
    if branches[-1].hi < hi:
        raise MapSpecError(f"branches end at {branches[-1].hi}, before the domain end {hi}")


def _default_truncate(m: MapSpec) -> float:
    if m.kind == "ricker":
        return 2.0 * max(1.0, math.exp(m.r - 1.0) / m.r)
    if m.kind == "iterate":
        return m.base.upper
    if m.kind == "piecewise":
        knots = [b.hi for b in m.branches if math.isfinite(b.hi)] + [b.lo for b in m.branches]
        return 2.0 * max(1.0, max(abs(v) for v in knots))
    return float(m.domain[1])


# ---------------------------------------------------------------------------
# constructors


def ricker(r: float, truncate: float | None = None, window=None, name: str = "") -> MapSpec:
    return MapSpec("ricker", (0.0, math.inf), r=float(r), truncate=truncate,
                   window=_tuple_or_none(window), name=name)


def logistic(r: float, window=None, name: str = "") -> MapSpec:
    return MapSpec("logistic", (0.0, 1.0), r=float(r), window=_tuple_or_none(window), name=name)


def piecewise(branches: Iterable, domain, truncate: float | None = None, window=None,
              name: str = "") -> MapSpec:
    items = []
    for b in branches:
        if isinstance(b, Branch):
            items.append(b)
        elif isinstance(b, dict):
            items.append(Branch(eval_constant(b["lo"]), eval_constant(b["hi"]), str(b["expr"])))
        else:
            lo, hi, expr = b
            items.append(Branch(eval_constant(lo), eval_constant(hi), str(expr)))
    dom = (eval_constant(domain[0]), eval_constant(domain[1]))
    return MapSpec("piecewise", dom, branches=tuple(items), truncate=truncate,
                   window=_tuple_or_none(window), name=name)


def iterate(m: MapSpec, k: int, window=None, name: str = "") -> MapSpec:
    """The map ``x -> m^k(x)``; nested iterates are flattened."""
    if int(k) != k or k < 1:
        raise MapSpecError("k must be an integer >= 1")
    k = int(k)
    if k == 1 and window is None and not name:
        return m
    base, total = m, k
    if m.kind == "iterate":
        base, total = m.base, m.k * k
    return MapSpec("iterate", base.domain, k=total, base=base, truncate=base.truncate,
                   window=_tuple_or_none(window) if window is not None else m.window, name=name)


def _tuple_or_none(window):
    if window is None:
        return None
    a, b = window
    return (eval_constant(a), eval_constant(b))


# ---------------------------------------------------------------------------
# evaluation


@lru_cache(maxsize=128)
def vector_function(m: MapSpec) -> Callable[[np.ndarray], np.ndarray]:
    """A numpy evaluator of ``m`` without domain checks (internal fast path)."""
    if m.kind == "ricker":
        r = m.r

        def f(x):
            with np.errstate(over="ignore", under="ignore"):
                return x * np.exp(r * (1.0 - x))

        return f
    if m.kind == "logistic":
        r = m.r
        return lambda x: r * x * (1.0 - x)
    if m.kind == "iterate":
        base = vector_function(m.base)
        k = m.k

        def f(x):
            for _ in range(k):
                x = base(x)
            return x

        return f
    his = np.array([b.hi for b in m.branches])
    exprs: list[CompiledExpr] = [compile_expr(b.expr) for b in m.branches]
    last = len(exprs) - 1

    def f(x):
        x = np.asarray(x, dtype=float)
        idx = np.minimum(np.searchsorted(his, x, side="left"), last)
        out = np.empty_like(x)
        with np.errstate(invalid="ignore", divide="ignore", over="ignore"):
            for i, e in enumerate(exprs):
                mask = idx == i
                if mask.any():
                    out[mask] = e.vector(x[mask])
        return out

    return f


@lru_cache(maxsize=128)
def scalar_function(m: MapSpec) -> Callable[[float], float]:
    """A plain-float evaluator of ``m`` without domain checks (internal fast path)."""
    if m.kind == "ricker":
        r = m.r

        def f(x):
            arg = r * (1.0 - x)
            return x * math.exp(arg) if arg > -745.0 else 0.0

        return f
    if m.kind == "logistic":
        r = m.r
        return lambda x: r * x * (1.0 - x)
    if m.kind == "iterate":
        base = scalar_function(m.base)
        k = m.k

        def f(x):
            for _ in range(k):
                x = base(x)
            return x

        return f
    his = [b.hi for b in m.branches]
    fns = [compile_expr(b.expr).scalar for b in m.branches]
    last = len(fns) - 1

    def f(x):
        i = bisect.bisect_left(his, x)
        return fns[min(i, last)](x)

    return f


def eval_map(m: MapSpec, x):
    """Evaluate ``g(x)`` with an explicit domain check.

    Returns a float for scalar input and an array otherwise. Raises
    :class:`OutOfDomainError` for points outside the domain (NaN included).
    """
    lo, hi = m.domain
    arr = np.asarray(x, dtype=float)
    bad = ~((arr >= lo) & (arr <= hi))
    if np.any(bad):
        first = arr[bad].flat[0] if arr.ndim else float(arr)
        raise OutOfDomainError(f"x={first!r} lies outside the domain [{lo}, {hi}] of {m.label}")
    if arr.ndim == 0:
        return float(scalar_function(m)(float(arr)))
    return vector_function(m)(arr)


def knot_gaps(m: MapSpec) -> list[tuple[float, float]]:
    """For a piecewise map, ``(knot, |left branch - right branch|)`` at every interior knot."""
    if m.kind == "iterate":
        return knot_gaps(m.base)
    if m.kind != "piecewise":
        return []
    out = []
    for left, right in zip(m.branches, m.branches[1:]):
        knot = left.hi
        with np.errstate(invalid="ignore", divide="ignore"):
            a = compile_expr(left.expr).vector(np.array([knot]))
            b = compile_expr(right.expr).vector(np.array([knot]))
        gap = float(np.abs(np.asarray(a, dtype=float) - np.asarray(b, dtype=float)).ravel()[0])
        out.append((float(knot), gap if math.isfinite(gap) else math.inf))
    return out


def analysis_window(m: MapSpec) -> tuple[float, float]:
    """The interval scanned for equilibria: the map's window or ``[domain start, upper]``."""
    if m.window is not None:
        return m.window
    return (float(m.domain[0]), m.upper)


# ---------------------------------------------------------------------------
# JSON


def _num_to_json(v: float):
    return "inf" if math.isinf(v) else v


def map_to_dict(m: MapSpec) -> dict:
    d: dict = {"kind": m.kind}
    if m.name:
        d["name"] = m.name
    if m.kind in ("ricker", "logistic"):
        d["r"] = m.r
    if m.kind == "iterate":
        d["k"] = m.k
        d["base"] = map_to_dict(m.base)
    if m.kind == "piecewise":
        d["branches"] = [{"lo": b.lo, "hi": _num_to_json(b.hi), "expr": b.expr} for b in m.branches]
    d["domain"] = [m.domain[0], _num_to_json(m.domain[1])]
    if m.truncate is not None:
        d["truncate"] = m.truncate
    if m.window is not None:
        d["window"] = list(m.window)
    return d


def map_from_dict(d: dict) -> MapSpec:
    """Build a :class:`MapSpec` from its JSON form.

    ``ricker`` and ``logistic`` accept an optional ``k`` meaning the k-th
    iterate. ``iterate`` takes either a nested ``base`` object or an ``r``
    value (a Ricker base).
    """
    if not isinstance(d, dict) or "kind" not in d:
        raise MapSpecError("map description must be an object with a 'kind' field")
    kind = d["kind"]
    name = str(d.get("name", ""))
    truncate = d.get("truncate")
    truncate = None if truncate is None else eval_constant(truncate)
    window = d.get("window")
    try:
        if kind == "ricker":
            m = ricker(eval_constant(d["r"]), truncate=truncate)
        elif kind == "logistic":
            m = logistic(eval_constant(d["r"]))
        elif kind == "piecewise":
            domain = d.get("domain")
            if domain is None:
                raise MapSpecError("piecewise map needs a domain")
            m = piecewise(d["branches"], domain, truncate=truncate)
        elif kind == "iterate":
            if "base" in d:
                base = map_from_dict(d["base"])
            elif "r" in d:
                base = ricker(eval_constant(d["r"]), truncate=truncate)
            else:
                raise MapSpecError("iterate needs 'base' or 'r'")
            m = iterate(base, int(d.get("k", 1)))
            if int(d.get("k", 1)) == 1:
                m = MapSpec("iterate", base.domain, k=1, base=base, truncate=base.truncate)
        else:
            raise MapSpecError(f"unknown map kind {kind!r}")
        k = int(d.get("k", 1))
        if kind in ("ricker", "logistic") and k > 1:
            m = iterate(m, k)
    except KeyError as exc:
        raise MapSpecError(f"missing field {exc.args[0]!r}") from None
    except ExpressionError as exc:
        raise MapSpecError(str(exc)) from None
    if window is not None or name:
        m = _replace(m, window=_tuple_or_none(window) if window is not None else m.window, name=name)
    return m


def _replace(m: MapSpec, **changes) -> MapSpec:
    from dataclasses import replace

    return replace(m, **changes)


def load_map(source) -> MapSpec:
    """Load a map from a dict, a JSON file path, or a built-in corpus name."""
    if isinstance(source, MapSpec):
        return source
    if isinstance(source, dict):
        return map_from_dict(source)
    text = str(source)
    path = Path(text)
    if path.is_file():
        try:
            data = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise MapSpecError(f"{path}: invalid JSON ({exc.msg})") from None
        return map_from_dict(data)
    stem = path.stem if path.suffix == ".json" else text
    if stem in builtin_names():
        return builtin_map(stem)
    raise MapSpecError(f"no map file or built-in map named {text!r}")


def dump_map(m: MapSpec) -> str:
    return json.dumps(map_to_dict(m), indent=2, sort_keys=True)


def builtin_names() -> list[str]:
    folder = resources.files("noisypbc") / "corpus"
    return sorted(p.name[:-5] for p in folder.iterdir() if p.name.endswith(".json"))


def builtin_map(name: str) -> MapSpec:
    folder = resources.files("noisypbc") / "corpus"
    target = folder / f"{name}.json"
    if not target.is_file():
        raise MapSpecError(f"no built-in map {name!r}; available: {', '.join(builtin_names())}")
    return map_from_dict(json.loads(target.read_text()))
