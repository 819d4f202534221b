"""Command-line entry point: ``noisypbc analyze|simulate|bifurcate|verify``.

Every run resolves its arguments into a plain configuration dictionary. With
``--out DIR`` the outputs are written there together with ``manifest.json``,
which records that configuration, the tool version and the SHA-256 of every
output. ``--config manifest.json`` replays a run; flags given on the command
line override the stored values.

Exit codes: 0 success, 1 a verify suite failed, 2 bad configuration,
3 analysis error (for example an equilibrium that cannot be controlled).
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import os
import sys
import tempfile
from pathlib import Path

from . import __version__
from .bifurcation import DEFAULT_KEEP, DEFAULT_N_ALPHA, DEFAULT_SEEDS, DEFAULT_TRANSIENT, diagram_csv, \
    last_bifurcation, sweep
from .blocks import UncontrollableEquilibrium, admissible_alpha_ell, build_blocks, global_control_bound, \
    stochastic_block_thresholds
from .control import ParameterError, orbit_to_csv
from .equilibria import EquilibriumAnalysis, NothingToStabilize, _jsonable, analyze_map
from .maps import MapSpec, MapSpecError, iterate, load_map, logistic, map_from_dict, map_to_dict, ricker
from .stochastic import DEFAULT_HORIZON, DEFAULT_RUNS, NOISE_KINDS, NoiseModel, classify_outcome, convergence_probability, \
    ensemble_csv, stoch_orbit
from .thresholds import ThresholdError, analyze_thresholds, dc_trace_csv
from .verify import GLOBAL_SUITES, SUITES, run_verify, verify_report_text

__all__ = ["main", "build_parser", "resolve_map", "COMMANDS"]

COMMANDS = ("analyze", "simulate", "bifurcate", "verify")
DEFAULT_MAP = "piecewise"
MAP_FLAGS = ("r", "iterate", "window", "truncate")


class ConfigError(ValueError):
    """Arguments that cannot describe a run."""


# ---------------------------------------------------------------------------
# argument parsing


def _common_flags() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    g = p.add_argument_group("map and run options")
    g.add_argument("--map", help="built-in map name, path to a map JSON file, or 'ricker'/'logistic' with --r")
    g.add_argument("--r", type=float, help="growth parameter for --map ricker/logistic")
    g.add_argument("--iterate", type=int, help="use the k-th iterate of the map")
    g.add_argument("--window", type=float, nargs=2, metavar=("LO", "HI"), help="analysis window")
    g.add_argument("--truncate", type=float, help="finite grid bound for an unbounded domain")
    g.add_argument("--out", help="directory for output files and manifest.json")
    g.add_argument("--seed", type=int, default=0, help="master seed (default 0)")
    g.add_argument("--threads", type=int, default=os.cpu_count() or 1, help="worker threads (default: logical cores)")
    g.add_argument("--format", choices=("json", "csv", "text"), default="text", help="what to print on stdout")
    g.add_argument("--config", help="replay the configuration stored in a manifest or config JSON file")
    return p


def build_parser() -> argparse.ArgumentParser:
    common = _common_flags()
    parser = argparse.ArgumentParser(prog="noisypbc", description="Noisy prediction-based control for scalar maps.")
    parser.add_argument("--version", action="version", version=f"noisypbc {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    parser.commands = {}

    a = parser.commands["analyze"] = sub.add_parser("analyze", parents=[common], help="equilibria, control thresholds and blocks")
    a.add_argument("--delta", type=float, help="trap extension delta (default: fitted)")
    a.add_argument("--beta", type=float, help="control at which d/c traces and two-cycles are reported")

    s = parser.commands["simulate"] = sub.add_parser("simulate", parents=[common], help="one controlled orbit or an ensemble of noisy orbits")
    s.add_argument("--alpha", type=float, help="mean control (required)")
    s.add_argument("--ell", type=float, default=0.0, help="noise amplitude (default 0)")
    s.add_argument("--noise", choices=NOISE_KINDS, default="bernoulli")
    s.add_argument("--runs", type=int, help="ensemble size; without it and with one --x0 a single orbit is run")
    s.add_argument("--horizon", type=int, default=DEFAULT_HORIZON)
    s.add_argument("--x0", type=float, nargs="+", metavar="X", help="initial point, or LO HI for a uniform range")
    s.add_argument("--tol", type=float, default=1e-5, help="distance to an equilibrium that counts as converged")

    b = parser.commands["bifurcate"] = sub.add_parser("bifurcate", parents=[common], help="bifurcation sweep and last-bifurcation estimate")
    b.add_argument("--range", type=float, nargs=2, metavar=("LO", "HI"), dest="alpha_range",
                   help="control range (required)")
    b.add_argument("--n-alpha", type=int, default=DEFAULT_N_ALPHA)
    b.add_argument("--ell", type=float, default=0.0)
    b.add_argument("--noise", choices=NOISE_KINDS, default="bernoulli")
    b.add_argument("--transient", type=int, default=DEFAULT_TRANSIENT)
    b.add_argument("--keep", type=int, default=DEFAULT_KEEP)
    b.add_argument("--seeds", type=int, default=DEFAULT_SEEDS, help="noise seeds per initial point")
    b.add_argument("--svg", action="store_true", help="also write diagram.svg")
    b.add_argument("--ylim", type=float, nargs=2, metavar=("LO", "HI"))
    b.add_argument("--width", type=int, default=1200)
    b.add_argument("--height", type=int, default=800)

    v = parser.commands["verify"] = sub.add_parser("verify", parents=[common], help="run the property suites")
    v.add_argument("--only", action="append", metavar="SUITE",
                   help="suite name(s), comma separated or repeated; available: "
                        + ", ".join(list(SUITES) + list(GLOBAL_SUITES)))
    return parser


def _load_config(path: str) -> dict:
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigError(f"config {path} must hold a JSON object")
    if "config" in data and isinstance(data["config"], dict):
        data = dict(data["config"], command=data.get("command", data["config"].get("command")))
    return data


def parse_args(argv: list[str]) -> argparse.Namespace:
    """Parse ``argv``; a ``--config`` file supplies defaults that explicit flags override."""
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    parser = build_parser()
    if known.config:
        stored = _load_config(known.config)
        command = stored.pop("command", None)
        if not any(tok in COMMANDS for tok in argv):
            if command not in COMMANDS:
                raise ConfigError(f"config {known.config} names no command")
            argv = [command] + list(argv)
        stored.pop("config", None)
        chosen = next(tok for tok in argv if tok in COMMANDS)
        parser.commands[chosen].set_defaults(**stored)
    return parser.parse_args(argv)


# ---------------------------------------------------------------------------
# configuration


def _with_truncate(d: dict, value: float) -> dict:
    d = dict(d)
    if d["kind"] == "iterate":
        d["base"] = _with_truncate(d["base"], value)
    else:
        d["truncate"] = value
    return d


def resolve_map(args: argparse.Namespace, default: str | None = DEFAULT_MAP) -> MapSpec | None:
    """The map named by ``--map`` with ``--r``, ``--truncate``, ``--iterate`` and ``--window`` applied."""
    source = args.map if args.map is not None else default
    if source is None:
        return None
    if isinstance(source, dict):
        m = map_from_dict(source)
    elif source in ("ricker", "logistic"):
        if args.r is None:
            raise ConfigError(f"--map {source} needs --r")
        m = ricker(args.r) if source == "ricker" else logistic(args.r)
    else:
        if args.r is not None:
            raise ConfigError("--r only applies to --map ricker or --map logistic")
        m = load_map(source)
    if args.truncate is not None:
        m = map_from_dict(_with_truncate(map_to_dict(m), args.truncate))
    if args.iterate is not None:
        if args.iterate < 1:
            raise ConfigError("--iterate must be at least 1")
        m = iterate(m, args.iterate)
    if args.window is not None:
        m = map_from_dict(dict(map_to_dict(m), window=list(args.window)))
    return m


def resolved_config(args: argparse.Namespace, m: MapSpec | None) -> dict:
    """All settings of the run, with the map stored in expanded form."""
    cfg = {k: v for k, v in vars(args).items() if k not in ("config", "command", "out")}
    cfg["map"] = None if m is None else map_to_dict(m)
    for k in MAP_FLAGS:
        cfg[k] = None
    return _jsonable(cfg)


# ---------------------------------------------------------------------------
# output


def _json(obj) -> str:
    return json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n"


def write_outputs(out_dir: str, files: dict[str, str], manifest: dict) -> None:
    """Write every file and ``manifest.json`` atomically (temp file, then rename).

    Nothing in ``out_dir`` changes until all temp files are written.
    """
    folder = Path(out_dir)
    folder.mkdir(parents=True, exist_ok=True)
    manifest = dict(manifest, outputs={name: hashlib.sha256(text.encode()).hexdigest()
                                       for name, text in sorted(files.items())})
    payload = dict(files, **{"manifest.json": _json(manifest)})
    umask = os.umask(0)
    os.umask(umask)
    staged: list[tuple[str, Path]] = []
    try:
        for name, text in payload.items():
            fd, tmp = tempfile.mkstemp(dir=folder, prefix=f".{name}.", suffix=".tmp")
            with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
                fh.write(text)
            os.chmod(tmp, 0o666 & ~umask)
            staged.append((tmp, folder / name))
        for tmp, final in staged:
            os.replace(tmp, final)
    finally:
        for tmp, _ in staged:
            if os.path.exists(tmp):
                os.unlink(tmp)


def _equilibria_csv(analysis: EquilibriumAnalysis) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["j", "K", "L_minus", "L_plus"])
    consts = {c.index: c for c in analysis.lipschitz}
    for j, K in enumerate(analysis.equilibria):
        c = consts.get(j)
        w.writerow([j, repr(K), "" if c is None else repr(c.left), "" if c is None else repr(c.right)])
    return buf.getvalue()


def _equilibria_text(m: MapSpec, analysis: EquilibriumAnalysis) -> str:
    top = " (top K_j0 = +inf)" if analysis.top_is_infinite else ""
    lines = [
        f"map: {m.label}",
        f"equilibria (j0 = {analysis.j0}){top}: " + ", ".join(f"K{j} = {K:.6g}" for j, K in enumerate(analysis.equilibria)),
        "sign of g(x) - x per interval: " + " ".join(analysis.sign_pattern),
    ]
    for c in analysis.lipschitz:
        lines.append(f"K{c.index}: L- = {c.left:.6g}, L+ = {c.right:.6g}")
    right = "-" if analysis.boundary_right is None else f"{analysis.boundary_right:.6g}"
    lines.append(f"boundary constants: L-_j0 = {analysis.boundary_left:.6g}, L+_0 = {right}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# commands


def cmd_analyze(args, m: MapSpec) -> tuple[dict[str, str], str, int]:
    analysis = analyze_map(m)
    files = {"equilibria.json": _json(analysis.to_dict())}
    sections = [_equilibria_text(m, analysis)]
    report = None
    if analysis.j0 == 4:
        report = analyze_thresholds(m, analysis, delta=args.delta, beta=args.beta)
        region = admissible_alpha_ell(report)
        files["thresholds.json"] = _json(dict(report.to_dict(), region=region.to_dict()))
        files["dc_trace.csv"] = dc_trace_csv(report)
        sections.append("== four-equilibrium thresholds (underline alpha_0, underline alpha) ==\n"
                        + report.text() + region.text())
    elif args.delta is not None or args.beta is not None:
        sections.append("note: --delta and --beta apply only to maps with four equilibria\n")

    dec = build_blocks(m, analysis, threads=max(1, args.threads))
    try:
        bound = global_control_bound(dec, analysis)
        bound_text = f"global deterministic control bound (max of beta1 over blocks) = {bound:.6f}\n"
    except ValueError as exc:
        bound = None
        bound_text = f"global deterministic control bound: indeterminate ({exc})\n"
    stochastic = []
    for block in dec.odd_blocks():
        if block.error:
            continue
        stochastic.append(stochastic_block_thresholds(m, analysis, block))
    files["blocks.json"] = _json(dict(dec.to_dict(), control_bound=bound))
    files["stochastic_blocks.json"] = _json([st.to_dict() for st in stochastic])
    ntilde = [b for b in dec.blocks if b.kind == "V_tilde"]
    blocks_text = dec.text()
    if ntilde and not dec.odd_blocks() and not any(b.kind == "V_0" for b in dec.blocks):
        blocks_text += "all intervals in V_tilde: no circulation possible\n"
    sections.append("== blocks (beta0, beta1) ==\n" + blocks_text + bound_text)
    if stochastic:
        sections.append("== stochastic block thresholds (beta21..beta24, beta3) ==\n"
                        + "".join(st.text() for st in stochastic))
    summary = "\n".join(sections)
    files["summary.txt"] = summary
    combined = {
        "equilibria": analysis.to_dict(),
        "thresholds": None if report is None else json.loads(files["thresholds.json"]),
        "blocks": json.loads(files["blocks.json"]),
        "stochastic_blocks": json.loads(files["stochastic_blocks.json"]),
    }
    stdout = {"text": summary, "json": _json(combined), "csv": _equilibria_csv(analysis)}[args.format]
    return files, stdout, 0


def cmd_simulate(args, m: MapSpec) -> tuple[dict[str, str], str, int]:
    if args.alpha is None:
        raise ConfigError("simulate needs --alpha")
    noise = NoiseModel(args.noise, args.seed)
    x0 = args.x0
    if x0 is not None and len(x0) not in (1, 2):
        raise ConfigError("--x0 takes one value or a LO HI range")
    single = args.runs is None and x0 is not None and len(x0) == 1
    analysis = analyze_map(m)
    if single:
        orbit = stoch_orbit(m, args.alpha, args.ell, noise, x0[0], horizon=args.horizon, stop_on_cycle=True)
        outcome = classify_outcome(orbit, analysis, args.tol)
        record = {"alpha": args.alpha, "ell": args.ell, "noise": args.noise, "seed": args.seed, "x0": x0[0],
                  "outcome": outcome.kind, "label": outcome.label(), "steps": outcome.steps_used,
                  "limit": outcome.limit, "pair": outcome.pair, "final": orbit.final}
        summary = (f"map: {m.label}\nalpha = {args.alpha:.6g}, ell = {args.ell:.6g}, x0 = {x0[0]:.6g}\n"
                   f"outcome: {outcome.label()} after {outcome.steps_used} steps\n")
        table = orbit_to_csv(orbit)
        files = {"orbit.csv": table, "outcome.json": _json(record), "summary.txt": summary}
    else:
        runs = DEFAULT_RUNS if args.runs is None else args.runs
        start = None if x0 is None else (x0[0] if len(x0) == 1 else tuple(x0))
        result = convergence_probability(m, args.alpha, args.ell, noise, n_runs=runs, horizon=args.horizon,
                                         x0=start, analysis=analysis, tol=args.tol)
        lo, hi = result.wilson_interval()
        record = {"alpha": args.alpha, "ell": args.ell, "noise": args.noise, "seed": args.seed, "runs": runs,
                  "converged_fraction": result.fraction, "wilson_95": [lo, hi], "outcomes": result.counts(),
                  "limits": {repr(k): v for k, v in sorted(result.limits().items())}}
        summary = f"map: {m.label}\n" + result.text()
        table = ensemble_csv(result)
        files = {"ensemble.csv": table, "ensemble.json": _json(record), "summary.txt": summary}
    stdout = {"text": summary, "json": _json(record), "csv": table}[args.format]
    return files, stdout, 0


def cmd_bifurcate(args, m: MapSpec) -> tuple[dict[str, str], str, int]:
    if args.alpha_range is None:
        raise ConfigError("bifurcate needs --range LO HI")
    analysis = analyze_map(m)
    targets = [analysis.K(j) for j in range(1, analysis.j0, 2)]
    diagram = sweep(m, tuple(args.alpha_range), n_alpha=args.n_alpha, ell=args.ell,
                    noise=NoiseModel(args.noise, args.seed), transient=args.transient, keep=args.keep,
                    n_seeds=args.seeds, threads=max(1, args.threads))
    alpha_star = last_bifurcation(diagram, targets)
    star = "not reached on the grid" if alpha_star is None else f"{alpha_star:.4f}"
    noise = f"{args.noise} noise, ell = {args.ell:g}" if args.ell > 0 else "no noise"
    summary = (f"map: {m.label}\nalpha in [{args.alpha_range[0]:g}, {args.alpha_range[1]:g}], "
               f"{args.n_alpha} points, {noise}\n"
               f"targets: " + ", ".join(f"{t:.6g}" for t in targets) + "\n"
               f"last bifurcation alpha* = {star}\n")
    record = {"alpha_star": alpha_star, "targets": targets, "alpha_range": list(args.alpha_range),
              "n_alpha": args.n_alpha, "ell": args.ell, "noise": args.noise, "seed": args.seed,
              "x0s": diagram.x0s.tolist(), "seeds_per_x0": diagram.n_seeds}
    table = diagram_csv(diagram)
    files = {"diagram.csv": table, "bifurcation.json": _json(record), "summary.txt": summary}
    if args.svg:
        from .plotting import diagram_svg

        files["diagram.svg"] = diagram_svg(diagram, args.width, args.height,
                                           ylim=None if args.ylim is None else tuple(args.ylim),
                                           alpha_star=alpha_star)
    stdout = {"text": summary, "json": _json(record), "csv": table}[args.format]
    return files, stdout, 0


def cmd_verify(args, m: MapSpec | None) -> tuple[dict[str, str], str, int]:
    only = None
    if args.only:
        only = [name.strip() for item in args.only for name in item.split(",") if name.strip()]
    try:
        results = run_verify(None if m is None else [m], only=only, seed=args.seed)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    records = []
    for r in results:
        d = r.to_dict()
        d.pop("seconds", None)
        records.append(d)
    failed = sum(not r.passed for r in results)
    report = {"passed": failed == 0, "suites": records}
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["suite", "map", "checks", "violations", "passed"])
    for r in results:
        w.writerow([r.suite, r.map, r.checks, r.violations, r.passed])
    files = {"verify.json": _json(report), "verify.txt": verify_report_text(results, timings=False)}
    stdout = {"text": verify_report_text(results), "json": files["verify.json"], "csv": buf.getvalue()}[args.format]
    return files, stdout, 0 if failed == 0 else 1


HANDLERS = {"analyze": cmd_analyze, "simulate": cmd_simulate, "bifurcate": cmd_bifurcate, "verify": cmd_verify}


def run(argv: list[str]) -> int:
    args = parse_args(argv)
    m = resolve_map(args, default=None if args.command == "verify" else DEFAULT_MAP)
    if args.threads < 1:
        raise ConfigError("--threads must be at least 1")
    files, stdout, code = HANDLERS[args.command](args, m)
    if args.out:
        manifest = {"tool": "noisypbc", "version": __version__, "command": args.command,
                    "config": resolved_config(args, m)}
        write_outputs(args.out, files, manifest)
    sys.stdout.write(stdout)
    return code


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        return run(argv)
    except (NothingToStabilize, ThresholdError, UncontrollableEquilibrium) as exc:
        print(f"noisypbc: analysis error: {exc}", file=sys.stderr)
        return 3
    except (ConfigError, MapSpecError, ParameterError) as exc:
        print(f"noisypbc: configuration error: {exc}", file=sys.stderr)
        return 2
    except SystemExit as exc:
        return int(exc.code) if isinstance(exc.code, int) else 2


if __name__ == "__main__":
    sys.exit(main())
