"""Command line entry point: ``basinlab {analyze,run,sweep,trace,plot}``.

Settings come from built-in defaults, then a flat JSON ``--config`` file,
then explicit flags, later sources winning.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
import warnings
from datetime import datetime, timezone
from pathlib import Path
from typing import Any

from . import __version__
from .dynamics import gradient_flow, run_trajectory, trajectory_rows
from .ensemble import (
    HISTOGRAM_HEADER,
    ConfigError,
    ExperimentConfig,
    histogram,
    run_experiment,
)
from .expr import EvaluationError, ExprSyntaxError
from .landscape import BUILTINS, LandscapeError, build_well_catalog, resolve, tau_bound
from .plot import PlotInputError, render
from .stochastic import DEFAULT_SEED, derive_stream
from .sweep import DEFAULT_TAUS, SWEEP_HEADER, SweepConfig, gap_metrics, run_sweep

log = logging.getLogger("basinlab")

EXIT_OK, EXIT_USAGE, EXIT_COMPUTE = 0, 1, 2

COMMON_DEFAULTS: dict[str, Any] = {
    "function": "two_depths",
    "interval": None,
    "seed": DEFAULT_SEED,
    "out": None,
}
DEFAULTS: dict[str, dict[str, Any]] = {
    "analyze": {**COMMON_DEFAULTS, "format": "text", "grid_n": 10_000},
    "run": {
        **COMMON_DEFAULTS, "format": "json", "tau": 0.01, "eps": 0.0, "steps": 1000,
        "trials": 20_000, "flow": True, "disfavored": None, "favored": None,
    },
    "sweep": {
        **COMMON_DEFAULTS, "format": "csv", "steps": 5000, "trials": 1000, "flow": True,
        "taus": list(DEFAULT_TAUS), "eps_min": 0.0, "eps_max": 0.5, "eps_count": 26,
        "threshold": 0.1, "disfavored": None, "favored": None,
    },
    "trace": {
        **COMMON_DEFAULTS, "format": "csv", "tau": 0.01, "eps": 0.0, "steps": 1000,
        "trial": 0, "p0": None, "flow": False,
    },
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _common(p: argparse.ArgumentParser, cmd: str):
    p.add_argument("--function", help=f"builtin ({', '.join(BUILTINS)}) or an expression in x")
    p.add_argument("--interval", nargs=2, type=float, metavar=("A", "B"))
    p.add_argument("--seed", type=int)
    p.add_argument("--config", type=Path, metavar="FILE", help="flat JSON config; flags win")
    p.add_argument("--out", type=Path, metavar="DIR", help="write artifacts and a manifest here")
    p.add_argument("--format", choices=("csv", "json", "text"))
    p.add_argument("-v", "--verbose", action="store_true")
    if cmd in ("run", "sweep", "trace"):
        p.add_argument("--steps", type=int)
        p.add_argument("--flow", dest="flow", action="store_true", default=None,
                       help="eps = 0 runs stop once the gradient vanishes")
        p.add_argument("--no-flow", dest="flow", action="store_false")
    if cmd in ("run", "trace"):
        p.add_argument("--tau", type=float)
        p.add_argument("--eps", type=float)
    if cmd in ("run", "sweep"):
        p.add_argument("--trials", type=int)
        p.add_argument("--disfavored", type=int, help="type label counted in the ratio numerator")
        p.add_argument("--favored", type=int, help="type label counted in the ratio denominator")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="basinlab", description="Noisy gradient descent on 1-D landscapes.")
    parser.add_argument("--version", action="version", version=f"basinlab {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("analyze", help="well catalog and step-size bound")
    _common(p, "analyze")
    p.add_argument("--grid-n", type=int, dest="grid_n")

    p = sub.add_parser("run", help="one Monte-Carlo experiment")
    _common(p, "run")

    p = sub.add_parser("sweep", help="grid of experiments over tau and eps")
    _common(p, "sweep")
    p.add_argument("--taus", type=float, nargs="+")
    p.add_argument("--eps-min", type=float, dest="eps_min")
    p.add_argument("--eps-max", type=float, dest="eps_max")
    p.add_argument("--eps-count", type=int, dest="eps_count")
    p.add_argument("--threshold", type=float, help="gap threshold on the ratio")

    p = sub.add_parser("trace", help="record a single trajectory")
    _common(p, "trace")
    p.add_argument("--trial", type=int, help="replay this trial's start and noise")
    p.add_argument("--p0", type=float, help="explicit start instead of the trial's draw")

    p = sub.add_parser("plot", help="render a histogram or sweep CSV as SVG")
    p.add_argument("input", type=Path)
    p.add_argument("--kind", choices=("histogram", "sweep"))
    p.add_argument("--output", "-o", type=Path)
    p.add_argument("-v", "--verbose", action="store_true")
    return parser


def resolve_config(cmd: str, ns: argparse.Namespace) -> dict[str, Any]:
    """Defaults, then the config file, then explicit flags."""
    cfg = dict(DEFAULTS[cmd])
    if ns.config is not None:
        try:
            loaded = json.loads(ns.config.read_text())
        except OSError as exc:
            raise UsageError(f"cannot read config {ns.config}: {exc.strerror}") from None
        except json.JSONDecodeError as exc:
            raise UsageError(f"config {ns.config}: invalid JSON at line {exc.lineno}: {exc.msg}") from None
        if not isinstance(loaded, dict):
            raise UsageError(f"config {ns.config}: expected a JSON object")
        unknown = sorted(set(loaded) - set(cfg))
        if unknown:
            raise UsageError(f"config {ns.config}: unknown key(s) for {cmd}: {', '.join(unknown)}")
        cfg.update(loaded)
    for key in cfg:
        v = getattr(ns, key, None)
        if v is not None:
            cfg[key] = str(v) if isinstance(v, Path) else v
    if cfg.get("interval") is not None:
        iv = cfg["interval"]
        if not (isinstance(iv, (list, tuple)) and len(iv) == 2):
            raise UsageError("interval must be two numbers A B")
        cfg["interval"] = [float(iv[0]), float(iv[1])]
    if cfg["function"] not in BUILTINS and cfg["interval"] is None:
        raise UsageError("expression landscapes need --interval A B")
    return cfg


def _experiment_config(cfg: dict[str, Any], **over) -> ExperimentConfig:
    keys = dict(
        function=cfg["function"],
        interval=tuple(cfg["interval"]) if cfg["interval"] else None,
        seed=int(cfg["seed"]),
        max_steps=int(cfg["steps"]),
        flow=bool(cfg["flow"]),
    )
    for k in ("tau", "eps", "trials", "disfavored", "favored"):
        if k in cfg:
            keys[k] = cfg[k]
    keys.update(over)
    try:
        return ExperimentConfig(**keys)
    except (ConfigError, TypeError, ValueError) as exc:
        raise UsageError(str(exc)) from None


def manifest(cmd: str, cfg: dict[str, Any], outputs: list[str]) -> dict[str, Any]:
    return {
        "tool": "basinlab",
        "version": __version__,
        "command": cmd,
        "config": cfg,
        "seed": cfg.get("seed"),
        "timestamp": datetime.now(timezone.utc).isoformat(timespec="seconds"),
        "outputs": outputs,
    }


def _csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _emit(cmd, cfg, artifacts: dict[str, str], stdout_text: str, out) -> None:
    """Print ``stdout_text``; with ``--out`` also write artifacts + manifest."""
    if cfg.get("out"):
        d = Path(cfg["out"])
        d.mkdir(parents=True, exist_ok=True)
        names = sorted(artifacts) + ["manifest.json"]
        for name, text in artifacts.items():
            (d / name).write_text(text)
        (d / "manifest.json").write_text(
            json.dumps(manifest(cmd, cfg, [str(d / n) for n in names]), indent=2) + "\n"
        )
    out.write(stdout_text)


def cmd_analyze(cfg, out):
    land = resolve(cfg["function"], cfg["interval"])
    catalog = build_well_catalog(land, grid_n=int(cfg["grid_n"]))
    tb = tau_bound(land, catalog)
    doc = {
        "function": land.name,
        "interval": list(land.interval),
        "wells": catalog.rows(),
        "types": [vars(t) for t in catalog.types],
        "tau_bound": {"mean_width": tb.mean_width, "mean_gradient": tb.mean_gradient, "bound": tb.bound},
        "manifest": manifest("analyze", cfg, []),
    }
    lines = [f"{land.name} on [{land.a:g}, {land.b:g}]: {len(catalog.wells)} wells"]
    lines.append(f"{'index':>5} {'center':>11} {'min_value':>10} {'left':>11} {'right':>11} "
                 f"{'width':>9} {'depth':>9} {'type':>4}")
    for w in catalog.wells:
        lines.append(f"{w.index:>5} {w.center:>11.6f} {w.min_value:>10.6f} {w.left:>11.6f} "
                     f"{w.right:>11.6f} {w.width:>9.6f} {w.depth:>9.6f} {w.type:>4}")
    for t in catalog.types:
        lines.append(f"type {t.label}: {t.count} wells, mean width {t.mean_width:.6f}, "
                     f"mean depth {t.mean_depth:.6f}")
    lines.append(f"tau bound: w = {tb.mean_width:.6f}, g = {tb.mean_gradient:.6f}, "
                 f"w/g = {tb.bound:.6f}")
    text = "\n".join(lines) + "\n"
    js = json.dumps(doc, indent=2) + "\n"
    csv_text = _csv(list(catalog.rows()[0]), [list(r.values()) for r in catalog.rows()])
    shown = {"text": text, "json": js, "csv": csv_text}[cfg["format"]]
    _emit("analyze", cfg, {"catalog.json": js, "catalog.txt": text}, shown, out)


def cmd_run(cfg, out):
    ec = _experiment_config(cfg)
    land = ec.landscape()
    catalog = build_well_catalog(land)
    res = run_experiment(ec, catalog, land=land)
    doc = res.to_dict()
    doc["histogram"] = [vars(r) for r in histogram(res, catalog)]
    doc["manifest"] = manifest("run", cfg, [])
    js = json.dumps(doc, indent=2) + "\n"
    hist = _csv(HISTOGRAM_HEADER, [(r.index, repr(r.center), r.type, r.count) for r in histogram(res, catalog)])
    r = res.ratio_per_well
    text = (
        f"{land.name}: tau={ec.tau:g} eps={ec.eps:g} trials={ec.trials} steps={ec.max_steps}\n"
        f"escaped {res.escaped}, in interval {res.in_interval}\n"
        f"ratio_per_well {'undefined' if r is None else f'{r:.6f}'}\n"
    )
    shown = {"json": js, "csv": hist, "text": text}[cfg["format"]]
    _emit("run", cfg, {"result.json": js, "histogram.csv": hist}, shown, out)


def cmd_sweep(cfg, out):
    base = _experiment_config(cfg, tau=1.0, eps=0.0)
    try:
        sc = SweepConfig(
            base=base, taus=tuple(cfg["taus"]), eps_min=float(cfg["eps_min"]),
            eps_max=float(cfg["eps_max"]), eps_count=int(cfg["eps_count"]),
            trials=int(cfg["trials"]), steps=int(cfg["steps"]),
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    rows = run_sweep(sc)
    table = _csv(SWEEP_HEADER, [r.csv_fields() for r in rows])
    gaps = gap_metrics(rows, float(cfg["threshold"]))
    doc = {
        "rows": [
            {"tau": r.tau, "epsilon": r.eps, "trials": r.trials, "in_interval": r.in_interval,
             "escaped": r.escaped, "ratio_per_well": r.ratio_per_well, "ratio_total": r.ratio_total,
             "counts": r.counts, "error": r.error}
            for r in rows
        ],
        "gaps": {repr(t): vars(g) for t, g in gaps.items()},
        "manifest": manifest("sweep", cfg, []),
    }
    js = json.dumps(doc, indent=2) + "\n"
    text = "".join(
        f"tau={t:g}: gap width {g.width:g}" + (f" from eps={g.onset:g}\n" if g.onset is not None else "\n")
        for t, g in gaps.items()
    )
    shown = {"csv": table, "json": js, "text": text}[cfg["format"]]
    _emit("sweep", cfg, {"sweep.csv": table, "sweep.json": js}, shown, out)


def cmd_trace(cfg, out):
    land = resolve(cfg["function"], cfg["interval"])
    catalog = build_well_catalog(land)
    s = derive_stream(int(cfg["seed"]), int(cfg["trial"]))
    start = s.uniform(land.a, land.b)
    if cfg["p0"] is not None:
        start = float(cfg["p0"])
    tau, eps, steps = float(cfg["tau"]), float(cfg["eps"]), int(cfg["steps"])
    try:
        if cfg["flow"] and eps == 0:
            res = gradient_flow(land, catalog, start, tau, max_steps=steps, record=True)
        else:
            res = run_trajectory(land, catalog, start, tau, eps, steps, s, record=True)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    rows = trajectory_rows(land, res.trajectory)
    table = _csv(("step", "position", "value", "gradient"), [(i, repr(x), repr(v), repr(g)) for i, x, v, g in rows])
    js = json.dumps({"well": res.well, "steps": res.steps, "position": res.position,
                     "rows": rows, "manifest": manifest("trace", cfg, [])}, indent=2) + "\n"
    text = f"start {start!r} -> {res.position!r} after {res.steps} steps, well {res.well}\n"
    shown = {"csv": table, "json": js, "text": text}[cfg["format"]]
    _emit("trace", cfg, {"trace.csv": table}, shown, out)


def cmd_plot(ns, out):
    try:
        text = ns.input.read_text()
    except OSError as exc:
        raise UsageError(f"cannot read {ns.input}: {exc.strerror}") from None
    svg = render(text, ns.kind)
    if ns.output:
        ns.output.write_text(svg)
    else:
        out.write(svg)


COMMANDS = {"analyze": cmd_analyze, "run": cmd_run, "sweep": cmd_sweep, "trace": cmd_trace}


def main(argv: list[str] | None = None, out=None) -> int:
    out = out or sys.stdout
    try:
        ns = build_parser().parse_args(argv)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.INFO if ns.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        with warnings.catch_warnings():
            if not ns.verbose:
                warnings.simplefilter("ignore")
            if ns.command == "plot":
                cmd_plot(ns, out)
            else:
                COMMANDS[ns.command](resolve_config(ns.command, ns), out)
    except (UsageError, PlotInputError, ExprSyntaxError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (LandscapeError, EvaluationError, ArithmeticError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_COMPUTE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
