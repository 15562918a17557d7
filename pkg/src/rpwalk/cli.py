"""Command-line front end.

Subcommands: ``evolve``, ``hitting``, ``tc``, ``sweep``, ``mc`` and
``preset list``. Every run writes its artifacts plus ``manifest.json``
(inputs, the compiled graph in config syntax, and a SHA-256 digest per
emitted file) into ``--out``.

Exit codes: 0 ok, 2 configuration error, 3 numerical error, 4 threshold
not reached or distribution tail too heavy.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .dynamics import crossing_time, evolve, mc_sample_hitting
from .errors import (
    ConfigError,
    ConvergenceError,
    DimensionError,
    NotHermitianError,
    SingularOperator,
    TailTooHeavy,
    ThresholdNotReached,
    TimeStepTooLarge,
    WalkError,
)
from .hitting import TAIL_BOUND, hitting_stats, mean_hitting_steps
from .linalg import SINGULAR_FLOOR
from .reaction import compile_graph, cryptochrome_preset, format_config, load_config
from .scenarios import PARAMETERS, SweepPointError, SweepSpec, mu_grid, run_sweep, scenario_presets, write_sweep_csv

GRAPH_PRESETS = {"cryptochrome": cryptochrome_preset}

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_NOT_REACHED = 0, 2, 3, 4


class Warned(Exception):
    """Artifacts were written but a result needs attention (exit 4)."""


# -- helpers ---------------------------------------------------------------


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _fmt(x):
    if x is None:
        return None
    if isinstance(x, (int, np.integer)):
        return int(x)
    return float(f"{float(x):.12e}")


def _write_json(path: Path, payload: dict) -> None:
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def _load_graph(args):
    if args.config and args.preset:
        raise ConfigError("give either --config or --preset, not both")
    if args.config:
        try:
            g = load_config(args.config)
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc}") from None
    else:
        name = args.preset or "cryptochrome"
        if name not in GRAPH_PRESETS:
            raise ConfigError(f"unknown graph preset {name!r} (available: {', '.join(GRAPH_PRESETS)})")
        g = GRAPH_PRESETS[name]()
    return _apply_overrides(g, args)


def _apply_overrides(g, args):
    if args.dt is not None:
        g = g.with_dt(args.dt)
    if args.q32 is not None and args.mu32 is not None:
        raise ConfigError("give either --q32 or --mu32, not both")
    if args.q32 is not None:
        g = g.with_dephasing_rate(3, 2, args.q32)
    if args.mu32 is not None:
        g = g.with_mu(3, 2, args.mu32)
    g.validate()
    return g


def _inputs(args) -> dict:
    keep = {k: v for k, v in vars(args).items() if k not in ("func", "workers")}
    return {k: (str(v) if isinstance(v, Path) else v) for k, v in sorted(keep.items())}


def _finish(args, out: Path, files: list, graph_text: str | None = None, extra: dict | None = None) -> None:
    manifest = {
        "version": __version__,
        "command": args.command,
        "inputs": _inputs(args),
        "files": [{"path": f.name, "sha256": _sha256(f)} for f in files],
    }
    if graph_text is not None:
        manifest["graph"] = graph_text
    if extra:
        manifest.update(extra)
    _write_json(out / "manifest.json", manifest)


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


# -- commands ----------------------------------------------------------------


def cmd_evolve(args) -> int:
    g = _load_graph(args)
    stride = 1 if args.full_resolution else args.stride
    if args.steps < 0 or stride < 1:
        raise ConfigError("--steps must be >= 0 and --stride >= 1")
    out = _out_dir(args)
    traj = evolve(compile_graph(g), g.initial_state(), args.steps, stride, keep_states=False)
    path = out / "trajectory.csv"
    traj.write_csv(path)
    _finish(args, out, [path], format_config(g))
    print(f"wrote {len(traj.times)} rows to {path}")
    return EXIT_OK


def cmd_hitting(args) -> int:
    g = _load_graph(args)
    out = _out_dir(args)
    k = compile_graph(g)
    rho0 = g.initial_state()
    target = args.target or g.n_nodes
    summary = {"dt_s": _fmt(g.dt), "mu32": _fmt(g.dephasing_probability(3, 2)), "target": target}
    files = []
    warn = None
    exact = None
    if args.mode in ("mean", "both"):
        exact = mean_hitting_steps(k, rho0, target, floor=args.singular_floor)
        summary.update(n41=_fmt(exact), t41_s=_fmt(exact * g.dt), n_mp=None, tail_mass=None)
    if args.mode in ("dist", "both"):
        res = hitting_stats(k, rho0, target, args.n_max, tail_bound=args.tail_bound, keep_every=args.every)
        path = out / "distribution.csv"
        res.write_csv(path)
        files.append(path)
        summary.update(n_mp=res.n_mp, tail_mass=_fmt(res.tail_mass), n_max=res.n_max, n41_truncated=_fmt(res.n41))
        if exact is None:
            summary.update(n41=_fmt(res.n41), t41_s=_fmt(res.n41 * g.dt))
        else:
            rel = abs(res.n41 - exact) / exact
            summary["rel_diff_truncated_vs_exact"] = _fmt(rel)
            print(f"truncated vs exact mean: relative difference {rel:.3e}")
        if res.tail_mass > args.tail_bound:
            warn = f"tail mass {res.tail_mass:.3e} exceeds {args.tail_bound:g}; the truncated mean is not reliable"
    path = out / "summary.json"
    _write_json(path, summary)
    files.append(path)
    _finish(args, out, files, format_config(g))
    print(json.dumps(summary, sort_keys=True))
    if warn:
        raise Warned(warn)
    return EXIT_OK


def cmd_tc(args) -> int:
    g = _load_graph(args)
    out = _out_dir(args)
    res = crossing_time(compile_graph(g), g.initial_state(), args.eta, args.max_steps, stride=args.stride)
    summary = {
        "eta": res.eta,
        "tc_s": _fmt(res.t_c),
        "step_before": res.step_before,
        "step_after": res.step_after,
        "dt_s": _fmt(g.dt),
        "mu32": _fmt(g.dephasing_probability(3, 2)),
    }
    path = out / "tc.json"
    _write_json(path, summary)
    _finish(args, out, [path], format_config(g))
    print(json.dumps(summary, sort_keys=True))
    return EXIT_OK


def _grid_from_json(grid) -> tuple:
    if isinstance(grid, dict):
        lo, hi, n = grid["log"]
        vals = tuple(float(x) for x in np.logspace(math.log10(lo), math.log10(hi), int(n)))
        return ((0.0,) if grid.get("include_zero") else ()) + vals
    return tuple(float(x) for x in grid)


def load_sweep_spec(path) -> SweepSpec:
    """Read a JSON sweep description.

    Keys: ``name``, ``graph`` (``{"preset": NAME}`` or ``{"config": PATH}``,
    relative to the spec file), ``parameter``, ``grid`` (a list, or
    ``{"log": [lo, hi, n], "include_zero": bool}``), and optionally
    ``outputs``, ``eta``, ``mu32``, ``n_steps``, ``stride``, ``f_every``.
    """
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read sweep spec: {exc}") from None
    allowed = {"name", "graph", "parameter", "grid", "outputs", "eta", "mu32", "n_steps", "stride", "f_every"}
    unknown = set(raw) - allowed
    if unknown:
        raise ConfigError(f"unknown sweep spec keys: {', '.join(sorted(unknown))}")
    graph = raw.get("graph", {"preset": "cryptochrome"})
    if "config" in graph:
        base = load_config(path.parent / graph["config"])
    else:
        name = graph.get("preset", "cryptochrome")
        if name not in GRAPH_PRESETS:
            raise ConfigError(f"unknown graph preset {name!r}")
        base = GRAPH_PRESETS[name]()
    if raw.get("parameter") not in PARAMETERS:
        raise ConfigError(f"parameter must be one of {', '.join(PARAMETERS)}")
    kw = {k: raw[k] for k in ("eta", "mu32", "n_steps", "stride", "f_every") if k in raw}
    try:
        return SweepSpec(
            raw.get("name", path.stem),
            base,
            raw["parameter"],
            _grid_from_json(raw.get("grid", [])),
            tuple(raw.get("outputs", ("t41",))),
            **kw,
        )
    except (ValueError, KeyError, TypeError) as exc:
        raise ConfigError(f"invalid sweep spec: {exc}") from None


def cmd_sweep(args) -> int:
    if bool(args.preset) == bool(args.spec):
        raise ConfigError("give exactly one of --preset or --spec")
    if args.preset:
        presets = scenario_presets()
        if args.preset not in presets:
            raise ConfigError(f"unknown sweep preset {args.preset!r} (available: {', '.join(presets)})")
        specs = presets[args.preset]
    else:
        specs = [load_sweep_spec(args.spec)]
    if args.dt is not None or args.q32 is not None or args.mu32 is not None:
        specs = [_override_spec(s, args) for s in specs]
    out = _out_dir(args)
    files = []
    for spec in specs:
        rows = run_sweep(spec, workers=args.workers)
        path = out / f"sweep_{spec.name}.csv"
        write_sweep_csv(rows, path)
        files.append(path)
        for r in rows:
            tag = f"{r.param_name}_{r.param_value:.3e}"
            if r.distribution is not None:
                p = out / f"{spec.name}_f41_{tag}.csv"
                r.distribution.write_csv(p)
                files.append(p)
            if r.trajectory is not None:
                p = out / f"{spec.name}_trajectory_{tag}.csv"
                r.trajectory.write_csv(p)
                files.append(p)
        print(f"{spec.name}: {len(rows)} rows -> {path}")
    graphs = {s.name: format_config(s.base) for s in specs}
    _finish(args, out, files, extra={"graphs": graphs})
    return EXIT_OK


def _override_spec(spec: SweepSpec, args) -> SweepSpec:
    import dataclasses

    return dataclasses.replace(spec, base=_apply_overrides(spec.base, args))


def cmd_mc(args) -> int:
    g = _load_graph(args)
    out = _out_dir(args)
    samples = mc_sample_hitting(g, args.trials, args.seed, workers=args.workers)
    mean = float(samples.mean())
    se = float(samples.std(ddof=1) / math.sqrt(samples.size)) if samples.size > 1 else math.nan
    exact = mean_hitting_steps(compile_graph(g), g.initial_state()) * g.dt
    summary = {
        "n_trials": int(samples.size),
        "mean_s": _fmt(mean),
        "stderr_s": _fmt(se),
        "t41_exact_s": _fmt(exact),
        "z_score": _fmt((mean - exact) / se) if se and se > 0 else None,
    }
    path = out / "mc.json"
    _write_json(path, summary)
    _finish(args, out, [path], format_config(g))
    print(json.dumps(summary, sort_keys=True))
    return EXIT_OK


def cmd_preset_list(args) -> int:
    print("graph presets:")
    for name in GRAPH_PRESETS:
        print(f"  {name}")
    print("sweep presets:")
    for name, specs in scenario_presets().items():
        print(f"  {name}: {specs[0].description}" + (f" ({len(specs)} series)" if len(specs) > 1 else ""))
    return EXIT_OK


# -- parser ----------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    src = common.add_argument_group("graph")
    src.add_argument("--config", type=Path, help="reaction-graph config file")
    src.add_argument("--preset", help="graph preset (evolve/hitting/tc/mc) or sweep preset (sweep)")
    src.add_argument("--dt", type=float, help="override the time step (s)")
    src.add_argument("--q32", type=float, help="dephasing rate between nodes 3 and 2 (1/s)")
    src.add_argument("--mu32", type=float, help="dephasing probability per step between nodes 3 and 2")
    common.add_argument("--out", default=".", help="output directory (default: current directory)")
    common.add_argument("--seed", type=int, default=0, help="master random seed (default: 0)")
    common.add_argument("--workers", type=int, default=os.cpu_count() or 1, help="worker processes")
    common.add_argument("--tail-bound", type=float, default=TAIL_BOUND, help=f"allowed tail mass (default {TAIL_BOUND:g})")
    common.add_argument("--singular-floor", type=float, default=SINGULAR_FLOOR,
                        help=f"relative singular-value floor (default {SINGULAR_FLOOR:g})")

    p = argparse.ArgumentParser(prog="rpwalk", description="Radical-pair reaction kinetics as an open quantum walk.")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    e = sub.add_parser("evolve", parents=[common], help="propagate the density matrix and write a trajectory CSV")
    e.add_argument("--steps", type=int, required=True)
    e.add_argument("--stride", type=int, default=1000)
    e.add_argument("--full-resolution", action="store_true", help="record every step")
    e.set_defaults(func=cmd_evolve)

    h = sub.add_parser("hitting", parents=[common], help="hitting-time distribution and/or exact mean")
    h.add_argument("--mode", choices=("dist", "mean", "both"), default="mean")
    h.add_argument("--n-max", type=int, help="truncate the distribution at this step (default: until tail < bound)")
    h.add_argument("--every", type=int, default=1000, help="write f41 at every k-th step (default 1000)")
    h.add_argument("--target", type=int, help="target node (default: last node)")
    h.set_defaults(func=cmd_hitting)

    t = sub.add_parser("tc", parents=[common], help="time for the product population to reach eta")
    t.add_argument("--eta", type=float, default=0.2)
    t.add_argument("--max-steps", type=int, default=2_000_000_000)
    t.add_argument("--stride", type=int, default=1000)
    t.set_defaults(func=cmd_tc)

    s = sub.add_parser("sweep", parents=[common], help="run a sweep preset or a JSON sweep spec")
    s.add_argument("--spec", type=Path, help="JSON sweep specification")
    s.set_defaults(func=cmd_sweep)

    m = sub.add_parser("mc", parents=[common], help="Monte Carlo first-arrival times in the fully dephased limit")
    m.add_argument("--trials", type=int, default=100_000)
    m.set_defaults(func=cmd_mc)

    pr = sub.add_parser("preset", help="preset utilities")
    pr_sub = pr.add_subparsers(dest="preset_command", required=True)
    pl = pr_sub.add_parser("list", help="list available presets")
    pl.set_defaults(func=cmd_preset_list)
    return p


def _exit_code(exc: BaseException) -> int:
    if isinstance(exc, SweepPointError):
        return _exit_code(exc.cause)
    if isinstance(exc, (ThresholdNotReached, TailTooHeavy, Warned)):
        return EXIT_NOT_REACHED
    if isinstance(exc, (ConfigError, TimeStepTooLarge, DimensionError)):
        return EXIT_CONFIG
    if isinstance(exc, (SingularOperator, ConvergenceError, NotHermitianError, ArithmeticError)):
        return EXIT_NUMERIC
    if isinstance(exc, WalkError):
        return EXIT_NUMERIC
    return EXIT_CONFIG


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except Warned as exc:
        print(f"warning: {exc}", file=sys.stderr)
        return EXIT_NOT_REACHED
    except (WalkError, ValueError, ArithmeticError) as exc:
        param = getattr(exc, "parameter", None) or getattr(getattr(exc, "cause", None), "parameter", None)
        suffix = f" [parameter: {param}]" if param else ""
        print(f"error: {exc}{suffix}", file=sys.stderr)
        return _exit_code(exc)


if __name__ == "__main__":
    sys.exit(main())
