"""Command-line front end.

    roughavg [--config PATH] [--seed U64] [--workers N] [--out DIR] [--format {csv,json}] <subcommand> [options]

Subcommands: lift, solve, slowfast, average, study, selftest.  Exit codes:
0 success, 1 configuration error, 2 numerical failure, 3 selftest failure.
Every run writes ``manifest.json`` into the output directory.
"""

from __future__ import annotations

import argparse
import configparser
import dataclasses
import json
import os
import sys

import numpy as np

from . import io as rpio
from .core import Grid
from .experiment import VERSION, StudyError, StudySpec, convergence_study
from .frozen import FrozenModel, build_fbar_table, solve_averaged
from .lifts import NoiseSpec, mixed_lift, sample_lift
from .models import MODELS, get_model
from .rde import ExplosionError, VectorFieldSet, solve_rde
from .selftest import run_selftest
from .slowfast import MicroStepPolicy, solve_slow_fast

EXIT_CONFIG, EXIT_NUMERIC, EXIT_SELFTEST = 1, 2, 3


class ConfigError(ValueError):
    pass


# defaults per config section; the value types drive parsing
DEFAULTS = {
    "lift": {"kind": "brownian_ito", "dim": 1, "hurst": 0.0, "n": 256, "horizon": 1.0, "substeps": 8, "stream_id": 0},
    "solve": {"model": "ou_sine", "kind": "fbm", "hurst": 0.45, "n": 512, "horizon": 1.0, "substeps": 8, "x0": 0.5, "drift": "fbar"},
    "slowfast": {"model": "ou_sine", "kind": "fbm", "hurst": 0.45, "epsilon": 0.1, "horizon": 1.0, "substeps": 8, "x0": 0.5, "y0": 0.0, "c_micro": 0.1},
    "average": {"model": "ou_sine", "method": "endpoint_mc", "x_min": -2.0, "x_max": 3.0, "nodes": 26, "n_seeds": 4096, "T_mix": 5.0, "h_step": 0.01},
    "study": {f.name: f.default if f.default is not dataclasses.MISSING else f.default_factory() for f in dataclasses.fields(StudySpec)},
}


def _convert(key, raw: str, default):
    try:
        if isinstance(default, bool):
            return raw.strip().lower() in ("1", "true", "yes", "on")
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float) or default is None and key in ("hurst", "delta_value"):
            return None if raw.strip().lower() in ("", "none") else float(raw)
        if isinstance(default, tuple):
            return tuple(float(v) for v in raw.replace(";", ",").split(",") if v.strip())
        if isinstance(default, dict):
            return json.loads(raw) if raw.strip() else {}
        return raw.strip()
    except (ValueError, json.JSONDecodeError) as exc:
        raise ConfigError(f"bad value for {key!r}: {raw!r} ({exc})") from None


def load_section(path, section: str) -> dict:
    """Defaults for ``section`` updated from the INI file at ``path`` (if any)."""
    vals = dict(DEFAULTS[section])
    if path is None:
        return vals
    if not os.path.exists(path):
        raise ConfigError(f"config file not found: {path}")
    cp = configparser.ConfigParser()
    cp.optionxform = str  # keys are case-sensitive field names
    try:
        cp.read(path)
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from None
    if cp.has_section(section):
        for key, raw in cp.items(section):
            if key not in vals:
                raise ConfigError(f"unknown key {key!r} in section [{section}]")
            vals[key] = _convert(key, raw, vals[key])
    return vals


def config_reference() -> str:
    lines = []
    for sec, vals in DEFAULTS.items():
        lines.append(f"[{sec}]")
        for k, v in vals.items():
            if isinstance(v, tuple):
                v = ", ".join(repr(x) for x in v)
            elif isinstance(v, dict):
                v = json.dumps(v)
            lines.append(f"{k} = {v}")
        lines.append("")
    return "\n".join(lines)


def _noise(kind, dim, hurst, substeps, seed, stream_id):
    try:
        return NoiseSpec(kind, dim, hurst if kind == "fbm" else None, substeps, seed, stream_id)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def _model(name):
    try:
        return get_model(name)
    except KeyError as exc:
        raise ConfigError(str(exc)) from None


def _write_manifest(out, args, section, cfg, extra=None):
    man = {
        "version": VERSION,
        "subcommand": args.command,
        "master_seed": args.seed,
        "config_section": section,
        "config": _plain(cfg),
    }
    man.update(extra or {})
    with open(os.path.join(out, "manifest.json"), "w") as fh:
        json.dump(_plain(man), fh, indent=2, sort_keys=True)


def _plain(obj):
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def _write_table(path_base, fmt, columns, rows):
    if fmt == "json":
        path = path_base + ".json"
        with open(path, "w") as fh:
            json.dump([dict(zip(columns, map(_plain, r))) for r in rows], fh, indent=2)
    else:
        path = path_base + ".csv"
        with open(path, "w") as fh:
            fh.write(",".join(columns) + "\n")
            for r in rows:
                fh.write(",".join(repr(float(v)) for v in r) + "\n")
    return path


def cmd_lift(args, cfg):
    for key in ("kind", "dim", "hurst", "n", "substeps", "horizon"):
        v = getattr(args, key, None)
        if v is not None:
            cfg[key] = v
    spec = _noise(cfg["kind"], cfg["dim"], cfg["hurst"], cfg["substeps"], args.seed, cfg["stream_id"])
    rp, _ = sample_lift(spec, Grid(cfg["horizon"], cfg["n"]))
    fmt = args.lift_format
    path = os.path.join(args.out, "lift.csv" if fmt == "csv" else "lift.rp")
    rpio.write_rough_path(rp, path, fmt)
    _write_manifest(args.out, args, "lift", cfg, {"output": path, "content_hash": rp.content_hash()})
    print(path)
    return 0


def cmd_solve(args, cfg):
    coeffs = _model(cfg["model"])
    spec = _noise(cfg["kind"], coeffs.d, cfg["hurst"], cfg["substeps"], args.seed, 0)
    B, _ = sample_lift(spec, Grid(cfg["horizon"], cfg["n"]))
    if cfg["drift"] == "fbar":
        fbar = coeffs.closed_form.get("fbar")
        if fbar is None:
            raise ConfigError(f"model {coeffs.name} has no closed-form fbar; use drift = zero")
        path = solve_averaged(fbar, coeffs.sigma, coeffs.dsigma, B, [cfg["x0"]])
    elif cfg["drift"] == "zero":
        path = solve_rde(VectorFieldSet(coeffs.sigma, coeffs.dsigma), B, [cfg["x0"]])
    else:
        raise ConfigError(f"unknown drift {cfg['drift']!r}")
    rows = np.column_stack([B.grid.times, path.values])
    cols = ["t"] + [f"x{i}" for i in range(path.values.shape[1])]
    out = _write_table(os.path.join(args.out, "solution"), args.format, cols, rows)
    _write_manifest(args.out, args, "solve", cfg, {"output": out, "lift_hash": B.content_hash()})
    print(out)
    return 0


def cmd_slowfast(args, cfg):
    coeffs = _model(cfg["model"])
    pol = MicroStepPolicy(cfg["c_micro"])
    grid = Grid(cfg["horizon"], pol.n_steps(cfg["horizon"], cfg["epsilon"]))
    bspec = _noise(cfg["kind"], coeffs.d, cfg["hurst"], cfg["substeps"], args.seed, 0)
    wspec = _noise("brownian_ito", coeffs.e, None, cfg["substeps"], args.seed, 1)
    B, _ = sample_lift(bspec, grid)
    W, inc = sample_lift(wspec, grid)
    xi = mixed_lift(B, inc, grid, 1)
    try:
        sol = solve_slow_fast(coeffs, xi, cfg["epsilon"], [cfg["x0"], cfg["y0"]], pol)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    rows = np.column_stack([grid.times, sol.X, sol.Y])
    out = _write_table(os.path.join(args.out, "trajectory"), args.format, ["t", "x", "y"], rows)
    _write_manifest(args.out, args, "slowfast", cfg, {"output": out, "diagnostics": sol.diagnostics()})
    print(json.dumps(sol.diagnostics()))
    return 0


def cmd_average(args, cfg):
    coeffs = _model(cfg["model"])
    model = FrozenModel.from_coeffs(coeffs)
    xs = np.linspace(cfg["x_min"], cfg["x_max"], cfg["nodes"])
    budget = {"n_seeds": cfg["n_seeds"], "T_mix": cfg["T_mix"], "h_step": cfg["h_step"]}
    try:
        table = build_fbar_table(model, xs, cfg["method"], budget, args.seed)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    path = os.path.join(args.out, "fbar.csv")
    table.to_csv(path)
    _write_manifest(args.out, args, "average", cfg, {"output": path})
    print(path)
    return 0


def cmd_study(args, cfg):
    cfg = dict(cfg)
    cfg["seed"] = args.seed
    try:
        spec = StudySpec(**cfg)
        if spec.model not in MODELS:
            raise ValueError(f"unknown model {spec.model!r}")
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None
    res = convergence_study(spec, args.workers)
    if args.format == "json":
        path = os.path.join(args.out, "study.json")
        rows = [{"epsilon": float(e), "mean": float(m), "stderr": float(s), "n": int(n)} for e, m, s, n in zip(res.epsilons, res.mean, res.stderr, res.n)]
        with open(path, "w") as fh:
            json.dump(rows, fh, indent=2)
    else:
        path = os.path.join(args.out, "study.csv")
        res.to_csv(path)
    with open(os.path.join(args.out, "plot_data.csv"), "w") as fh:
        fh.write(res.plot_data())
    man = res.manifest()
    man.update({"subcommand": "study", "output": path})
    with open(os.path.join(args.out, "manifest.json"), "w") as fh:
        json.dump(_plain(man), fh, indent=2, sort_keys=True)
    print(path)
    return 0


def cmd_selftest(args, cfg):
    rp = None
    if args.input:
        try:
            rp = rpio.read_rough_path(args.input)
        except (OSError, ValueError) as exc:
            raise ConfigError(f"cannot read {args.input}: {exc}") from None
    checks = run_selftest(rp, args.seed)
    for c in checks:
        print(f"{'PASS' if c.passed else 'FAIL'}  {c.name}: {c.detail}")
    _write_manifest(args.out, args, "selftest", {}, {"checks": [c._asdict() for c in checks]})
    return 0 if all(c.passed for c in checks) else EXIT_SELFTEST


COMMANDS = {
    "lift": cmd_lift,
    "solve": cmd_solve,
    "slowfast": cmd_slowfast,
    "average": cmd_average,
    "study": cmd_study,
    "selftest": cmd_selftest,
}


GLOBAL_DEFAULTS = {"config": None, "seed": None, "workers": os.cpu_count() or 1, "out": ".", "format": "csv"}


def _global_options() -> argparse.ArgumentParser:
    # accepted before or after the subcommand
    g = argparse.ArgumentParser(add_help=False)
    g.add_argument("--config", default=argparse.SUPPRESS, help="INI file with one section per subcommand")
    g.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="master seed (unsigned 64-bit)")
    g.add_argument("--workers", type=int, default=argparse.SUPPRESS, help="worker processes (default: CPU count)")
    g.add_argument("--out", default=argparse.SUPPRESS, help="output directory (default: .)")
    g.add_argument("--format", choices=("csv", "json"), default=argparse.SUPPRESS, help="result format (default: csv)")
    return g


def build_parser() -> argparse.ArgumentParser:
    common = _global_options()
    p = argparse.ArgumentParser(prog="roughavg", description="Rough-path averaging toolkit", parents=[common])
    p.add_argument("--print-defaults", action="store_true", help="print the config reference and exit")
    sub = p.add_subparsers(dest="command")
    lp = sub.add_parser("lift", parents=[common], help="sample and serialize a rough path")
    lp.add_argument("--kind", choices=("brownian_ito", "brownian_strat", "fbm", "deterministic_smooth"))
    lp.add_argument("--dim", type=int)
    lp.add_argument("--hurst", type=float)
    lp.add_argument("--n", type=int)
    lp.add_argument("--substeps", type=int)
    lp.add_argument("--horizon", type=float)
    lp.add_argument("--lift-format", choices=("binary", "csv"), default="binary")
    sub.add_parser("solve", parents=[common], help="solve the averaged RDE of a registered model")
    sub.add_parser("slowfast", parents=[common], help="simulate one slow-fast trajectory")
    sub.add_parser("average", parents=[common], help="tabulate the averaged drift")
    sub.add_parser("study", parents=[common], help="run the averaging convergence study")
    sp = sub.add_parser("selftest", parents=[common], help="run the deterministic invariant suite")
    sp.add_argument("--input", help="check a serialized rough path instead of fresh samples")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    for k, v in GLOBAL_DEFAULTS.items():
        if not hasattr(args, k):
            setattr(args, k, v)
    if args.print_defaults:
        print(config_reference())
        return 0
    if args.command is None:
        parser.print_help()
        return EXIT_CONFIG
    try:
        cfg = load_section(args.config, args.command) if args.command in DEFAULTS else {}
        if args.seed is None:
            args.seed = int(cfg.get("seed", 0)) if args.command == "study" else 0
        if not 0 <= args.seed < 2**64:
            raise ConfigError("seed must be an unsigned 64-bit integer")
        os.makedirs(args.out, exist_ok=True)
        return COMMANDS[args.command](args, cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ExplosionError, StudyError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
