"""Command-line entry point: ``dcsweep {sweep,reconstruct,gen-surface,print-default-config}``.

Configs are JSON files.  Exit codes: 0 success, 2 config/validation error,
3 computational failure.
"""

import argparse
import datetime as _dt
import hashlib
import json
import os
import re
import sys
import tempfile
from pathlib import Path

from . import __version__
from .dcs import DcsParams, dcs_solve, recover_gradients
from .errors import ConfigurationError, ContractViolation, NumericalFailure, UndefinedMetricError
from .grid import GridDims
from .metrics import score
from .noise import NoiseSpec, check_seed, derive_seed
from .operators import assemble_system, default_m
from .poisson import align_mean, integrate
from .sparse_solver import SolverParams
from .surfaces import (SURFACE_KINDS, format_float, gen_surface, resolve_source,
                       surface_to_csv, write_pgm)
from .sweep import DEFAULT_DELTAS, DEFAULT_LAMBDAS, HyperGrid, SweepConfig, run_grid

EXIT_OK, EXIT_CONFIG, EXIT_COMPUTE = 0, 2, 3

SWEEP_SIZE = 32
RECONSTRUCT_SIZE = 64

CELL_COLUMNS = ("surface", "noise", "lambda", "delta", "mean_snr_db", "std_snr_db",
                "trials", "failures")
OPTIMAL_COLUMNS = ("surface", "noise", "lambda_star", "delta_star", "mean_snr_db")

_DCS_KEYS = {"outer_iters", "constraint_tol", "max_iter", "tol", "step_rule"}


def default_sweep_config():
    return {
        "surfaces": [{"kind": k, "size": SWEEP_SIZE} for k in SURFACE_KINDS],
        "noise": NoiseSpec.default("gaussian").to_dict(),
        "grid": {"lambdas": list(DEFAULT_LAMBDAS), "deltas": list(DEFAULT_DELTAS)},
        "trials": 10,
        "m_ratio": 0.5,
        "base_seed": 0,
        "dcs": {"outer_iters": 15, "constraint_tol": 1e-4, "max_iter": 2000,
                "tol": 1e-8, "step_rule": "fixed"},
        "select_mode": "mean_snr",
        "fix_sensing": False,
    }


def default_reconstruct_config():
    return {
        "surface": {"kind": "sphere", "size": RECONSTRUCT_SIZE},
        "lambda": 1e-3,
        "delta": 2.0,
        "noise": NoiseSpec.default("gaussian").to_dict(),
        "seed": 0,
        "m_ratio": 0.5,
        "dcs": {"outer_iters": 15, "constraint_tol": 1e-4, "max_iter": 2000,
                "tol": 1e-8, "step_rule": "fixed"},
    }


# ---------------------------------------------------------------------------
# config parsing

def read_config(path):
    """Return ``(raw_bytes, parsed_dict)``."""
    try:
        raw = Path(path).read_bytes()
    except OSError as exc:
        raise ConfigurationError(f"cannot read config {path}: {exc}") from None
    try:
        cfg = json.loads(raw.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ConfigurationError(f"{path}: invalid JSON: {exc}") from None
    if not isinstance(cfg, dict):
        raise ConfigurationError(f"{path}: top level must be a JSON object")
    return raw, cfg


def _check_keys(d, allowed, where):
    unknown = set(d) - set(allowed)
    if unknown:
        raise ConfigurationError(f"{where}: unknown field(s) {sorted(unknown)}")


def _dcs_params(d, lam=1e-3, delta=1.0):
    d = dict(d or {})
    _check_keys(d, _DCS_KEYS, "dcs")
    try:
        inner = SolverParams(lam=lam, max_iter=int(d.get("max_iter", 2000)),
                             tol=float(d.get("tol", 1e-8)),
                             step_rule=d.get("step_rule", "fixed"))
        return DcsParams(lam=lam, delta=delta, outer_iters=int(d.get("outer_iters", 15)),
                         constraint_tol=float(d.get("constraint_tol", 1e-4)), inner=inner)
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigurationError):
            raise
        raise ConfigurationError(f"dcs: {exc}") from None


def _noise_list(spec):
    if spec is None:
        return [NoiseSpec.default("gaussian")]
    specs = spec if isinstance(spec, list) else [spec]
    if not specs:
        raise ConfigurationError("noise: list must not be empty")
    out = [NoiseSpec.from_dict(s) for s in specs]
    kinds = [s.kind for s in out]
    if len(set(kinds)) != len(kinds):
        raise ConfigurationError(f"noise: each kind may appear once, got {kinds}")
    return out


def parse_sweep_config(d, seed_override=None):
    """Validate a sweep config dict; returns ``(surfaces, [SweepConfig per noise])``."""
    _check_keys(d, default_sweep_config(), "sweep config")
    srcs = d.get("surfaces")
    if not isinstance(srcs, list) or not srcs:
        raise ConfigurationError("surfaces: must be a non-empty list")
    surfaces = [resolve_source(s, SWEEP_SIZE) for s in srcs]
    labels = [s.label for s in surfaces]
    if len(set(labels)) != len(labels):
        raise ConfigurationError(f"surfaces: labels must be unique, got {labels}")
    grid_d = d.get("grid", {})
    if not isinstance(grid_d, dict):
        raise ConfigurationError("grid: must be an object")
    _check_keys(grid_d, ("lambdas", "deltas"), "grid")
    grid = HyperGrid(tuple(grid_d.get("lambdas", DEFAULT_LAMBDAS)),
                     tuple(grid_d.get("deltas", DEFAULT_DELTAS)))
    base_seed = check_seed(d.get("base_seed", 0) if seed_override is None else seed_override)
    try:
        trials = int(d.get("trials", 10))
        m_ratio = float(d.get("m_ratio", 0.5))
    except (TypeError, ValueError) as exc:
        raise ConfigurationError(f"trials/m_ratio: {exc}") from None
    dcs = _dcs_params(d.get("dcs"))
    for s in surfaces:
        if m_ratio * s.dims.n < 1:
            raise ConfigurationError(f"m_ratio: m_ratio * n < 1 for surface {s.label!r}")
    cfgs = [SweepConfig(surfaces=tuple(srcs), noise=noise, grid=grid, trials=trials,
                        m_ratio=m_ratio, base_seed=base_seed, dcs=dcs,
                        select_mode=d.get("select_mode", "mean_snr"),
                        fix_sensing=bool(d.get("fix_sensing", False)))
            for noise in _noise_list(d.get("noise"))]
    return surfaces, cfgs


# ---------------------------------------------------------------------------
# output helpers

def atomic_write(path, data):
    """Write via a temporary sibling and ``os.replace``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if isinstance(data, str):
        data = data.encode("utf-8")
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return str(path)


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return "nan" if v != v else format_float(v)
    return str(v)


def _csv(columns, rows):
    return ",".join(columns) + "\n" + "".join(
        ",".join(_fmt(r[c]) for c in columns) + "\n" for r in rows)


def _slug(label):
    return re.sub(r"[^A-Za-z0-9._-]+", "_", label) or "surface"


def _manifest(config_path, raw, started, outputs, **extra):
    m = {
        "config_path": str(config_path),
        "config_hash": hashlib.sha256(raw).hexdigest(),
        "tool_version": __version__,
        "started_at": started,
        "finished_at": _now(),
        "outputs": sorted(outputs),
    }
    m.update(extra)
    return json.dumps(m, indent=1, sort_keys=True) + "\n"


def _now():
    return _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")


def _heatmap(result):
    lines = [f"# surface {result.surface}", f"# noise {result.noise['kind']}",
             "# lambda delta mean_snr_db"]
    for r in result.records:
        lines.append(f"{_fmt(r['lambda'])} {_fmt(r['delta'])} {_fmt(r['mean_snr_db'])}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# commands

def cmd_sweep(config_path, out_dir, workers=None, seed=None):
    started = _now()
    raw, d = read_config(config_path)
    surfaces, cfgs = parse_sweep_config(d, seed)
    workers = workers or os.cpu_count() or 1
    out = Path(out_dir)
    outputs, optimal_rows, any_ok = [], [], False
    for surface in surfaces:
        slug = _slug(surface.label)
        cell_rows = []
        for cfg in cfgs:
            result = run_grid(surface, cfg, workers=workers)
            kind = cfg.noise.kind
            for r in result.records:
                cell_rows.append({"surface": surface.label, "noise": kind, **r})
            outputs.append(atomic_write(out / slug / f"result_{kind}.json", result.to_json()))
            outputs.append(atomic_write(out / slug / f"heatmap_{kind}.dat", _heatmap(result)))
            if result.best is None:
                print(f"error: every cell failed for {surface.label} / {kind}", file=sys.stderr)
                continue
            any_ok = True
            optimal_rows.append({"surface": surface.label, "noise": kind, **result.best})
            b = result.best
            print(f"{surface.label},{kind},{format_float(b['lambda_star'])},"
                  f"{format_float(b['delta_star'])},{_fmt(b['mean_snr_db'])}")
        outputs.append(atomic_write(out / slug / "cells.csv", _csv(CELL_COLUMNS, cell_rows)))
    outputs.append(atomic_write(out / "optimal.csv", _csv(OPTIMAL_COLUMNS, optimal_rows)))
    atomic_write(out / "manifest.json",
                 _manifest(config_path, raw, started, outputs, workers=workers,
                           seed_override=seed))
    return EXIT_OK if any_ok else EXIT_COMPUTE


def parse_reconstruct_config(d, seed_override=None):
    _check_keys(d, default_reconstruct_config(), "reconstruct config")
    if "surface" not in d:
        raise ConfigurationError("surface: required")
    surface = resolve_source(d["surface"], RECONSTRUCT_SIZE)
    try:
        lam = float(d.get("lambda", 1e-3))
        delta = float(d.get("delta", 2.0))
        m_ratio = float(d.get("m_ratio", 0.5))
    except (TypeError, ValueError) as exc:
        raise ConfigurationError(f"lambda/delta/m_ratio: {exc}") from None
    noise = NoiseSpec.from_dict(d.get("noise", {"kind": "none"}))
    seed = check_seed(d.get("seed", 0) if seed_override is None else seed_override)
    params = _dcs_params(d.get("dcs"), lam, delta)
    m = default_m(surface.dims.n, m_ratio)
    return surface, params, noise, seed, m


def cmd_reconstruct(config_path, out_dir, seed=None):
    started = _now()
    raw, d = read_config(config_path)
    surface, params, noise, seed, m = parse_reconstruct_config(d, seed)
    sys_ = assemble_system(surface, derive_seed(seed, "psi_x"), derive_seed(seed, "psi_y"),
                           m, noise, derive_seed(seed, "noise"))
    c, state, report = dcs_solve(sys_, params)
    grads = recover_gradients(c, sys_)
    recon = align_mean(integrate(grads), surface)
    sc = score(surface, grads)
    shape = surface.dims.shape
    out = Path(out_dir)
    score_doc = {
        "surface": surface.label, "lambda": params.lam, "delta": params.delta,
        "noise": noise.to_dict(), "m": m, "n": surface.dims.n, "seed": seed,
        "outer_iterations": state.t, "inner_iterations": report.iterations,
        "constraint_norm": state.constraint_norm, "kkt_residual": report.kkt_residual,
        **sc.to_dict(),
    }
    trace_cols = ("t", "constraint_norm", "objective", "inner_objective", "inner_iterations")
    outputs = [
        atomic_write(out / "surface.csv", surface_to_csv(recon.as_array())),
        atomic_write(out / "reference.csv", surface_to_csv(surface.as_array())),
        atomic_write(out / "zx.csv", surface_to_csv(grads.zx.reshape(shape))),
        atomic_write(out / "zy.csv", surface_to_csv(grads.zy.reshape(shape))),
        atomic_write(out / "score.json", json.dumps(score_doc, indent=1, sort_keys=True) + "\n"),
        atomic_write(out / "trace.csv", _csv(trace_cols, state.trace)),
    ]
    atomic_write(out / "manifest.json", _manifest(config_path, raw, started, outputs))
    print(f"{surface.label}: surface SNR {_fmt(sc.snr_surface_db)} dB, "
          f"gradient SNR {_fmt(sc.snr_gradient_db)} dB")
    return EXIT_OK


def cmd_gen_surface(kind, rows, cols, out=None):
    s = gen_surface(kind, GridDims(rows, cols))
    if out is None:
        sys.stdout.write(surface_to_csv(s.as_array()))
    elif str(out).lower().endswith(".pgm"):
        atomic_write(out, write_pgm(s.as_array()))
    else:
        atomic_write(out, surface_to_csv(s.as_array()))
    return EXIT_OK


def build_parser():
    p = argparse.ArgumentParser(prog="dcsweep", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    sw = sub.add_parser("sweep", help="brute-force (lambda, delta) search")
    sw.add_argument("--config", required=True)
    sw.add_argument("--out", default="sweep_out")
    sw.add_argument("--workers", type=int, default=None,
                    help="worker processes (default: logical CPUs)")
    sw.add_argument("--seed", type=int, default=None, help="override base_seed")

    rc = sub.add_parser("reconstruct", help="single DCS reconstruction")
    rc.add_argument("--config", required=True)
    rc.add_argument("--out", default="reconstruct_out")
    rc.add_argument("--seed", type=int, default=None, help="override seed")

    gs = sub.add_parser("gen-surface", help="write a synthetic surface (CSV or PGM)")
    gs.add_argument("--kind", required=True, choices=SURFACE_KINDS)
    gs.add_argument("--size", type=int, default=SWEEP_SIZE)
    gs.add_argument("--rows", type=int)
    gs.add_argument("--cols", type=int)
    gs.add_argument("--out")

    pd = sub.add_parser("print-default-config", help="print an embedded default config")
    pd.add_argument("which", nargs="?", default="sweep", choices=("sweep", "reconstruct"))
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        if args.command == "sweep":
            return cmd_sweep(args.config, args.out, args.workers, args.seed)
        if args.command == "reconstruct":
            return cmd_reconstruct(args.config, args.out, args.seed)
        if args.command == "gen-surface":
            return cmd_gen_surface(args.kind, args.rows or args.size, args.cols or args.size,
                                   args.out)
        cfg = default_sweep_config() if args.which == "sweep" else default_reconstruct_config()
        print(json.dumps(cfg, indent=2))
        return EXIT_OK
    except (ConfigurationError, ContractViolation, UndefinedMetricError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalFailure as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_COMPUTE


if __name__ == "__main__":
    sys.exit(main())
