"""Command-line front end: ``spectv filter | deform | verify``.

Exit codes: 0 success, 1 verification failure, 2 usage or configuration
error, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from . import __version__
from .deformation import (ConstraintError, DeformationError, DeformationProblem, analyze_displacement, deform,
                          find_plateaus, objective_monotone, parse_constraints, segment_contrast)
from .flow import FlowError, SolverConfig
from .linsolve import SolveError
from .mesh import MeshError
from .mesh_io import MeshParseError, format_from_path, read_mesh, write_mesh
from .pipelines import METHODS, METRIC_SOURCES, MethodConfig, default_solver, run_method
from .spectral import LAST_BIN, FilterSpec, band_energies, spectrum_csv

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_NUMERIC = 0, 1, 2, 3

log = logging.getLogger("spectv")


class UsageError(Exception):
    pass


class _JsonFormatter(logging.Formatter):
    def format(self, record):
        d = {"level": record.levelname.lower(), "msg": record.getMessage()}
        d.update(getattr(record, "fields", {}))
        return json.dumps(d, default=_jsonable)


class _TextFormatter(logging.Formatter):
    def format(self, record):
        fields = getattr(record, "fields", {})
        return record.getMessage() + "".join(f" {k}={_fmt(v)}" for k, v in fields.items())


def _jsonable(x):
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, np.generic):
        return x.item()
    return str(x)


def _setup_logging(json_log: bool, verbose: bool):
    h = logging.StreamHandler(sys.stderr)
    h.setFormatter(_JsonFormatter() if json_log else _TextFormatter())
    log.handlers[:] = [h]
    log.setLevel(logging.DEBUG if verbose else logging.INFO)
    log.propagate = False


def _info(msg, **fields):
    log.info(msg, extra={"fields": fields})


def _fmt(v):
    if isinstance(v, float):
        return f"{v:.6g}"
    return str(v)


@dataclass
class RunConfig:
    """Everything a run depends on; round-trips through JSON text."""

    command: str
    inputs: list = field(default_factory=list)
    outputs: list = field(default_factory=list)
    params: dict = field(default_factory=dict)
    seed: int = 0

    def to_text(self) -> str:
        return json.dumps(asdict(self), sort_keys=True, default=_jsonable)

    @classmethod
    def from_text(cls, text: str) -> "RunConfig":
        return cls(**json.loads(text))


def _load_config_file(path):
    if path is None:
        return {}
    try:
        with open(path) as fh:
            data = json.load(fh)
    except OSError as e:
        raise UsageError(f"cannot read config {path}: {e.strerror}") from None
    except json.JSONDecodeError as e:
        raise UsageError(f"config {path}: invalid JSON at line {e.lineno} column {e.colno}: {e.msg}") from None
    if not isinstance(data, dict):
        raise UsageError(f"config {path}: expected a JSON object")
    return data


def _check_input(path):
    if not os.path.isfile(path):
        raise UsageError(f"input file not found: {path}")
    try:
        format_from_path(path)
    except ValueError as e:
        raise UsageError(str(e)) from None


def _check_output(path):
    d = os.path.dirname(os.path.abspath(path))
    if not os.path.isdir(d):
        raise UsageError(f"output directory does not exist: {d}")
    try:
        format_from_path(path)
    except ValueError as e:
        raise UsageError(str(e)) from None


# filter ----------------------------------------------------------------------------

def _filter_spec(args) -> FilterSpec:
    chosen = [a for a in ("allpass", "lowpass", "highpass", "band") if getattr(args, a) not in (None, False)]
    if len(chosen) > 1:
        raise UsageError(f"choose one filter, got {', '.join(chosen)}")
    if args.lowpass is not None:
        return FilterSpec.lowpass(args.lowpass, relative=True)
    if args.highpass is not None:
        return FilterSpec.highpass(args.highpass, relative=True)
    if args.band is not None:
        a, b, gain = args.band
        return FilterSpec.band(a, b, gain, relative=True)
    return FilterSpec.allpass()


def _method_config(args, overrides: dict, mesh=None) -> MethodConfig:
    try:
        return _build_method_config(args, overrides, mesh)
    except (TypeError, ValueError) as e:
        raise UsageError(f"invalid method configuration: {e}") from None


def _build_method_config(args, overrides, mesh):
    if args.steps is not None and args.steps < 1:
        raise ValueError("--steps must be >= 1")
    if args.horizon is not None and not args.horizon > 0:
        raise ValueError("--horizon must be positive")
    d = {"method": args.method, "filter": _filter_spec(args).to_dict(), "last_bin": args.last_bin}
    if args.method == "m3":
        d["smoothing_time"] = args.smoothing_time
        d["metric_source"] = args.metric_source
    if any(v is not None for v in (args.dt, args.steps, args.horizon)):
        n = args.steps or 100
        if args.dt is not None:
            s = SolverConfig(dt=args.dt, n_steps=n)
        elif mesh is not None:
            s = default_solver(mesh, n, args.horizon if args.horizon is not None else 0.1)
        else:
            s = None
        if s is not None:
            d["solver"] = {k: getattr(s, k) for k in s.__dataclass_fields__}
    d.update(overrides)
    return MethodConfig.from_dict(d)


def cmd_filter(args) -> int:
    _check_input(args.input)
    _check_output(args.output)
    overrides = _load_config_file(args.config)
    cfg = _method_config(args, overrides)
    if args.dry_run:
        _info("configuration valid", **cfg.to_dict())
        return EXIT_OK
    mesh = read_mesh(args.input)
    cfg = _method_config(args, overrides, mesh)
    if cfg.solver is None:
        cfg = replace(cfg, solver=default_solver(mesh))
    run = RunConfig("filter", [args.input], [args.output], cfg.to_dict(), args.seed)
    _info("run", config=run.to_text())
    t0 = time.perf_counter()
    res = run_method(mesh, cfg)
    write_mesh(args.output, res.mesh)
    e = band_energies(res.spectrum)
    top = np.argsort(e.combined)[::-1][:5]
    _info("band energies", total=e.total, peak_times=[float(res.spectrum.times[k]) for k in top],
          peak_energies=[float(e.combined[k]) for k in top])
    if args.bands_csv:
        with open(args.bands_csv, "w") as fh:
            fh.write(spectrum_csv(res.spectrum))
    if args.export_base and res.decomposition is not None:
        write_mesh(args.export_base, mesh.with_vertices(res.decomposition.base, check_area=False))
    rec = res.spectrum.reconstruction_error()
    _info("done", method=cfg.method, max_vertex_change=res.max_vertex_change, reconstruction_error=rec,
          residual_norm=res.residual_norm, T=res.trace.T, seconds=time.perf_counter() - t0)
    if cfg.filter.kind == "allpass":
        _info("all-pass check", max_vertex_error=res.max_vertex_change)
    return EXIT_OK


# deform ----------------------------------------------------------------------------

def cmd_deform(args) -> int:
    _check_input(args.input)
    if not os.path.isfile(args.constraints):
        raise UsageError(f"constraints file not found: {args.constraints}")
    _check_output(args.output)
    overrides = _load_config_file(args.config)
    mesh = read_mesh(args.input)
    with open(args.constraints) as fh:
        text = fh.read()
    try:
        b, k, w = parse_constraints(text, mesh.n_vertices)
        params = {"weight": args.weight if args.weight is not None else w, "tol": args.tol,
                  "max_iter": args.max_iter, "weight_scale": args.weight_scale}
        params.update(overrides)
        prob = DeformationProblem(mesh, b, k, **params)
    except ConstraintError as e:
        raise UsageError(str(e)) from None
    except TypeError as e:
        raise UsageError(f"invalid deformation configuration: {e}") from None
    run = RunConfig("deform", [args.input, args.constraints], [args.output], params, args.seed)
    _info("run", config=run.to_text(), handles=len(b))
    if args.dry_run:
        _info("configuration valid")
        return EXIT_OK
    res = deform(prob)
    write_mesh(args.output, res.mesh)
    if args.log_csv:
        with open(args.log_csv, "w") as fh:
            fh.write(res.log_csv())
    mag = res.magnitude
    plateaus = find_plateaus(mag, np.ones_like(mag))
    contrast = segment_contrast(mag, plateaus)
    _info("done", iterations=res.iterations, converged=res.converged, objective=res.log[-1]["objective"],
          monotone=objective_monotone(res), max_displacement=float(mag.max()),
          constraint_error=res.constraint_error(prob), bbox_diagonal=mesh.bbox_diagonal())
    _info("piecewise-constancy", plateaus=len(plateaus), within_std_over_gap=contrast["ratio"],
          threshold=0.05, passed=bool(len(plateaus) > 1 and contrast["ratio"] <= 0.05))
    if args.analyze:
        rep = analyze_displacement(res)
        _info("displacement plateaus", **rep.as_dict())
    return EXIT_OK


# verify ----------------------------------------------------------------------------

def _run_one(job):
    from .lab.experiments import run_experiment
    name, n, params = job
    t0 = time.perf_counter()
    reps = run_experiment(name, n, **params)
    return name, [r.as_dict() | {"lines": r.lines()} for r in reps], time.perf_counter() - t0


def cmd_verify(args) -> int:
    from .lab.experiments import EXPERIMENTS

    if args.experiment != "all" and args.experiment not in EXPERIMENTS:
        raise UsageError(f"unknown experiment {args.experiment!r}; choose from: all, {', '.join(EXPERIMENTS)}")
    if args.grid < 8:
        raise UsageError("--grid must be at least 8")
    names = list(EXPERIMENTS) if args.experiment == "all" else [args.experiment]
    params = {k: v for k, v in (("R", args.R), ("r", args.r), ("l", args.l), ("theta0", args.theta0),
                                ("rho", args.rho)) if v is not None}
    params.update(_load_config_file(args.config))
    _info("run", config=RunConfig("verify", [], [], {"experiments": names, "grid": args.grid, **params},
                                  args.seed).to_text())
    if args.dry_run:
        _info("configuration valid")
        return EXIT_OK
    jobs = [(n, args.grid, params) for n in names]
    if args.jobs > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as ex:
            results = list(ex.map(_run_one, jobs))
    else:
        results = [_run_one(j) for j in jobs]
    ok = True
    summary = []
    for name, reps, secs in results:
        for r in reps:
            for line in r["lines"]:
                print(line)
            ok &= r["passed"]
            summary.append({k: r[k] for k in ("name", "passed", "checks")})
        _info("experiment finished", experiment=name, seconds=secs)
    if args.json_log:
        print(json.dumps({"passed": ok, "reports": summary}, default=_jsonable))
    print("ALL PASS" if ok else "SOME CHECKS FAILED")
    return EXIT_OK if ok else EXIT_FAIL


# parser ----------------------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _common(p):
    p.add_argument("--config", help="JSON file whose keys override the flags")
    p.add_argument("--dry-run", action="store_true", help="validate inputs and configuration only")
    p.add_argument("--json-log", action="store_true", help="log JSON lines to stderr")
    p.add_argument("--seed", type=int, default=0, help="seed recorded with the run (default 0)")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="spectv", description="Spectral total-variation processing of surfaces.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    f = sub.add_parser("filter", help="spectral shape filtering")
    f.add_argument("input")
    f.add_argument("output")
    f.add_argument("--method", choices=METHODS, default="m1")
    g = f.add_argument_group("filter (thresholds are fractions of the stopping time)")
    g.add_argument("--allpass", action="store_true")
    g.add_argument("--lowpass", type=float, metavar="TC")
    g.add_argument("--highpass", type=float, metavar="TC")
    g.add_argument("--band", type=float, nargs=3, metavar=("TA", "TB", "GAIN"))
    f.add_argument("--steps", type=int, help="number of time steps (default 100)")
    f.add_argument("--dt", type=float, help="absolute time step (default: scaled by surface area)")
    f.add_argument("--horizon", type=float, help="stopping time over squared equal-area radius (default 0.1)")
    f.add_argument("--smoothing-time", type=float, default=0.05, help="m3 cMCF time (default 0.05)")
    f.add_argument("--metric-source", choices=METRIC_SOURCES, default="original", help="m3 metric")
    f.add_argument("--last-bin", choices=LAST_BIN, default="one-sided",
                   help="last spectral bin: one-sided difference or central with the extra step")
    f.add_argument("--bands-csv", help="write per-bin band energies")
    f.add_argument("--export-base", help="m3: write the smoothed base shape")
    _common(f)
    f.set_defaults(func=cmd_filter)

    d = sub.add_parser("deform", help="TV-regularized handle deformation")
    d.add_argument("input")
    d.add_argument("constraints", help='JSON: {"constraints": [{"vertex": i, "target": [x, y, z]}], "weight": w}')
    d.add_argument("output")
    d.add_argument("--weight", type=float, help="absolute constraint weight")
    d.add_argument("--weight-scale", type=float, default=1e6, help="weight relative to the stiffness scale")
    d.add_argument("--tol", type=float, default=1e-5)
    d.add_argument("--max-iter", type=int, default=200)
    d.add_argument("--log-csv", help="write the iteration log")
    d.add_argument("--analyze", action="store_true", help="flow |d'| and fit plateau decay")
    _common(d)
    d.set_defaults(func=cmd_deform)

    v = sub.add_parser("verify", help="numerical checks of the eigenset theory")
    v.add_argument("experiment", help="experiment name or 'all'")
    v.add_argument("--grid", type=int, default=64)
    v.add_argument("--R", type=float)
    v.add_argument("--r", type=float)
    v.add_argument("--l", type=float)
    v.add_argument("--theta0", type=float)
    v.add_argument("--rho", type=float)
    v.add_argument("--jobs", type=int, default=1)
    _common(v)
    v.set_defaults(func=cmd_verify)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    _setup_logging(args.json_log, args.verbose)
    try:
        return args.func(args)
    except (UsageError, MeshParseError, MeshError, ConstraintError) as e:
        print(f"spectv: error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (FlowError, DeformationError, SolveError, FloatingPointError) as e:
        print(f"spectv: numerical failure: {e}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
