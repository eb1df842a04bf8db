"""Command-line front end.

``varint run CONFIG``       solve a catalog problem, write trajectory.csv, residuals.csv, report.json
``varint diag CONFIG``      convergence diagnostics of the stored trajectory -> convergence_report.json
``varint matrices --gamma G --h H``   structure matrices as JSON on stdout

Exit codes: 0 success (``run``: converged), 2 ``run`` did not converge, 1 error.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import inspect
import json
import math
import sys
from pathlib import Path

import numpy as np

from .core import BoundaryData, Knot, SolverConfig, Trajectory, VarintError, max_residual
from .diagnostics import check_theorem_conditions
from .discretization import SCHEMES
from .matrices import build_matrices, det_B, det_C, lu_factors_C, verify_identities
from .problems import PROBLEMS, ProblemSpec, travel_time

CONFIG_KEYS = {
    "problem", "N", "T", "boundary", "scheme", "scheme_params", "params", "solver",
    "start_N", "waypoints", "output_dir", "seed", "guess_noise",
}
BOUNDARY_KEYS = {"left", "right", "knots"}
SOLVER_KEYS = {f.name for f in dataclasses.fields(SolverConfig)}


class ConfigError(Exception):
    pass


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------


def load_config(path) -> dict:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read config: {exc.strerror}") from None
    try:
        cfg = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    if not isinstance(cfg, dict):
        raise ConfigError(f"{path}: top level must be a JSON object")
    validate_config(cfg)
    return cfg


def _unknown(keys, allowed, where):
    bad = sorted(set(keys) - allowed)
    if bad:
        raise ConfigError(f"unknown key(s) in {where}: {', '.join(bad)}; allowed: {', '.join(sorted(allowed))}")


def _number(cfg, key, cond, msg, integer=False):
    v = cfg[key]
    ok_type = isinstance(v, int) if integer else isinstance(v, (int, float))
    if isinstance(v, bool) or not ok_type or not math.isfinite(v) or not cond(v):
        raise ConfigError(f"field '{key}': {msg} (got {v!r})")


def validate_config(cfg: dict) -> None:
    """Reject unknown keys and check preconditions before any computation."""
    _unknown(cfg, CONFIG_KEYS, "config")
    if "problem" not in cfg:
        raise ConfigError("field 'problem' is required")
    if cfg["problem"] not in PROBLEMS:
        raise ConfigError(f"field 'problem': unknown problem {cfg['problem']!r}; known: {', '.join(sorted(PROBLEMS))}")
    if "N" in cfg:
        _number(cfg, "N", lambda v: v >= 2, "must be an integer >= 2", integer=True)
    if "start_N" in cfg:
        _number(cfg, "start_N", lambda v: v >= 2, "must be an integer >= 2", integer=True)
    if "T" in cfg:
        _number(cfg, "T", lambda v: v > 0, "must be positive")
    if "seed" in cfg:
        _number(cfg, "seed", lambda v: v >= 0, "must be a non-negative integer", integer=True)
    if "guess_noise" in cfg:
        _number(cfg, "guess_noise", lambda v: v >= 0, "must be non-negative")
    if "scheme" in cfg and cfg["scheme"] not in SCHEMES:
        raise ConfigError(f"field 'scheme': unknown scheme {cfg['scheme']!r}; known: {', '.join(sorted(SCHEMES))}")
    for key in ("boundary", "scheme_params", "params", "solver"):
        if key in cfg and not isinstance(cfg[key], dict):
            raise ConfigError(f"field '{key}' must be an object")
    if "boundary" in cfg:
        _unknown(cfg["boundary"], BOUNDARY_KEYS, "boundary")
    solver = cfg.get("solver", {})
    _unknown(solver, SOLVER_KEYS, "solver")
    for key in ("damping", "damping_post_refine"):
        if key in solver:
            v = solver[key]
            if isinstance(v, bool) or not isinstance(v, (int, float)) or not 0 <= v < 1:
                raise ConfigError(f"field 'solver.{key}': damping must satisfy 0 <= damping < 1 (got {v!r})")
    if "tol_residual" in solver:
        v = solver["tol_residual"]
        if isinstance(v, bool) or not isinstance(v, (int, float)) or not v > 0:
            raise ConfigError(f"field 'solver.tol_residual': must be positive (got {v!r})")
    builder = PROBLEMS[cfg["problem"]]
    sig = inspect.signature(builder)
    accepts_any = any(p.kind == p.VAR_KEYWORD for p in sig.parameters.values())
    allowed = set(sig.parameters) - {"config", "waypoints"}
    if not accepts_any:
        _unknown(cfg.get("params", {}), allowed, f"params of problem {cfg['problem']!r}")
    for key in ("N", "T"):
        if key in cfg and key not in sig.parameters:
            raise ConfigError(f"field '{key}': not adjustable for problem {cfg['problem']!r}")
    if "waypoints" in cfg and not isinstance(cfg["waypoints"], list):
        raise ConfigError("field 'waypoints' must be a list of points")


def build_spec(cfg: dict) -> ProblemSpec:
    builder = PROBLEMS[cfg["problem"]]
    kwargs = dict(cfg.get("params", {}))
    for key in ("N", "T"):
        if key in cfg:
            kwargs[key] = cfg[key]
    try:
        spec = builder(**kwargs)
        solver = cfg.get("solver", {})
        if solver:
            spec.config = dataclasses.replace(spec.config, **solver)
        if "scheme" in cfg:
            spec.scheme = cfg["scheme"]
            spec.scheme_params = {}
        if "scheme_params" in cfg:
            spec.scheme_params = dict(spec.scheme_params, **cfg["scheme_params"])
        if "boundary" in cfg:
            b = cfg["boundary"]
            knots = spec.boundary.knots
            if "knots" in b:
                knots = [Knot(int(k[0]), k[1], bool(k[2]) if len(k) > 2 else False) for k in b["knots"]]
            spec.boundary = BoundaryData(b.get("left", spec.boundary.left), b.get("right", spec.boundary.right), knots)
            spec.boundary.validate(spec.N, spec.gamma, spec.dim)
        if "waypoints" in cfg:
            spec.waypoints = [list(map(float, p)) for p in cfg["waypoints"]]
        if "start_N" in cfg:
            spec.start_N = cfg["start_N"]
    except (TypeError, ValueError, VarintError) as exc:
        raise ConfigError(f"invalid problem settings: {exc}") from None
    return spec


def output_dir(cfg: dict, config_path) -> Path:
    out = Path(cfg.get("output_dir", "."))
    if not out.is_absolute():
        out = Path(config_path).resolve().parent / out
    return out


def initial_guess(spec: ProblemSpec, cfg: dict) -> Trajectory:
    n0 = spec.start_N if (spec.config.refinement and spec.start_N) else spec.N
    guess = spec.initial_guess(n0)
    noise = float(cfg.get("guess_noise", 0.0))
    if noise > 0:
        rng = np.random.default_rng(cfg.get("seed", 0))
        boundary = spec.boundary
        if boundary.knots and n0 != spec.N:
            from .problems import scale_knots

            boundary = scale_knots(boundary, spec.N, n0)
        free = boundary.free_mask(guess.N, guess.gamma, guess.dim)
        nodes = guess.nodes + noise * rng.uniform(-1.0, 1.0, guess.nodes.shape) * free
        guess = guess.with_nodes(nodes)
    return guess


# ---------------------------------------------------------------------------
# files
# ---------------------------------------------------------------------------


def state_columns(gamma: int, dim: int) -> list:
    """``q0 .. q{n-1}`` for positions, then ``q{i}_d{a}`` for the a-th derivative."""
    return [f"q{i}" if a == 0 else f"q{i}_d{a}" for a in range(gamma) for i in range(dim)]


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def write_trajectory(path, traj: Trajectory) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["k", "t"] + state_columns(traj.gamma, traj.dim))
        for k in range(traj.N + 1):
            w.writerow([k, _fmt(traj.times[k])] + [_fmt(v) for v in traj.nodes[k]])


def read_trajectory(path, gamma: int, dim: int) -> Trajectory:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ConfigError(f"{path}: empty trajectory file")
    header, body = rows[0], rows[1:]
    expected = ["k", "t"] + state_columns(gamma, dim)
    if header != expected:
        raise ConfigError(f"{path}: columns {header} do not match the problem (expected {expected})")
    try:
        data = np.array([[float(v) for v in r] for r in body])
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    if data.ndim != 2 or data.shape[0] < 2 or not np.array_equal(data[:, 0], np.arange(data.shape[0])):
        raise ConfigError(f"{path}: rows must be numbered 0..N")
    return Trajectory(data[:, 2:], data[:, 1], gamma, dim)


def write_residuals(path, history) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["iteration", "residual"])
        for i, r in enumerate(history):
            w.writerow([i, _fmt(r)])


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return x if math.isfinite(x) else str(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.bool_,)):
        return bool(x)
    return x


def write_json(path, obj) -> None:
    Path(path).write_text(json.dumps(_jsonable(obj), indent=2) + "\n")


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def _diagnose(spec: ProblemSpec, traj: Trajectory) -> dict:
    model = spec.model_factory()(traj.times)
    rep = check_theorem_conditions(model, traj).to_dict()
    mask = spec.boundary.free_mask(traj.N, traj.gamma, traj.dim) if traj.N == spec.N else None
    rep["max_residual"] = max_residual(model, traj, mask)
    return rep


def cmd_run(config_path, quiet=False) -> int:
    cfg = load_config(config_path)
    spec = build_spec(cfg)
    out = output_dir(cfg, config_path)
    guess = initial_guess(spec, cfg)

    def progress(it, res):
        if not quiet and it % 10_000 == 0:
            print(f"iteration {it}: residual {res:.3e}", file=sys.stderr)

    report = spec.solve(guess=guess, progress=progress)
    out.mkdir(parents=True, exist_ok=True)
    write_trajectory(out / "trajectory.csv", report.final)
    write_residuals(out / "residuals.csv", report.residual_history)
    solve_dict = report.to_dict()
    solve_dict.pop("residual_history")  # residuals.csv holds it
    result = {"problem": spec.id, "config": cfg, "solve": solve_dict}
    if spec.F is not None and report.final.gamma == 1:
        h = 1.0 / report.final.N if spec.parameter_step else None
        try:
            result["travel_time"] = travel_time(report.final, spec.F, h)
        except VarintError as exc:
            result["travel_time"] = None
            result["travel_time_error"] = str(exc)
    if report.error is None:
        try:
            result["convergence_report"] = _diagnose(spec, report.final)
        except VarintError as exc:
            result["convergence_report"] = {"error": f"{type(exc).__name__}: {exc}"}
    write_json(out / "report.json", result)
    status = "converged" if report.converged else "not converged"
    final = report.residual_history[-1] if report.residual_history else float("nan")
    print(f"{spec.id}: {status} after {report.iterations} iterations, residual {final:.3e}; wrote {out}")
    if report.error is not None:
        print(f"error: {report.error}", file=sys.stderr)
        return 1
    return 0 if report.converged else 2


def cmd_diag(config_path) -> int:
    cfg = load_config(config_path)
    spec = build_spec(cfg)
    out = output_dir(cfg, config_path)
    path = out / "trajectory.csv"
    if not path.exists():
        raise ConfigError(f"{path} not found; run the solver first")
    traj = read_trajectory(path, spec.gamma, spec.dim)
    if traj.N != spec.N:
        raise ConfigError(f"{path}: trajectory has N={traj.N}, config expects N={spec.N}")
    rep = _diagnose(spec, traj)
    write_json(out / "convergence_report.json", rep)
    print(f"{spec.id}: {rep['guarantee']}, spectral radius {rep['spectral_radius_estimate']:.6g}")
    return 0


def matrices_report(gamma: int, h: float) -> dict:
    ms = build_matrices(gamma, h)
    L, U = lu_factors_C(gamma, h)
    return {
        "gamma": gamma,
        "h": h,
        "A": ms.A, "B": ms.B, "C": ms.C, "D": ms.D, "E": ms.E,
        "L": L, "U": U,
        "det_C": det_C(gamma, h),
        "det_B": det_B(gamma, h),
        "identities": verify_identities(ms),
    }


def cmd_matrices(gamma: int, h: float) -> int:
    print(json.dumps(_jsonable(matrices_report(gamma, h)), indent=2))
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="varint", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("run", help="solve the configured problem")
    p.add_argument("config")
    p.add_argument("--quiet", action="store_true", help="no progress lines")
    p = sub.add_parser("diag", help="convergence diagnostics of a stored trajectory")
    p.add_argument("config")
    p = sub.add_parser("matrices", help="structure matrices for order gamma and step h")
    p.add_argument("--gamma", type=int, required=True)
    p.add_argument("--h", type=float, required=True)
    args = parser.parse_args(argv)
    try:
        if args.command == "run":
            return cmd_run(args.config, args.quiet)
        if args.command == "diag":
            return cmd_diag(args.config)
        return cmd_matrices(args.gamma, args.h)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except (VarintError, ValueError, OSError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
