"""Configuration-driven command line front end.

One JSON config plus flag overrides (flags win) drives every subcommand;
outputs are written atomically into the chosen directory and a single
machine-readable JSON summary goes to stdout. Everything is deterministic:
rerunning a command with the same config produces byte-identical files.
Exit codes: 0 success, 2 configuration error, 3 solver failure.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import hashlib
import json
import math
import os
import sys
import tempfile
from pathlib import Path

import numpy as np

from . import __version__, dynamics, energy, mesa, spectral, stationary, transition
from . import bifurcation as bif
from . import potential as pot
from .errors import AggDiffError, ConfigError, NoTransition
from .spectral import Grid

SUBCOMMANDS = (
    "classify-potential",
    "bifurcations",
    "steady",
    "evolve",
    "sweep",
    "predict",
    "mesa",
)

_TOP_KEYS = {
    "potential",
    "m",
    "beta",
    "n",
    "k_max",
    "solver",
    "evolution",
    "init_amplitude",
    "m_values",
    "out",
    "mode",
}
_POTENTIAL_KEYS = {"L", "d", "modes", "named"}
_SOLVER_KEYS = {"damping", "max_iter", "tol", "bisect_tol", "kick"}
_EVOLUTION_KEYS = {"cfl", "t_max", "steady_tol", "record_every", "snapshot_every"}
_BETA_KEYS = {"min", "max", "steps"}


def _fmt(value) -> str:
    if isinstance(value, float):
        if math.isnan(value):
            return '"nan"'
        if math.isinf(value):
            return '"inf"' if value > 0 else '"-inf"'
        return format(value, ".17g")
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if value is None:
        return "null"
    if isinstance(value, str):
        return json.dumps(value)
    if isinstance(value, (list, tuple)):
        return "[" + ",".join(_fmt(v) for v in value) + "]"
    if isinstance(value, dict):
        items = sorted(value.items(), key=lambda kv: str(kv[0]))
        return "{" + ",".join(json.dumps(str(k)) + ":" + _fmt(v) for k, v in items) + "}"
    if isinstance(value, np.floating):
        return _fmt(float(value))
    raise TypeError(f"cannot serialise {type(value)!r}")


def dumps(obj) -> str:
    """Deterministic JSON with 17-significant-digit floats."""
    return _fmt(obj)


def atomic_write(path: Path, text: str):
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _check_keys(data: dict, allowed: set, prefix: str):
    for key in data:
        if key not in allowed:
            raise ConfigError(f"{prefix}{key}", "unknown key")


def _require(cond: bool, key: str, message: str):
    if not cond:
        raise ConfigError(key, message)


def load_config(path: str | None) -> dict:
    if path is None:
        return {}
    try:
        with open(path) as fh:
            data = json.load(fh)
    except FileNotFoundError:
        raise ConfigError("config", f"file not found: {path}")
    except json.JSONDecodeError as exc:
        raise ConfigError("config", f"invalid JSON: {exc}")
    if not isinstance(data, dict):
        raise ConfigError("config", "top level must be an object")
    return data


def merge_flags(config: dict, args: argparse.Namespace) -> dict:
    merged = dict(config)
    if args.m is not None:
        merged["m"] = args.m
    if args.beta is not None:
        merged["beta"] = args.beta
    if args.beta_min is not None or args.beta_max is not None or args.beta_steps is not None:
        base = merged.get("beta") if isinstance(merged.get("beta"), dict) else {}
        beta = dict(base)
        if args.beta_min is not None:
            beta["min"] = args.beta_min
        if args.beta_max is not None:
            beta["max"] = args.beta_max
        if args.beta_steps is not None:
            beta["steps"] = args.beta_steps
        merged["beta"] = beta
    if args.n is not None:
        merged["n"] = args.n
    if args.out is not None:
        merged["out"] = args.out
    return merged


def validate(config: dict, command: str):
    _check_keys(config, _TOP_KEYS, "")
    _require("potential" in config, "potential", "required")
    p = config["potential"]
    _require(isinstance(p, dict), "potential", "must be an object")
    _check_keys(p, _POTENTIAL_KEYS, "potential.")
    if "named" in p:
        _require(p["named"] == "neg_cos", "potential.named", "unknown named potential")
        _require("L" in p, "potential.L", "required")
    else:
        for key in ("L", "d", "modes"):
            _require(key in p, f"potential.{key}", "required")
        _require(isinstance(p["modes"], list), "potential.modes", "must be a list")
        for i, row in enumerate(p["modes"]):
            _require(
                isinstance(row, list) and len(row) == int(p["d"]) + 1,
                f"potential.modes[{i}]",
                "must be [k..., coeff]",
            )
    if "n" in config:
        n = config["n"]
        _require(
            isinstance(n, int) and n >= 8 and (n & (n - 1)) == 0,
            "n",
            "must be a power of two >= 8",
        )
    if "beta" in config:
        b = config["beta"]
        if isinstance(b, dict):
            _check_keys(b, _BETA_KEYS, "beta.")
            for key in _BETA_KEYS:
                _require(key in b, f"beta.{key}", "required in a beta range")
            _require(int(b["steps"]) >= 2, "beta.steps", "must be >= 2")
        else:
            _require(isinstance(b, (int, float)) and b > 0, "beta", "must be positive")
    if "m" in config:
        mval = config["m"]
        if isinstance(mval, list):
            _require(
                all(isinstance(v, (int, float)) for v in mval) and len(mval) > 0,
                "m",
                "must be a number or nonempty list",
            )
        else:
            _require(isinstance(mval, (int, float)), "m", "must be a number or list")
    if "solver" in config:
        _require(isinstance(config["solver"], dict), "solver", "must be an object")
        _check_keys(config["solver"], _SOLVER_KEYS, "solver.")
    if "evolution" in config:
        _require(isinstance(config["evolution"], dict), "evolution", "must be an object")
        _check_keys(config["evolution"], _EVOLUTION_KEYS, "evolution.")
    if command in ("steady", "evolve"):
        _require("m" in config, "m", "required")
        _require(
            "beta" in config and not isinstance(config["beta"], dict),
            "beta",
            "a single value is required",
        )
    if command in ("sweep", "predict", "bifurcations"):
        _require("m" in config, "m", "required")
    if command == "mesa":
        _require("beta" in config and not isinstance(config["beta"], dict), "beta", "required")
        _require(
            "m_values" in config and isinstance(config["m_values"], list),
            "m_values",
            "required list",
        )


def config_hash(config: dict) -> str:
    canonical = json.dumps(config, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode()).hexdigest()


def build_potential(config: dict) -> pot.Potential:
    return pot.Potential.from_dict(config["potential"])


def build_grid(config: dict, W: pot.Potential) -> Grid:
    return Grid(d=W.d, L=W.L, n=int(config.get("n", 256)))


def build_solver_config(config: dict) -> stationary.FixedPointConfig:
    return stationary.FixedPointConfig(**config.get("solver", {}))


def build_evolution_config(config: dict) -> dynamics.EvolutionConfig:
    return dynamics.EvolutionConfig(**config.get("evolution", {}))


def beta_values(config: dict) -> np.ndarray:
    b = config["beta"]
    if isinstance(b, dict):
        return np.linspace(float(b["min"]), float(b["max"]), int(b["steps"]))
    return np.asarray([float(b)])


def m_values(config: dict) -> list[float]:
    mval = config.get("m", 2.0)
    return [float(v) for v in mval] if isinstance(mval, list) else [float(mval)]


def _stamp(payload: dict, chash: str) -> dict:
    return {"config_hash": chash, "version": __version__, **payload}


def _perturbed_flat(grid: Grid, W: pot.Potential, amplitude: float) -> spectral.Field:
    flat = spectral.flat_state(grid)
    return stationary.kicked(flat, W, amplitude)


def cmd_classify_potential(config: dict, out: Path, chash: str) -> dict:
    W = build_potential(config)
    stab = pot.h_stability(W)
    k_max = int(config.get("k_max", 64))
    result: dict = {"h_stable": stab.stable}
    if stab.stable:
        result["witness"] = None
    else:
        report = pot.dominant_mode(W, k_max)
        ds = pot.find_delta_star(W, k_max)
        result.update(
            {
                "witness": list(stab.witness),
                "k_sharp": list(report.k_sharp),
                "ratio": report.ratio,
                "unique": report.unique,
                "beta_sharp_for_m": {
                    format(m, "g"): bif.beta_sharp(W, m, k_max) for m in m_values(config)
                },
                "delta_star": None if ds is None else ds.delta,
                "triple": None if ds is None else [list(k) for k in ds.triple],
            }
        )
    payload = _stamp({"classification": result}, chash)
    atomic_write(out / "classify.json", dumps(payload) + "\n")
    return {"outputs": {"classify": str(out / "classify.json")}, "result": result}


def cmd_bifurcations(config: dict, out: Path, chash: str) -> dict:
    W = build_potential(config)
    k_max = int(config.get("k_max", 64))
    per_m = {}
    for m in m_values(config):
        points = bif.enumerate_bifurcations(W, m, k_max)
        per_m[format(m, "g")] = [
            {
                "k_star": list(p.k_star),
                "beta_star": p.beta_star,
                "curvature": p.curvature,
                "branch_class": p.branch_class.value,
                "conditions_ok": p.conditions_ok,
            }
            for p in points
        ]
    payload = _stamp({"bifurcations": per_m}, chash)
    atomic_write(out / "bifurcations.json", dumps(payload) + "\n")
    return {"outputs": {"bifurcations": str(out / "bifurcations.json")}, "result": per_m}


def cmd_steady(config: dict, out: Path, chash: str) -> dict:
    W = build_potential(config)
    grid = build_grid(config, W)
    solver = build_solver_config(config)
    m = m_values(config)[0]
    beta = float(beta_values(config)[0])
    init = _perturbed_flat(grid, W, float(config.get("init_amplitude", solver.kick)))
    res = stationary.solve(W, beta, m, init, solver)
    breakdown = energy.free_energy(res.state, W, beta, m)
    state_payload = _stamp({"values": [float(v) for v in res.state.values]}, chash)
    atomic_write(out / "steady_state.json", dumps(state_payload) + "\n")
    result = {
        "beta": beta,
        "m": m,
        "residual": res.residual,
        "iterations": res.iterations,
        "free_energy": breakdown.total,
        "sup_norm": res.state.max_value,
        "mass": res.state.mass,
    }
    return {"outputs": {"state": str(out / "steady_state.json")}, "result": result}


def cmd_evolve(config: dict, out: Path, chash: str) -> dict:
    W = build_potential(config)
    grid = build_grid(config, W)
    evo = build_evolution_config(config)
    m = m_values(config)[0]
    beta = float(beta_values(config)[0])
    init = _perturbed_flat(grid, W, float(config.get("init_amplitude", 1e-2)))
    traj = dynamics.Evolver(W, beta, m, grid, evo).evolve(init)
    atomic_write(out / "trajectory.csv", dynamics.trajectory_csv(traj))
    final_payload = _stamp({"values": [float(v) for v in traj.final.values]}, chash)
    atomic_write(out / "final_state.json", dumps(final_payload) + "\n")
    result = {
        "beta": beta,
        "m": m,
        "steps": traj.steps,
        "steady": traj.steady,
        "final_time": float(traj.times[-1]),
        "final_energy": float(traj.energies[-1]),
        "energy_violation_max": traj.energy_violation_max,
        "dissipation_ok": traj.dissipation_ok,
    }
    return {
        "outputs": {
            "trajectory": str(out / "trajectory.csv"),
            "final_state": str(out / "final_state.json"),
        },
        "result": result,
    }


def _sweep_one(W, m, grid, solver, beta_grid, k_max):
    return m, transition.analyze_transition(W, m, grid, beta_grid, solver, k_max)


def cmd_sweep(config: dict, out: Path, chash: str, jobs: int) -> dict:
    W = build_potential(config)
    grid = build_grid(config, W)
    solver = build_solver_config(config)
    k_max = int(config.get("k_max", 64))
    beta_grid = beta_values(config) if "beta" in config else None
    ms = m_values(config)
    reports: dict[float, transition.TransitionReport] = {}
    if jobs > 1 and len(ms) > 1:
        with concurrent.futures.ThreadPoolExecutor(max_workers=jobs) as pool:
            futures = [pool.submit(_sweep_one, W, m, grid, solver, beta_grid, k_max) for m in ms]
            for fut in futures:
                m, report = fut.result()
                reports[m] = report
    else:
        for m in ms:
            reports[m] = _sweep_one(W, m, grid, solver, beta_grid, k_max)[1]
    outputs = {}
    results = {}
    for m in ms:
        report = reports[m]
        tag = format(m, "g")
        grid_points = (
            beta_grid
            if beta_grid is not None
            else np.linspace(0.8 * report.beta_sharp, 1.2 * report.beta_sharp, 41)
        )
        records, _ = transition.sweep(W, m, grid_points, grid, solver)
        csv_path = out / f"branch_m{tag}.csv"
        atomic_write(csv_path, transition.records_csv(records))
        report_dict = {
            "beta_sharp": report.beta_sharp,
            "beta_c_bracket": None
            if report.beta_c is None
            else [report.beta_c.lo, report.beta_c.hi],
            "kind": report.kind.value,
            "jump": report.jump,
            "amplitude_exponent": report.amplitude_exponent,
            "hysteresis": report.hysteresis,
            "prediction": {
                "kind": report.prediction.kind.value,
                "rule": report.prediction.rule,
                "anchor": report.prediction.anchor,
                "strength": report.prediction.strength,
            },
            "consistent_with_prediction": report.consistent_with_prediction,
        }
        json_path = out / f"report_m{tag}.json"
        atomic_write(json_path, dumps(_stamp(report_dict, chash)) + "\n")
        outputs[f"branch_m{tag}"] = str(csv_path)
        outputs[f"report_m{tag}"] = str(json_path)
        results[tag] = report_dict
    return {"outputs": outputs, "result": results}


def cmd_predict(config: dict, out: Path, chash: str) -> dict:
    W = build_potential(config)
    k_max = int(config.get("k_max", 64))
    per_m = {}
    for m in m_values(config):
        p = transition.predict(W, m, k_max)
        per_m[format(m, "g")] = {
            "kind": p.kind.value,
            "rule": p.rule,
            "anchor": p.anchor,
            "strength": p.strength,
            "beta_sharp": p.beta_sharp,
            "exists": p.exists,
            "at_beta_sharp": p.at_beta_sharp,
            "delta_star": p.delta_star,
        }
    payload = _stamp({"predictions": per_m}, chash)
    atomic_write(out / "predict.json", dumps(payload) + "\n")
    return {"outputs": {"predict": str(out / "predict.json")}, "result": per_m}


def cmd_mesa(config: dict, out: Path, chash: str) -> dict:
    W = build_potential(config)
    grid = build_grid(config, W)
    solver = build_solver_config(config)
    beta = float(beta_values(config)[0])
    result = mesa.mesa_sweep(W, beta, config["m_values"], grid, solver)
    rows = [
        {
            "m": r.m,
            "sup_norm": r.sup_norm,
            "free_energy": r.free_energy,
            "plateau_fraction": r.plateau_fraction,
            "converged": r.converged,
        }
        for r in result.rows
    ]
    report = {
        "case": result.case.value,
        "f_inf": result.f_inf,
        "rows": rows,
        "sup_trend_ok": result.sup_trend_ok,
        "plateau_stable": result.plateau_stable,
        "limit_negative": result.limit_negative,
        "complete": result.complete,
    }
    atomic_write(out / "mesa.json", dumps(_stamp(report, chash)) + "\n")
    outputs = {"mesa": str(out / "mesa.json")}
    if result.minimiser is not None:
        lines = ["x,rho"]
        for x, v in zip(grid.axis(), result.minimiser.values):
            lines.append(f"{format(x, '.17g')},{format(v, '.17g')}")
        atomic_write(out / "mesa_profile.csv", "\n".join(lines) + "\n")
        outputs["profile"] = str(out / "mesa_profile.csv")
    return {"outputs": outputs, "result": report}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="aggdiff",
        description="Numerical laboratory for aggregation-diffusion equations on the torus",
    )
    parser.add_argument("command", choices=SUBCOMMANDS)
    parser.add_argument("--config", default=None, help="path to a JSON config file")
    parser.add_argument("--out", default=None, help="output directory (default '.')")
    parser.add_argument("--jobs", type=int, default=1, help="parallel sweep workers")
    parser.add_argument("--m", type=float, default=None)
    parser.add_argument("--beta", type=float, default=None)
    parser.add_argument("--beta-min", type=float, default=None)
    parser.add_argument("--beta-max", type=float, default=None)
    parser.add_argument("--beta-steps", type=int, default=None)
    parser.add_argument("--n", type=int, default=None)
    return parser


def run(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = merge_flags(load_config(args.config), args)
        validate(config, args.command)
    except ConfigError as exc:
        print(f"configuration error at {exc.key}: {exc}", file=sys.stderr)
        return 2
    out = Path(config.get("out", "."))
    chash = config_hash(config)
    try:
        if args.command == "classify-potential":
            summary = cmd_classify_potential(config, out, chash)
        elif args.command == "bifurcations":
            summary = cmd_bifurcations(config, out, chash)
        elif args.command == "steady":
            summary = cmd_steady(config, out, chash)
        elif args.command == "evolve":
            summary = cmd_evolve(config, out, chash)
        elif args.command == "sweep":
            summary = cmd_sweep(config, out, chash, max(1, args.jobs))
        elif args.command == "predict":
            summary = cmd_predict(config, out, chash)
        else:
            summary = cmd_mesa(config, out, chash)
    except ConfigError as exc:
        print(f"configuration error at {exc.key}: {exc}", file=sys.stderr)
        return 2
    except NoTransition as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return 3
    except AggDiffError as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return 3
    print(
        dumps(
            {
                "command": args.command,
                "config_hash": chash,
                "version": __version__,
                **summary,
            }
        )
    )
    return 0


def main():  # pragma: no cover
    sys.exit(run())
