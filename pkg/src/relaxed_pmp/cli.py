"""Batch front-end: ``relaxed-pmp {solve,synthesize,gap,hull}``.

Every subcommand reads an optional YAML/JSON run config, applies
``--set section.key=value`` overrides, and writes CSV/JSON artifacts to
the output directory.  CSV numbers use 17 significant digits so reruns
are byte-identical.

Exit codes: 0 converged or completed, 2 stalled or out of iterations,
1 error.
"""

from __future__ import annotations

import argparse
import copy
import json
import logging
import sys
from dataclasses import asdict, fields
from pathlib import Path

import numpy as np
import yaml

from .descent import SolverConfig, solve
from .grid_control import RelaxedControl, TimeGrid
from .integrate import forward_relaxed
from .optimality import gap_profile
from .problem import builtin
from .sampling import AtomSet, hull_points, sample_grid, sample_uniform
from .synthesis import InputSchedule, chattering_error, synthesize

log = logging.getLogger("relaxed_pmp")

DEFAULT_PER_AXIS = {
    "toy_abs": [15],
    "constrained_lqr": [9, 9],
    "quadrotor": [5, 5, 5, 5],
    "convex_hull_demo": [101],
}

DEFAULT_CONFIG = {
    "problem": {"name": "toy_abs", "overrides": {}},
    # per_axis null -> builtin default grid
    "atoms": {"mode": "grid", "per_axis": None, "count": 100, "seed": 0},
    "solver": asdict(SolverConfig()),
    # delta null -> 4 * dt
    "synthesis": {"delta": None, "trace_per_interval": 10},
    "gap": {"intervals": 100},
    "hull": {"t": 0.0, "point": None},
    "output_dir": "out",
}


class ConfigError(ValueError):
    pass


def _merge(base, update, path=""):
    for key, value in update.items():
        where = f"{path}{key}"
        if key not in base:
            raise ConfigError(f"unknown config key {where!r}")
        if isinstance(base[key], dict) and key != "overrides":
            if not isinstance(value, dict):
                raise ConfigError(f"config key {where!r} must be a mapping")
            _merge(base[key], value, where + ".")
        else:
            base[key] = value


def _set_dotted(cfg, assignment):
    if "=" not in assignment:
        raise ConfigError(f"--set expects key=value, got {assignment!r}")
    key, raw = assignment.split("=", 1)
    value = yaml.safe_load(raw)
    parts = key.strip().split(".")
    update = value
    for part in reversed(parts):
        update = {part: update}
    if parts[:2] == ["problem", "overrides"]:
        cfg["problem"]["overrides"] = {**cfg["problem"]["overrides"], **update["problem"]["overrides"]}
    else:
        _merge(cfg, update)


def load_config(path=None, sets=(), out=None):
    """Resolve a run config: defaults, then file, then ``--set`` overrides."""
    cfg = copy.deepcopy(DEFAULT_CONFIG)
    if path is not None:
        with open(path) as fh:
            loaded = yaml.safe_load(fh) or {}
        if not isinstance(loaded, dict):
            raise ConfigError("config file must hold a mapping")
        _merge(cfg, loaded)
    for s in sets:
        _set_dotted(cfg, s)
    if out is not None:
        cfg["output_dir"] = str(out)
    if cfg["atoms"]["per_axis"] is None:
        cfg["atoms"]["per_axis"] = DEFAULT_PER_AXIS.get(cfg["problem"]["name"])
    if cfg["atoms"]["mode"] not in ("grid", "uniform"):
        raise ConfigError("atoms.mode must be 'grid' or 'uniform'")
    return cfg


def build_problem(cfg):
    return builtin(cfg["problem"]["name"], cfg["problem"]["overrides"])


def build_atoms(cfg, problem) -> AtomSet:
    a = cfg["atoms"]
    if a["mode"] == "grid":
        return sample_grid(problem.control_box, a["per_axis"])
    return sample_uniform(problem.control_box, int(a["count"]), int(a["seed"]))


def build_solver(cfg) -> SolverConfig:
    known = {f.name for f in fields(SolverConfig)}
    return SolverConfig(**{k: v for k, v in cfg["solver"].items() if k in known})


# ---------------------------------------------------------------------------
# file formats


def _fmt(v):
    return format(float(v), ".17g")


def write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) if not isinstance(v, (int, np.integer)) else str(int(v)) for v in row) + "\n")


def read_csv(path):
    with open(path) as fh:
        header = fh.readline().strip().split(",")
        data = np.loadtxt(fh, delimiter=",", ndmin=2)
    return header, data


def write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    raise TypeError(f"cannot serialize {type(o)}")


def write_atoms(path, atoms: AtomSet):
    m = atoms.dim
    write_csv(path, ["index"] + [f"u{j + 1}" for j in range(m)],
              [[i] + list(u) for i, u in enumerate(atoms.atoms)])


def read_atoms(path) -> AtomSet:
    header, data = read_csv(path)
    if not header or header[0] != "index" or data.shape[1] < 2:
        raise ConfigError(f"malformed atoms file {path}")
    return AtomSet(data[:, 1:])


def write_weights(path, rc: RelaxedControl):
    N = rc.atoms.count
    nodes = rc.grid.nodes
    write_csv(path, ["t"] + [f"w{i + 1}" for i in range(N)],
              [[nodes[k]] + list(row) for k, row in enumerate(rc.weights)])


def read_weights(path, atoms: AtomSet, horizon: float) -> RelaxedControl:
    header, data = read_csv(path)
    if not header or header[0] != "t" or data.shape[1] != atoms.count + 1:
        raise ConfigError(f"malformed weights file {path}: expected t plus {atoms.count} weight columns")
    grid = TimeGrid(horizon, data.shape[0])
    if not np.allclose(data[:, 0], grid.nodes[:-1], rtol=0, atol=1e-9 * horizon):
        raise ConfigError(f"weights file {path} is not on a uniform grid over [0, {horizon}]")
    rc = RelaxedControl(grid, atoms, data[:, 1:])
    if not rc.check_simplex():
        raise ConfigError(f"weights file {path} has rows outside the simplex")
    return rc


def write_schedule(path, schedule: InputSchedule):
    m = schedule.atoms.shape[1]
    rows = [[a, b, i] + list(schedule.atoms[i]) for a, b, i in schedule.segments]
    write_csv(path, ["t_start", "t_end", "atom_index"] + [f"u{j + 1}" for j in range(m)], rows)


def read_schedule(path, horizon: float) -> InputSchedule:
    header, data = read_csv(path)
    if header[:3] != ["t_start", "t_end", "atom_index"] or data.shape[1] < 4:
        raise ConfigError(f"malformed schedule file {path}")
    idx = data[:, 2].astype(int)
    n_atoms = idx.max() + 1
    atoms = np.full((n_atoms, data.shape[1] - 3), np.nan)
    atoms[idx] = data[:, 3:]
    atoms = np.where(np.isnan(atoms), 0.0, atoms)
    try:
        return InputSchedule(data[:, 0], data[:, 1], idx, atoms, horizon)
    except ValueError as exc:
        raise ConfigError(f"malformed schedule file {path}: {exc}") from exc


# ---------------------------------------------------------------------------
# subcommands


def run_solve(cfg):
    out = Path(cfg["output_dir"])
    out.mkdir(parents=True, exist_ok=True)
    summary = {"command": "solve", "config": cfg}
    log_path = out / "log.jsonl"
    try:
        problem = build_problem(cfg)
        atoms = build_atoms(cfg, problem)
        solver_cfg = build_solver(cfg)
        write_atoms(out / "atoms.csv", atoms)
        with open(log_path, "w") as fh:
            def record(rec, rc):
                fh.write(json.dumps(asdict(rec), sort_keys=True) + "\n")
                fh.flush()

            rc, history = solve(problem, atoms, solver_cfg, callback=record)
        traj = forward_relaxed(problem, rc, solver_cfg.substeps)
        nodes = rc.grid.nodes
        write_csv(out / "trajectory.csv", ["t"] + [f"x{j + 1}" for j in range(problem.n)],
                  [[nodes[k]] + list(x) for k, x in enumerate(traj.states)])
        write_weights(out / "weights.csv", rc)
        last = history.records[-1]
        summary.update(
            reason=history.reason,
            iterations=len(history.records) - 1,
            final_cost=last.cost,
            final_theta=last.theta_pure,
            final_state=traj.final,
        )
    except Exception as exc:  # recorded, then re-raised for the exit code
        summary.update(reason="error", error=f"{type(exc).__name__}: {exc}")
        write_json(out / "summary.json", summary)
        raise
    write_json(out / "summary.json", summary)
    return summary


def _chatter_levels(rc, delta):
    levels = []
    for div in (1, 2, 4):
        d = delta / div
        r = d / rc.grid.dt
        ok = abs(r - round(r)) <= 1e-9 * r and round(r) >= 1 and rc.grid.intervals % int(round(r)) == 0
        levels.append((d, ok))
    return levels


def run_synthesize(cfg, weights_path, atoms_path=None):
    out = Path(cfg["output_dir"])
    out.mkdir(parents=True, exist_ok=True)
    problem = build_problem(cfg)
    weights_path = Path(weights_path)
    atoms = read_atoms(atoms_path or weights_path.with_name("atoms.csv"))
    if atoms.dim != problem.m:
        raise ConfigError(f"atoms have dimension {atoms.dim}, problem expects {problem.m}")
    rc = read_weights(weights_path, atoms, problem.horizon)
    delta = cfg["synthesis"]["delta"]
    delta = 4 * rc.grid.dt if delta is None else float(delta)
    schedule = synthesize(rc, delta)
    write_schedule(out / "schedule.csv", schedule)

    per = int(cfg["synthesis"]["trace_per_interval"])
    times = np.linspace(0.0, problem.horizon, rc.grid.intervals * per + 1)
    trace = schedule.sample(times)
    write_csv(out / "input_trace.csv", ["t"] + [f"u{j + 1}" for j in range(problem.m)],
              [[t] + list(u) for t, u in zip(times, trace)])

    deltas, errors = [], []
    for d, ok in _chatter_levels(rc, delta):
        deltas.append(d)
        errors.append(chattering_error(problem, rc, synthesize(rc, d)) if ok else None)
    valid = [e for e in errors if e is not None]
    chatter = {
        "delta": deltas,
        "error": errors,
        "monotone": all(b <= 1.1 * a for a, b in zip(valid, valid[1:])),
    }
    write_json(out / "chatter.json", chatter)
    return {"schedule": schedule, "chatter": chatter}


def run_gap(cfg, schedule_path=None, constant=None):
    out = Path(cfg["output_dir"])
    out.mkdir(parents=True, exist_ok=True)
    problem = build_problem(cfg)
    atoms = build_atoms(cfg, problem)
    if constant is not None:
        schedule = InputSchedule.constant(constant, problem.horizon)
    elif schedule_path is not None:
        schedule = read_schedule(schedule_path, problem.horizon)
    else:
        raise ConfigError("gap needs --schedule or --constant")
    prof = gap_profile(problem, schedule, atoms, int(cfg["gap"]["intervals"]))
    write_csv(out / "gap_profile.csv", ["t", "gap", "best_atom"] + [f"u{j + 1}" for j in range(problem.m)],
              [[t, g, int(b)] + list(atoms.atoms[b]) for t, g, b in zip(prof.times, prof.gaps, prof.best_atom)])
    worst = int(np.argmin(prof.gaps))
    report = {
        "gap": prof.total,
        "intervals": len(prof.gaps),
        "worst_time": prof.times[worst],
        "worst_gap": prof.gaps[worst],
        "worst_atom": atoms.atoms[prof.best_atom[worst]],
    }
    write_json(out / "gap.json", report)
    return report


def run_hull(cfg, point=None, t=None):
    out = Path(cfg["output_dir"])
    out.mkdir(parents=True, exist_ok=True)
    problem = build_problem(cfg)
    atoms = build_atoms(cfg, problem)
    t = float(cfg["hull"]["t"] if t is None else t)
    point = cfg["hull"]["point"] if point is None else point
    x = problem.initial_state if point is None else np.asarray(point, dtype=float)
    if x.size != problem.n:
        raise ConfigError(f"point has {x.size} entries, problem has {problem.n} states")
    points, hull = hull_points(problem, t, x, atoms)
    if hull is None:
        log.warning("hull indices are only computed for two-dimensional states; writing points only")
    on_hull = set(hull or [])
    rank = {i: r for r, i in enumerate(hull or [])}
    header = ["t"] + [f"x{j + 1}" for j in range(problem.n)] + ["index"] + \
        [f"f{j + 1}" for j in range(problem.n)] + ["hull", "hull_order"]
    rows = [[t] + list(x) + [i] + list(points[i]) + [int(i in on_hull), rank.get(i, -1)]
            for i in range(len(points))]
    write_csv(out / "hull.csv", header, rows)
    return points, hull


def _floats(text):
    return [float(v) for v in text.split(",")]


def main(argv=None):
    parser = argparse.ArgumentParser(prog="relaxed-pmp", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="YAML or JSON run config")
        p.add_argument("--out", help="output directory (overrides output_dir)")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override a config entry, e.g. solver.eps_tol=1e-4")

    common(sub.add_parser("solve", help="run the relaxed descent loop"))
    p = sub.add_parser("synthesize", help="PWM input from solved weights")
    common(p)
    p.add_argument("--weights", required=True)
    p.add_argument("--atoms", help="atoms.csv (default: next to the weights file)")
    p = sub.add_parser("gap", help="Pontryagin gap of a deterministic input")
    common(p)
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--schedule")
    g.add_argument("--constant", type=_floats, help="comma-separated constant input")
    p = sub.add_parser("hull", help="sampled vector-field set and its convex hull")
    common(p)
    p.add_argument("--point", type=_floats, help="comma-separated state")
    p.add_argument("--t", type=float)

    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config, args.set, args.out)
        if args.command == "solve":
            summary = run_solve(cfg)
            print(f"{summary['reason']}: cost {summary['final_cost']:.10g}, "
                  f"theta {summary['final_theta']:.3e}, {summary['iterations']} iterations")
            return 0 if summary["reason"] == "converged" else 2
        if args.command == "synthesize":
            res = run_synthesize(cfg, args.weights, args.atoms)
            print(f"{len(res['schedule'].segments)} segments; chattering errors {res['chatter']['error']}")
        elif args.command == "gap":
            report = run_gap(cfg, args.schedule, args.constant)
            print(f"gap {report['gap']:.10g} (worst {report['worst_gap']:.4g} at t={report['worst_time']:.4g})")
        elif args.command == "hull":
            points, hull = run_hull(cfg, args.point, args.t)
            print(f"{len(points)} points, {len(hull) if hull is not None else 'no'} hull vertices")
        return 0
    except Exception as exc:
        log.error("%s: %s", type(exc).__name__, exc)
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
