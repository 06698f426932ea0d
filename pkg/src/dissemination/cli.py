"""Command-line front end.

Every command reads a scenario file and writes deterministic CSV/JSON files
into ``--out``.  Exit codes: 0 success, 1 runtime failure, 2 input error.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import moments, numerics, oracle, simulator
from .model import validate
from .moments import agent_pairs
from .scenario import ScenarioError, build_spec, load_scenario, preset_scenario, spec_to_dict

COMMANDS = ("validate", "moments", "second-moments", "stationary", "stability", "simulate",
            "oracle", "storage-optimize", "preset-emit")

DEFAULT_T_END = 10.0
DEFAULT_STEP = 1e-2
DEFAULT_RUNS = 1000


class InputError(Exception):
    pass


def fmt(x) -> str:
    """17 significant digits: round-trips doubles exactly."""
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    x = float(x)
    if math.isnan(x):
        return "NaN"
    if math.isinf(x):
        return "Infinity" if x > 0 else "-Infinity"
    return format(x, ".17g")


def dump_json(obj, indent: int = 0) -> str:
    pad, inner = "  " * indent, "  " * (indent + 1)
    if obj is None:
        return "null"
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{inner}{json.dumps(str(k))}: {dump_json(v, indent + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + pad + "}"
    if isinstance(obj, (list, tuple, np.ndarray)):
        seq = list(obj)
        if all(not isinstance(v, (dict, list, tuple, np.ndarray)) for v in seq):
            return "[" + ", ".join(dump_json(v) for v in seq) + "]"
        return "[\n" + ",\n".join(inner + dump_json(v, indent + 1) for v in seq) + "\n" + pad + "]"
    return fmt(obj)


def write_csv(path: Path, header, rows) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(fmt(v) for v in row) + "\n")


def write_json(path: Path, obj) -> None:
    path.write_text(dump_json(obj) + "\n", encoding="utf-8")


def _run_params(scenario, args):
    run = scenario.run
    t_end = args.t_end if args.t_end is not None else run.get("t_end", DEFAULT_T_END)
    step = args.step if args.step is not None else run.get("step", DEFAULT_STEP)
    if step <= 0 or t_end < 0:
        raise InputError("need step > 0 and t_end >= 0")
    return float(t_end), float(step), int(run.get("stride", 1))


def _sample_times(scenario, t_end):
    times = scenario.run.get("sample_times")
    if times is None:
        return np.linspace(0.0, t_end, 11)
    times = np.asarray(times, dtype=float)
    if np.any(np.diff(times) < 0) or np.any(times < 0) or np.any(times > t_end):
        raise InputError("run.sample_times must be sorted within [0, t_end]")
    return times


def _state_columns(prefix, n, d):
    return [f"{prefix}_{i}_{k}" for i in range(n) for k in range(d)]


def _pair_columns(prefix, n, d):
    return [f"{prefix}_{i}_{j}_{k}" for i, j in agent_pairs(n) for k in range(d)]


def cmd_validate(spec, scenario, args, out):
    problems = validate(spec)
    for p in problems:
        print(f"invalid: {p}", file=sys.stderr)
    return 2 if problems else 0


def cmd_moments(spec, scenario, args, out):
    t_end, step, stride = _run_params(scenario, args)
    path = moments.transient_means(spec, t_end, step, stride)
    n, d = spec.n_agents, spec.d
    header = ["t"] + _state_columns("m", n, d) + [f"M_{i}" for i in range(n)]
    agg = path.agent_means()
    rows = (np.concatenate([[t], m, a]) for t, m, a in zip(path.times, path.m, agg))
    write_csv(out / "means.csv", header, rows)
    return 0


def cmd_second_moments(spec, scenario, args, out):
    t_end, step, stride = _run_params(scenario, args)
    path = moments.transient_second_moments(spec, t_end, step, stride)
    n, d = spec.n_agents, spec.d
    pairs = agent_pairs(n)
    off = pairs[pairs[:, 0] != pairs[:, 1]]
    header = (["t"] + _pair_columns("v", n, d) + [f"var_{i}" for i in range(n)]
              + [f"cov_{i}_{j}" for i, j in off])
    cov = path.covariances()
    rows = (np.concatenate([[t], v, np.diag(c), c[off[:, 0], off[:, 1]]])
            for t, v, c in zip(path.times, path.v, cov))
    write_csv(out / "seconds.csv", header, rows)
    return 0


def cmd_stationary(spec, scenario, args, out):
    res = moments.stationary_means(spec)
    obj = {"omega": res.omega, "ergodic_sufficient": bool(res.ergodic_sufficient),
           "pi": res.pi.tolist(),
           "means": None if res.means is None else res.means.tolist(),
           "agent_means": None if res.means is None else res.agent_means().tolist()}
    write_json(out / "stationary.json", obj)
    return 0


def cmd_stability(spec, scenario, args, out):
    st = moments.stability(spec)
    write_json(out / "stationary.json", {"omega": st.omega, "ergodic_sufficient": bool(st.ergodic_sufficient)})
    return 0


def cmd_simulate(spec, scenario, args, out):
    t_end, _, _ = _run_params(scenario, args)
    runs = args.runs if args.runs is not None else scenario.simulate.get("runs", DEFAULT_RUNS)
    seed = args.seed if args.seed is not None else scenario.simulate.get("seed", 0)
    if runs < 1:
        raise InputError("runs must be positive")
    grid = _sample_times(scenario, t_end)
    stats = simulator.simulate_ensemble(spec, t_end, runs, seed, grid)
    mean, se, var = stats.mean(), stats.stderr(), stats.variance()
    rows = ([t, i, mean[s, i], se[s, i], var[s, i]]
            for s, t in enumerate(grid) for i in range(spec.n_agents))
    write_csv(out / "ensemble.csv", ["t", "agent", "mean", "stderr", "var"], rows)
    return 0


def cmd_oracle(spec, scenario, args, out):
    t_end, step, _ = _run_params(scenario, args)
    cfg = scenario.oracle
    if "cap" not in cfg:
        raise InputError("oracle.cap is required")
    grid = _sample_times(scenario, t_end)
    evo = oracle.evolve(spec, cfg["cap"], t_end, step, grid, cfg.get("budget", oracle.DEFAULT_BUDGET))
    n, d = spec.n_agents, spec.d
    header = ["t", "overflow"] + _state_columns("m", n, d) + _pair_columns("v", n, d)
    rows = []
    for t, dist in zip(evo.times, evo.distributions):
        m, v = oracle.oracle_moments(dist)
        rows.append(np.concatenate([[t, dist.overflow], m, v]))
    write_csv(out / "oracle.csv", header, rows)
    if any(dist.overflow_flag for dist in evo.distributions):
        print("warning: overflow mass exceeds threshold; enlarge oracle.cap", file=sys.stderr)
    return 0


def cmd_storage_optimize(spec, scenario, args, out):
    from .applications.storage import optimize_backup_rate

    model = scenario.model
    if model["type"] != "preset" or model["name"] != "storage":
        raise InputError("storage-optimize needs the storage preset")
    sc, _ = preset_scenario(model)
    try:
        opt = optimize_backup_rate(sc)
    except ValueError as exc:
        raise InputError(str(exc)) from exc
    write_json(out / "optimum.json", {"gamma_star": opt.gamma_star, "F": opt.cost, "boundary": bool(opt.boundary)})
    return 0


def cmd_preset_emit(spec, scenario, args, out):
    write_json(out / "spec.json", {"model": spec_to_dict(spec)})
    return 0


HANDLERS = {
    "validate": cmd_validate,
    "moments": cmd_moments,
    "second-moments": cmd_second_moments,
    "stationary": cmd_stationary,
    "stability": cmd_stability,
    "simulate": cmd_simulate,
    "oracle": cmd_oracle,
    "storage-optimize": cmd_storage_optimize,
    "preset-emit": cmd_preset_emit,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dissemination", description=__doc__.splitlines()[0])
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--scenario", required=True, help="scenario JSON file")
    parser.add_argument("--out", default=".", help="output directory (created if missing)")
    parser.add_argument("--seed", type=int, help="master seed, overrides simulate.seed")
    parser.add_argument("--runs", type=int, help="ensemble size, overrides simulate.runs")
    parser.add_argument("--step", type=float, help="integration step, overrides run.step")
    parser.add_argument("--t-end", dest="t_end", type=float, help="horizon, overrides run.t_end")
    return parser


def run_command(command: str, scenario_path, out_dir, **overrides) -> int:
    """Programmatic entry point mirroring the command line."""
    argv = [command, "--scenario", str(scenario_path), "--out", str(out_dir)]
    for key, val in overrides.items():
        if val is not None:
            argv += [f"--{key.replace('_', '-')}", str(val)]
    return main(argv)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code == 0 else 2
    if args.seed is not None and not 0 <= args.seed < 2 ** 64:
        print("error: --seed must be an unsigned 64-bit integer", file=sys.stderr)
        return 2
    try:
        scenario = load_scenario(args.scenario)
    except ScenarioError as exc:
        for pointer, msg in exc.errors:
            print(f"error: {pointer or '/'}: {msg}", file=sys.stderr)
        return 2
    except (OSError, json.JSONDecodeError) as exc:
        print(f"error: cannot read scenario: {exc}", file=sys.stderr)
        return 2
    out = Path(args.out)
    try:
        spec = build_spec(scenario)
        if args.command != "validate":
            problems = validate(spec)
            if problems:
                for p in problems:
                    print(f"invalid: {p}", file=sys.stderr)
                return 2
        out.mkdir(parents=True, exist_ok=True)
        return HANDLERS[args.command](spec, scenario, args, out)
    except (np.linalg.LinAlgError, ArithmeticError, numerics.ConvergenceError, MemoryError) as exc:
        print(f"failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    except (InputError, ScenarioError, ValueError, TypeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - report any numerical failure as exit 1
        print(f"failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
