"""Command-line entry point.

    mvvar cases    --preset table1
    mvvar solve    --preset table1 --t 0 --x 1
    mvvar surface  --preset table2 --grid 101x101 --format csv --out surface.csv
    mvvar simulate --preset table1 --paths 100000 --seed 7
    mvvar verify   --preset table1 --suite fast
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import math
import sys

import numpy as np

from . import __version__
from .checks import verify_command
from .constrained import ConstrainedPolicy, optimal_f_constrained
from .errors import ConfigError, InfeasibleProblemError, ParameterError, SimulationError
from .market_model import ConstantPolicy, simulate_paths
from .scenario import PRESETS, export_surface, load_config, run_scenario, surface_csv, surface_json, validate_config
from .unconstrained import Mode, UnconstrainedValue
from .var_risk import feasible_set


def _json_default(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"not JSON serialisable: {type(obj).__name__}")


def _clean(obj):
    # JSON has no infinities
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    return obj


def _dump(data) -> str:
    return json.dumps(_clean(data), indent=2, sort_keys=True, default=_json_default) + "\n"


def _emit(text: str, out: str | None):
    if out:
        with open(out, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _grid_arg(text: str) -> tuple[int, int]:
    try:
        nt, nx = (int(v) for v in text.lower().split("x"))
    except ValueError:
        raise argparse.ArgumentTypeError("expected <nt>x<nx>, e.g. 101x101") from None
    return nt, nx


def _seed_arg(text: str) -> int:
    v = int(text)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def _config(args):
    if args.config:
        cfg = load_config(args.config)
    else:
        cfg = load_config(args.preset or "table1")
    sim = cfg.simulation
    if args.seed is not None:
        sim = dataclasses.replace(sim, master_seed=args.seed)
    if args.paths is not None:
        sim = dataclasses.replace(sim, n_paths=args.paths)
    changes = {"simulation": sim}
    if args.mode:
        changes["mode"] = Mode(args.mode)
    if args.grid:
        changes["grid"] = dataclasses.replace(cfg.grid, nt=args.grid[0], nx=args.grid[1])
    if args.format:
        changes["output"] = dataclasses.replace(cfg.output, format=args.format)
    return validate_config(cfg.replace(**changes), "command line")


def cmd_cases(cfg, args) -> int:
    summary = run_scenario(cfg.replace(grid=dataclasses.replace(cfg.grid, nt=2, nx=2))).summary
    keys = ("scenario", "case", "case_number", "N", "M", "Delta", "N2sigma2_minus_mu2", "conditions",
            "feasible", "lower_bound", "upper_bound", "f1", "f2", "printed_N_M", "notice")
    _emit(_dump({k: summary[k] for k in keys if k in summary}), args.out)
    return 0


def cmd_solve(cfg, args) -> int:
    t = 0.0 if args.t is None else args.t
    x = cfg.preference.x0 if args.x is None else args.x
    ev = optimal_f_constrained(cfg.market, cfg.preference, cfg.risk, t, x, cfg.mode)
    _emit(_dump(ev.as_dict()), args.out)
    return 0


def cmd_surface(cfg, args) -> int:
    res = run_scenario(cfg)
    if res.surface is None:
        _emit(_dump(res.summary), None)
        return 0
    fmt = cfg.output.format
    out = args.out or cfg.output.path
    if out:
        export_surface(res.surface, fmt, out)
        sys.stderr.write(f"wrote {out}\n")
    else:
        sys.stdout.write(surface_csv(res.surface) if fmt == "csv" else surface_json(res.surface))
    if args.summary:
        with open(args.summary, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(_dump(res.summary))
    return 0


def cmd_simulate(cfg, args) -> int:
    m, p, r = cfg.market, cfg.preference, cfg.risk
    t0 = 0.0 if args.t is None else args.t
    x0 = p.x0 if args.x is None else args.x
    if args.policy == "constrained":
        policy = ConstrainedPolicy(m, p, r, cfg.mode)
    elif args.policy == "unconstrained":
        policy = UnconstrainedValue(m, p, cfg.mode).policy()
    else:
        ev = optimal_f_constrained(m, p, r, t0, x0, cfg.mode)
        policy = ConstantPolicy(ev.f_var)
    batch = simulate_paths(m, p, policy, cfg.simulation, t0=t0, x0=x0)
    out = {
        "scenario": cfg.name,
        "policy": args.policy,
        "mode": cfg.mode.value,
        "t0": t0,
        "x0": x0,
        "dt": cfg.simulation.dt,
        "master_seed": cfg.simulation.master_seed,
        **batch.summary(),
    }
    if args.policy == "clamp-constant":
        out["constant_f"] = policy.f
    _emit(_dump(out), args.out)
    return 0


def cmd_verify(cfg, args) -> int:
    code, report = verify_command(cfg, args.suite)
    _emit(_dump(report), args.out)
    for c in report["checks"]:
        sys.stderr.write(f"{c['status']:>7}  {c['name']}\n")
    return code


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    src = common.add_mutually_exclusive_group()
    src.add_argument("--preset", choices=sorted(PRESETS), help="built-in parameter set")
    src.add_argument("--config", help="INI or JSON scenario file")
    common.add_argument("--mode", choices=[m.value for m in Mode])
    common.add_argument("--format", choices=["csv", "json"])
    common.add_argument("--out", help="output file (default stdout)")
    common.add_argument("--seed", type=_seed_arg)
    common.add_argument("--paths", type=int)
    common.add_argument("--grid", type=_grid_arg, metavar="NTxNX")

    parser = argparse.ArgumentParser(prog="mvvar", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("cases", parents=[common], help="admissible-set classification").set_defaults(func=cmd_cases)

    p = sub.add_parser("solve", parents=[common], help="policy and values at one state")
    p.add_argument("--t", type=float)
    p.add_argument("--x", type=float)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("surface", parents=[common], help="export strategy and value surfaces")
    p.add_argument("--summary", help="also write the scenario summary JSON here")
    p.set_defaults(func=cmd_surface)

    p = sub.add_parser("simulate", parents=[common], help="Monte Carlo utility of a policy")
    p.add_argument("--policy", choices=["constrained", "unconstrained", "clamp-constant"], default="constrained")
    p.add_argument("--t", type=float)
    p.add_argument("--x", type=float)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("verify", parents=[common], help="run invariant suites")
    p.add_argument("--suite", choices=["fast", "full"], default="fast")
    p.set_defaults(func=cmd_verify)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = _config(args)
        return args.func(cfg, args)
    except (ConfigError, ParameterError) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return 2
    except InfeasibleProblemError as exc:
        sys.stderr.write(f"infeasible: {exc}\n")
        return 3
    except (SimulationError, OSError) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return 1


if __name__ == "__main__":
    sys.exit(main())
