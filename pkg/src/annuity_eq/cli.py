"""Command-line entry point.

    annuity-eq solve    --config CFG [--out DIR] [--set K=V ...] [--tol X]
    annuity-eq simulate --config CFG [--seed N] [--paths N] [--workers N]
    annuity-eq figure {1,2,3} [--config CFG]
    annuity-eq check    --config CFG

Exit codes: 0 success, 1 validation failure, 2 numerical failure,
3 I/O failure. ``ANNUITY_EQ_OUT`` sets the default output directory.
"""

import argparse
import csv
import json
import logging
import os
import platform
import sys
from pathlib import Path

import numpy as np

from . import __version__, _accel
from . import config as cfgmod
from . import experiments as ex
from .model import ModelError
from .simulator import CLEARING_TOL, SimulationError, run_ensemble, write_path_csv
from .solver import (RESIDUAL_TOL, SUM_K_TOL, SolverError, check_bounds, solve_limit,
                     solve_truncated, write_solution_csv)

logger = logging.getLogger("annuity_eq")

EXIT_OK, EXIT_VALIDATION, EXIT_NUMERICAL, EXIT_IO = 0, 1, 2, 3


class NumericalFailure(Exception):
    pass


def _g(x):
    return f"{x:.6g}"


def _versions():
    out = {"annuity_eq": __version__, "numpy": np.__version__,
           "python": platform.python_version(), "backend": _accel.backend()}
    if _accel.HAVE_NUMBA:
        import numba
        out["numba"] = numba.__version__
    return out


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def _write_json(path, data):
    Path(path).write_text(json.dumps(_jsonable(data), indent=2, sort_keys=True) + "\n")


def _write_manifest(out, args, resolved, seed=None):
    # worker count never changes results, so keep it out of the echo
    resolved = dict(resolved)
    if isinstance(resolved.get("simulation"), dict):
        resolved["simulation"] = {k: v for k, v in resolved["simulation"].items()
                                  if k != "workers"}
    _write_json(out / "manifest.json", {
        "command": args.command if args.command != "figure" else f"figure {args.which}",
        "config_path": str(args.config) if args.config else None,
        "overrides": list(args.set or []),
        "config": resolved,
        "seed": seed,
        "versions": _versions(),
    })


def _resolve(args):
    raw = cfgmod.load_config(args.config) if args.config else {}
    overrides = list(args.set or [])
    if getattr(args, "tol", None) is not None:
        overrides.append(f"solve.tol={args.tol!r}")
    if getattr(args, "seed", None) is not None:
        overrides.append(f"simulation.seed={args.seed}")
    if getattr(args, "paths", None) is not None:
        overrides.append(f"simulation.paths={args.paths}")
    if getattr(args, "workers", None) is not None:
        overrides.append(f"simulation.workers={args.workers}")
    return cfgmod.apply_overrides(raw, overrides)


def _solve(cfg, spec):
    solve = cfg.get("solve") or {}
    mode = solve.get("mode", "truncated")
    if mode == "truncated":
        return solve_truncated(spec)
    if mode == "limit":
        if "j_max" not in solve:
            raise cfgmod.ConfigError("required in limit mode", "solve.j_max")
        j_max = cfgmod._num(solve["j_max"], "solve.j_max", lo=spec.n0, integer=True)
        tol = cfgmod._num(solve.get("tol", 1e-10), "solve.tol", lo=0, strict=True)
        return solve_limit(spec, j_max, tol)
    raise cfgmod.ConfigError(f"unknown mode {mode!r}", "solve.mode")


def _certify(sol):
    bounds = check_bounds(sol)
    upto = len(sol.A) - (1 if sol.mode == "limit" else 0)
    max_res = float(max(sol.residual_A[:upto].max(initial=0.0), sol.residual_k[:upto].max(initial=0.0)))
    max_sum_k = float(sol.sum_k().max())
    checks = [
        ("residuals", max_res <= RESIDUAL_TOL, max_res),
        ("sum_k_zero", max_sum_k <= SUM_K_TOL, max_sum_k),
        ("bounds", bounds.ok, len(bounds.violations)),
    ]
    return checks, bounds


def cmd_solve(args, out):
    cfg = _resolve(args)
    spec = cfgmod.build_spec(cfg)
    sol = _solve(cfg, spec)
    checks, bounds = _certify(sol)
    write_solution_csv(sol, out / "solution.csv")
    report = {
        "mode": sol.mode,
        "n0": sol.n0,
        "j_top": sol.j_top,
        "final_m": sol.final_m,
        "history": sol.history,
        "boundary_residual": sol.boundary_residual,
        "beta_lo": bounds.beta_lo,
        "beta_hi": bounds.beta_hi,
        "lambda_max": bounds.lam_max,
        "bound_violations": [list(v) for v in bounds.violations],
        "checks": {name: {"passed": ok, "value": val} for name, ok, val in checks},
    }
    _write_json(out / "solve_report.json", report)
    _write_manifest(out, args, cfg)
    print(f"solved levels {sol.n0}..{sol.j_top} ({sol.mode}); A({sol.n0}) = {_g(sol.A[0])}")
    for name, ok, val in checks:
        print(f"  {name:12s} {'PASS' if ok else 'FAIL'}  {_g(val)}")
    if not all(ok for _, ok, _ in checks):
        raise NumericalFailure("solution failed certification")
    return sol


def _simulate(cfg, spec, sol, keep_paths=0):
    pcfg = cfgmod.build_path_config(cfg, spec)
    sim = cfg.get("simulation") or {}
    agents = sim.get("utility_agents", list(range(1, spec.n0 + 1)))
    res = run_ensemble(spec, sol, pcfg, utility_agents=tuple(int(i) for i in agents),
                       keep_paths=keep_paths)
    return pcfg, res


def cmd_simulate(args, out):
    cfg = _resolve(args)
    spec = cfgmod.build_spec(cfg)
    keep = int((cfg.get("simulation") or {}).get("write_paths", 0))
    sol = _solve(cfg, spec)
    pcfg, res = _simulate(cfg, spec, sol, keep)
    cl = res.clearing
    report = {
        "paths": pcfg.num_paths,
        "horizon": pcfg.horizon,
        "dt": pcfg.dt,
        "seed": pcfg.seed,
        "clearing": {"max_theta_gap": cl.max_theta_gap, "max_goods_gap": cl.max_goods_gap,
                     "max_selffinancing_gap": cl.max_selffinancing_gap,
                     "tolerance": CLEARING_TOL, "passed": cl.ok()},
        "growth_constant_max": cl.growth_constant,
        "births": res.birth_stats(),
        "resampled_paths": res.resamples,
        "utility": {str(i): [vars(u) for u in rows] for i, rows in res.utility.items()},
    }
    _write_json(out / "simulation_report.json", report)
    with open(out / "utility.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["agent", "delta", "mean", "se", "diff_vs_zero", "diff_se", "paths",
                    "tail_estimate"])
        for i, rows in res.utility.items():
            for u in rows:
                w.writerow([i, f"{u.delta:.17g}", f"{u.mean:.17g}", f"{u.se:.17g}",
                            f"{u.diff_mean:.17g}", f"{u.diff_se:.17g}", u.paths,
                            f"{u.tail_estimate:.17g}"])
    for n, path in enumerate(res.paths):
        write_path_csv(path, out / f"path_{n:04d}.csv")
    _write_manifest(out, args, cfg, seed=pcfg.seed)
    print(f"{pcfg.num_paths} paths, T={_g(pcfg.horizon)}, dt={_g(pcfg.dt)}, "
          f"mean births {_g(res.birth_stats()['mean'])}")
    print(f"  theta gap {_g(cl.max_theta_gap)}  goods gap {_g(cl.max_goods_gap)}  "
          f"self-financing gap {_g(cl.max_selffinancing_gap)}")
    for i, rows in res.utility.items():
        for u in rows:
            print(f"  agent {i} delta {u.delta:+.3g}: {_g(u.mean)} +- {_g(u.se)} "
                  f"(vs 0: {_g(u.diff_mean)} +- {_g(u.diff_se)})")
    if not cl.ok():
        raise NumericalFailure("clearing gap above tolerance")


def cmd_figure(args, out):
    cfg = _resolve(args)
    which = int(args.which)
    if which == 3:
        data = ex.run_fig3()
    else:
        scn = cfgmod.build_scenario(cfg, which)
        data = ex.run_fig1(scn) if which == 1 else ex.run_fig2(scn)
    data.write_csv(out / f"fig{which}.csv")
    data.write_verdicts(out / f"fig{which}_verdicts.csv")
    _write_manifest(out, args, cfg)
    for c in data.checks:
        print(f"  fig{which} {c.name:34s} {'PASS' if c.passed else 'FAIL'}  {c.detail}")
    if not data.passed:
        raise NumericalFailure("qualitative check failed")


def cmd_check(args, out):
    cfg = _resolve(args)
    spec = cfgmod.build_spec(cfg)
    sol = _solve(cfg, spec)
    checks, _ = _certify(sol)
    rows = [(name, ok, val) for name, ok, val in checks]
    sim = dict(cfg.get("simulation") or {})
    sim.setdefault("paths", 10)
    sim.setdefault("deltas", [])
    cfg_sim = dict(cfg, simulation=sim)
    _, res = _simulate(cfg_sim, spec, sol)
    cl = res.clearing
    rows += [
        ("theta_clearing", cl.max_theta_gap <= CLEARING_TOL, cl.max_theta_gap),
        ("goods_clearing", cl.max_goods_gap <= CLEARING_TOL, cl.max_goods_gap),
        ("self_financing", cl.max_selffinancing_gap <= CLEARING_TOL, cl.max_selffinancing_gap),
    ]
    with open(out / "check_report.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["check", "passed", "value"])
        for name, ok, val in rows:
            w.writerow([name, "PASS" if ok else "FAIL", f"{float(val):.17g}"])
    _write_manifest(out, args, cfg)
    for name, ok, val in rows:
        print(f"  {name:16s} {'PASS' if ok else 'FAIL'}  {_g(float(val))}")
    if not all(ok for _, ok, _ in rows):
        raise NumericalFailure("invariant check failed")


def build_parser():
    p = argparse.ArgumentParser(prog="annuity-eq", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, config_required=True):
        sp.add_argument("--config", type=Path, required=config_required)
        sp.add_argument("--out", type=Path, default=None)
        sp.add_argument("--set", action="append", metavar="K=V", default=[])
        sp.add_argument("--tol", type=float, default=None)
        sp.add_argument("-v", "--verbose", action="store_true")

    sp = sub.add_parser("solve", help="solve the recursive system")
    common(sp)
    sp = sub.add_parser("simulate", help="simulate paths and check clearing/optimality")
    common(sp)
    sp.add_argument("--seed", type=int, default=None)
    sp.add_argument("--paths", type=int, default=None)
    sp.add_argument("--workers", type=int, default=None)
    sp = sub.add_parser("figure", help="emit a figure dataset with verdicts")
    sp.add_argument("which", choices=["1", "2", "3"])
    common(sp, config_required=False)
    sp = sub.add_parser("check", help="run the invariant suite on a config")
    common(sp)
    sp.add_argument("--seed", type=int, default=None)
    sp.add_argument("--paths", type=int, default=None)
    sp.add_argument("--workers", type=int, default=None)
    return p


COMMANDS = {"solve": cmd_solve, "simulate": cmd_simulate, "figure": cmd_figure,
            "check": cmd_check}


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    out = args.out or Path(os.environ.get("ANNUITY_EQ_OUT", "out"))
    try:
        out.mkdir(parents=True, exist_ok=True)
        COMMANDS[args.command](args, out)
    except ModelError as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (SolverError, SimulationError, NumericalFailure) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
