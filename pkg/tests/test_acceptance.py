"""End-to-end acceptance criteria, each at its stated tolerance and runtime.

Runtimes are measured after one untimed warm-up call so that one-off JIT
compilation is not charged to the criterion.
"""

import math
import time
from pathlib import Path

import numpy as np
import pytest

from annuity_eq import config as cfgmod
from annuity_eq.cli import main
from annuity_eq.experiments import (homogeneous_spec, run_fig1, run_fig2, run_fig3,
                                    run_sensitivity, scalar_recursion)
from annuity_eq.model import LevelTable
from annuity_eq.simulator import PathConfig, run_ensemble
from annuity_eq.solver import check_bounds, solve_limit, solve_truncated
from annuity_eq.special_functions import lambert_w0, lambert_w0_of_log

from _specs import o1_spec, random_hetero_spec

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def timed(fn):
    fn()
    start = time.perf_counter()
    out = fn()
    return out, time.perf_counter() - start


def test_criterion_01_lambert(acceptance, golden_lambert):
    def suite():
        em1 = math.exp(-1.0)
        z = np.concatenate([np.linspace(-em1 + 1e-9, 0.0, 2000, endpoint=False),
                            np.logspace(-12, 6, 8000)])
        w = lambert_w0(z)
        rt = float(np.max(np.abs(w * np.exp(w) - z) / np.maximum(1.0, np.abs(z))))
        branch = abs(lambert_w0(-em1) + 1.0)
        omega = float(golden_lambert["omega"])
        gold = max(abs(lambert_w0(1.0) - omega), abs(lambert_w0_of_log(0.0) - omega))
        return rt, branch, gold
    (rt, branch, gold), secs = timed(suite)
    ok = rt <= 1e-13 and branch <= 1e-12 and gold <= 1e-12 and secs < 1.0
    acceptance(1, ok, f"roundtrip {rt:.2e}, branch {branch:.2e}, omega {gold:.2e}, {secs:.3f}s")
    assert ok


def test_criterion_02_closed_form_collapse(acceptance):
    def suite():
        worst = 0.0
        for lam in (0.0, 1.0, 5.0, 10.0):
            sol = solve_truncated(homogeneous_spec(0.5, 5, 50, lam, 0.5))
            worst = max(worst, float(np.max(np.abs(sol.A - 2.0))),
                        max(float(np.max(np.abs(k))) for k in sol.k))
        return worst
    worst, secs = timed(suite)
    ok = worst <= 1e-12 and secs < 1.0
    acceptance(2, ok, f"max deviation {worst:.2e}, {secs:.3f}s")
    assert ok


def test_criterion_03_certification(acceptance):
    def suite():
        rng = np.random.default_rng(20240503)
        res = sk = 0.0
        bad = 0
        for _ in range(100):
            sol = solve_truncated(random_hetero_spec(rng))
            res = max(res, sol.max_residual())
            sk = max(sk, float(sol.sum_k().max()))
            bad += not check_bounds(sol).ok
        return res, sk, bad
    (res, sk, bad), secs = timed(suite)
    ok = res <= 1e-10 and sk <= 1e-10 and bad == 0 and secs < 30.0
    acceptance(3, ok, f"residual {res:.2e}, sum k {sk:.2e}, bound failures {bad}, {secs:.2f}s")
    assert ok


def test_criterion_04_oracles(acceptance, golden_o1):
    worst = 0.0
    for beta in (LevelTable(0.5), LevelTable(lambda j: 0.1 * j),
                 LevelTable(lambda j: 0.4 if j % 2 else 0.6)):
        for lam in (0.5, 1.0, 10.0):
            sol = solve_truncated(homogeneous_spec(beta, 5, 500, lam, 0.5))
            worst = max(worst, float(np.max(np.abs(sol.A - scalar_recursion(beta, 5, 500, lam)))))
    sol = solve_truncated(o1_spec())
    o1 = 0.0
    for j in (2, 3):
        o1 = max(o1, abs(sol.A_at(j) - float(golden_o1["A"][str(j)])),
                 float(np.max(np.abs(sol.k_at(j) - np.array(golden_o1["k"][str(j)], dtype=float)))))
    ok = worst <= 1e-12 and o1 <= 1e-12
    acceptance(4, ok, f"homogeneous vs recursion {worst:.2e}, golden O1 {o1:.2e}")
    assert ok


def test_criterion_05_lambda_sensitivity(acceptance):
    worst = 0.0
    for seed in range(20):
        rng = np.random.default_rng(seed)
        beta = LevelTable(rng.uniform(0.2, 1.5, size=30), start=1)
        j = int(rng.integers(1, 15))
        fd, exact = run_sensitivity(beta, j, lam=1e-6)
        worst = max(worst, abs(fd - exact) / abs(exact))
    ok = worst <= 1e-4
    acceptance(5, ok, f"max relative error {worst:.2e} over 20 specs")
    assert ok


def test_criterion_06_figures(acceptance):
    figs, secs = timed(lambda: (run_fig1(), run_fig2(), run_fig3()))
    failed = [f"{f.name}:{c.name}" for f in figs for c in f.checks if not c.passed]
    tv = figs[0].extras["tv"]
    ok = not failed and tv[10.0] < tv[5.0] < tv[1.0] and secs < 5.0
    acceptance(6, ok, f"failed checks {failed or 'none'}, {secs:.2f}s")
    assert ok


def test_criterion_07_clearing(acceptance):
    spec = o1_spec()
    sol = solve_truncated(spec)
    cfg = PathConfig(horizon=20.0, dt=0.01, seed=7, num_paths=100)
    res, secs = timed(lambda: run_ensemble(spec, sol, cfg))
    cl = res.clearing
    ok = (cl.max_theta_gap <= 1e-9 and cl.max_goods_gap <= 1e-9
          and cl.max_selffinancing_gap <= 1e-9 and secs < 60.0)
    acceptance(7, ok, f"theta {cl.max_theta_gap:.2e}, goods {cl.max_goods_gap:.2e}, "
                      f"self-financing {cl.max_selffinancing_gap:.2e}, {secs:.2f}s")
    assert ok


def test_criterion_08_optimality(acceptance):
    cfg = cfgmod.load_config(CONFIGS / "optimality_small.yaml")
    spec = cfgmod.build_spec(cfg)
    pcfg = cfgmod.build_path_config(cfg, spec)
    assert pcfg.num_paths == 10_000
    assert set(pcfg.perturbation_deltas) == {0.05, -0.05, 0.2, -0.2}
    sol = solve_truncated(spec)
    run_ensemble(spec, sol, PathConfig(pcfg.horizon, pcfg.dt, 0, 2), utility_agents=(1,))
    start = time.perf_counter()
    res = run_ensemble(spec, sol, pcfg, utility_agents=(1, 2))
    secs = time.perf_counter() - start
    worst = []
    ok = secs < 300.0
    for i, rows in res.utility.items():
        for u in rows:
            if u.delta == 0.0:
                continue
            # U(0) >= U(delta) - 2 SE, with the SE of the paired difference
            margin = -u.diff_mean + 2.0 * u.diff_se
            worst.append((margin, i, u.delta))
            ok &= margin >= 0.0
    m, i, d = min(worst)
    acceptance(8, ok, f"{len(worst)} perturbations, tightest margin {m:.3g} "
                      f"(agent {i}, delta {d:+g}), {secs:.1f}s")
    assert ok


def test_criterion_09_truncation(acceptance):
    beta = LevelTable(lambda j: 0.4 if j % 2 else 0.6)
    n0 = 5
    spec = homogeneous_spec(beta, n0, 0, 1.0, 1.0)
    sol = solve_limit(spec, n0 + 10, tol=1e-10)
    oracle = scalar_recursion(beta, n0, 4096, 1.0)[:11]
    dev = float(np.max(np.abs(sol.A - oracle)))
    more = solve_truncated(spec.with_m(2 * sol.final_m))
    drift = max(float(np.max(np.abs(more.A[:11] - sol.A))),
                max(float(np.max(np.abs(more.k[p] - sol.k[p]))) for p in range(11)))
    ok = sol.final_m < 2**14 and sol.history[-1][1] <= 1e-10 and dev <= 1e-10 and drift <= 1e-10
    acceptance(9, ok, f"converged at m={sol.final_m}, gap {sol.history[-1][1]:.2e}, "
                      f"vs recursion {dev:.2e}, doubling again {drift:.2e}")
    assert ok


def test_criterion_10_determinism(acceptance, tmp_path):
    o1 = str(CONFIGS / "o1_hetero.yaml")
    commands = [
        ["solve", "--config", o1],
        ["solve", "--config", str(CONFIGS / "limit_alternating.yaml")],
        ["simulate", "--config", o1, "--set", "simulation.write_paths=2"],
        ["figure", "1"], ["figure", "2"], ["figure", "3"],
        ["check", "--config", o1],
    ]
    mismatched = []
    for n, argv in enumerate(commands):
        outs = []
        for run, workers in enumerate((1, 1, 4)):
            extra = ["--workers", str(workers)] if argv[0] in ("simulate", "check") else []
            out = tmp_path / f"{n}_{run}"
            assert main([*argv, *extra, "--out", str(out)]) == 0
            outs.append({p.name: p.read_bytes() for p in sorted(out.iterdir())})
        if not outs[0] == outs[1] == outs[2]:
            mismatched.append(" ".join(argv[:2]))
    ok = not mismatched
    acceptance(10, ok, f"{len(commands)} commands x 3 runs, mismatches: {mismatched or 'none'}")
    assert ok
