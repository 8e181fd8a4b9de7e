import csv
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from annuity_eq.experiments import homogeneous_spec, run_sensitivity, scalar_recursion
from annuity_eq.model import AgentParams, CyclicAgents, LevelTable, ModelSpec, aggregate
from annuity_eq.solver import (ConvergenceError, RESIDUAL_TOL, SUM_K_TOL, check_bounds, residual,
                               solve_level, solve_limit, solve_truncated, terminal_level,
                               write_solution_csv)

from _specs import o1_spec, random_hetero_spec


def certify(sol):
    assert sol.max_residual() <= RESIDUAL_TOL
    assert sol.sum_k().max() <= SUM_K_TOL
    rep = check_bounds(sol)
    assert rep.ok, rep.violations[:3]


def test_o1_golden(backend, golden_o1):
    sol = solve_truncated(o1_spec())
    for j in (2, 3):
        assert abs(sol.A_at(j) - float(golden_o1["A"][str(j)])) <= 1e-12
        np.testing.assert_allclose(sol.k_at(j), [float(x) for x in golden_o1["k"][str(j)]],
                                   rtol=0, atol=1e-12)
    certify(sol)


def test_terminal_level_closed_form():
    agg = aggregate(o1_spec())
    lvl = terminal_level(agg, 3)
    assert abs(1.0 / lvl.A - agg.beta_sigma_at(3)) <= 1e-15
    np.testing.assert_allclose(lvl.k, (agg.beta(3) * lvl.A - 1.0) / agg.alpha[:3], atol=1e-15)


def test_zero_lambda_level_is_static():
    agg = aggregate(o1_spec())
    top = terminal_level(agg, 3)
    lvl = solve_level(agg, 2, top, 0.0)
    assert lvl.A == pytest.approx(1.0 / agg.beta_sigma_at(2), abs=1e-15)


@pytest.mark.parametrize("lam", [0.0, 1.0, 5.0, 10.0])
def test_constant_beta_collapses(backend, lam):
    sol = solve_truncated(homogeneous_spec(0.5, 5, 50, lam, 0.5))
    assert np.max(np.abs(sol.A - 2.0)) <= 1e-12
    assert max(np.max(np.abs(k)) for k in sol.k) <= 1e-12


@pytest.mark.parametrize("beta", [
    LevelTable(lambda j: 0.1 * j),
    LevelTable(lambda j: j / (2.0 * j - 1.0)),
    LevelTable(lambda j: 0.4 if j % 2 else 0.6),
])
def test_homogeneous_matches_scalar_recursion(backend, beta):
    n0, m, lam = 3, 500, 2.0
    sol = solve_truncated(homogeneous_spec(beta, n0, m, lam, 0.7))
    direct = scalar_recursion(beta, n0, m, lam)
    assert np.max(np.abs(sol.A - direct)) <= 1e-12
    certify(sol)


def test_level_dependent_lambda():
    lam = LevelTable([0.5, 3.0, 0.0, 7.0], start=4)
    beta = LevelTable(lambda j: 0.3 + 0.05 * j)
    spec = homogeneous_spec(beta, 4, 6, lam, 1.0)
    sol = solve_truncated(spec)
    A = np.empty(7)
    A[-1] = 1.0 / beta(10)
    for j in range(9, 3, -1):
        l = lam(j)
        A[j - 4] = (l * A[j - 3] + 1.0) / (l + beta(j))
    assert np.max(np.abs(sol.A - A)) <= 1e-12
    np.testing.assert_array_equal(sol.lam, [0.5, 3.0, 0.0, 7.0, 7.0, 7.0, 0.0])


def test_random_specs_certified(backend):
    rng = np.random.default_rng(123)
    for _ in range(15):
        certify(solve_truncated(random_hetero_spec(rng)))


@settings(max_examples=40, deadline=None)
@given(st.integers(min_value=0, max_value=2**32 - 1))
def test_random_specs_property(seed):
    certify(solve_truncated(random_hetero_spec(np.random.default_rng(seed), max_m=12)))


def test_backends_agree_on_hetero():
    from annuity_eq import _accel
    spec = random_hetero_spec(np.random.default_rng(5))
    prev = _accel.set_backend("numpy")
    try:
        a = solve_truncated(spec)
    finally:
        _accel.set_backend(prev)
    b = solve_truncated(spec)
    assert np.max(np.abs(a.A - b.A)) <= 1e-13


def test_residual_is_independent_of_solver():
    sol = solve_truncated(o1_spec())
    sol.A = sol.A.copy()
    sol.A[0] += 1e-6
    rA, _ = residual(sol.agg, sol, 2, 1.0)
    assert rA > 1e-8


def test_bounds_report_flags_violation():
    sol = solve_truncated(o1_spec())
    sol.A = sol.A * 10.0
    rep = check_bounds(sol)
    assert not rep.ok
    assert {v[1] for v in rep.violations} >= {"A_upper"}


@pytest.mark.parametrize("seed", range(5))
def test_lambda_sensitivity(seed):
    rng = np.random.default_rng(seed)
    betas = rng.uniform(0.3, 1.2, size=20)
    fd, exact = run_sensitivity(LevelTable(betas, start=1), 3)
    assert abs(fd - exact) <= 1e-4 * max(abs(exact), 1e-12)


def test_small_lambda_interlacing():
    beta = LevelTable([0.5, 0.9, 0.3, 0.7, 0.4, 1.1, 0.6], start=2)
    sol = solve_truncated(homogeneous_spec(beta, 2, 6, 1e-3))
    for j in range(2, 8):
        lo, hi = sorted((1.0 / beta(j), 1.0 / beta(j + 1)))
        assert lo < sol.A_at(j) < hi


def alternating_spec(n0=3, lam=1.0):
    beta = LevelTable(lambda j: 0.4 if j % 2 else 0.6)
    return homogeneous_spec(beta, n0, 0, lam, 1.0), beta


def test_solve_limit_converges_and_matches_recursion():
    spec, beta = alternating_spec()
    sol = solve_limit(spec, 13, tol=1e-10)
    assert sol.final_m <= 2**14 and sol.history[-1][1] <= 1e-10
    direct = scalar_recursion(beta, 3, 4000, 1.0)[:11]
    assert np.max(np.abs(sol.A - direct)) <= 1e-10
    again = solve_truncated(spec.with_m(2 * sol.final_m))
    assert np.max(np.abs(again.A[:11] - sol.A)) <= 1e-10
    assert sol.j_top == 13 and sol.mode == "limit"


def test_solve_limit_hetero_cyclic():
    tmpl = [AgentParams(rho=0.4, alpha=1.0, beta_table=0.4),
            AgentParams(rho=0.6, alpha=2.0, beta_table=0.6),
            AgentParams(rho=0.9, alpha=0.5, beta_table=0.9)]
    spec = ModelSpec(2, 0, 1.5, CyclicAgents(tmpl), endowments=(0.5, 0.5))
    sol = solve_limit(spec, 8)
    assert sol.history[-1][1] <= 1e-10
    assert sol.sum_k().max() <= SUM_K_TOL
    assert check_bounds(sol).ok


def test_solve_limit_cap():
    spec, _ = alternating_spec(lam=50.0)
    with pytest.raises(ConvergenceError) as info:
        solve_limit(spec, 13, tol=1e-14, m_cap=40)
    assert info.value.m is not None


def test_solution_csv(tmp_path):
    sol = solve_truncated(o1_spec())
    out = tmp_path / "sol.csv"
    write_solution_csv(sol, out)
    rows = list(csv.DictReader(out.open()))
    assert rows[0].keys() == {"j", "A", "i", "k_i", "residual_A", "residual_k"}
    per_level = [r for r in rows if r["i"] == ""]
    assert [int(r["j"]) for r in per_level] == [2, 3]
    assert float(per_level[0]["A"]) == sol.A_at(2)
    agent_rows = [r for r in rows if r["i"] != ""]
    assert len(agent_rows) == 5
    assert math.fsum(float(r["k_i"]) for r in agent_rows if r["j"] == "3") == pytest.approx(0, abs=1e-15)
