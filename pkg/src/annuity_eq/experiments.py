"""Scenario builders and the three figure datasets.

Figures 1 and 2 were drawn from unpublished beta sequences, so they are
rebuilt here from a seeded, clipped random walk; only their qualitative
claims are checked. Figure 3 is fully specified and reproduced exactly.
"""

import csv
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .model import AgentParams, LevelTable, ModelError, ModelSpec, RuleAgents
from .solver import check_bounds, solve_truncated

__all__ = [
    "ScenarioSpec",
    "Check",
    "FigureData",
    "random_walk_betas",
    "homogeneous_spec",
    "hetero_spec",
    "gen_betas_hetero",
    "total_variation",
    "scalar_recursion",
    "run_fig1",
    "run_fig2",
    "run_fig3",
    "run_sensitivity",
]

ORDER_SLACK = 1e-12
FLAT_TV_TOL = 1e-10
VARIANTS = ("orange", "green", "red")


@dataclass
class ScenarioSpec:
    kind: str
    beta_sequence: LevelTable
    a: float = 0.0
    lambda_list: tuple = (1.0,)
    n0: int = 5
    m: int = 50
    alpha: float = 0.5
    seed: Optional[int] = None

    def __post_init__(self):
        if self.kind not in ("homogeneous", "linear_hetero", "monotone"):
            raise ModelError(f"unknown scenario kind {self.kind!r}", "scenario.kind")
        if not isinstance(self.beta_sequence, LevelTable):
            self.beta_sequence = LevelTable(self.beta_sequence, start=self.n0)
        if self.a < 0:
            raise ModelError("must be >= 0", "scenario.a")
        self.lambda_list = tuple(float(v) for v in self.lambda_list)


@dataclass
class Check:
    name: str
    passed: bool
    detail: str = ""


@dataclass
class FigureData:
    name: str
    columns: list
    rows: list
    checks: list = field(default_factory=list)
    extras: dict = field(default_factory=dict)

    @property
    def passed(self):
        return all(c.passed for c in self.checks)

    def column(self, name):
        pos = self.columns.index(name)
        return np.array([r[pos] for r in self.rows])

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(self.columns)
            for row in self.rows:
                w.writerow([_fmt(v) for v in row])

    def write_verdicts(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["figure", "check", "passed", "detail"])
            for c in self.checks:
                w.writerow([self.name, c.name, "PASS" if c.passed else "FAIL", c.detail])


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.17g}"
    return str(v)


# ---------------------------------------------------------------------------
# beta sequences and scenario specs
# ---------------------------------------------------------------------------

def random_walk_betas(seed, n_levels, lo, hi, step, start=None):
    """Bounded random walk: uniform steps in [-step, step], clipped to [lo, hi]."""
    if not 0 < lo <= hi:
        raise ModelError(f"need 0 < lo <= hi, got [{lo!r}, {hi!r}]", "beta")
    rng = np.random.default_rng(seed)
    x = np.empty(n_levels)
    x[0] = rng.uniform(lo, hi) if start is None else start
    for n in range(1, n_levels):
        x[n] = min(hi, max(lo, x[n - 1] + rng.uniform(-step, step)))
    return x


def _beta_fn(beta):
    return beta if isinstance(beta, LevelTable) else LevelTable(beta)


def homogeneous_spec(beta, n0, m, lam, alpha=0.5):
    """Every agent has beta_i(j) = beta(j) and risk aversion ``alpha``."""
    beta = _beta_fn(beta)

    def rule(i):
        return AgentParams(rho=beta(max(i, n0)), alpha=alpha, beta_table=beta)

    agents = RuleAgents(rule, beta_row=lambda j: np.full(j, beta(j)),
                        description="homogeneous")
    return ModelSpec(n0, m, lam, agents, endowments=(1.0 / n0,) * n0, label="homogeneous")


def gen_betas_hetero(beta_sigma, a, j, variant=None):
    """beta_i(j), i = 1..j, for the constant, increasing and decreasing ramps.

    Returns a dict keyed by ``orange``/``green``/``red`` (or one array when
    ``variant`` is given). Ramps span [beta_sigma - a, beta_sigma + a]; with
    equal risk aversions their average is beta_sigma. Level 1 has a single
    agent and gets beta_sigma itself.
    """
    bs = float(beta_sigma(j)) if callable(beta_sigma) else float(beta_sigma)
    if a > 0 and j >= 2 and not bs - a > 0:
        raise ModelError(f"beta_Sigma({j}) - a = {bs - a!r} must be > 0", "scenario.a")
    if j == 1:
        ramp_up = np.zeros(1)
    else:
        ramp_up = np.arange(j) / (j - 1)
    out = {
        "orange": np.full(j, bs),
        "green": bs - a + 2.0 * a * ramp_up,
        "red": bs - a + 2.0 * a * ramp_up[::-1],
    }
    if j == 1:
        out["green"] = out["red"] = np.full(1, bs)
    return out if variant is None else out[variant]


def hetero_spec(beta_sigma, a, variant, n0, m, lam, alpha=0.5):
    if variant not in VARIANTS:
        raise ModelError(f"variant must be one of {VARIANTS}", "agents.variant")
    beta_sigma = _beta_fn(beta_sigma)
    for j in range(n0, n0 + m + 1):
        gen_betas_hetero(beta_sigma, a, j)

    def rule(i):
        table = LevelTable(lambda j: gen_betas_hetero(beta_sigma, a, j, variant)[i - 1])
        return AgentParams(rho=float(table(max(i, n0))), alpha=alpha, beta_table=table)

    agents = RuleAgents(rule, beta_row=lambda j: gen_betas_hetero(beta_sigma, a, j, variant),
                        description=f"linear_hetero/{variant}")
    return ModelSpec(n0, m, lam, agents, endowments=(1.0 / n0,) * n0, label=variant)


def total_variation(x):
    return float(np.sum(np.abs(np.diff(x))))


def scalar_recursion(beta, n0, m, lam):
    """Homogeneous price curve by the direct backward recursion, no root-finding."""
    A = np.empty(m + 1)
    A[m] = 1.0 / beta(n0 + m)
    for j in range(n0 + m - 1, n0 - 1, -1):
        A[j - n0] = (lam * A[j - n0 + 1] + 1.0) / (lam + beta(j))
    return A


def _certified(spec):
    sol = solve_truncated(spec)
    bounds = check_bounds(sol)
    if not bounds.ok:
        raise ModelError(f"bounds violated: {bounds.violations[:3]}")
    if sol.max_residual() > 1e-10 or sol.sum_k().max() > 1e-10:
        raise ModelError("solution failed its residual/clearing certification")
    return sol


def _strictly_between(x, a, b):
    return min(a, b) < x < max(a, b)


# ---------------------------------------------------------------------------
# figures
# ---------------------------------------------------------------------------

def default_fig1_scenario(seed=20240501):
    n0, m = 5, 50
    betas = random_walk_betas(seed, m + 1, 0.3, 1.0, 0.35)
    return ScenarioSpec("homogeneous", LevelTable(betas, start=n0), 0.0, (1.0, 5.0, 10.0),
                        n0, m, 0.5, seed)


def default_fig2_scenario(seed=20240502):
    n0, m = 5, 50
    betas = random_walk_betas(seed, m + 1, 5.5, 8.0, 1.0)
    return ScenarioSpec("linear_hetero", LevelTable(betas, start=n0), 5.0, (1.0,), n0, m, 0.5, seed)


def run_fig1(scn=None, n_report=30, small_lambda=1e-3):
    """1/beta and A for each lambda over the first ``n_report`` levels after n0."""
    scn = default_fig1_scenario() if scn is None else scn
    if scn.kind != "homogeneous":
        raise ModelError("figure 1 needs a homogeneous scenario", "scenario.kind")
    beta = scn.beta_sequence
    n0, m = scn.n0, scn.m
    n_report = min(n_report, m)
    js = np.arange(n0 + 1, n0 + n_report + 1)
    inv_beta = np.array([1.0 / beta(j) for j in js])
    curves = {}
    for lam in scn.lambda_list:
        sol = _certified(homogeneous_spec(beta, n0, m, lam, scn.alpha))
        curves[lam] = np.array([sol.A_at(int(j)) for j in js])
    columns = ["j", "inv_beta"] + [f"A_lambda_{lam:g}" for lam in scn.lambda_list]
    rows = [(int(j), inv_beta[n], *(curves[lam][n] for lam in scn.lambda_list))
            for n, j in enumerate(js)]

    checks = []
    tv = {lam: total_variation(curves[lam]) for lam in scn.lambda_list}
    flat = total_variation(inv_beta) == 0.0
    lams = sorted(scn.lambda_list)
    ordered = all(tv[hi] < tv[lo] for lo, hi in zip(lams, lams[1:]))
    detail = ", ".join(f"TV(lambda={lam:g})={tv[lam]:.6g}" for lam in lams)
    # a flat beta gives A = 1/beta up to solver rounding
    checks.append(Check("tv_decreases_in_lambda", ordered or (flat and max(tv.values()) <= FLAT_TV_TOL),
                        detail + (" (flat beta)" if flat else "")))

    sol_small = _certified(homogeneous_spec(beta, n0, m, small_lambda, scn.alpha))
    bad = []
    for j in js:
        j = int(j)
        if j >= n0 + m:
            continue
        lo_, hi_ = 1.0 / beta(j), 1.0 / beta(j + 1)
        if lo_ != hi_ and not _strictly_between(sol_small.A_at(j), lo_, hi_):
            bad.append(j)
    checks.append(Check("small_lambda_interlacing", not bad,
                        f"lambda={small_lambda:g}; violating levels: {bad}" if bad
                        else f"lambda={small_lambda:g}; all levels between 1/beta(j) and 1/beta(j+1)"))
    return FigureData("fig1", columns, rows, checks, {"tv": tv})


def run_fig2(scn=None, n_report=10):
    """Three beta_i(j) assignments sharing the same beta_Sigma(j)."""
    scn = default_fig2_scenario() if scn is None else scn
    if scn.kind != "linear_hetero":
        raise ModelError("figure 2 needs a linear_hetero scenario", "scenario.kind")
    bs = scn.beta_sequence
    n0, m, a = scn.n0, scn.m, scn.a
    lam = scn.lambda_list[0]
    n_report = min(n_report, m)
    js = np.arange(n0 + 1, n0 + n_report + 1)
    curves, sigmas = {}, {}
    for variant in VARIANTS:
        spec = hetero_spec(bs, a, variant, n0, m, lam, scn.alpha)
        sol = _certified(spec)
        curves[variant] = np.array([sol.A_at(int(j)) for j in js])
        sigmas[variant] = sol.agg.beta_sigma
    inv_bs = np.array([1.0 / bs(j) for j in js])
    columns = ["j", "inv_beta_sigma", "A_orange", "A_green", "A_red"]
    rows = [(int(j), inv_bs[n], curves["orange"][n], curves["green"][n], curves["red"][n])
            for n, j in enumerate(js)]

    g, o, r = curves["green"], curves["orange"], curves["red"]
    checks = []
    weak = bool(np.all(g >= o - ORDER_SLACK) and np.all(o >= r - ORDER_SLACK))
    strict = bool(np.any((g > o + ORDER_SLACK) & (o > r + ORDER_SLACK)))
    flat = a == 0.0
    witness = [int(j) for j, ok in zip(js, (g > o + ORDER_SLACK) & (o > r + ORDER_SLACK)) if ok]
    checks.append(Check("green_ge_orange_ge_red", weak and (strict or flat),
                        f"strict at levels {witness[:5]}{'...' if len(witness) > 5 else ''}"
                        if strict else ("a = 0, curves coincide" if flat else "no strict witness")))
    gap = max(float(np.max(np.abs(sigmas[v] - sigmas["orange"]))) for v in VARIANTS)
    checks.append(Check("beta_sigma_shared", gap <= 1e-14, f"max |delta beta_Sigma| = {gap:.3g}"))
    homog = _certified(homogeneous_spec(bs, n0, m, lam, scn.alpha))
    dev = float(np.max(np.abs(o - np.array([homog.A_at(int(j)) for j in js]))))
    checks.append(Check("orange_equals_homogeneous", dev <= 1e-12, f"max deviation {dev:.3g}"))
    return FigureData("fig2", columns, rows, checks)


FIG3_PANELS = {
    "left": LevelTable(lambda j: j / (2.0 * j - 1.0)),
    "right": LevelTable(lambda j: 0.1 * j),
}


def run_fig3(n0=5, m=50, lam=1.0, alpha=0.5, n_report=10):
    """Monotone beta_Sigma: decreasing (left) and increasing (right) panels."""
    columns = ["panel", "j", "inv_beta_sigma", "A"]
    rows, checks = [], []
    js = np.arange(n0 + 1, n0 + min(n_report, m) + 1)
    for panel, beta in FIG3_PANELS.items():
        sol = _certified(homogeneous_spec(beta, n0, m, lam, alpha))
        for j in js:
            rows.append((panel, int(j), 1.0 / beta(int(j)), sol.A_at(int(j))))
        A = np.array([sol.A_at(int(j)) for j in js])
        inv = np.array([1.0 / beta(int(j)) for j in js])
        inner = js < n0 + m
        if panel == "left":
            ok = bool(np.all(A[inner] > inv[inner]))
            checks.append(Check("left_A_above_inv_beta", ok, "beta_Sigma decreasing"))
        else:
            ok = bool(np.all(A[inner] < inv[inner]))
            checks.append(Check("right_A_below_inv_beta", ok, "beta_Sigma increasing"))
        top = n0 + m
        anchor = sol.A_at(top) == 1.0 / beta(top)
        checks.append(Check(f"{panel}_terminal_anchor", anchor,
                            f"A({top}) = {sol.A_at(top)!r}"))
        direct = scalar_recursion(beta, n0, m, lam)
        dev = float(np.max(np.abs(sol.A - direct)))
        checks.append(Check(f"{panel}_matches_scalar_recursion", dev <= 1e-12,
                            f"max deviation {dev:.3g}"))
    return FigureData("fig3", columns, rows, checks)


def run_sensitivity(beta, j, lam=1e-6, m=10, alpha=0.5):
    """Finite-difference dA(j)/dlambda at lambda = 0 against the closed form
    (1/beta(j)) (1/beta(j+1) - 1/beta(j))."""
    beta = _beta_fn(beta)
    A_lam = solve_truncated(homogeneous_spec(beta, j, m, lam, alpha)).A_at(j)
    A_0 = solve_truncated(homogeneous_spec(beta, j, m, 0.0, alpha)).A_at(j)
    fd = (A_lam - A_0) / lam
    analytic = (1.0 / beta(j)) * (1.0 / beta(j + 1) - 1.0 / beta(j))
    return fd, analytic
