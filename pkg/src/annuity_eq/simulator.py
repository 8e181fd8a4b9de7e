"""Sample paths of the growing economy under the equilibrium strategies.

Each path draws its birth times and one shared Brownian motion from two
RNG streams keyed on ``(seed, path_index)``. Birth times are merged into the
observation grid, so holdings, which are piecewise linear between births,
are integrated exactly.
"""

import csv
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from ._accel import njit, use_numba
from .model import ModelError

logger = logging.getLogger(__name__)

__all__ = [
    "SimulationError",
    "PathConfig",
    "EconomyPath",
    "ClearingReport",
    "UtilityEstimate",
    "path_rngs",
    "sample_births",
    "build_path",
    "simulate_income",
    "compute_strategies",
    "check_clearing",
    "evaluate_utility",
    "utility_closed_form",
    "run_ensemble",
    "write_path_csv",
]

CLEARING_TOL = 1e-9
MAX_RESAMPLES = 100


class SimulationError(RuntimeError):
    pass


@dataclass(frozen=True)
class PathConfig:
    horizon: float
    dt: float
    seed: int = 0
    num_paths: int = 1
    perturbation_deltas: tuple = ()
    workers: int = 1

    def __post_init__(self):
        if not self.horizon > 0:
            raise ModelError(f"must be > 0, got {self.horizon!r}", "simulation.horizon")
        if not self.dt > 0:
            raise ModelError(f"must be > 0, got {self.dt!r}", "simulation.dt")
        if self.dt > self.horizon:
            raise ModelError(f"dt={self.dt!r} exceeds the horizon {self.horizon!r}", "simulation.dt")
        if int(self.num_paths) != self.num_paths or self.num_paths < 1:
            raise ModelError(f"must be an integer >= 1, got {self.num_paths!r}", "simulation.paths")
        if self.workers < 1:
            raise ModelError("must be >= 1", "simulation.workers")
        object.__setattr__(self, "perturbation_deltas", tuple(float(d) for d in self.perturbation_deltas))

    def base_grid(self):
        n = max(1, math.ceil(self.horizon / self.dt - 1e-9))
        t = np.minimum(np.arange(n + 1) * self.dt, self.horizon)
        t[-1] = self.horizon
        return t


@dataclass
class EconomyPath:
    """One realisation. Agent arrays are (agents, grid) with NaN before birth."""

    t: np.ndarray
    N: np.ndarray
    birth_times: np.ndarray
    birth_index: np.ndarray
    dB: np.ndarray
    n0: int
    income: Optional[np.ndarray] = None
    holdings: Optional[np.ndarray] = None
    consumption: Optional[np.ndarray] = None
    price: Optional[np.ndarray] = None
    resamples: int = 0

    @property
    def n_agents(self):
        return self.n0 + len(self.birth_times)

    def tau(self, i):
        return float(self.t[self.birth_index[i - 1]])


@dataclass
class ClearingReport:
    max_theta_gap: float
    max_goods_gap: float
    max_selffinancing_gap: float
    growth_constant: float
    per_path: Optional[np.ndarray] = None

    def ok(self, tol=CLEARING_TOL):
        return max(self.max_theta_gap, self.max_goods_gap, self.max_selffinancing_gap) <= tol


@dataclass
class UtilityEstimate:
    agent: int
    delta: float
    mean: float
    se: float
    diff_mean: float = 0.0
    diff_se: float = 0.0
    paths: int = 0
    tail_estimate: float = 0.0


def path_rngs(seed, path_index, attempt=0):
    """(births, brownian) generators for one path."""
    key = [int(seed), int(path_index)] + ([int(attempt)] if attempt else [])
    s_births, s_bm = np.random.SeedSequence(key).spawn(2)
    return np.random.default_rng(s_births), np.random.default_rng(s_bm)


def _as_rng(seed):
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def _as_lam(lam):
    if callable(lam):
        return lam
    return lambda j: float(lam)


def sample_births(lam, n0, m, horizon, seed):
    """Birth times on [0, horizon]; from level j the next birth comes after an
    Exp(lam(j)) wait. At most m births."""
    rng = _as_rng(seed)
    lam = _as_lam(lam)
    times = []
    t = 0.0
    j = n0
    while len(times) < m:
        rate = lam(j)
        if rate <= 0.0:
            break
        t += rng.exponential(1.0 / rate)
        if t > horizon:
            break
        times.append(t)
        j += 1
    return np.array(times)


def build_path(lam, n0, max_births, cfg, path_index, coverage=None):
    """Grid, population and Brownian increments for one path.

    ``coverage`` is the largest number of births the solution can price;
    paths exceeding it are redrawn.
    """
    base = cfg.base_grid()
    for attempt in range(MAX_RESAMPLES + 1):
        rng_births, rng_bm = path_rngs(cfg.seed, path_index, attempt)
        births = sample_births(lam, n0, max_births, cfg.horizon, rng_births)
        if coverage is None or len(births) <= coverage:
            break
    else:
        raise SimulationError(f"path {path_index}: more than {coverage} births in "
                              f"{MAX_RESAMPLES + 1} draws")
    t = np.union1d(base, births) if len(births) else base
    N = n0 + np.searchsorted(births, t, side="right")
    bidx = np.concatenate([np.zeros(n0, dtype=np.int64), np.searchsorted(t, births)])
    dB = rng_bm.standard_normal(len(t) - 1) * np.sqrt(np.diff(t))
    return EconomyPath(t, N, births, bidx, dB, n0, resamples=attempt)


def simulate_income(agent, path, i):
    """Euler path of agent i's income on the path grid, NaN before birth.

    Drift and volatility are frozen at the level in force at the start of
    each grid interval, which is exact between births.
    """
    b = int(path.birth_index[i - 1])
    out = np.full(len(path.t), np.nan)
    out[b] = agent.initial_income
    if b == len(path.t) - 1:
        return out
    lv = path.N[b:-1]
    lo = int(lv.min())
    levels = range(lo, int(lv.max()) + 1)
    mu = np.array([agent.drift(j) for j in levels])
    sig = np.array([agent.vol(j) for j in levels])
    dt = np.diff(path.t[b:])
    inc = mu[lv - lo] * dt + sig[lv - lo] * path.dB[b:]
    out[b + 1:] = agent.initial_income + np.cumsum(inc)
    return out


# ---------------------------------------------------------------------------
# holdings kernel
# ---------------------------------------------------------------------------

@njit(cache=True)
def _holdings_numba(rates, lvl_pos, dt, theta0, bidx):
    n_agents = theta0.size
    n = dt.size + 1
    out = np.full((n_agents, n), np.nan)
    for i in range(n_agents):
        b = bidx[i]
        acc = theta0[i]
        out[i, b] = acc
        for k in range(b, n - 1):
            acc -= rates[lvl_pos[k], i] * dt[k]
            out[i, k + 1] = acc
    return out


def _holdings_numpy(rates, lvl_pos, dt, theta0, bidx):
    n = dt.size + 1
    steps = rates[lvl_pos, :theta0.size].T * dt
    cum = np.zeros((theta0.size, n))
    for i, b in enumerate(bidx):
        cum[i, b + 1:] = np.cumsum(steps[i, b:])
    out = theta0[:, None] - cum
    cols = np.arange(n)
    out[cols[None, :] < bidx[:, None]] = np.nan
    return out


def _level_tables(sol, j_lo, j_hi):
    """k_i(j)/A(j), k_i(j) and A(j) for levels j_lo..j_hi, agents 1..j_hi."""
    n_lv = j_hi - j_lo + 1
    rates = np.zeros((n_lv, j_hi))
    ks = np.zeros((n_lv, j_hi))
    A = np.empty(n_lv)
    for p, j in enumerate(range(j_lo, j_hi + 1)):
        A[p] = sol.A_at(j)
        kj = sol.k_at(j)
        ks[p, :j] = kj
        rates[p, :j] = kj / A[p]
    return rates, ks, A


def compute_strategies(sol, path, spec):
    """Holdings and consumption of every agent born on the path.

    Holdings drift at -k_i(N)/A(N), integrated exactly on the event-refined
    grid; consumption is holdings + k_i(N) + income.
    """
    j_lo, j_hi = int(path.N.min()), int(path.N.max())
    if j_hi > sol.j_top:
        raise SimulationError(f"path reaches level {j_hi}, solution covers up to {sol.j_top}")
    rates, ks, A = _level_tables(sol, j_lo, j_hi)
    lvl = path.N - j_lo
    n_agents = path.n_agents
    theta0 = np.array([spec.endowment(i) for i in range(1, n_agents + 1)])
    kernel = _holdings_numba if use_numba() else _holdings_numpy
    theta = kernel(rates, np.ascontiguousarray(lvl[:-1]), np.diff(path.t), theta0,
                   np.ascontiguousarray(path.birth_index))
    if path.income is None:
        path.income = np.vstack([simulate_income(spec.agent(i), path, i)
                                 for i in range(1, n_agents + 1)])
    k_grid = ks[lvl, :n_agents].T
    path.holdings = theta
    path.consumption = theta + k_grid + path.income
    path.price = A[lvl]
    return path.holdings, path.consumption


def check_clearing(sol, path):
    """Clearing and self-financing gaps on one path (strategies computed)."""
    theta, c, eps = path.holdings, path.consumption, path.income
    theta_gap = float(np.max(np.abs(np.nansum(theta, axis=0) - 1.0)))
    goods_gap = float(np.max(np.abs(np.nansum(c, axis=0) - 1.0 - np.nansum(eps, axis=0))))

    X = theta * path.price
    dt = np.diff(path.t)
    j_lo = int(path.N.min())
    _, ks, _ = _level_tables(sol, j_lo, int(path.N.max()))
    k_int = ks[path.N[:-1] - j_lo, :path.n_agents].T
    predicted = -k_int * dt + theta[:, 1:] * np.diff(path.price)
    with np.errstate(invalid="ignore"):
        sf = np.abs(np.diff(X, axis=1) - predicted)
    # intervals that start before the agent's birth are NaN
    sf_gap = float(np.nanmax(sf)) if np.any(np.isfinite(sf)) else 0.0
    growth = float(np.nanmax(np.abs(theta) / (1.0 + path.t)))
    return ClearingReport(theta_gap, goods_gap, sf_gap, growth)


# ---------------------------------------------------------------------------
# utility kernel
# ---------------------------------------------------------------------------

@njit(cache=True)
def _exp_integral_numba(dt, e_left, e_right):
    total = 0.0
    for k in range(dt.size):
        d = e_right[k] - e_left[k]
        if abs(d) < 1e-12:
            phi = 1.0 + 0.5 * d
        else:
            phi = math.expm1(d) / d
        total += dt[k] * math.exp(e_left[k]) * phi
    return total


def _exp_integral_numpy(dt, e_left, e_right):
    d = e_right - e_left
    small = np.abs(d) < 1e-12
    with np.errstate(invalid="ignore", divide="ignore"):
        phi = np.where(small, 1.0 + 0.5 * d, np.expm1(d) / np.where(small, 1.0, d))
    return float(np.sum(dt * np.exp(e_left) * phi))


def _agent_utilities(sol, path, spec, i, deltas):
    """Realised utility on [tau_i, T] for each perturbation delta.

    The perturbed strategy trades at -(k_i + delta)/A and consumes
    holdings + k_i + income + delta, which keeps it self-financing.
    Consumption is affine in t inside each grid interval (exact for the
    holdings, linear interpolation for income).
    """
    agent = spec.agent(i)
    b = int(path.birth_index[i - 1])
    tau = path.t[b]
    t = path.t[b:]
    dt = np.diff(t)
    j_lo = int(path.N.min())
    _, ks, A = _level_tables(sol, j_lo, int(path.N.max()))
    lv = path.N[b:] - j_lo
    k_left = ks[lv[:-1], i - 1]
    theta = path.holdings[i - 1, b:]
    eps = path.income[i - 1, b:]
    # integral of 1/A(N_u) from tau
    inv_a = np.concatenate([[0.0], np.cumsum(dt / A[lv[:-1]])])
    kernel = _exp_integral_numba if use_numba() else _exp_integral_numpy
    out = np.empty(len(deltas))
    tails = np.empty(len(deltas))
    disc_l = -agent.rho * (t[:-1] - tau)
    disc_r = -agent.rho * (t[1:] - tau)
    for n, delta in enumerate(deltas):
        th = theta - delta * inv_a
        c_left = th[:-1] + k_left + eps[:-1] + delta
        c_right = th[1:] + k_left + eps[1:] + delta
        e_l = np.ascontiguousarray(disc_l - agent.alpha * c_left)
        e_r = np.ascontiguousarray(disc_r - agent.alpha * c_right)
        out[n] = -kernel(dt, e_l, e_r) if dt.size else 0.0
        tails[n] = math.exp(e_r[-1]) / agent.rho if dt.size else 0.0
    return out, tails


def utility_closed_form(alpha, rho, consumption, horizon):
    """Utility of a constant consumption stream over [0, horizon]."""
    return -math.exp(-alpha * consumption) * (1.0 - math.exp(-rho * horizon)) / rho


class _Job:
    """Per-ensemble constants shared by every path."""

    def __init__(self, spec, sol, cfg, agents, deltas):
        self.spec, self.sol, self.cfg = spec, sol, cfg
        self.agents, self.deltas = agents, deltas
        used = sol.lam
        self.lam = lambda j: float(used[j - sol.n0]) if j - sol.n0 < len(used) else spec.lam_at(j)
        span = sol.j_top - sol.n0
        if sol.mode == "truncated":
            # the top level carries lambda = 0, so births stop there
            self.max_births, self.coverage = span, None
        else:
            self.max_births, self.coverage = span + 1, span

    def __call__(self, p, keep=False):
        spec, sol = self.spec, self.sol
        path = build_path(self.lam, spec.n0, self.max_births, self.cfg, p, coverage=self.coverage)
        compute_strategies(sol, path, spec)
        rep = check_clearing(sol, path)
        util = {}
        for i in self.agents:
            if i <= path.n_agents:
                util[i] = _agent_utilities(sol, path, spec, i, self.deltas)
        return rep, len(path.birth_times), path.resamples, util, (path if keep else None)


def evaluate_utility(sol, spec, cfg, agent, deltas=None):
    """Monte Carlo utility of ``agent`` for each perturbation delta.

    Returns a list of UtilityEstimate; ``diff_mean``/``diff_se`` are the
    paired differences against delta = 0 on common paths.
    """
    deltas = cfg.perturbation_deltas if deltas is None else tuple(deltas)
    res = run_ensemble(spec, sol, cfg, utility_agents=(agent,), deltas=deltas)
    return res.utility[agent]


@dataclass
class EnsembleResult:
    clearing: ClearingReport
    birth_counts: np.ndarray
    resamples: int
    utility: dict = field(default_factory=dict)
    paths: list = field(default_factory=list)

    def birth_stats(self):
        bc = self.birth_counts
        return {"mean": float(bc.mean()), "std": float(bc.std(ddof=1)) if bc.size > 1 else 0.0,
                "min": int(bc.min()), "max": int(bc.max())}


def _summarise_utility(i, deltas, rows, tails):
    vals = np.array(rows)
    tails = np.array(tails)
    n = vals.shape[0]
    base = list(deltas).index(0.0) if 0.0 in deltas else None
    out = []
    for d_pos, delta in enumerate(deltas):
        col = vals[:, d_pos]
        se = float(col.std(ddof=1) / math.sqrt(n)) if n > 1 else float("nan")
        diff_mean = diff_se = 0.0
        if base is not None:
            diff = col - vals[:, base]
            diff_mean = float(diff.mean())
            diff_se = float(diff.std(ddof=1) / math.sqrt(n)) if n > 1 else float("nan")
        out.append(UtilityEstimate(i, delta, float(col.mean()), se, diff_mean, diff_se, n,
                                   float(tails[:, d_pos].mean())))
    return out


def run_ensemble(spec, sol, cfg, utility_agents=(), deltas=None, keep_paths=0):
    """Simulate ``cfg.num_paths`` paths; reductions run in path order."""
    deltas = cfg.perturbation_deltas if deltas is None else tuple(deltas)
    if utility_agents and 0.0 not in deltas:
        deltas = (0.0,) + deltas
    job = _Job(spec, sol, cfg, tuple(utility_agents), deltas)
    idx = range(cfg.num_paths)

    def work(p):
        return job(p, keep=p < keep_paths)

    if cfg.workers > 1:
        with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
            results = list(pool.map(work, idx))
    else:
        results = [work(p) for p in idx]

    per_path = np.array([[r[0].max_theta_gap, r[0].max_goods_gap, r[0].max_selffinancing_gap,
                          r[0].growth_constant] for r in results])
    clearing = ClearingReport(float(per_path[:, 0].max()), float(per_path[:, 1].max()),
                              float(per_path[:, 2].max()), float(per_path[:, 3].max()), per_path)
    births = np.array([r[1] for r in results])
    resamples = int(sum(r[2] for r in results))
    if resamples:
        logger.warning("%d path draws exceeded the solution's level coverage and were redrawn",
                       resamples)
    utility = {}
    for i in utility_agents:
        rows = [r[3][i][0] for r in results if i in r[3]]
        tails = [r[3][i][1] for r in results if i in r[3]]
        if rows:
            utility[i] = _summarise_utility(i, deltas, rows, tails)
    paths = [r[4] for r in results if r[4] is not None]
    return EnsembleResult(clearing, births, resamples, utility, paths)


def write_path_csv(path, fh_or_name):
    """Rows ``t, N_t, A, i, eps_i, theta_i, c_i`` for every living agent."""
    fmt = "{:.17g}".format
    own = isinstance(fh_or_name, (str, bytes)) or hasattr(fh_or_name, "__fspath__")
    fh = open(fh_or_name, "w", newline="") if own else fh_or_name
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "N_t", "A", "i", "eps_i", "theta_i", "c_i"])
        for k, t in enumerate(path.t):
            for i in range(1, int(path.N[k]) + 1):
                w.writerow([fmt(t), int(path.N[k]), fmt(path.price[k]), i,
                            fmt(path.income[i - 1, k]), fmt(path.holdings[i - 1, k]),
                            fmt(path.consumption[i - 1, k])])
    finally:
        if own:
            fh.close()
