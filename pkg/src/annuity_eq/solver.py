"""Backward induction for the annuity price A(j) and the adjustments k_i(j).

The truncated system pins the last level to its static closed form and
walks down one level at a time. At each level the price is the root of a
strictly decreasing, strictly concave scalar function built from Lambert W
terms; the k_i then follow in closed form. Infinite growth is approximated
by doubling the truncation until the reported levels stop moving.
"""

import csv
import logging
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ._accel import njit, use_numba
from .model import DerivedAggregates, ModelError, aggregate
from .special_functions import _np_w0_of_log, _w0_of_log_scalar

logger = logging.getLogger(__name__)

__all__ = [
    "SolverError",
    "ConvergenceError",
    "LevelSolution",
    "EquilibriumSolution",
    "BoundsReport",
    "terminal_level",
    "solve_level",
    "solve_truncated",
    "solve_limit",
    "residual",
    "check_bounds",
    "write_solution_csv",
]

RESIDUAL_TOL = 1e-10
SUM_K_TOL = 1e-10
BOUND_SLACK = 1e-12
M_CAP = 2**14

_OK, _BRACKET, _NO_CONVERGENCE = 0, 1, 2
_MAX_ITER = 100
_STEP_TOL = 1e-14
_F_TOL = 1e-14
_LO_NUDGE = 1e-15
# accepted |f| at the upper bracket end when it sits on the root itself
_EDGE_TOL = 1e-13


class SolverError(RuntimeError):
    """The per-level root solve failed."""

    def __init__(self, message, level=None):
        super().__init__(message if level is None else f"level {level}: {message}")
        self.level = level


class ConvergenceError(SolverError):
    def __init__(self, message, gap=None, m=None):
        super().__init__(message)
        self.gap = gap
        self.m = m


@dataclass(frozen=True)
class LevelSolution:
    j: int
    A: float
    k: np.ndarray
    f_residual: float = 0.0
    iterations: int = 0


# ---------------------------------------------------------------------------
# level kernels
# ---------------------------------------------------------------------------

@njit(cache=True)
def _f_numba(x, c, s, alpha, a_sig, b_sig, lam, w):
    acc = 0.0
    dacc = 0.0
    for i in range(c.size):
        wi = _w0_of_log_scalar(c[i] + s[i] * x)
        w[i] = wi
        acc += wi / alpha[i]
        dacc += s[i] / alpha[i] * wi / (1.0 + wi)
    denom = b_sig + lam
    return (1.0 + a_sig * acc) / denom - x, a_sig / denom * dacc - 1.0


@njit(cache=True)
def _solve_level_numba(beta, alpha, a_sig, b_sig, lam, a_next, k_next):
    n = beta.size
    s = beta + lam
    c = np.empty(n)
    hi = 0.0
    base = math.log(lam) + math.log(a_next) - 1.0
    for i in range(n):
        c[i] = base - alpha[i] * k_next[i]
        cand = (lam * a_next * math.exp(-alpha[i] * k_next[i]) + 1.0) / s[i]
        if cand > hi:
            hi = cand
    lo = (1.0 + _LO_NUDGE) / (b_sig + lam)
    w = np.empty(n)
    status = _OK
    iters = 0

    fhi, dfhi = _f_numba(hi, c, s, alpha, a_sig, b_sig, lam, w)
    flo, dflo = _f_numba(lo, c, s, alpha, a_sig, b_sig, lam, w)
    if fhi > 0.0:
        if fhi <= _EDGE_TOL * (1.0 + hi):
            x = hi
            fx, dfx = _f_numba(x, c, s, alpha, a_sig, b_sig, lam, w)
        else:
            x = hi
            fx = fhi
            status = _BRACKET
    elif flo <= 0.0:
        x = lo
        fx = flo
        if -flo > _EDGE_TOL * (1.0 + lo):
            status = _BRACKET
    else:
        a, b = lo, hi
        x, fx, dfx = lo, flo, dflo
        status = _NO_CONVERGENCE
        for it in range(_MAX_ITER):
            iters = it + 1
            if fx > 0.0:
                a = x
            else:
                b = x
            if abs(fx) <= _F_TOL:
                status = _OK
                break
            xn = x - fx / dfx
            if dfx >= 0.0 or not (a < xn <= b):
                xn = 0.5 * (a + b)
            step = xn - x
            x = xn
            fx, dfx = _f_numba(x, c, s, alpha, a_sig, b_sig, lam, w)
            if abs(step) <= _STEP_TOL * max(1.0, x):
                status = _OK
                break
    k = (s * x - 1.0 - w) / alpha
    return x, k, fx, status, iters


def _f_numpy(x, c, s, alpha, a_sig, b_sig, lam):
    w = _np_w0_of_log(c + s * x)
    denom = b_sig + lam
    f = (1.0 + a_sig * np.sum(w / alpha)) / denom - x
    df = a_sig / denom * np.sum(s / alpha * w / (1.0 + w)) - 1.0
    return f, df, w


def _solve_level_numpy(beta, alpha, a_sig, b_sig, lam, a_next, k_next):
    s = beta + lam
    c = math.log(lam) + math.log(a_next) - 1.0 - alpha * k_next
    hi = float(np.max((lam * a_next * np.exp(-alpha * k_next) + 1.0) / s))
    lo = (1.0 + _LO_NUDGE) / (b_sig + lam)
    status, iters = _OK, 0

    fhi, _, _ = _f_numpy(hi, c, s, alpha, a_sig, b_sig, lam)
    flo, dflo, wlo = _f_numpy(lo, c, s, alpha, a_sig, b_sig, lam)
    if fhi > 0.0:
        x = hi
        fx, dfx, w = _f_numpy(x, c, s, alpha, a_sig, b_sig, lam)
        if fhi > _EDGE_TOL * (1.0 + hi):
            status = _BRACKET
    elif flo <= 0.0:
        x, fx, w = lo, flo, wlo
        if -flo > _EDGE_TOL * (1.0 + lo):
            status = _BRACKET
    else:
        a, b = lo, hi
        x, fx, dfx, w = lo, flo, dflo, wlo
        status = _NO_CONVERGENCE
        for it in range(_MAX_ITER):
            iters = it + 1
            if fx > 0.0:
                a = x
            else:
                b = x
            if abs(fx) <= _F_TOL:
                status = _OK
                break
            xn = x - fx / dfx
            if dfx >= 0.0 or not (a < xn <= b):
                xn = 0.5 * (a + b)
            step = xn - x
            x = xn
            fx, dfx, w = _f_numpy(x, c, s, alpha, a_sig, b_sig, lam)
            if abs(step) <= _STEP_TOL * max(1.0, x):
                status = _OK
                break
    k = (s * x - 1.0 - w) / alpha
    return x, k, fx, status, iters


# ---------------------------------------------------------------------------
# single levels
# ---------------------------------------------------------------------------

def _closed_form(agg, j):
    beta = agg.beta(j)
    A = 1.0 / agg.beta_sigma_at(j)
    k = (beta * A - 1.0) / agg.alpha[:j]
    return LevelSolution(j, A, k)


def terminal_level(agg: DerivedAggregates, j_T: int) -> LevelSolution:
    """A = 1/beta_Sigma(j_T), k_i = (beta_i A - 1)/alpha_i."""
    return _closed_form(agg, j_T)


def solve_level(agg: DerivedAggregates, l: int, next: LevelSolution, lambda_l: float) -> LevelSolution:
    """Solve level ``l`` given the solved level ``l + 1``.

    A(l) is the unique positive root of the Lambert-W fixed-point map; a
    bisection-guarded Newton iteration started at the lower bracket end
    finds it. ``lambda_l == 0`` decouples the level and returns the static
    closed form.
    """
    if lambda_l < 0:
        raise ModelError(f"lambda({l}) = {lambda_l!r} < 0", "lambda")
    if lambda_l == 0.0:
        return _closed_form(agg, l)
    if next.j != l + 1:
        raise SolverError(f"next level is {next.j}, expected {l + 1}", l)
    beta = np.ascontiguousarray(agg.beta(l), dtype=float)
    alpha = np.ascontiguousarray(agg.alpha[:l], dtype=float)
    k_next = np.ascontiguousarray(next.k[:l], dtype=float)
    kernel = _solve_level_numba if use_numba() else _solve_level_numpy
    A, k, fx, status, iters = kernel(beta, alpha, agg.alpha_sigma_at(l), agg.beta_sigma_at(l),
                                     float(lambda_l), float(next.A), k_next)
    if status == _BRACKET:
        raise SolverError(f"no sign change of the price equation on its bracket (f={fx!r}); "
                          "check that every beta_i(j) is positive and bounded", l)
    if status == _NO_CONVERGENCE:
        raise SolverError(f"root iteration did not converge in {_MAX_ITER} steps (f={fx!r})", l)
    return LevelSolution(l, float(A), np.asarray(k), float(abs(fx)), int(iters))


# ---------------------------------------------------------------------------
# whole systems
# ---------------------------------------------------------------------------

@dataclass
class BoundsReport:
    beta_lo: float
    beta_hi: float
    lam_max: float
    violations: list = field(default_factory=list)

    @property
    def ok(self):
        return not self.violations


@dataclass
class EquilibriumSolution:
    """Levels n0..j_top with their residuals.

    ``lam`` holds the intensity the recursion used at each level (zero at the
    truncation level). In limit mode the table is cut at ``j_max`` and the
    residual at j_max, which couples to the dropped level j_max + 1, is kept
    in ``boundary_residual``.
    """

    n0: int
    A: np.ndarray
    k: list
    lam: np.ndarray
    agg: DerivedAggregates = field(repr=False)
    residual_A: np.ndarray = None
    residual_k: np.ndarray = None
    mode: str = "truncated"
    m: int = 0
    tol: Optional[float] = None
    final_m: Optional[int] = None
    boundary_residual: Optional[tuple] = None
    history: list = field(default_factory=list)

    @property
    def j_top(self):
        return self.n0 + len(self.A) - 1

    @property
    def levels(self):
        return np.arange(self.n0, self.j_top + 1)

    def A_at(self, j):
        return float(self.A[self._pos(j)])

    def k_at(self, j):
        return self.k[self._pos(j)]

    def level(self, j):
        return LevelSolution(j, self.A_at(j), self.k_at(j))

    def sum_k(self):
        return np.array([abs(math.fsum(kj)) for kj in self.k])

    def max_residual(self):
        return float(max(self.residual_A.max(), self.residual_k.max()))

    def _pos(self, j):
        pos = j - self.n0
        if not 0 <= pos < len(self.A):
            raise ModelError(f"level {j} not covered by the solution [{self.n0}, {self.j_top}]")
        return pos


def residual(agg, sol, j, lambda_j):
    """Absolute residuals of the price equation and of each k-equation at j.

    Evaluated with plain exponentials, independently of the Lambert route
    used to solve. Returns ``(rA, rk)``.
    """
    A = sol.A_at(j)
    k = sol.k_at(j)
    alpha = agg.alpha[:j]
    beta = agg.beta(j)
    if lambda_j == 0.0:
        rA = abs(1.0 / A - agg.beta_sigma_at(j))
        rk = np.abs(k - (beta * A - 1.0) / alpha)
        return rA, rk
    try:
        A1 = sol.A_at(j + 1)
        k1 = sol.k_at(j + 1)[:j]
    except ModelError:
        raise ModelError(f"residual at level {j} needs level {j + 1}") from None
    jump = lambda_j * A1 * np.exp(-alpha * (k1 - k))
    rA = abs(1.0 / A - (agg.beta_sigma_at(j) + lambda_j)
             + agg.alpha_sigma_at(j) * np.sum(jump / alpha) / A)
    rk = np.abs(k - ((beta + lambda_j) * A - 1.0) / alpha + jump / alpha)
    return float(rA), rk


def _fill_residuals(sol, upto=None):
    upto = sol.j_top if upto is None else upto
    rA = np.zeros(len(sol.A))
    rk = np.zeros(len(sol.A))
    for pos, j in enumerate(sol.levels):
        if j > upto:
            break
        a, kk = residual(sol.agg, sol, int(j), float(sol.lam[pos]))
        rA[pos] = a
        rk[pos] = kk.max()
    sol.residual_A, sol.residual_k = rA, rk


def check_bounds(sol, slack=BOUND_SLACK):
    """Price and k bounds at every level, with beta extremes taken over the
    solved range and lambda replaced by the largest intensity used."""
    agg = sol.agg
    b_lo, b_hi = agg.beta_lo, agg.beta_hi
    lam = float(np.max(sol.lam)) if len(sol.lam) else 0.0
    rep = BoundsReport(b_lo, b_hi, lam)
    a_floor = 1.0 / (b_hi + lam)
    a_cap = 1.0 / b_lo
    ak_lo = -math.log((b_hi + lam) / b_lo)
    ak_hi = (b_hi + lam) / b_lo - 1.0
    for j in sol.levels:
        j = int(j)
        A = sol.A_at(j)
        ak = agg.alpha[:j] * sol.k_at(j)
        if not A > a_floor * (1.0 - slack):
            rep.violations.append((j, "A_lower", A, a_floor))
        if not A <= a_cap * (1.0 + slack):
            rep.violations.append((j, "A_upper", A, a_cap))
        worst = float(np.max(A * np.exp(-ak)))
        if not worst <= a_cap * (1.0 + slack):
            rep.violations.append((j, "A_exp_k", worst, a_cap))
        if not ak.min() >= ak_lo - slack * (1.0 + abs(ak_lo)):
            rep.violations.append((j, "alpha_k_lower", float(ak.min()), ak_lo))
        if not ak.max() <= ak_hi + slack * (1.0 + abs(ak_hi)):
            rep.violations.append((j, "alpha_k_upper", float(ak.max()), ak_hi))
    return rep


def solve_truncated(spec, agg=None) -> EquilibriumSolution:
    """Levels n0..n0+m, with the truncation level decoupled (lambda = 0)."""
    j_top = spec.j_max
    if agg is None:
        agg = aggregate(spec, j_top)
    lam = np.array([spec.lam_at(j) for j in range(spec.n0, j_top)] + [0.0])
    A = np.empty(j_top - spec.n0 + 1)
    ks = [None] * len(A)
    nxt = terminal_level(agg, j_top)
    A[-1], ks[-1] = nxt.A, nxt.k
    for l in range(j_top - 1, spec.n0 - 1, -1):
        nxt = solve_level(agg, l, nxt, float(lam[l - spec.n0]))
        A[l - spec.n0], ks[l - spec.n0] = nxt.A, nxt.k
    sol = EquilibriumSolution(spec.n0, A, ks, lam, agg, mode="truncated", m=spec.m)
    _fill_residuals(sol)
    return sol


def _restrict(sol, j_max):
    n = j_max - sol.n0 + 1
    out = EquilibriumSolution(sol.n0, sol.A[:n].copy(), list(sol.k[:n]), sol.lam[:n].copy(),
                              sol.agg, mode="limit", m=sol.m)
    out.residual_A = sol.residual_A[:n].copy()
    out.residual_k = sol.residual_k[:n].copy()
    out.boundary_residual = (float(out.residual_A[-1]), float(out.residual_k[-1]))
    return out


def _cauchy_gap(a, b, j_max):
    n = j_max - a.n0 + 1
    gap = float(np.max(np.abs(a.A[:n] - b.A[:n])))
    for ka, kb in zip(a.k[:n], b.k[:n]):
        gap = max(gap, float(np.max(np.abs(ka - kb))))
    return gap


def solve_limit(spec, j_max, tol=1e-10, m0=None, m_cap=M_CAP) -> EquilibriumSolution:
    """Approximate the untruncated system on n0..j_max by doubling m until
    successive truncations agree to ``tol`` on every reported value."""
    if tol <= 0:
        raise ValueError("tol must be > 0")
    if j_max < spec.n0:
        raise ModelError(f"j_max={j_max} < n0={spec.n0}", "j_max")
    m = j_max - spec.n0 + 10 if m0 is None else int(m0)
    limit = getattr(spec.agents, "limit", None)
    prev = solve_truncated(spec.with_m(m)) if limit is None or spec.n0 + m <= limit else None
    if prev is None:
        raise ModelError("solve_limit needs an agent source defined for every i "
                         "(cyclic template or scenario rule)", "agents")
    history = []
    while True:
        m_next = 2 * m
        if m_next > m_cap:
            raise ConvergenceError(f"truncation limit not reached by m={m}; last gap "
                                   f"{history[-1][1] if history else float('nan')!r}",
                                   gap=history[-1][1] if history else None, m=m)
        if limit is not None and spec.n0 + m_next > limit:
            raise ModelError(f"m={m_next} needs {spec.n0 + m_next} agents, only {limit} defined",
                             "agents")
        cur = solve_truncated(spec.with_m(m_next))
        gap = _cauchy_gap(prev, cur, j_max)
        history.append((m_next, gap))
        logger.debug("solve_limit m=%d gap=%.3e", m_next, gap)
        if gap <= tol:
            out = _restrict(cur, j_max)
            out.tol = tol
            out.final_m = m_next
            out.history = history
            return out
        prev, m = cur, m_next


def write_solution_csv(sol, path):
    """One per-level row (i empty) followed by one row per agent."""
    fmt = "{:.17g}".format
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["j", "A", "i", "k_i", "residual_A", "residual_k"])
        for pos, j in enumerate(sol.levels):
            j = int(j)
            A = sol.A[pos]
            w.writerow([j, fmt(A), "", "", fmt(sol.residual_A[pos]), fmt(sol.residual_k[pos])])
            lam_j = float(sol.lam[pos])
            try:
                _, rk = residual(sol.agg, sol, j, lam_j)
            except ModelError:
                rk = np.full(j, np.nan)
            for i, (ki, ri) in enumerate(zip(sol.k[pos], rk), start=1):
                w.writerow([j, fmt(A), i, fmt(ki), "", fmt(ri)])
