"""Agents, the population model, and the aggregates the recursion runs on.

Levels ``j`` are population sizes. Agent ``i`` (1-based) exists from level
``max(i, n0)`` on, so per-level quantities are only queried for ``i <= j``.
"""

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

__all__ = [
    "ModelError",
    "AssumptionViolation",
    "LevelTable",
    "AgentParams",
    "AgentList",
    "CyclicAgents",
    "RuleAgents",
    "ModelSpec",
    "DerivedAggregates",
    "compute_beta",
    "aggregate",
]

ENDOWMENT_TOL = 1e-12


class ModelError(ValueError):
    """Invalid model input; ``field`` names the offending config entry."""

    def __init__(self, message, field=None):
        super().__init__(f"{field}: {message}" if field else message)
        self.field = field


class AssumptionViolation(ModelError):
    """Some beta_i(j) is not strictly positive."""

    def __init__(self, i, j, value):
        super().__init__(f"beta_{i}({j}) = {value!r} must be > 0", field=f"agents[{i}]")
        self.i = i
        self.j = j
        self.value = value


class LevelTable:
    """A real-valued function of the level ``j``.

    Built from a scalar, a sequence whose first entry belongs to level
    ``start``, or a callable. Sequences are extended past their end by
    holding the last value; ``extend="none"`` turns that into an error.
    """

    def __init__(self, values, start=1, extend="hold"):
        if extend not in ("hold", "none"):
            raise ValueError(f"extend must be 'hold' or 'none', got {extend!r}")
        self.start = int(start)
        self.extend = extend
        self._fn: Optional[Callable[[int], float]] = None
        if callable(values):
            self._fn = values
            self._values = None
        else:
            arr = np.atleast_1d(np.asarray(values, dtype=float))
            if arr.ndim != 1 or arr.size == 0:
                raise ValueError("level table needs a scalar or a non-empty 1-d sequence")
            self._values = arr
            self._scalar = np.ndim(values) == 0

    @classmethod
    def constant(cls, value):
        return cls(float(value))

    @property
    def is_constant(self):
        return self._values is not None and (self._scalar or np.all(self._values == self._values[0]))

    @property
    def declared_values(self):
        return None if self._values is None else self._values.copy()

    def __call__(self, j):
        j = int(j)
        if self._fn is not None:
            return float(self._fn(j))
        if self._scalar:
            return float(self._values[0])
        pos = j - self.start
        if pos < 0:
            raise ModelError(f"level {j} is below the table start {self.start}")
        if pos >= self._values.size:
            if self.extend == "none":
                raise ModelError(f"level {j} is past the last declared level "
                                 f"{self.start + self._values.size - 1}")
            pos = self._values.size - 1
        return float(self._values[pos])

    def max_over(self, j_lo, j_hi):
        return max(self(j) for j in range(j_lo, j_hi + 1))

    def __repr__(self):
        if self._fn is not None:
            return f"LevelTable({self._fn!r})"
        if self._scalar:
            return f"LevelTable({self._values[0]!r})"
        return f"LevelTable({self._values.tolist()!r}, start={self.start})"


def _as_table(value):
    if value is None or isinstance(value, LevelTable):
        return value
    return LevelTable(value)


@dataclass(frozen=True)
class AgentParams:
    """One agent: CARA risk aversion ``alpha``, time preference ``rho`` and
    either raw income tables (drift, volatility) or a direct beta table."""

    rho: float
    alpha: float
    income_drift: Optional[LevelTable] = None
    income_vol: Optional[LevelTable] = None
    beta_table: Optional[LevelTable] = None
    endowment: float = 0.0
    initial_income: float = 0.0

    def __post_init__(self):
        if not self.rho > 0:
            raise ModelError(f"rho must be > 0, got {self.rho!r}", "rho")
        if not self.alpha > 0:
            raise ModelError(f"alpha must be > 0, got {self.alpha!r}", "alpha")
        object.__setattr__(self, "income_drift", _as_table(self.income_drift))
        object.__setattr__(self, "income_vol", _as_table(self.income_vol))
        object.__setattr__(self, "beta_table", _as_table(self.beta_table))
        raw = self.income_drift is not None or self.income_vol is not None
        if raw == (self.beta_table is not None):
            raise ModelError("give exactly one of (income_drift, income_vol) or beta_table")
        if raw and (self.income_drift is None or self.income_vol is None):
            raise ModelError("income_drift and income_vol must be given together")

    def drift(self, j):
        """Income drift at level j. Beta-table agents get the zero-volatility
        drift that reproduces their beta."""
        if self.beta_table is not None:
            return (self.beta_table(j) - self.rho) / self.alpha
        return self.income_drift(j)

    def vol(self, j):
        if self.beta_table is not None:
            return 0.0
        return self.income_vol(j)


def compute_beta(agent, j):
    """rho + alpha * mu(j) - alpha**2 * sigma(j)**2 / 2, or the beta table entry."""
    if agent.beta_table is not None:
        return agent.beta_table(j)
    sig = agent.income_vol(j)
    return agent.rho + agent.alpha * agent.income_drift(j) - 0.5 * agent.alpha**2 * sig * sig


class AgentList:
    """An explicit, finite list of agents."""

    def __init__(self, agents: Sequence[AgentParams]):
        self.agents = tuple(agents)
        self.limit = len(self.agents)

    def __call__(self, i):
        if not 1 <= i <= self.limit:
            raise ModelError(f"agent {i} is not defined (list has {self.limit})", "agents")
        return self.agents[i - 1]


class CyclicAgents:
    """Agent i is template entry (i - 1) mod T."""

    limit = None

    def __init__(self, template: Sequence[AgentParams]):
        if not template:
            raise ModelError("cyclic template is empty", "agents.template")
        self.template = tuple(template)

    def __call__(self, i):
        return self.template[(i - 1) % len(self.template)]


class RuleAgents:
    """Agents from a closed-form rule ``i -> AgentParams``.

    ``beta_row(j)`` may be supplied as a vectorised shortcut returning
    beta_i(j) for i = 1..j; ``aggregate`` uses it when present.
    """

    limit = None

    def __init__(self, rule, beta_row=None, description=""):
        self.rule = rule
        self.beta_row = beta_row
        self.description = description
        self._cache = {}

    def __call__(self, i):
        agent = self._cache.get(i)
        if agent is None:
            agent = self._cache[i] = self.rule(i)
        return agent


@dataclass(frozen=True)
class ModelSpec:
    """Population model: ``n0`` initial agents, birth intensity ``lam(j)``,
    truncation ``m`` (agents born in the truncated system) and an agent
    source total on 1..n0+m."""

    n0: int
    m: int
    lam: LevelTable
    agents: object
    endowments: Optional[tuple] = None
    label: str = ""
    config: dict = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "lam", _as_table(self.lam))
        if int(self.n0) != self.n0 or self.n0 < 1:
            raise ModelError(f"must be an integer >= 1, got {self.n0!r}", "n0")
        if int(self.m) != self.m or self.m < 0:
            raise ModelError(f"must be an integer >= 0, got {self.m!r}", "m")
        declared = self.lam.declared_values
        if declared is not None and np.any(~(declared >= 0)):
            raise ModelError("birth intensities must be >= 0", "lambda")
        limit = getattr(self.agents, "limit", None)
        if limit is not None and limit < self.n0 + self.m:
            raise ModelError(f"{limit} agents given but n0 + m = {self.n0 + self.m}", "agents")
        if self.endowments is not None:
            if len(self.endowments) != self.n0:
                raise ModelError(f"need {self.n0} entries, got {len(self.endowments)}", "endowments")
            object.__setattr__(self, "endowments", tuple(float(e) for e in self.endowments))
        total = sum(self.endowment(i) for i in range(1, self.n0 + 1))
        if abs(total - 1.0) > ENDOWMENT_TOL:
            raise ModelError(f"initial endowments sum to {total!r}, expected 1", "endowments")

    @property
    def j_max(self):
        return self.n0 + self.m

    @property
    def unbounded(self):
        return getattr(self.agents, "limit", None) is None

    def agent(self, i) -> AgentParams:
        return self.agents(i)

    def endowment(self, i):
        if i > self.n0:
            return 0.0
        if self.endowments is not None:
            return self.endowments[i - 1]
        return self.agent(i).endowment

    def lam_at(self, j):
        value = self.lam(j)
        if value < 0:
            raise ModelError(f"lambda({j}) = {value!r} < 0", "lambda")
        return value

    def with_m(self, m):
        return ModelSpec(self.n0, m, self.lam, self.agents, self.endowments, self.label, self.config)

    def with_lambda(self, lam):
        return ModelSpec(self.n0, self.m, _as_table(lam), self.agents, self.endowments,
                         self.label, self.config)


class DerivedAggregates:
    """beta_i(j), alpha_Sigma(j), beta_Sigma(j) for n0 <= j <= j_max.

    Read-only after construction.
    """

    def __init__(self, n0, alpha, beta_rows):
        self.n0 = n0
        self.j_max = n0 + len(beta_rows) - 1
        self.alpha = np.asarray(alpha, dtype=float)
        self.alpha.setflags(write=False)
        self._beta = []
        inv_cum = np.cumsum(1.0 / self.alpha)
        a_sig = np.empty(len(beta_rows))
        b_sig = np.empty(len(beta_rows))
        for pos, row in enumerate(beta_rows):
            j = n0 + pos
            row = np.asarray(row, dtype=float)
            row.setflags(write=False)
            self._beta.append(row)
            a_sig[pos] = 1.0 / inv_cum[j - 1]
            if np.all(row == row[0]):
                b_sig[pos] = row[0]
            else:
                # weighted mean; clip guards the last ulp
                b_sig[pos] = min(max(a_sig[pos] * np.sum(row / self.alpha[:j]), row.min()), row.max())
        self.alpha_sigma = a_sig
        self.beta_sigma = b_sig
        self.beta_lo = float(min(r.min() for r in self._beta))
        self.beta_hi = float(max(r.max() for r in self._beta))
        for arr in (a_sig, b_sig):
            arr.setflags(write=False)

    def beta(self, j):
        """beta_i(j) for i = 1..j."""
        return self._beta[self._pos(j)]

    def alpha_sigma_at(self, j):
        return float(self.alpha_sigma[self._pos(j)])

    def beta_sigma_at(self, j):
        return float(self.beta_sigma[self._pos(j)])

    @property
    def levels(self):
        return np.arange(self.n0, self.j_max + 1)

    def _pos(self, j):
        pos = j - self.n0
        if not 0 <= pos < len(self._beta):
            raise ModelError(f"level {j} outside [{self.n0}, {self.j_max}]")
        return pos


def aggregate(spec, j_max=None):
    """Tabulate the aggregates on n0..j_max and check beta > 0 everywhere."""
    j_max = spec.j_max if j_max is None else j_max
    if j_max < spec.n0:
        raise ModelError(f"j_max={j_max} < n0={spec.n0}")
    limit = getattr(spec.agents, "limit", None)
    if limit is not None and j_max > limit:
        raise ModelError(f"level {j_max} needs {j_max} agents, only {limit} defined", "agents")
    alpha = np.array([spec.agent(i).alpha for i in range(1, j_max + 1)])
    fast = getattr(spec.agents, "beta_row", None)
    rows = []
    for j in range(spec.n0, j_max + 1):
        if fast is not None:
            row = np.asarray(fast(j), dtype=float)
        else:
            row = np.array([compute_beta(spec.agent(i), j) for i in range(1, j + 1)])
        bad = np.flatnonzero(~(row > 0))
        if bad.size:
            i = int(bad[0]) + 1
            raise AssumptionViolation(i, j, float(row[bad[0]]))
        rows.append(row)
    return DerivedAggregates(spec.n0, alpha, rows)
