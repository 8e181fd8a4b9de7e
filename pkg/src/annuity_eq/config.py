"""YAML run configuration -> ModelSpec / PathConfig / ScenarioSpec.

Schema (all per-level tables accept the table forms below)::

    n0: 2
    m: 1
    lambda: 1.0                       # table
    endowments: [0.5, 0.5]            # optional, length n0, sums to 1
    agents:                           # one of:
      - {alpha: 1.0, beta: 0.4}       #   explicit list (beta table, rho optional)
      - {alpha: 2.0, rho: 0.5, mu: 0.1, sigma: 0.2, income0: 0.0}
    # agents: {template: [...], repeat: cyclic}
    # agents: {scenario: homogeneous, beta: <table>, alpha: 0.5}
    # agents: {scenario: linear_hetero, beta_sigma: <table>, a: 5, variant: green, alpha: 0.5}
    solve: {mode: truncated}          # or {mode: limit, j_max: 15, tol: 1e-10}
    simulation: {horizon: 20, dt: 0.01, seed: 7, paths: 100, deltas: [0.05, -0.05],
                  workers: 1, utility_agents: [1], write_paths: 0}
    scenario: {kind: homogeneous, beta: <table>, a: 0, lambda_list: [1, 5, 10],
               n0: 5, m: 50, alpha: 0.5, seed: 1}

Table forms: a number; a list whose first entry is level ``n0``;
``{start: J, values: [...]}``; ``{formula: linear, slope: s, intercept: c}``;
``{formula: ratio}`` (j / (2j - 1)); ``{formula: periodic, values: [...]}``;
``{formula: random_walk, seed: s, lo: l, hi: h, step: d, levels: n}``.
Lists hold their last value past the end.
"""

import copy
import math

import yaml

from . import experiments as ex
from .model import AgentList, AgentParams, CyclicAgents, LevelTable, ModelError, ModelSpec
from .simulator import PathConfig

__all__ = ["ConfigError", "load_config", "apply_overrides", "parse_table", "build_spec",
           "build_path_config", "build_scenario"]

UTILITY_HORIZON_TOL = 1e-6


class ConfigError(ModelError):
    pass


def load_config(path):
    try:
        with open(path) as fh:
            data = yaml.safe_load(fh)
    except yaml.MarkedYAMLError as exc:
        mark = exc.problem_mark
        where = f"line {mark.line + 1}, column {mark.column + 1}" if mark else "unknown position"
        raise ConfigError(f"{exc.problem} ({where})", str(path)) from None
    except yaml.YAMLError as exc:
        raise ConfigError(str(exc), str(path)) from None
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError("top level must be a mapping", str(path))
    return data


def apply_overrides(cfg, overrides):
    """Apply ``a.b.c=value`` strings; values are parsed as YAML scalars/lists."""
    cfg = copy.deepcopy(cfg)
    for item in overrides or ():
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not key=value", "--set")
        key, raw = item.split("=", 1)
        try:
            value = yaml.safe_load(raw)
        except yaml.YAMLError:
            raise ConfigError(f"cannot parse value {raw!r}", key) from None
        node = cfg
        parts = key.strip().split(".")
        for part in parts[:-1]:
            if isinstance(node, list):
                node = node[int(part)]
                continue
            node = node.setdefault(part, {})
            if not isinstance(node, (dict, list)):
                raise ConfigError("cannot descend into a scalar", key)
        last = parts[-1]
        if isinstance(node, list):
            node[int(last)] = value
        else:
            node[last] = value
    return cfg


def _num(value, field, lo=None, integer=False, strict=False):
    if isinstance(value, str):
        # YAML 1.1 reads "1e-10" (no dot) as a string
        try:
            value = float(value)
        except ValueError:
            pass
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"expected a number, got {value!r}", field)
    if integer and int(value) != value:
        raise ConfigError(f"expected an integer, got {value!r}", field)
    if lo is not None and (value <= lo if strict else value < lo):
        raise ConfigError(f"must be {'>' if strict else '>='} {lo}, got {value!r}", field)
    return int(value) if integer else float(value)


def parse_table(value, field, n0=1):
    if isinstance(value, LevelTable):
        return value
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        return LevelTable(float(value))
    if isinstance(value, list):
        if not value:
            raise ConfigError("empty table", field)
        return LevelTable([_num(v, f"{field}[{n}]") for n, v in enumerate(value)], start=n0)
    if isinstance(value, dict):
        if "values" in value and "formula" not in value:
            start = _num(value.get("start", n0), f"{field}.start", integer=True)
            return LevelTable([_num(v, f"{field}.values") for v in value["values"]], start=start)
        formula = value.get("formula")
        if formula == "linear":
            s = _num(value.get("slope", 0.0), f"{field}.slope")
            c = _num(value.get("intercept", 0.0), f"{field}.intercept")
            return LevelTable(lambda j: c + s * j)
        if formula == "ratio":
            return LevelTable(lambda j: j / (2.0 * j - 1.0))
        if formula == "periodic":
            vals = [_num(v, f"{field}.values") for v in value.get("values", [])]
            if not vals:
                raise ConfigError("periodic table needs values", field)
            start = _num(value.get("start", n0), f"{field}.start", integer=True)
            return LevelTable(lambda j: vals[(j - start) % len(vals)])
        if formula == "random_walk":
            lv = _num(value.get("levels", 51), f"{field}.levels", lo=1, integer=True)
            vals = ex.random_walk_betas(
                _num(value.get("seed", 0), f"{field}.seed", integer=True), lv,
                _num(value.get("lo"), f"{field}.lo", lo=0, strict=True),
                _num(value.get("hi"), f"{field}.hi", lo=0, strict=True),
                _num(value.get("step", 0.1), f"{field}.step", lo=0))
            return LevelTable(vals, start=n0)
        raise ConfigError(f"unknown table form {value!r}", field)
    raise ConfigError(f"expected a number, list or table mapping, got {value!r}", field)


def _agent(d, field, n0):
    if not isinstance(d, dict):
        raise ConfigError("agent must be a mapping", field)
    known = {"alpha", "rho", "beta", "mu", "sigma", "endowment", "income0"}
    extra = set(d) - known
    if extra:
        raise ConfigError(f"unknown keys {sorted(extra)}", field)
    if "alpha" not in d:
        raise ConfigError("missing", f"{field}.alpha")
    alpha = _num(d["alpha"], f"{field}.alpha", lo=0, strict=True)
    kw = {"endowment": _num(d.get("endowment", 0.0), f"{field}.endowment"),
          "initial_income": _num(d.get("income0", 0.0), f"{field}.income0")}
    if "beta" in d:
        if "mu" in d or "sigma" in d:
            raise ConfigError("give beta or (mu, sigma), not both", field)
        beta = parse_table(d["beta"], f"{field}.beta", n0)
        rho = d.get("rho", beta(n0))
        return AgentParams(rho=_num(rho, f"{field}.rho", lo=0, strict=True), alpha=alpha,
                           beta_table=beta, **kw)
    for key in ("rho", "mu", "sigma"):
        if key not in d:
            raise ConfigError("missing", f"{field}.{key}")
    try:
        return AgentParams(rho=_num(d["rho"], f"{field}.rho", lo=0, strict=True), alpha=alpha,
                           income_drift=parse_table(d["mu"], f"{field}.mu", n0),
                           income_vol=parse_table(d["sigma"], f"{field}.sigma", n0), **kw)
    except ConfigError:
        raise
    except ModelError as exc:
        raise ConfigError(str(exc), field) from None


def build_spec(cfg):
    if "n0" not in cfg:
        _missing("n0")
    n0 = _num(cfg["n0"], "n0", lo=1, integer=True)
    m = _num(cfg.get("m", 0), "m", lo=0, integer=True)
    lam = parse_table(cfg.get("lambda", 1.0), "lambda", n0)
    agents_cfg = cfg.get("agents")
    if agents_cfg is None:
        _missing("agents")

    endow = cfg.get("endowments")
    if endow is not None:
        if not isinstance(endow, list):
            raise ConfigError("must be a list", "endowments")
        endow = tuple(_num(e, f"endowments[{n}]") for n, e in enumerate(endow))

    if isinstance(agents_cfg, list):
        source = AgentList([_agent(a, f"agents[{n}]", n0) for n, a in enumerate(agents_cfg)])
        if endow is None and all("endowment" not in a for a in agents_cfg[:n0]):
            endow = (1.0 / n0,) * n0
    elif isinstance(agents_cfg, dict) and "template" in agents_cfg:
        if agents_cfg.get("repeat", "cyclic") != "cyclic":
            raise ConfigError("only 'cyclic' repetition is supported", "agents.repeat")
        tmpl = agents_cfg["template"]
        if not isinstance(tmpl, list) or not tmpl:
            raise ConfigError("must be a non-empty list", "agents.template")
        source = CyclicAgents([_agent(a, f"agents.template[{n}]", n0) for n, a in enumerate(tmpl)])
        if endow is None:
            endow = (1.0 / n0,) * n0
    elif isinstance(agents_cfg, dict) and "scenario" in agents_cfg:
        spec = _scenario_agents(agents_cfg, n0, m, lam)
        return ModelSpec(n0, m, lam, spec.agents, spec.endowments if endow is None else endow,
                         spec.label, cfg)
    else:
        raise ConfigError("expected a list, {template: ...} or {scenario: ...}", "agents")
    return ModelSpec(n0, m, lam, source, endow, cfg.get("label", ""), cfg)


def _missing(field):
    raise ConfigError("missing required field", field)


def _scenario_agents(d, n0, m, lam):
    kind = d["scenario"]
    alpha = _num(d.get("alpha", 0.5), "agents.alpha", lo=0, strict=True)
    if kind == "homogeneous":
        if "beta" not in d:
            _missing("agents.beta")
        return ex.homogeneous_spec(parse_table(d["beta"], "agents.beta", n0), n0, m, lam, alpha)
    if kind == "linear_hetero":
        if "beta_sigma" not in d:
            _missing("agents.beta_sigma")
        bs = parse_table(d["beta_sigma"], "agents.beta_sigma", n0)
        return ex.hetero_spec(bs, _num(d.get("a", 0.0), "agents.a", lo=0),
                              d.get("variant", "orange"), n0, m, lam, alpha)
    raise ConfigError(f"unknown scenario {kind!r}", "agents.scenario")


def build_path_config(cfg, spec):
    sim = cfg.get("simulation") or {}
    if not isinstance(sim, dict):
        raise ConfigError("must be a mapping", "simulation")
    if "horizon" in sim:
        horizon = _num(sim["horizon"], "simulation.horizon", lo=0, strict=True)
    else:
        rho_min = min(spec.agent(i).rho for i in range(1, spec.n0 + 1))
        horizon = math.log(1.0 / UTILITY_HORIZON_TOL) / rho_min
    deltas = sim.get("deltas", [0.05, -0.05, 0.2, -0.2])
    if not isinstance(deltas, list):
        raise ConfigError("must be a list", "simulation.deltas")
    return PathConfig(
        horizon=horizon,
        dt=_num(sim.get("dt", 0.01), "simulation.dt", lo=0, strict=True),
        seed=_num(sim.get("seed", 0), "simulation.seed", integer=True),
        num_paths=_num(sim.get("paths", 100), "simulation.paths", lo=1, integer=True),
        perturbation_deltas=tuple(_num(x, "simulation.deltas") for x in deltas),
        workers=_num(sim.get("workers", 1), "simulation.workers", lo=1, integer=True),
    )


def build_scenario(cfg, which):
    """ScenarioSpec for figure 1 or 2; the built-in default when no
    ``scenario`` section is present."""
    d = cfg.get("scenario")
    if not d:
        return ex.default_fig1_scenario() if which == 1 else ex.default_fig2_scenario()
    if not isinstance(d, dict):
        raise ConfigError("must be a mapping", "scenario")
    base = ex.default_fig1_scenario() if which == 1 else ex.default_fig2_scenario()
    n0 = _num(d.get("n0", base.n0), "scenario.n0", lo=1, integer=True)
    m = _num(d.get("m", base.m), "scenario.m", lo=1, integer=True)
    beta = parse_table(d["beta"], "scenario.beta", n0) if "beta" in d else base.beta_sequence
    lams = d.get("lambda_list", list(base.lambda_list))
    if not isinstance(lams, list) or not lams:
        raise ConfigError("must be a non-empty list", "scenario.lambda_list")
    seed = d.get("seed", base.seed)
    if "beta" not in d and seed != base.seed:
        base = ex.default_fig1_scenario(seed) if which == 1 else ex.default_fig2_scenario(seed)
        beta = base.beta_sequence
    return ex.ScenarioSpec(
        d.get("kind", base.kind), beta,
        _num(d.get("a", base.a), "scenario.a", lo=0),
        tuple(_num(v, "scenario.lambda_list", lo=0) for v in lams),
        n0, m, _num(d.get("alpha", base.alpha), "scenario.alpha", lo=0, strict=True), seed)
