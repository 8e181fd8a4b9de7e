import numpy as np

from annuity_eq.model import AgentParams, CyclicAgents, ModelSpec


def hetero_spec(n0=8, m=200, lam=2.0, seed=0):
    rng = np.random.default_rng(seed)
    tmpl = [AgentParams(rho=b, alpha=a, beta_table=b)
            for a, b in zip(rng.uniform(0.25, 4.0, 7), rng.uniform(0.2, 1.5, 7))]
    return ModelSpec(n0, m, lam, CyclicAgents(tmpl), endowments=(1.0 / n0,) * n0)
