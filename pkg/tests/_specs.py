"""Spec builders shared by the test modules."""

import numpy as np

from annuity_eq.model import AgentList, AgentParams, CyclicAgents, LevelTable, ModelSpec


def random_hetero_spec(rng, max_n0=8, max_m=40, max_lam=10.0):
    """Heterogeneous spec with beta in [0.2, 1.5], alpha in [0.25, 4]."""
    n0 = int(rng.integers(1, max_n0 + 1))
    m = int(rng.integers(0, max_m + 1))
    lam = float(rng.uniform(0.0, max_lam))
    n = n0 + m
    agents = []
    for _ in range(n):
        betas = rng.uniform(0.2, 1.5, size=n + 1)
        agents.append(AgentParams(rho=float(betas[0]), alpha=float(rng.uniform(0.25, 4.0)),
                                  beta_table=LevelTable(betas, start=1)))
    endow = rng.dirichlet(np.ones(n0))
    endow[-1] = 1.0 - endow[:-1].sum()
    return ModelSpec(n0, m, lam, AgentList(agents), endowments=tuple(endow))


def o1_spec():
    tmpl = [AgentParams(rho=0.4, alpha=1.0, beta_table=0.4),
            AgentParams(rho=0.6, alpha=2.0, beta_table=0.6)]
    return ModelSpec(2, 1, 1.0, CyclicAgents(tmpl), endowments=(0.5, 0.5), label="o1")
