"""Kohn-Vogelius energy-gap functional, used as a reference formulation."""

from dataclasses import dataclass

import numpy as np

from .core import operators
from .fem import solve_dirichlet


@dataclass(frozen=True, eq=False)
class KvPair:
    uN: np.ndarray  # u = 1 on the fixed boundary, d_n u = lam on the free one
    uD: np.ndarray  # u = 1 on the fixed boundary, u = 0 on the free one


def solve_kv_states(m, lam):
    """Mixed Dirichlet-Neumann state ``uN`` and pure Dirichlet state ``uD``."""
    ops = operators(m)
    uN = solve_dirichlet(ops.K, lam * ops.sigma_load, m.gamma_loop, 1.0)
    nodes = np.concatenate([m.gamma_loop, m.sigma_loop])
    vals = np.concatenate([np.ones(len(m.gamma_loop)), np.zeros(len(m.sigma_loop))])
    uD = solve_dirichlet(ops.K, np.zeros(m.n_vertices), nodes, vals)
    return KvPair(uN, uD)


def kv_cost(m, pair):
    """J_KV = 1/2 int |grad(uN - uD)|^2."""
    d = pair.uN - pair.uD
    return 0.5 * float(d @ (operators(m).K @ d))


def kv_value(m, lam):
    return kv_cost(m, solve_kv_states(m, lam))
