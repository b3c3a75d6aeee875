"""Canonical small linear-Gaussian benchmarks used in tests and demos."""
from __future__ import annotations

import math

import numpy as np

from .scm import (
    LINEAR,
    Dag,
    MechanismPrior,
    Query,
)

# Six-node benchmark: per-edge weight priors (mean, variance), zero intercepts,
# per-node noise standard deviations. Node indices are 0-based.
SIX_NODE_EDGE_PRIORS: dict[tuple[int, int], tuple[float, float]] = {
    (0, 1): (0.1, 1.0),
    (0, 2): (-0.2, 0.25),
    (0, 3): (-0.5, 0.09),
    (1, 2): (1.0, 0.04),
    (1, 3): (0.3, 0.09),
    (2, 4): (0.2, 0.25),
    (2, 5): (0.0, 0.25),
    (3, 4): (-0.5, 0.25),
    (4, 5): (0.0, 0.25),
}

SIX_NODE_SIGMA = (0.2, 0.2, 0.2, 0.2, 0.3, 0.3)


def six_node_graph() -> Dag:
    return Dag.from_edges(6, sorted(SIX_NODE_EDGE_PRIORS))


def six_node_prior() -> MechanismPrior:
    d = 6
    mean = np.zeros((d, d))
    var = np.full((d, d), 1e-12)   # unused slots; keep strictly positive
    for (i, j), (m, v) in SIX_NODE_EDGE_PRIORS.items():
        mean[i, j] = m
        var[i, j] = v
    return MechanismPrior(
        kind=LINEAR,
        theta_mean=mean,
        theta_var=var,
        bias_range=None,
        sigma=np.asarray(SIX_NODE_SIGMA),
    )


def six_node_query() -> Query:
    """Downstream pair (X4, X5) under a deterministic clamp of X2 to 10."""
    return Query(kind="effect", targets=(4, 5), intervene=2, psi_mean=10.0)


def six_node_theta_edges(exclude_parents_of: int | None = 2) -> list[tuple[int, int]]:
    """Canonical edge ordering for weight-vector queries on the benchmark."""
    edges = sorted(SIX_NODE_EDGE_PRIORS)
    if exclude_parents_of is None:
        return edges
    return [(i, j) for (i, j) in edges if j != exclude_parents_of]


def chain_graph(d: int) -> Dag:
    return Dag.from_edges(d, [(i, i + 1) for i in range(d - 1)])


def chain_prior(d: int, theta_var: float = 1.0,
                noise_var: float = 0.1) -> MechanismPrior:
    return MechanismPrior(
        kind=LINEAR,
        theta_mean=0.0,
        theta_var=theta_var,
        bias_range=None,
        sigma=math.sqrt(noise_var),
    )


def one_edge_graph() -> Dag:
    return chain_graph(2)
