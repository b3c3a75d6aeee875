"""Structural causal models: graphs, priors, mechanisms, interventions.

Conventions used throughout the package:

* adjacency is row-to-column: ``edges[i, j]`` means an edge i -> j;
* interventions are hard: clamped nodes take their set value exactly and
  their structural equation is severed;
* all sampling takes an explicit ``numpy.random.Generator``.
"""
from __future__ import annotations

import math
import os
from dataclasses import dataclass, field

import numpy as np


class CycleError(ValueError):
    """Raised when an adjacency matrix contains a directed cycle."""

    def __init__(self, back_edge: tuple[int, int]):
        self.back_edge = back_edge
        super().__init__(
            f"adjacency contains a cycle; back edge {back_edge[0]} -> {back_edge[1]}"
        )


def _find_cycle_edge(edges: np.ndarray, remaining: list[int]) -> tuple[int, int]:
    """Locate one edge lying on a directed cycle among `remaining` nodes."""
    rem = set(remaining)
    color: dict[int, int] = {}

    def dfs(u: int) -> tuple[int, int] | None:
        color[u] = 1
        for v in np.flatnonzero(edges[u]):
            v = int(v)
            if v not in rem:
                continue
            if color.get(v, 0) == 1:
                return (u, v)
            if color.get(v, 0) == 0:
                found = dfs(v)
                if found:
                    return found
        color[u] = 2
        return None

    for u in remaining:
        if color.get(u, 0) == 0:
            found = dfs(u)
            if found:
                return found
    return (remaining[0], remaining[0])


def topological_order(edges: np.ndarray) -> tuple[int, ...]:
    """Kahn's algorithm; raises :class:`CycleError` naming a back edge."""
    d = edges.shape[0]
    indeg = edges.sum(axis=0).astype(int)
    ready = sorted(int(i) for i in np.flatnonzero(indeg == 0))
    order: list[int] = []
    indeg = indeg.copy()
    while ready:
        u = ready.pop(0)
        order.append(u)
        for v in np.flatnonzero(edges[u]):
            v = int(v)
            indeg[v] -= 1
            if indeg[v] == 0:
                ready.append(v)
    if len(order) != d:
        remaining = [i for i in range(d) if i not in set(order)]
        raise CycleError(_find_cycle_edge(edges, remaining))
    return tuple(order)


@dataclass(frozen=True)
class Dag:
    """Directed acyclic graph over node indices 0..d-1."""

    d: int
    edges: np.ndarray                 # (d, d) bool, edges[i, j]: i -> j
    topo_order: tuple[int, ...] = field(default=())

    def __post_init__(self):
        edges = np.asarray(self.edges, dtype=bool)
        if edges.shape != (self.d, self.d):
            raise ValueError(f"adjacency must be ({self.d}, {self.d})")
        if edges.diagonal().any():
            raise ValueError("self-loops are not allowed")
        object.__setattr__(self, "edges", edges)
        order = self.topo_order or topological_order(edges)
        if len(order) != self.d or set(order) != set(range(self.d)):
            raise ValueError("topo_order must be a permutation of the nodes")
        pos = {n: k for k, n in enumerate(order)}
        for i, j in zip(*np.nonzero(edges)):
            if pos[int(i)] >= pos[int(j)]:
                raise ValueError(f"topo_order inconsistent with edge {i} -> {j}")
        object.__setattr__(self, "topo_order", tuple(order))

    @classmethod
    def from_edges(cls, d: int, edge_list) -> "Dag":
        edges = np.zeros((d, d), dtype=bool)
        for i, j in edge_list:
            edges[i, j] = True
        return cls(d=d, edges=edges)

    def parents(self, node: int) -> tuple[int, ...]:
        return tuple(int(i) for i in np.flatnonzero(self.edges[:, node]))

    def n_edges(self) -> int:
        return int(self.edges.sum())

    def descendants(self, nodes) -> set[int]:
        """All nodes reachable from `nodes` (excluding the sources themselves
        unless reachable through a cycle-free path, which cannot happen)."""
        frontier = list(nodes)
        seen: set[int] = set()
        while frontier:
            u = frontier.pop()
            for v in np.flatnonzero(self.edges[u]):
                v = int(v)
                if v not in seen:
                    seen.add(v)
                    frontier.append(v)
        return seen


# -- graph priors --------------------------------------------------------------

@dataclass(frozen=True)
class ErdosRenyi:
    """Independent edges with the count calibrated to expected_degree·d/2."""

    expected_degree: float

    def __post_init__(self):
        if self.expected_degree <= 0:
            raise ValueError("expected_degree must be positive")


@dataclass(frozen=True)
class ScaleFree:
    """Preferential attachment with `m` links per arriving node."""

    m: int = 1

    def __post_init__(self):
        if self.m < 1:
            raise ValueError("attachment count m must be >= 1")


@dataclass(frozen=True)
class FixedGraph:
    dag: Dag


@dataclass(frozen=True)
class FromFile:
    path: str


GraphPrior = ErdosRenyi | ScaleFree | FixedGraph | FromFile


def sample_dag(prior: GraphPrior, d: int, rng: np.random.Generator) -> Dag:
    """Draw a DAG over `d` nodes from the given structural prior."""
    if d < 2:
        raise ValueError("need at least two nodes")
    if isinstance(prior, FixedGraph):
        if prior.dag.d != d:
            raise ValueError(f"fixed graph has d={prior.dag.d}, requested {d}")
        return prior.dag
    if isinstance(prior, FromFile):
        dag = load_adjacency(prior.path)
        if dag.d != d:
            raise ValueError(f"graph file has d={dag.d}, requested {d}")
        return dag
    if isinstance(prior, ErdosRenyi):
        # p * C(d,2) = expected_degree * d / 2, capped at 1
        p = min(1.0, prior.expected_degree / (d - 1))
        lower = np.tril(rng.random((d, d)) < p, k=-1)
        perm = rng.permutation(d)
        edges = np.zeros((d, d), dtype=bool)
        src, dst = np.nonzero(lower)
        edges[perm[src], perm[dst]] = True
        return Dag(d=d, edges=edges)
    if isinstance(prior, ScaleFree):
        return _sample_scale_free(d, prior.m, rng)
    raise TypeError(f"unsupported graph prior: {prior!r}")


def _sample_scale_free(d: int, m: int, rng: np.random.Generator) -> Dag:
    """Barabási–Albert growth; edges point from earlier to later arrivals,
    which makes the graph acyclic by construction."""
    m = min(m, d - 1)
    edges = np.zeros((d, d), dtype=bool)
    # endpoints repeated by degree drive the preferential choice
    repeated: list[int] = list(range(m))
    for new in range(m, d):
        existing = list(range(new))
        targets: set[int] = set()
        while len(targets) < min(m, len(existing)):
            if repeated:
                pick = repeated[rng.integers(len(repeated))]
            else:
                pick = existing[rng.integers(len(existing))]
            targets.add(int(pick))
        for t in targets:
            edges[t, new] = True
            repeated.extend([t, new])
    perm = rng.permutation(d)
    relabeled = np.zeros_like(edges)
    src, dst = np.nonzero(edges)
    relabeled[perm[src], perm[dst]] = True
    return Dag(d=d, edges=relabeled)


# -- mechanisms -----------------------------------------------------------------

LINEAR = "linear_gaussian"
MLP = "mlp_gaussian"

DEFAULT_NOISE_VAR = 0.1           # shared additive-noise variance
DEFAULT_THETA_VAR = 2.0           # linear weight prior variance
DEFAULT_MLP_HIDDEN = (8, 8)       # feedforward mechanism layout


@dataclass(frozen=True)
class MechanismPrior:
    """Distribution over per-node mechanism parameters.

    ``theta_mean``/``theta_var`` may be scalars or (d, d) arrays keyed by
    edge; ``bias_range`` of None fixes all intercepts at zero; ``sigma`` is
    a scalar or per-node vector of noise standard deviations. Setting
    ``noise_inverse_gamma`` to (shape, scale) replaces the fixed noise with
    per-node variances drawn from an inverse-gamma law — an evaluation-time
    switch for studying robustness to heteroskedastic observation noise.
    """

    kind: str = LINEAR
    theta_mean: float | np.ndarray = 0.0
    theta_var: float | np.ndarray = DEFAULT_THETA_VAR
    bias_range: tuple[float, float] | None = (-1.0, 1.0)
    sigma: float | np.ndarray = math.sqrt(DEFAULT_NOISE_VAR)
    hidden: tuple[int, ...] = DEFAULT_MLP_HIDDEN
    noise_inverse_gamma: tuple[float, float] | None = None

    def sigma_vector(self, d: int) -> np.ndarray:
        return np.broadcast_to(np.asarray(self.sigma, dtype=float), (d,)).copy()

    def draw_sigma(self, d: int, rng: np.random.Generator) -> np.ndarray:
        if self.noise_inverse_gamma is None:
            return self.sigma_vector(d)
        shape, scale = self.noise_inverse_gamma
        variances = scale / rng.gamma(shape, 1.0, size=d)
        return np.sqrt(variances)


@dataclass(frozen=True)
class Mechanism:
    """Sampled structural-equation parameters for every node."""

    kind: str
    weights: tuple                 # linear: per-node (w_parents,); mlp: layer tuples
    bias: np.ndarray               # (d,)
    sigma: np.ndarray              # (d,) noise standard deviations

    def weight_matrix(self, dag: Dag) -> np.ndarray:
        """Dense (d, d) matrix W with W[i, j] the weight of edge i -> j."""
        if self.kind != LINEAR:
            raise ValueError("weight_matrix is defined for linear mechanisms only")
        w = np.zeros((dag.d, dag.d))
        for j in range(dag.d):
            pa = dag.parents(j)
            if pa:
                w[list(pa), j] = self.weights[j]
        return w


def sample_mechanism(dag: Dag, kind: str, rng: np.random.Generator,
                     prior: MechanismPrior | None = None) -> Mechanism:
    """Draw mechanism parameters for every node from the prior."""
    if prior is None:
        prior = MechanismPrior(kind=kind)
    elif prior.kind != kind:
        raise ValueError(f"prior kind {prior.kind!r} does not match {kind!r}")
    d = dag.d
    sigma = prior.draw_sigma(d, rng)
    if np.any(sigma <= 0):
        raise ValueError("noise standard deviations must be positive")
    if prior.bias_range is None:
        bias = np.zeros(d)
    else:
        lo, hi = prior.bias_range
        bias = rng.uniform(lo, hi, size=d)
    if kind == LINEAR:
        mean = np.broadcast_to(np.asarray(prior.theta_mean, dtype=float), (d, d))
        var = np.broadcast_to(np.asarray(prior.theta_var, dtype=float), (d, d))
        weights = []
        for j in range(d):
            pa = list(dag.parents(j))
            w = mean[pa, j] + np.sqrt(var[pa, j]) * rng.standard_normal(len(pa))
            weights.append(w)
        return Mechanism(kind=LINEAR, weights=tuple(weights), bias=bias, sigma=sigma)
    if kind == MLP:
        weights = []
        for j in range(d):
            k = len(dag.parents(j))
            dims = (k,) + tuple(prior.hidden) + (1,)
            layers = tuple(
                (rng.standard_normal((dims[a], dims[a + 1])),
                 rng.standard_normal(dims[a + 1]))
                for a in range(len(dims) - 1)
            )
            weights.append(layers)
        return Mechanism(kind=MLP, weights=tuple(weights), bias=bias, sigma=sigma)
    raise ValueError(f"unsupported mechanism kind: {kind!r}")


@dataclass(frozen=True)
class Scm:
    """A graph plus its mechanism: the full generative model."""

    dag: Dag
    mechanism: Mechanism


# -- interventions and histories -------------------------------------------------

@dataclass(frozen=True)
class Design:
    """One hard intervention: clamp the target nodes to the given values."""

    targets: tuple[int, ...]
    values: tuple[float, ...]

    def __post_init__(self):
        targets = tuple(int(t) for t in self.targets)
        values = tuple(float(v) for v in self.values)
        if not targets:
            raise ValueError("a design needs at least one target")
        if len(targets) != len(values):
            raise ValueError("each target needs exactly one clamp value")
        if len(set(targets)) != len(targets):
            raise ValueError("duplicate intervention targets")
        object.__setattr__(self, "targets", targets)
        object.__setattr__(self, "values", values)

    def validate_for(self, d: int) -> None:
        for t in self.targets:
            if not 0 <= t < d:
                raise ValueError(f"target {t} out of range for d={d}")


@dataclass(frozen=True)
class History:
    """Ordered record of performed designs and their outcome batches."""

    steps: tuple[tuple[Design, np.ndarray], ...] = ()

    def __post_init__(self):
        checked = []
        for design, batch in self.steps:
            batch = np.asarray(batch, dtype=float)
            if batch.ndim != 2:
                raise ValueError("each outcome batch must be 2-D (rows, d)")
            for t, v in zip(design.targets, design.values):
                if not np.all(batch[:, t] == v):
                    raise ValueError(
                        f"outcome rows disagree with clamp on node {t}"
                    )
            checked.append((design, batch))
        object.__setattr__(self, "steps", tuple(checked))

    def __len__(self) -> int:
        return len(self.steps)

    def append(self, design: Design, batch: np.ndarray) -> "History":
        return History(steps=self.steps + ((design, np.asarray(batch, dtype=float)),))

    def as_array(self, d: int) -> np.ndarray:
        """Encode as (rows, d, 2): values channel plus intervention mask.

        An empty history encodes as a single all-zero pad row.
        """
        if not self.steps:
            return np.zeros((1, d, 2))
        rows = []
        for design, batch in self.steps:
            mask = np.zeros(d)
            mask[list(design.targets)] = 1.0
            block = np.stack(
                [batch, np.broadcast_to(mask, batch.shape)], axis=-1
            )
            rows.append(block)
        return np.concatenate(rows, axis=0)


# -- queries ---------------------------------------------------------------------

EFFECT = "effect"
GRAPH = "graph"


@dataclass(frozen=True)
class Query:
    """Quantity the experimenter wants to learn.

    ``effect`` queries ask for the target-node values under a clamp of node
    ``intervene`` drawn from N(psi_mean, psi_std^2); ``graph`` queries ask
    for the structure itself.
    """

    kind: str
    targets: tuple[int, ...] = ()
    intervene: int | None = None
    psi_mean: float = 0.0
    psi_std: float = 0.0

    def __post_init__(self):
        if self.kind not in (EFFECT, GRAPH):
            raise ValueError(f"unknown query kind: {self.kind!r}")
        if self.kind == EFFECT:
            targets = tuple(int(t) for t in self.targets)
            if not targets:
                raise ValueError("effect queries need target nodes")
            if self.intervene is None:
                raise ValueError("effect queries need an intervention node")
            if self.intervene in targets:
                raise ValueError("query targets must be disjoint from the clamped node")
            if self.psi_std < 0:
                raise ValueError("psi_std must be nonnegative")
            object.__setattr__(self, "targets", targets)

    def sample_psi(self, rng: np.random.Generator) -> float:
        return float(self.psi_mean + self.psi_std * rng.standard_normal())

    @property
    def n_z(self) -> int:
        if self.kind != EFFECT:
            raise ValueError("n_z applies to effect queries")
        return len(self.targets)


# -- sampling ---------------------------------------------------------------------

def _node_value(scm: Scm, node: int, x: np.ndarray,
                noise: np.ndarray) -> np.ndarray:
    pa = list(scm.dag.parents(node))
    mech = scm.mechanism
    if mech.kind == LINEAR:
        out = x[:, pa] @ mech.weights[node] if pa else 0.0
        return out + mech.bias[node] + noise
    h = x[:, pa]
    layers = mech.weights[node]
    for k, (w, b) in enumerate(layers):
        h = h @ w + b
        if k < len(layers) - 1:
            h = np.maximum(h, 0.0)
    return h[:, 0] + mech.bias[node] + noise


def simulate(scm: Scm, design: Design | None, n: int,
             rng: np.random.Generator) -> np.ndarray:
    """Ancestral sampling of n rows, honoring a hard intervention if given."""
    d = scm.dag.d
    if design is not None:
        design.validate_for(d)
    clamp = dict(zip(design.targets, design.values)) if design else {}
    x = np.zeros((n, d))
    eps = rng.standard_normal((n, d)) * scm.mechanism.sigma
    for node in scm.dag.topo_order:
        if node in clamp:
            x[:, node] = clamp[node]
        else:
            x[:, node] = _node_value(scm, node, x, eps[:, node])
    return x


def sample_query_value(scm: Scm, query: Query, psi: float,
                       rng: np.random.Generator) -> np.ndarray:
    """One draw of the query targets under do(intervene = psi)."""
    if query.kind != EFFECT:
        raise ValueError("graph queries read the DAG directly; nothing to sample")
    design = Design(targets=(query.intervene,), values=(psi,))
    row = simulate(scm, design, 1, rng)[0]
    return row[list(query.targets)]


# -- adjacency ingestion ------------------------------------------------------------

def load_adjacency(path: str) -> Dag:
    """Read a DAG from a 0/1 CSV matrix or an "i j" edge-list text file."""
    if not os.path.exists(path):
        raise FileNotFoundError(path)
    with open(path) as fh:
        lines = [ln.strip() for ln in fh if ln.strip() and not ln.startswith("#")]
    if not lines:
        raise ValueError(f"{path}: empty adjacency file")
    if "," in lines[0]:
        rows = [[cell.strip() for cell in ln.split(",")] for ln in lines]
        d = len(rows)
        mat = np.zeros((d, d), dtype=bool)
        for i, row in enumerate(rows):
            if len(row) != d:
                raise ValueError(f"{path}: row {i} has {len(row)} columns, expected {d}")
            for j, cell in enumerate(row):
                if cell not in ("0", "1"):
                    raise ValueError(f"{path}: entry ({i},{j}) is {cell!r}, expected 0/1")
                mat[i, j] = cell == "1"
    else:
        pairs = []
        for k, ln in enumerate(lines):
            parts = ln.split()
            if len(parts) != 2:
                raise ValueError(f"{path}: line {k + 1} is not an 'i j' pair")
            pairs.append((int(parts[0]), int(parts[1])))
        d = max(max(i, j) for i, j in pairs) + 1
        mat = np.zeros((d, d), dtype=bool)
        for i, j in pairs:
            if i == j:
                raise ValueError(f"{path}: self-loop {i} -> {j}")
            mat[i, j] = True
    if mat.diagonal().any():
        node = int(np.flatnonzero(mat.diagonal())[0])
        raise ValueError(f"{path}: self-loop on node {node}")
    try:
        return Dag(d=mat.shape[0], edges=mat)
    except CycleError as err:
        i, j = err.back_edge
        raise ValueError(
            f"{path}: adjacency is cyclic; back edge {i} -> {j}"
        ) from err
