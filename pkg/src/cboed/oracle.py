"""Exact machinery for linear-Gaussian models on a known graph.

Provides closed-form interventional laws, conjugate per-node posteriors over
mechanism weights under known noise, Gaussian-mixture posterior-predictive
densities, and a Monte Carlo estimate of the stage-wise information gain on
an effect query.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .scm import (
    EFFECT,
    LINEAR,
    Dag,
    Design,
    History,
    MechanismPrior,
    Query,
    Scm,
)

_LOG_2PI = math.log(2.0 * math.pi)
CONDITION_WARN = 1e8


class UnsupportedMechanismError(TypeError):
    """The oracle only covers linear-Gaussian mechanisms."""


@dataclass(frozen=True)
class GaussianLaw:
    """Mean and covariance of a selected set of nodes."""

    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        mean = np.atleast_1d(np.asarray(self.mean, dtype=float))
        cov = np.atleast_2d(np.asarray(self.cov, dtype=float))
        if cov.shape != (mean.size, mean.size):
            raise ValueError("covariance shape does not match the mean")
        if not np.allclose(cov, cov.T, atol=1e-9):
            raise ValueError("covariance must be symmetric")
        eigs = np.linalg.eigvalsh((cov + cov.T) / 2.0)
        if eigs.min() < -1e-10:
            raise ValueError(f"covariance has negative eigenvalue {eigs.min():.3e}")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", (cov + cov.T) / 2.0)

    def log_prob(self, z: np.ndarray) -> float:
        z = np.atleast_1d(np.asarray(z, dtype=float))
        k = self.mean.size
        cov = self.cov + 1e-12 * np.eye(k)
        diff = z - self.mean
        sign, logdet = np.linalg.slogdet(cov)
        quad = diff @ np.linalg.solve(cov, diff)
        return float(-0.5 * (quad + logdet + k * _LOG_2PI))

    def sample(self, rng: np.random.Generator, n: int = 1) -> np.ndarray:
        k = self.mean.size
        chol = np.linalg.cholesky(self.cov + 1e-12 * np.eye(k))
        return self.mean + rng.standard_normal((n, k)) @ chol.T


def _structural_system(weight: np.ndarray, bias: np.ndarray, sigma: np.ndarray,
                       design: Design | None) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Return (A, c, var) of the clamped system X = A X + c + noise."""
    a = weight.T.copy()
    c = np.asarray(bias, dtype=float).copy()
    var = np.asarray(sigma, dtype=float) ** 2
    var = var.copy()
    if design is not None:
        idx = list(design.targets)
        a[idx, :] = 0.0
        c[idx] = design.values
        var[idx] = 0.0
    return a, c, var


def interventional_law(scm: Scm, design: Design | None,
                       nodes) -> GaussianLaw:
    """Exact joint law of `nodes` under a hard intervention."""
    if scm.mechanism.kind != LINEAR:
        raise UnsupportedMechanismError(
            f"interventional_law needs a linear mechanism, got {scm.mechanism.kind!r}"
        )
    if design is not None:
        design.validate_for(scm.dag.d)
    d = scm.dag.d
    weight = scm.mechanism.weight_matrix(scm.dag)
    a, c, var = _structural_system(weight, scm.mechanism.bias,
                                   scm.mechanism.sigma, design)
    m = np.eye(d) - a
    cond = np.linalg.cond(m)
    if cond > CONDITION_WARN:
        warnings.warn(f"ill-conditioned structural system (cond ~ {cond:.2e})")
    f = np.linalg.solve(m, np.eye(d))
    mean_full = f @ c
    cov_full = (f * var) @ f.T
    sel = list(nodes)
    return GaussianLaw(mean=mean_full[sel], cov=cov_full[np.ix_(sel, sel)])


def _laws_for_weight_batch(dag: Dag, weights: np.ndarray, bias: np.ndarray,
                           sigma: np.ndarray, design: Design,
                           nodes) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized interventional laws for a batch of weight matrices.

    weights: (m, d, d); returns means (m, k) and covariances (m, k, k).
    """
    m_batch, d, _ = weights.shape
    a = weights.swapaxes(-1, -2).copy()
    idx = list(design.targets)
    a[:, idx, :] = 0.0
    c = np.broadcast_to(np.asarray(bias, dtype=float), (m_batch, d)).copy()
    c[:, idx] = design.values
    var = np.broadcast_to(np.asarray(sigma, dtype=float) ** 2, (m_batch, d)).copy()
    var[:, idx] = 0.0
    f = np.linalg.inv(np.eye(d) - a)
    means = np.einsum("mij,mj->mi", f, c)
    covs = np.einsum("mij,mj,mkj->mik", f, var, f)
    sel = np.asarray(list(nodes))
    return means[:, sel], covs[:, sel[:, None], sel[None, :]]


def effect_laws(dag: Dag, weights: np.ndarray, bias: np.ndarray,
                sigma: np.ndarray, query: Query) -> tuple[np.ndarray, np.ndarray]:
    """Per-model laws of an effect query, marginalized exactly over psi.

    The clamp value enters the mean linearly and leaves the covariance
    untouched, so a Gaussian psi folds into each component in closed form.
    """
    if query.kind != EFFECT:
        raise ValueError("effect_laws needs an effect query")
    design = Design(targets=(query.intervene,), values=(query.psi_mean,))
    means, covs = _laws_for_weight_batch(dag, weights, bias, sigma, design,
                                         query.targets)
    if query.psi_std > 0:
        m_batch, d, _ = weights.shape
        a = weights.swapaxes(-1, -2).copy()
        a[:, query.intervene, :] = 0.0
        f = np.linalg.inv(np.eye(d) - a)
        slope = f[:, list(query.targets), query.intervene]     # (m, k)
        covs = covs + (query.psi_std ** 2) * np.einsum(
            "mi,mj->mij", slope, slope
        )
    return means, covs


class GaussianMixtureLaw:
    """Equal-weight mixture of Gaussians; the density estimator for
    posterior-predictive laws p(z | history)."""

    def __init__(self, means: np.ndarray, covs: np.ndarray):
        self.means = np.asarray(means, dtype=float)
        covs = np.asarray(covs, dtype=float)
        self.covs = covs + 1e-12 * np.eye(covs.shape[-1])
        self._inv = np.linalg.inv(self.covs)
        sign, self._logdet = np.linalg.slogdet(self.covs)
        if np.any(sign <= 0):
            raise ValueError("mixture component covariance not positive-definite")

    @property
    def n_components(self) -> int:
        return self.means.shape[0]

    def log_prob(self, z: np.ndarray) -> np.ndarray:
        z = np.atleast_2d(np.asarray(z, dtype=float))            # (n, k)
        k = self.means.shape[-1]
        diff = z[:, None, :] - self.means[None, :, :]            # (n, m, k)
        quad = np.einsum("nmi,mij,nmj->nm", diff, self._inv, diff)
        comp = -0.5 * (quad + self._logdet[None, :] + k * _LOG_2PI)
        return logsumexp(comp, axis=1) - math.log(self.n_components)

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        idx = rng.integers(self.n_components, size=n)
        chols = np.linalg.cholesky(self.covs)
        eps = rng.standard_normal((n, self.means.shape[-1]))
        return self.means[idx] + np.einsum("nij,nj->ni", chols[idx], eps)


# -- conjugate per-node posteriors ------------------------------------------------

@dataclass(frozen=True)
class NodePosterior:
    """Gaussian posterior over one node's incoming weights (and intercept)."""

    node: int
    parents: tuple[int, ...]
    mean: np.ndarray
    cov: np.ndarray
    sigma: float
    include_bias: bool = False

    def __post_init__(self):
        k = len(self.parents) + int(self.include_bias)
        mean = np.asarray(self.mean, dtype=float).reshape(k) if k else np.zeros(0)
        cov = np.asarray(self.cov, dtype=float).reshape(k, k)
        if k and np.linalg.eigvalsh((cov + cov.T) / 2).min() <= 0:
            raise ValueError(f"node {self.node}: posterior covariance not PD")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", (cov + cov.T) / 2 if k else cov)

    def dim(self) -> int:
        return len(self.parents) + int(self.include_bias)


def prior_belief(dag: Dag, prior: MechanismPrior) -> list[NodePosterior]:
    """Conjugate belief matching a linear mechanism prior with fixed intercepts."""
    if prior.kind != LINEAR:
        raise UnsupportedMechanismError("conjugate beliefs require linear mechanisms")
    if prior.bias_range is not None:
        raise ValueError(
            "conjugate beliefs require fixed zero intercepts "
            "(uniform intercept priors are not Gaussian)"
        )
    d = dag.d
    mean = np.broadcast_to(np.asarray(prior.theta_mean, dtype=float), (d, d))
    var = np.broadcast_to(np.asarray(prior.theta_var, dtype=float), (d, d))
    sigma = prior.sigma_vector(d)
    belief = []
    for node in range(d):
        pa = dag.parents(node)
        belief.append(NodePosterior(
            node=node,
            parents=pa,
            mean=mean[list(pa), node] if pa else np.zeros(0),
            cov=np.diag(var[list(pa), node]) if pa else np.zeros((0, 0)),
            sigma=float(sigma[node]),
        ))
    return belief


def _conjugate_update(prior: NodePosterior, x: np.ndarray,
                      y: np.ndarray) -> NodePosterior:
    k = prior.dim()
    if k == 0 or len(y) == 0:
        return prior
    prec0 = np.linalg.inv(prior.cov)
    noise_prec = 1.0 / prior.sigma ** 2
    prec_n = prec0 + noise_prec * (x.T @ x)
    cov_n = np.linalg.inv(prec_n)
    cov_n = (cov_n + cov_n.T) / 2
    mean_n = cov_n @ (prec0 @ prior.mean + noise_prec * (x.T @ y))
    return NodePosterior(node=prior.node, parents=prior.parents, mean=mean_n,
                         cov=cov_n, sigma=prior.sigma,
                         include_bias=prior.include_bias)


def _design_matrix(prior: NodePosterior, batch: np.ndarray) -> np.ndarray:
    cols = (batch[:, list(prior.parents)] if prior.parents
            else np.zeros((len(batch), 0)))
    if prior.include_bias:
        cols = np.hstack([cols, np.ones((len(batch), 1))])
    return cols


def update_node_posterior(prior: NodePosterior, history: History,
                          node: int | None = None) -> NodePosterior:
    """Conjugate Bayesian linear-regression update with known noise.

    Rows where the regression node itself was clamped are dropped; rows
    clamping a parent are kept (the parent is then just a fixed regressor).
    """
    node = prior.node if node is None else node
    if node != prior.node:
        raise ValueError("posterior/node mismatch")
    xs, ys = [], []
    for design, batch in history.steps:
        if node in design.targets:
            continue
        xs.append(_design_matrix(prior, batch))
        ys.append(batch[:, node])
    if not xs:
        return prior
    return _conjugate_update(prior, np.vstack(xs), np.concatenate(ys))


def update_belief_observational(belief: list[NodePosterior],
                                rows: np.ndarray) -> list[NodePosterior]:
    """Condition every node's weight posterior on observational samples.

    No coordinates were clamped, so every row informs every node. Used to
    warm-start a fixed-graph prior from pre-existing observational data.
    """
    rows = np.asarray(rows, dtype=float)
    if rows.ndim != 2:
        raise ValueError("observational data must be a 2-D array of rows")
    return [
        _conjugate_update(post, _design_matrix(post, rows), rows[:, post.node])
        for post in belief
    ]


def update_belief(belief: list[NodePosterior], history: History) -> list[NodePosterior]:
    return [update_node_posterior(p, history) for p in belief]


def belief_sigma(belief: list[NodePosterior]) -> np.ndarray:
    return np.asarray([p.sigma for p in belief])


def draw_weight_matrices(belief: list[NodePosterior], dag: Dag,
                         rng: np.random.Generator, n: int) -> np.ndarray:
    """Draw (n, d, d) dense weight matrices from the factorized posterior."""
    d = dag.d
    out = np.zeros((n, d, d))
    for post in belief:
        if not post.parents:
            continue
        k = post.dim()
        chol = np.linalg.cholesky(post.cov + 1e-14 * np.eye(k))
        draws = post.mean + rng.standard_normal((n, k)) @ chol.T
        w = draws[:, :len(post.parents)]
        out[:, list(post.parents), post.node] = w
    return out


def posterior_predictive(belief: list[NodePosterior], dag: Dag, query: Query,
                         rng: np.random.Generator,
                         n_components: int) -> GaussianMixtureLaw:
    """Mixture approximation of p(z | history) for an effect query."""
    weights = draw_weight_matrices(belief, dag, rng, n_components)
    means, covs = effect_laws(dag, weights, np.zeros(dag.d),
                              belief_sigma(belief), query)
    return GaussianMixtureLaw(means, covs)


# -- stage-wise information gain ----------------------------------------------------

class EigEstimate(tuple):
    """(value, stderr) pair in nats."""

    __slots__ = ()

    def __new__(cls, value: float, stderr: float):
        return super().__new__(cls, (float(value), float(stderr)))

    @property
    def value(self) -> float:
        return self[0]

    @property
    def stderr(self) -> float:
        return self[1]


def incremental_eig(belief: list[NodePosterior], dag: Dag, design: Design,
                    query: Query, mc_budget: int, rng: np.random.Generator,
                    n_outer: int = 256, n_rows: int = 1) -> EigEstimate:
    """Monte Carlo estimate of the one-experiment information gain on the query.

    Draws models and outcomes from the current belief, performs the conjugate
    update, and scores the query draw under mixture approximations of the
    predictive density before and after the update.
    """
    if mc_budget < 2:
        raise ValueError("mc_budget must be at least 2")
    if query.kind != EFFECT:
        raise ValueError("incremental_eig supports effect queries")
    design.validate_for(dag.d)
    d = dag.d
    sigma = belief_sigma(belief)
    bias = np.zeros(d)
    outer_w = draw_weight_matrices(belief, dag, rng, n_outer)
    deltas = np.empty(n_outer)
    for k in range(n_outer):
        w = outer_w[k]
        scm_like = _LinearSampler(dag, w, bias, sigma)
        x = scm_like.simulate(design, n_rows, rng)
        step_hist = History(steps=((design, x),))
        post = update_belief(belief, step_hist)
        z = scm_like.draw_query(query, rng)
        mix_post = posterior_predictive(post, dag, query, rng, mc_budget)
        mix_prior = posterior_predictive(belief, dag, query, rng, mc_budget)
        deltas[k] = mix_post.log_prob(z)[0] - mix_prior.log_prob(z)[0]
    return EigEstimate(deltas.mean(), deltas.std(ddof=1) / math.sqrt(n_outer))


class _LinearSampler:
    """Forward sampler for a concrete weight matrix (bias + Gaussian noise)."""

    def __init__(self, dag: Dag, weight: np.ndarray, bias: np.ndarray,
                 sigma: np.ndarray):
        self.dag = dag
        self.weight = weight
        self.bias = bias
        self.sigma = sigma

    def simulate(self, design: Design | None, n: int,
                 rng: np.random.Generator) -> np.ndarray:
        d = self.dag.d
        clamp = dict(zip(design.targets, design.values)) if design else {}
        x = np.zeros((n, d))
        eps = rng.standard_normal((n, d)) * self.sigma
        for node in self.dag.topo_order:
            if node in clamp:
                x[:, node] = clamp[node]
            else:
                x[:, node] = x @ self.weight[:, node] + self.bias[node] + eps[:, node]
        return x

    def draw_query(self, query: Query, rng: np.random.Generator) -> np.ndarray:
        psi = query.sample_psi(rng)
        design = Design(targets=(query.intervene,), values=(psi,))
        return self.simulate(design, 1, rng)[0, list(query.targets)]
