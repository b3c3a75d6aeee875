"""Information-gain objectives and their estimators.

``estimate_bound`` is the Monte Carlo variational objective (mean posterior
log-score of the query draws), differentiable end to end when the rollouts
were generated on the tape. ``estimate_nmc`` is the nested Monte Carlo
estimator of the prior-omitted gain, available in closed-likelihood
(fixed-graph linear-Gaussian) settings. ``bound_gap_kl`` measures the slack
between the two as a KL divergence against an oracle posterior.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from . import autodiff as ad
from .autodiff import Tensor
from .oracle import effect_laws
from .scm import Dag, History, Mechanism, Query


class EstimatorError(RuntimeError):
    pass


@dataclass
class RolloutBatch:
    """A batch of simulated experiment trajectories.

    ``history_tensor`` is (envs, rows, variables, 2) and sits on the autodiff
    tape when the batch was produced in training mode; ``histories`` are
    plain numpy snapshots of the same trajectories. ``zs`` holds the query
    draws: (envs, n_z) for value queries, (envs, d, d) adjacencies for graph
    queries.
    """

    history_tensor: Tensor
    histories: list[History]
    zs: np.ndarray
    psis: np.ndarray | None = None
    dags: list[Dag] = field(default_factory=list)
    mechanisms: list[Mechanism] = field(default_factory=list)
    query: Query | None = None
    stage_logits: list[Tensor] = field(default_factory=list)
    stage_choices: list[np.ndarray] = field(default_factory=list)
    stage_on_policy: list[np.ndarray] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.histories)


def estimate_bound(rollouts: RolloutBatch, posterior, train: bool = False,
                   rng: np.random.Generator | None = None) -> tuple[Tensor, float]:
    """Sample mean and standard error of the posterior log-score.

    Returns (mean, stderr); the mean is a scalar tensor, so gradients reach
    the policy, posterior, and embedding parameters whenever the rollouts
    carry a tape.
    """
    if len(rollouts) < 2:
        raise EstimatorError("need at least two rollouts")
    log_q = posterior.log_prob(rollouts.history_tensor, rollouts.zs,
                               psi=rollouts.psis, train=train, rng=rng)
    bad = np.flatnonzero(~np.isfinite(log_q.data))
    if bad.size:
        raise EstimatorError(f"non-finite posterior log-score at rollout {bad[0]}")
    n = len(rollouts)
    stderr = float(log_q.data.std(ddof=1) / math.sqrt(n))
    return log_q.mean(), stderr


@dataclass(frozen=True)
class Estimate:
    value: float
    stderr: float
    n: int

    def __iter__(self):
        return iter((self.value, self.stderr))


def history_loglik(dag: Dag, weights: np.ndarray, bias: np.ndarray,
                   sigma: np.ndarray, history: History) -> np.ndarray:
    """log p(history outcomes | weights, designs) for a batch of models.

    weights: (m, d, d); returns (m,). Clamped coordinates are deterministic
    and contribute no density factor.
    """
    m = weights.shape[0]
    total = np.zeros(m)
    for design, batch in history.steps:
        clamped = set(design.targets)
        for node in range(dag.d):
            if node in clamped:
                continue
            pa = list(dag.parents(node))
            y = batch[:, node]
            if pa:
                pred = batch[:, pa] @ weights[:, pa, node].T     # (rows, m)
                pred = pred + bias[node]
            else:
                pred = np.full((len(batch), m), bias[node])
            resid = y[:, None] - pred
            var = sigma[node] ** 2
            total += (-0.5 * (resid ** 2 / var + math.log(2 * math.pi * var))).sum(axis=0)
    return total


def estimate_nmc(rollouts: RolloutBatch, prior_sampler, m1: int, m2: int,
                 rng: np.random.Generator) -> Estimate:
    """Nested Monte Carlo estimate of the prior-omitted gain on the query.

    ``prior_sampler(rng, m)`` must return (m, d, d) weight matrices from the
    model prior. Requires a fixed-graph linear setting: every rollout must
    share one dag and a linear mechanism, and the query must be an effect
    query. Inner sums are evaluated in log space.
    """
    if m1 < 1 or m2 < 1:
        raise ValueError("inner sample sizes must be at least 1")
    if rollouts.query is None or rollouts.query.kind != "effect":
        raise EstimatorError("nested MC needs an effect query")
    if not rollouts.dags:
        raise EstimatorError("rollouts carry no model metadata")
    dag = rollouts.dags[0]
    mech = rollouts.mechanisms[0]
    if mech.kind != "linear_gaussian":
        raise EstimatorError("nested MC needs linear-Gaussian mechanisms")
    if any(not np.array_equal(d.edges, dag.edges) for d in rollouts.dags):
        raise EstimatorError("nested MC needs a fixed graph across rollouts")
    sigma = mech.sigma
    bias = np.zeros(dag.d)
    query = rollouts.query
    n = len(rollouts)
    values = np.empty(n)
    for i in range(n):
        hist = rollouts.histories[i]
        z = rollouts.zs[i]
        w_joint = prior_sampler(rng, m1)
        ll_hist = history_loglik(dag, w_joint, bias, sigma, hist)
        means, covs = effect_laws(dag, w_joint, bias, sigma, query)
        ll_z = _gaussian_logpdf(z, means, covs)
        log_joint = logsumexp(ll_hist + ll_z) - math.log(m1)

        w_marg = prior_sampler(rng, m2)
        ll_marg = history_loglik(dag, w_marg, bias, sigma, hist)
        log_marg = logsumexp(ll_marg) - math.log(m2)
        values[i] = log_joint - log_marg
    return Estimate(value=float(values.mean()),
                    stderr=float(values.std(ddof=1) / math.sqrt(n)),
                    n=n)


def _gaussian_logpdf(z: np.ndarray, means: np.ndarray,
                     covs: np.ndarray) -> np.ndarray:
    """log N(z; mean_j, cov_j) for a batch of components, (m,)."""
    k = means.shape[-1]
    covs = covs + 1e-12 * np.eye(k)
    diff = z[None, :] - means
    inv = np.linalg.inv(covs)
    _, logdet = np.linalg.slogdet(covs)
    quad = np.einsum("mi,mij,mj->m", diff, inv, diff)
    return -0.5 * (quad + logdet + k * math.log(2 * math.pi))


def bound_gap_kl(true_posterior, q_log_prob, rng: np.random.Generator,
                 n: int = 2048) -> Estimate:
    """Monte Carlo KL(true posterior || variational posterior).

    ``true_posterior`` exposes sample(rng, n) and log_prob(z); ``q_log_prob``
    maps an (n, k) array of draws to their variational log-densities.
    """
    draws = true_posterior.sample(rng, n)
    gaps = np.asarray(true_posterior.log_prob(draws)) - np.asarray(q_log_prob(draws))
    return Estimate(value=float(gaps.mean()),
                    stderr=float(gaps.std(ddof=1) / math.sqrt(n)),
                    n=n)
