import math

import numpy as np
import pytest

from cboed import autodiff as ad
from cboed.estimators import (
    EstimatorError,
    RolloutBatch,
    bound_gap_kl,
    estimate_bound,
    estimate_nmc,
    history_loglik,
)
from cboed.oracle import (
    draw_weight_matrices,
    incremental_eig,
    posterior_predictive,
    prior_belief,
    update_belief,
)
from cboed import presets
from cboed.scm import Design, History, MechanismPrior, Query, simulate


def one_edge_setup():
    dag = presets.chain_graph(2)
    prior = MechanismPrior(theta_mean=0.0, theta_var=1.0, bias_range=None,
                           sigma=math.sqrt(0.1))
    return dag, prior, prior_belief(dag, prior)


def one_edge_rollouts(n, design_value, rng, horizon=1):
    """Rollouts from the true generative process under a fixed design."""
    dag, prior, belief = one_edge_setup()
    query = Query(kind="effect", targets=(1,), intervene=0, psi_mean=1.0)
    design = Design(targets=(0,), values=(design_value,))
    histories, zs, dags, mechs = [], [], [], []
    from cboed.scm import Scm, sample_mechanism
    for i in range(n):
        local = np.random.default_rng(rng.integers(2 ** 63))
        mech = sample_mechanism(dag, "linear_gaussian", local, prior)
        hist = History()
        for _ in range(horizon):
            hist = hist.append(design, simulate(Scm(dag=dag, mechanism=mech),
                                                design, 1, local))
        histories.append(hist)
        zs.append(np.array([mech.weights[1][0] * query.psi_mean
                            + math.sqrt(0.1) * local.standard_normal()]))
        dags.append(dag)
        mechs.append(mech)
    tensor = ad.constant(np.stack([h.as_array(2) for h in histories]))
    return RolloutBatch(history_tensor=tensor, histories=histories,
                        zs=np.stack(zs), psis=np.full(n, query.psi_mean),
                        dags=dags, mechanisms=mechs, query=query)


class _ConstantPosterior:
    """Assigns a fixed Gaussian log-density regardless of history."""

    def __init__(self, var):
        self.var = var

    def log_prob(self, history, z, psi=None, train=False, rng=None):
        lp = (-0.5 * (z ** 2) / self.var
              - 0.5 * math.log(2 * math.pi * self.var)).sum(axis=1)
        return ad.constant(lp)


def prior_sampler():
    dag, prior, belief = one_edge_setup()

    def sampler(rng, m):
        return draw_weight_matrices(belief, dag, rng, m)

    return sampler


# -- variational bound ------------------------------------------------------------


def test_estimate_bound_identical_rollouts_zero_stderr():
    rng = np.random.default_rng(0)
    batch = one_edge_rollouts(1, 2.0, rng)
    tensor = ad.constant(np.repeat(batch.history_tensor.data, 8, axis=0))
    clones = RolloutBatch(history_tensor=tensor,
                          histories=batch.histories * 8,
                          zs=np.repeat(batch.zs, 8, axis=0),
                          psis=np.repeat(batch.psis, 8),
                          dags=batch.dags * 8, mechanisms=batch.mechanisms * 8,
                          query=batch.query)
    mean, stderr = estimate_bound(clones, _ConstantPosterior(1.0))
    assert stderr == 0.0


def test_estimate_bound_invariant_to_rollout_order():
    rng = np.random.default_rng(1)
    batch = one_edge_rollouts(16, 2.0, rng)
    mean_a, _ = estimate_bound(batch, _ConstantPosterior(1.0))
    perm = np.random.default_rng(2).permutation(16)
    shuffled = RolloutBatch(
        history_tensor=ad.constant(batch.history_tensor.data[perm]),
        histories=[batch.histories[i] for i in perm],
        zs=batch.zs[perm], psis=batch.psis[perm],
        dags=[batch.dags[i] for i in perm],
        mechanisms=[batch.mechanisms[i] for i in perm], query=batch.query)
    mean_b, _ = estimate_bound(shuffled, _ConstantPosterior(1.0))
    assert abs(float(mean_a.data) - float(mean_b.data)) < 1e-12


def test_estimate_bound_names_offending_rollout():
    rng = np.random.default_rng(3)
    batch = one_edge_rollouts(4, 2.0, rng)
    batch.zs[2, 0] = 1e300  # drives the quadratic term to -inf

    class Bad(_ConstantPosterior):
        pass

    with pytest.raises(EstimatorError, match="rollout 2"):
        estimate_bound(batch, Bad(1e-8))


def test_bound_with_prior_density_equals_prior_logscore():
    # scoring z under its own prior leaves exactly the prior entropy term:
    # the bound carries no information and the gap to the true gain is full
    rng = np.random.default_rng(4)
    batch = one_edge_rollouts(4000, 2.0, rng)
    prior_var = 1.0 * 1.0 + 0.1           # theta-prior pushforward at psi=1
    mean, stderr = estimate_bound(batch, _ConstantPosterior(prior_var))
    expected = -0.5 * (math.log(2 * math.pi * prior_var) + 1.0)
    assert abs(float(mean.data) - expected) < 3 * stderr


# -- nested Monte Carlo --------------------------------------------------------------


def test_nmc_empty_history_reduces_to_prior_logscore():
    rng = np.random.default_rng(5)
    batch = one_edge_rollouts(1200, 2.0, rng, horizon=1)
    empty = RolloutBatch(
        history_tensor=ad.constant(np.zeros((len(batch), 1, 2, 2))),
        histories=[History() for _ in range(len(batch))],
        zs=batch.zs, psis=batch.psis, dags=batch.dags,
        mechanisms=batch.mechanisms, query=batch.query)
    est = estimate_nmc(empty, prior_sampler(), 2000, 50, np.random.default_rng(6))
    prior_var = 1.1
    expected = -0.5 * (math.log(2 * math.pi * prior_var) + 1.0)
    assert abs(est.value - expected) < 3 * est.stderr + 0.01


def test_nmc_matches_closed_form_gaussian_information():
    # one edge, fixed design do(X0 = a), query at psi = c: everything is
    # jointly Gaussian, so E[log p(z | h)] has a closed form
    a, c, noise = 2.0, 1.0, 0.1
    var_cond = (c * c + noise) - (c * a) ** 2 / (a * a + noise)
    expected = -0.5 * (math.log(2 * math.pi * var_cond) + 1.0)
    rng = np.random.default_rng(7)
    batch = one_edge_rollouts(1500, a, rng)
    est = estimate_nmc(batch, prior_sampler(), 3000, 3000,
                       np.random.default_rng(8))
    assert abs(est.value - expected) < 3 * est.stderr + 0.02


def test_nmc_log_space_stability_in_far_tails():
    rng = np.random.default_rng(9)
    batch = one_edge_rollouts(8, 2.0, rng)
    for i in range(len(batch)):
        hist = batch.histories[i]
        design, rows = hist.steps[0]
        rows = rows.copy()
        rows[:, 1] = 17.0            # ~exp(-700)-scale likelihoods
        batch.histories[i] = History(steps=((design, rows),))
    est = estimate_nmc(batch, prior_sampler(), 500, 500,
                       np.random.default_rng(10))
    assert np.isfinite(est.value)


def test_nmc_rejects_wrong_settings():
    rng = np.random.default_rng(11)
    batch = one_edge_rollouts(4, 2.0, rng)
    with pytest.raises(ValueError):
        estimate_nmc(batch, prior_sampler(), 0, 10, rng)
    graph_batch = RolloutBatch(history_tensor=batch.history_tensor,
                               histories=batch.histories, zs=batch.zs,
                               psis=None, dags=batch.dags,
                               mechanisms=batch.mechanisms, query=None)
    with pytest.raises(EstimatorError):
        estimate_nmc(graph_batch, prior_sampler(), 10, 10, rng)


def test_history_loglik_matches_direct_density():
    dag, prior, belief = one_edge_setup()
    rng = np.random.default_rng(12)
    design = Design(targets=(0,), values=(2.0,))
    rows = np.array([[2.0, 1.3], [2.0, -0.4]])
    hist = History(steps=((design, rows),))
    w = draw_weight_matrices(belief, dag, rng, 5)
    ll = history_loglik(dag, w, np.zeros(2), np.full(2, math.sqrt(0.1)), hist)
    for m in range(5):
        theta = w[m, 0, 1]
        direct = sum(
            -0.5 * ((y - theta * 2.0) ** 2 / 0.1 + math.log(2 * math.pi * 0.1))
            for y in rows[:, 1]
        )
        assert abs(ll[m] - direct) < 1e-10


# -- KL gap ---------------------------------------------------------------------------


def test_kl_gap_zero_against_itself():
    dag, prior, belief = one_edge_setup()
    rng = np.random.default_rng(13)
    query = Query(kind="effect", targets=(1,), intervene=0, psi_mean=1.0)
    mix = posterior_predictive(belief, dag, query, rng, 512)
    est = bound_gap_kl(mix, mix.log_prob, rng, n=4096)
    assert abs(est.value) < 2 * est.stderr + 1e-6
    assert est.value >= -2 * est.stderr


def test_kl_gap_against_prior_matches_stage_gain():
    # averaged over histories, KL(posterior || prior) is the one-step gain
    dag, prior, belief = one_edge_setup()
    query = Query(kind="effect", targets=(1,), intervene=0, psi_mean=1.0)
    design = Design(targets=(0,), values=(2.0,))
    rng = np.random.default_rng(14)
    prior_mix = posterior_predictive(belief, dag, query, rng, 1024)

    gaps = []
    from cboed.scm import Scm, sample_mechanism
    for k in range(48):
        local = np.random.default_rng(1000 + k)
        mech = sample_mechanism(dag, "linear_gaussian", local, prior)
        hist = History(steps=((design,
                               simulate(Scm(dag=dag, mechanism=mech), design,
                                        1, local)),))
        post = update_belief(belief, hist)
        post_mix = posterior_predictive(post, dag, query, local, 1024)
        est = bound_gap_kl(post_mix, prior_mix.log_prob, local, n=1024)
        gaps.append(est.value)
    gap_mean = float(np.mean(gaps))
    gap_se = float(np.std(gaps, ddof=1) / math.sqrt(len(gaps)))

    eig = incremental_eig(belief, dag, design, query, mc_budget=512,
                          rng=np.random.default_rng(15), n_outer=256)
    assert abs(gap_mean - eig.value) < 3 * math.sqrt(gap_se ** 2 + eig.stderr ** 2)
