"""Joint training of the intervention policy and variational posteriors.

One training step simulates a batch of environments (model draw, query draw,
then alternating policy calls and on-tape interventional sampling), scores
the query draws under the amortized posterior, and ascends the resulting
Monte Carlo objective through all parameter groups at once.
"""
from __future__ import annotations

import hashlib
import json
import math
import os
import time
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from . import autodiff as ad
from . import presets
from .autodiff import Tensor
from .checkpoint import load_subset, restore_stores, save_stores
from .estimators import RolloutBatch, estimate_bound
from .evaluation import expected_shd, f1_edges
from .networks import (
    DEPLOY_HARD,
    TRAIN_SOFT,
    EncoderConfig,
    PolicyConfig,
    PolicyNetwork,
    random_designs,
)
from .nn import ParamStore
from .optim import Adam, ExponentialDecay, TemperatureSchedule
from .posteriors import AmortizedFlowPosterior, AmortizedGraphPosterior
from .scm import (
    EFFECT,
    GRAPH,
    LINEAR,
    MLP,
    Dag,
    Design,
    ErdosRenyi,
    FixedGraph,
    FromFile,
    History,
    Mechanism,
    MechanismPrior,
    Query,
    ScaleFree,
    Scm,
    sample_dag,
    sample_mechanism,
    sample_query_value,
)

CONFIG_SCHEMA_VERSION = 1

OBJECTIVE_EFFECT = "effect"
OBJECTIVE_THETA = "theta"
OBJECTIVE_GRAPH = "graph"

# rng stream tags: every generator is derived from (seed, tag, ...) integers
_TAG_INIT = 0
_TAG_ENV = 1
_TAG_NOISE = 2
_TAG_POLICY = 3
_TAG_DROPOUT = 4
_TAG_EVAL = 5


class ConfigError(ValueError):
    pass


class TrainerError(RuntimeError):
    pass


def derive_rng(*keys: int) -> np.random.Generator:
    """Deterministic, collision-resistant generator for a key tuple."""
    return np.random.default_rng(np.random.SeedSequence([int(k) for k in keys]))


_REQUIRED = object()


def _take(section: dict, name: str, key: str, default=_REQUIRED):
    if key in section:
        return section.pop(key)
    if default is _REQUIRED:
        raise ConfigError(f"missing required config field '{key}'"
                          + (f" in '{name}'" if name else ""))
    return default


def _reject_unknown(section: dict, name: str) -> None:
    if section:
        extras = ", ".join(sorted(section))
        raise ConfigError(f"unknown config key(s) in '{name or 'config'}': {extras}")


@dataclass(frozen=True)
class TrainConfig:
    """Validated training configuration plus its raw dict snapshot."""

    objective: str
    d: int
    horizon: int
    n_int: int
    n_step: int
    n_env: int
    seed: int
    graph_prior: Any
    mechanism: MechanismPrior
    query: Query | None
    theta_edges: tuple[tuple[int, int], ...] | None
    policy_kind: str
    policy_checkpoint: str | None
    fixed_designs: tuple[Design, ...] | None
    policy_net: PolicyConfig
    entropy_bonus: float
    entropy_decay: float
    explore_mix: float
    explore_decay: float
    warmup_steps: int
    target_gradient: str
    posterior_encoder: EncoderConfig
    flow_n_trans: int
    flow_widths: tuple[int, ...]
    graph_out_dim: int | None
    graph_temp_init: float
    graph_bias_init: float
    policy_lr: float
    posterior_lr: float
    adam_beta1: float
    adam_beta2: float
    adam_eps: float
    lr_gamma: float
    lr_interval: int
    eval_every: int
    eval_envs: int
    checkpoint_every: int
    graph_samples: int
    warm_start_belief: Any = None
    raw: dict = field(repr=False, compare=False, default_factory=dict)

    def to_dict(self) -> dict:
        return json.loads(json.dumps(self.raw, sort_keys=True))

    def config_hash(self) -> str:
        canon = json.dumps(self.raw, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode()).hexdigest()[:16]


def _parse_graph_prior(spec: dict, d: int):
    spec = dict(spec)
    kind = _take(spec, "graph_prior", "kind")
    if kind == "erdos_renyi":
        prior = ErdosRenyi(expected_degree=float(_take(spec, "graph_prior", "expected_degree")))
    elif kind == "scale_free":
        prior = ScaleFree(m=int(_take(spec, "graph_prior", "m")))
    elif kind == "fixed":
        preset = _take(spec, "graph_prior", "preset", None)
        path = _take(spec, "graph_prior", "path", None)
        if preset is not None:
            if preset != "six_node":
                raise ConfigError(f"unknown graph preset: {preset!r}")
            prior = FixedGraph(dag=presets.six_node_graph())
        elif path is not None:
            prior = FromFile(path=str(path))
        else:
            raise ConfigError("fixed graph prior needs 'preset' or 'path'")
    elif kind == "chain":
        prior = FixedGraph(dag=presets.chain_graph(d))
    else:
        raise ConfigError(f"unknown graph prior kind: {kind!r}")
    _reject_unknown(spec, "graph_prior")
    return prior


def _parse_mechanism(spec: dict) -> MechanismPrior:
    spec = dict(spec)
    kind = _take(spec, "mechanism", "kind")
    preset = _take(spec, "mechanism", "preset", None)
    if preset is not None:
        _reject_unknown(spec, "mechanism")
        if preset == "six_node" and kind == LINEAR:
            return presets.six_node_prior()
        raise ConfigError(f"unknown mechanism preset: {preset!r}")
    noise_var = float(_take(spec, "mechanism", "noise_var", 0.1))
    if kind == LINEAR:
        theta_mean = float(_take(spec, "mechanism", "theta_mean", 0.0))
        theta_var = float(_take(spec, "mechanism", "theta_var", 2.0))
        zero_bias = bool(_take(spec, "mechanism", "zero_bias", False))
        bias_low = float(_take(spec, "mechanism", "bias_low", -1.0))
        bias_high = float(_take(spec, "mechanism", "bias_high", 1.0))
        _reject_unknown(spec, "mechanism")
        return MechanismPrior(
            kind=LINEAR, theta_mean=theta_mean, theta_var=theta_var,
            bias_range=None if zero_bias else (bias_low, bias_high),
            sigma=math.sqrt(noise_var),
        )
    if kind == MLP:
        hidden = tuple(int(h) for h in _take(spec, "mechanism", "hidden", [8, 8]))
        _reject_unknown(spec, "mechanism")
        return MechanismPrior(kind=MLP, hidden=hidden, bias_range=None,
                              sigma=math.sqrt(noise_var))
    raise ConfigError(f"unknown mechanism kind: {kind!r}")


def _parse_encoder(spec: dict, name: str, defaults: EncoderConfig) -> EncoderConfig:
    spec = dict(spec)
    cfg = EncoderConfig(
        embed=int(_take(spec, name, "embed", defaults.embed)),
        layers=int(_take(spec, name, "layers", defaults.layers)),
        heads=int(_take(spec, name, "heads", defaults.heads)),
        key_size=_take(spec, name, "key_size", defaults.key_size),
        ffn_hidden=_take(spec, name, "ffn_hidden", defaults.ffn_hidden),
        dropout=float(_take(spec, name, "dropout", defaults.dropout)),
    )
    return cfg, spec


def parse_config(raw: dict) -> TrainConfig:
    """Validate a raw config dict; unknown keys are errors, not warnings."""
    snapshot = json.loads(json.dumps(raw))
    top = dict(raw)
    version = _take(top, "", "schema_version")
    if version != CONFIG_SCHEMA_VERSION:
        raise ConfigError(f"unsupported config schema version: {version!r}")
    objective = _take(top, "", "objective")
    if objective not in (OBJECTIVE_EFFECT, OBJECTIVE_THETA, OBJECTIVE_GRAPH):
        raise ConfigError(f"unknown objective: {objective!r}")
    d = int(_take(top, "", "d"))
    horizon = int(_take(top, "", "horizon"))
    if horizon < 1:
        raise ConfigError("horizon must be at least 1")
    n_int = int(_take(top, "", "n_int", 1))
    n_step = int(_take(top, "", "n_step"))
    n_env = int(_take(top, "", "n_env"))
    if n_env < 2:
        raise ConfigError("n_env must be at least 2")
    seed = int(_take(top, "", "seed", 0))

    graph_prior = _parse_graph_prior(_take(top, "", "graph_prior"), d)
    mechanism = _parse_mechanism(_take(top, "", "mechanism"))

    query_spec = dict(_take(top, "", "query"))
    qkind = _take(query_spec, "query", "kind")
    query: Query | None = None
    theta_edges = None
    if qkind == EFFECT:
        query = Query(
            kind=EFFECT,
            targets=tuple(int(t) for t in _take(query_spec, "query", "targets")),
            intervene=int(_take(query_spec, "query", "intervene")),
            psi_mean=float(_take(query_spec, "query", "psi_mean")),
            psi_std=float(_take(query_spec, "query", "psi_std", 0.0)),
        )
        if objective != OBJECTIVE_EFFECT:
            raise ConfigError("effect queries pair with the effect objective")
    elif qkind == GRAPH:
        if objective != OBJECTIVE_GRAPH:
            raise ConfigError("graph queries pair with the graph objective")
    elif qkind == "theta":
        if objective != OBJECTIVE_THETA:
            raise ConfigError("theta queries pair with the theta objective")
        if not isinstance(graph_prior, FixedGraph) or mechanism.kind != LINEAR:
            raise ConfigError("theta objectives need a fixed graph and linear mechanisms")
        explicit = _take(query_spec, "query", "edges", None)
        exclude = _take(query_spec, "query", "exclude_parents_of", None)
        dag = graph_prior.dag
        if explicit is not None:
            theta_edges = tuple((int(i), int(j)) for i, j in explicit)
        else:
            all_edges = sorted(
                (int(i), int(j)) for i, j in zip(*np.nonzero(dag.edges))
            )
            if exclude is not None:
                all_edges = [(i, j) for i, j in all_edges if j != int(exclude)]
            theta_edges = tuple(all_edges)
        for i, j in theta_edges:
            if not dag.edges[i, j]:
                raise ConfigError(f"theta query names a non-edge ({i}, {j})")
    else:
        raise ConfigError(f"unknown query kind: {qkind!r}")
    _reject_unknown(query_spec, "query")

    policy_spec = dict(_take(top, "", "policy", {"kind": "learned"}))
    policy_kind = _take(policy_spec, "policy", "kind")
    policy_checkpoint = _take(policy_spec, "policy", "checkpoint", None)
    fixed_designs_raw = _take(policy_spec, "policy", "designs", None)
    if policy_kind not in ("learned", "random", "frozen", "fixed"):
        raise ConfigError(f"unknown policy kind: {policy_kind!r}")
    if policy_kind == "frozen" and not policy_checkpoint:
        raise ConfigError("frozen policies need a checkpoint path")
    fixed_designs = None
    if policy_kind == "fixed":
        if not fixed_designs_raw:
            raise ConfigError("fixed policies need a 'designs' list of [node, value]")
        fixed_designs = tuple(
            Design(targets=(int(node),), values=(float(value),))
            for node, value in fixed_designs_raw
        )
        for dsn in fixed_designs:
            dsn.validate_for(d)
    _reject_unknown(policy_spec, "policy")

    pnet_spec = dict(_take(top, "", "policy_net", {}))
    p_enc, pnet_spec = _parse_encoder(pnet_spec, "policy_net",
                                      EncoderConfig(embed=32, layers=4, heads=8,
                                                    key_size=16))
    policy_net = PolicyConfig(
        encoder=p_enc,
        min_val=float(_take(pnet_spec, "policy_net", "min_val", -10.0)),
        max_val=float(_take(pnet_spec, "policy_net", "max_val", 10.0)),
        temperature=TemperatureSchedule(
            init=float(_take(pnet_spec, "policy_net", "tau_init", 5.0)),
            decay=float(_take(pnet_spec, "policy_net", "tau_decay", 0.9995)),
            floor=float(_take(pnet_spec, "policy_net", "tau_floor", 0.1)),
        ),
    )
    entropy_bonus = float(_take(pnet_spec, "policy_net", "entropy_bonus", 0.0))
    entropy_decay = float(_take(pnet_spec, "policy_net", "entropy_decay", 0.999))
    explore_mix = float(_take(pnet_spec, "policy_net", "explore_mix", 0.0))
    explore_decay = float(_take(pnet_spec, "policy_net", "explore_decay", 0.999))
    warmup_steps = int(_take(pnet_spec, "policy_net", "warmup_steps", 0))
    target_gradient = str(_take(pnet_spec, "policy_net", "target_gradient",
                                "score"))
    if target_gradient not in ("score", "straight-through"):
        raise ConfigError("target_gradient must be 'score' or 'straight-through'")
    if not 0.0 <= explore_mix <= 1.0:
        raise ConfigError("explore_mix must lie in [0, 1]")
    _reject_unknown(pnet_spec, "policy_net")

    post_spec = dict(_take(top, "", "posterior_net", {}))
    post_defaults = (EncoderConfig(embed=128, layers=8, heads=8, key_size=64)
                     if objective == OBJECTIVE_GRAPH
                     else EncoderConfig(embed=16, layers=8, heads=8, key_size=16))
    post_enc, post_spec = _parse_encoder(post_spec, "posterior_net", post_defaults)
    flow_n_trans = int(_take(post_spec, "posterior_net", "n_trans", 4))
    flow_widths = tuple(int(w) for w in _take(post_spec, "posterior_net",
                                              "widths", [256, 256, 256]))
    graph_out_dim = _take(post_spec, "posterior_net", "out_dim", None)
    graph_temp_init = float(_take(post_spec, "posterior_net", "temp_init", 2.0))
    graph_bias_init = float(_take(post_spec, "posterior_net", "bias_init", -3.0))
    _reject_unknown(post_spec, "posterior_net")

    optim_spec = dict(_take(top, "", "optim", {}))
    policy_lr = float(_take(optim_spec, "optim", "policy_lr", 5e-4))
    posterior_lr = float(_take(optim_spec, "optim", "posterior_lr", 5e-4))
    adam_beta1 = float(_take(optim_spec, "optim", "beta1", 0.9))
    adam_beta2 = float(_take(optim_spec, "optim", "beta2", 0.999))
    adam_eps = float(_take(optim_spec, "optim", "eps", 1e-8))
    lr_gamma = float(_take(optim_spec, "optim", "lr_gamma", 0.8))
    lr_interval = int(_take(optim_spec, "optim", "lr_interval", 1000))
    _reject_unknown(optim_spec, "optim")

    warm_spec = _take(top, "", "warm_start", None)
    warm_start_belief = None
    if warm_spec is not None:
        warm_spec = dict(warm_spec)
        obs_path = _take(warm_spec, "warm_start", "observations")
        _reject_unknown(warm_spec, "warm_start")
        if not isinstance(graph_prior, FixedGraph) or mechanism.kind != LINEAR \
                or mechanism.bias_range is not None:
            raise ConfigError(
                "observational warm starts need a fixed graph and a linear "
                "mechanism with zero intercepts")
        from .oracle import prior_belief, update_belief_observational
        try:
            rows = np.loadtxt(obs_path, delimiter=",", ndmin=2)
        except ValueError:
            rows = np.loadtxt(obs_path, ndmin=2)
        if rows.shape[1] != d:
            raise ConfigError(
                f"observational data has {rows.shape[1]} columns, expected {d}")
        warm_start_belief = update_belief_observational(
            prior_belief(graph_prior.dag, mechanism), rows)

    eval_every = int(_take(top, "", "eval_every", 250))
    eval_envs = int(_take(top, "", "eval_envs", 128))
    checkpoint_every = int(_take(top, "", "checkpoint_every", 1000))
    graph_samples = int(_take(top, "", "graph_samples", 64))
    _reject_unknown(top, "")

    return TrainConfig(
        objective=objective, d=d, horizon=horizon, n_int=n_int, n_step=n_step,
        n_env=n_env, seed=seed, graph_prior=graph_prior, mechanism=mechanism,
        query=query, theta_edges=theta_edges, policy_kind=policy_kind,
        policy_checkpoint=policy_checkpoint, fixed_designs=fixed_designs,
        policy_net=policy_net, entropy_bonus=entropy_bonus,
        entropy_decay=entropy_decay, explore_mix=explore_mix,
        explore_decay=explore_decay, warmup_steps=warmup_steps,
        target_gradient=target_gradient,
        posterior_encoder=post_enc, flow_n_trans=flow_n_trans,
        flow_widths=flow_widths, graph_out_dim=graph_out_dim,
        graph_temp_init=graph_temp_init, graph_bias_init=graph_bias_init,
        policy_lr=policy_lr, posterior_lr=posterior_lr, adam_beta1=adam_beta1,
        adam_beta2=adam_beta2, adam_eps=adam_eps, lr_gamma=lr_gamma,
        lr_interval=lr_interval, eval_every=eval_every, eval_envs=eval_envs,
        checkpoint_every=checkpoint_every, graph_samples=graph_samples,
        warm_start_belief=warm_start_belief, raw=snapshot,
    )


def _mechanism_from_belief(belief, dag: Dag, rng: np.random.Generator) -> Mechanism:
    """One mechanism draw from a conjugate (warm-started) weight posterior."""
    from .oracle import belief_sigma, draw_weight_matrices

    w = draw_weight_matrices(belief, dag, rng, 1)[0]
    weights = tuple(
        np.array([w[p, j] for p in dag.parents(j)]) for j in range(dag.d)
    )
    return Mechanism(kind=LINEAR, weights=weights, bias=np.zeros(dag.d),
                     sigma=belief_sigma(belief))


# -- stacked mechanisms for batched differentiable simulation -----------------------


class _StackedLinear:
    def __init__(self, dags: list[Dag], mechs: list[Mechanism]):
        e = len(dags)
        d = dags[0].d
        self.weight = np.zeros((e, d, d))
        self.bias = np.zeros((e, d))
        self.sigma = np.zeros((e, d))
        for k, (dag, mech) in enumerate(zip(dags, mechs)):
            self.weight[k] = mech.weight_matrix(dag)
            self.bias[k] = mech.bias
            self.sigma[k] = mech.sigma

    def struct(self, x: Tensor, w: Tensor, bias: Tensor) -> Tensor:
        return ad.matmul(x, w) + bias


class _StackedMlp:
    def __init__(self, dags: list[Dag], mechs: list[Mechanism], hidden):
        e = len(dags)
        d = dags[0].d
        dims = (d,) + tuple(hidden) + (1,)
        self.mask = np.zeros((e, 1, d, d))       # mask[k, 0, j, i]: i parent of j
        self.layers: list[tuple[np.ndarray, np.ndarray]] = [
            (np.zeros((e, d, dims[a], dims[a + 1])),
             np.zeros((e, d, 1, dims[a + 1])))
            for a in range(len(dims) - 1)
        ]
        self.bias = np.zeros((e, d))
        self.sigma = np.zeros((e, d))
        for k, (dag, mech) in enumerate(zip(dags, mechs)):
            self.bias[k] = mech.bias
            self.sigma[k] = mech.sigma
            for j in range(d):
                pa = list(dag.parents(j))
                self.mask[k, 0, j, pa] = 1.0
                node_layers = mech.weights[j]
                w0, b0 = node_layers[0]
                if pa:
                    self.layers[0][0][k, j, pa, :] = w0
                self.layers[0][1][k, j, 0, :] = b0
                for a in range(1, len(node_layers)):
                    wa, ba = node_layers[a]
                    self.layers[a][0][k, j, :, :] = wa
                    self.layers[a][1][k, j, 0, :] = ba


def _simulate_batch_tape(stacked, one_hot: Tensor, clamp: Tensor,
                         eps: np.ndarray) -> Tensor:
    """Differentiable interventional sampling for a whole environment batch.

    Nodes are resolved by iterating the structural map d times from zero;
    after d passes every topological depth has converged. Clamped
    coordinates are held fixed throughout, so downstream nodes see the set
    value and the clamp itself is bit-exact in the output.
    """
    n_env, n_rows, d = eps.shape
    c = one_hot.reshape(n_env, 1, d)
    keep = 1.0 - c
    s = clamp.reshape(n_env, 1, 1)
    noise = ad.constant(eps)
    x = ad.constant(np.zeros((n_env, n_rows, d)))
    if isinstance(stacked, _StackedLinear):
        w = ad.constant(stacked.weight)
        bias = ad.constant(stacked.bias[:, None, :])
        for _ in range(d):
            struct = ad.matmul(x, w) + bias + noise
            x = struct * keep + c * s
        return x
    mask = ad.constant(stacked.mask)
    layer_ts = [(ad.constant(w), ad.constant(b)) for w, b in stacked.layers]
    bias = ad.constant(stacked.bias[:, None, :])
    for _ in range(d):
        xm = x.reshape(n_env, n_rows, 1, d) * mask        # (E, rows, d_nodes, d_in)
        h = xm.swapaxes(1, 2)                             # (E, d_nodes, rows, d_in)
        for a, (w, b) in enumerate(layer_ts):
            h = ad.matmul(h, w) + b
            if a < len(layer_ts) - 1:
                h = ad.relu(h)
        struct = h.reshape(n_env, d, n_rows).swapaxes(1, 2) + bias + noise
        x = struct * keep + c * s
    return x


# -- the trainer ---------------------------------------------------------------------


class Trainer:
    def __init__(self, config: TrainConfig):
        self.cfg = config
        rng_policy = derive_rng(config.seed, _TAG_INIT, 0)
        rng_post = derive_rng(config.seed, _TAG_INIT, 1)

        self.policy_store = ParamStore()
        self.policy: PolicyNetwork | None = None
        if config.policy_kind in ("learned", "frozen"):
            self.policy = PolicyNetwork(self.policy_store, config.policy_net,
                                        rng_policy)
            if config.policy_kind == "frozen":
                load_subset(config.policy_checkpoint, self.policy_store)
                # a frozen policy is a fixed design rule: keep it off the tape
                for tensor in self.policy_store.tensors():
                    tensor.requires_grad = False

        self.post_store = ParamStore()
        if config.objective == OBJECTIVE_GRAPH:
            self.posterior = AmortizedGraphPosterior(
                self.post_store, config.d, config.posterior_encoder, rng_post,
                out_dim=config.graph_out_dim, temp_init=config.graph_temp_init,
                bias_init=config.graph_bias_init,
            )
        else:
            if config.objective == OBJECTIVE_EFFECT:
                n_z = config.query.n_z
                with_psi = True
            else:
                n_z = len(config.theta_edges)
                with_psi = False
            self.posterior = AmortizedFlowPosterior(
                self.post_store, config.d, n_z, config.posterior_encoder,
                rng_post, n_trans=config.flow_n_trans,
                widths=config.flow_widths, with_psi=with_psi,
            )

        schedule = lambda lr: ExponentialDecay(base_lr=lr, gamma=config.lr_gamma,
                                               interval=config.lr_interval)
        self.opt_policy = (
            Adam(self.policy_store, schedule(config.policy_lr),
                 beta1=config.adam_beta1, beta2=config.adam_beta2,
                 eps=config.adam_eps)
            if config.policy_kind == "learned" and len(self.policy_store) else None
        )
        self.opt_post = Adam(self.post_store, schedule(config.posterior_lr),
                             beta1=config.adam_beta1, beta2=config.adam_beta2,
                             eps=config.adam_eps)
        self.step = 0

    # -- environment sampling --------------------------------------------------

    def _sample_environments(self, step: int, n_env: int, tag: int):
        cfg = self.cfg
        dags, mechs = [], []
        psis = np.zeros(n_env) if cfg.objective == OBJECTIVE_EFFECT else None
        zs = []
        for e in range(n_env):
            rng = derive_rng(cfg.seed, tag, step, e)
            dag = sample_dag(cfg.graph_prior, cfg.d, rng)
            if cfg.warm_start_belief is not None:
                mech = _mechanism_from_belief(cfg.warm_start_belief, dag, rng)
            else:
                mech = sample_mechanism(dag, cfg.mechanism.kind, rng,
                                        cfg.mechanism)
            dags.append(dag)
            mechs.append(mech)
            if cfg.objective == OBJECTIVE_EFFECT:
                psi = cfg.query.sample_psi(rng)
                psis[e] = psi
                zs.append(sample_query_value(Scm(dag=dag, mechanism=mech),
                                             cfg.query, psi, rng))
            elif cfg.objective == OBJECTIVE_THETA:
                w = mech.weight_matrix(dag)
                zs.append(np.array([w[i, j] for i, j in cfg.theta_edges]))
            else:
                zs.append(dag.edges.astype(float))
        return dags, mechs, psis, np.stack(zs)

    def _stack(self, dags, mechs):
        if self.cfg.mechanism.kind == LINEAR:
            return _StackedLinear(dags, mechs)
        return _StackedMlp(dags, mechs, self.cfg.mechanism.hidden)

    # -- rollouts -----------------------------------------------------------------

    def rollout_envs(self, step: int, n_env: int | None = None,
                     mode: str = TRAIN_SOFT, tag: int = _TAG_ENV,
                     horizon: int | None = None) -> RolloutBatch:
        cfg = self.cfg
        n_env = cfg.n_env if n_env is None else n_env
        horizon = cfg.horizon if horizon is None else horizon
        dags, mechs, psis, zs = self._sample_environments(step, n_env, tag)
        stacked = self._stack(dags, mechs)
        d = cfg.d
        temperature = cfg.policy_net.temperature.at(step)

        # frozen policies act as fixed design rules: deploy-mode rollouts
        # match the distribution they will be evaluated under
        act_mode = mode
        if self.cfg.policy_kind == "frozen":
            act_mode = DEPLOY_HARD
        # actor warm-up: behave uniformly at random while the posterior
        # learns to exploit the full design space, so that the policy's
        # first informative gradients point at real differences
        in_warmup = (mode == TRAIN_SOFT and self.policy is not None
                     and self.cfg.policy_kind == "learned"
                     and step < cfg.warmup_steps)
        anneal_step = max(step - cfg.warmup_steps, 0)

        blocks: list[Tensor] = []
        histories = [History() for _ in range(n_env)]
        stage_logits: list[Tensor] = []
        stage_choices: list[np.ndarray] = []
        stage_on_policy: list[np.ndarray] = []
        pad = np.zeros((n_env, 1, d, 2))
        for t in range(horizon):
            current = ad.concat(blocks, axis=1) if blocks else ad.constant(pad)
            rng_t = derive_rng(cfg.seed, tag, _TAG_POLICY, step, t)
            if self.policy is not None and not in_warmup:
                act = self.policy.act(
                    current, temperature, rng_t, mode=act_mode,
                    train=(act_mode == TRAIN_SOFT),
                    pathwise_targets=(cfg.target_gradient == "straight-through"),
                )
                one_hot, clamp, designs = act.one_hot, act.clamp_values, act.designs
                stage_logits.append(act.logits)
                on_policy = np.ones(n_env, dtype=bool)
                eps_mix = cfg.explore_mix * cfg.explore_decay ** anneal_step
                if act_mode == TRAIN_SOFT and eps_mix > 1e-4:
                    # behaviour-policy mixture: a decaying fraction of
                    # environments runs a uniform design instead, keeping the
                    # posterior trained on full design coverage so the policy
                    # gradient can still discover currently-unsampled designs
                    take_random = rng_t.random(n_env) < eps_mix
                    if np.any(take_random):
                        rand = random_designs(d, n_env, rng_t,
                                              low=cfg.policy_net.min_val,
                                              high=cfg.policy_net.max_val)
                        hard = np.zeros((n_env, d))
                        vals = np.zeros(n_env)
                        for e, dsn in enumerate(rand):
                            hard[e, dsn.targets[0]] = 1.0
                            vals[e] = dsn.values[0]
                        gate = ad.constant(take_random.astype(float))
                        keep_gate = ad.constant(1.0 - take_random.astype(float))
                        one_hot = (one_hot * keep_gate.reshape(n_env, 1)
                                   + ad.constant(hard) * gate.reshape(n_env, 1))
                        clamp = clamp * keep_gate + ad.constant(vals) * gate
                        designs = [rand[e] if take_random[e] else designs[e]
                                   for e in range(n_env)]
                        on_policy = ~take_random
                stage_choices.append(np.array([dsn.targets[0] for dsn in designs]))
                stage_on_policy.append(on_policy)
            elif in_warmup:
                # random targets for coverage, but the policy's own clamp
                # values: the value head matures during warm-up so the first
                # target-choice gradients already see full-strength designs
                targets = derive_rng(cfg.seed, tag, _TAG_POLICY, step, t,
                                     1).integers(d, size=n_env)
                hard = np.zeros((n_env, d))
                hard[np.arange(n_env), targets] = 1.0
                node_vals = self.policy.node_values(current, train=True,
                                                    rng=rng_t)
                one_hot = ad.constant(hard)
                clamp = (one_hot * node_vals).sum(axis=-1)
                designs = [
                    Design(targets=(int(targets[e]),),
                           values=(float(clamp.data[e]),))
                    for e in range(n_env)
                ]
            else:
                if cfg.policy_kind == "fixed":
                    dsn = cfg.fixed_designs[min(t, len(cfg.fixed_designs) - 1)]
                    designs = [dsn] * n_env
                else:
                    designs = random_designs(d, n_env, rng_t,
                                             low=cfg.policy_net.min_val,
                                             high=cfg.policy_net.max_val)
                hard = np.zeros((n_env, d))
                vals = np.zeros(n_env)
                for e, dsn in enumerate(designs):
                    hard[e, dsn.targets[0]] = 1.0
                    vals[e] = dsn.values[0]
                one_hot, clamp = ad.constant(hard), ad.constant(vals)
            eps = derive_rng(cfg.seed, tag, _TAG_NOISE, step, t).standard_normal(
                (n_env, cfg.n_int, d)) * stacked.sigma[:, None, :]
            x_t = _simulate_batch_tape(stacked, one_hot, clamp, eps)
            mask = ad.broadcast_to(one_hot.reshape(n_env, 1, d, 1),
                                   (n_env, cfg.n_int, d, 1))
            block = ad.concat([x_t.reshape(n_env, cfg.n_int, d, 1), mask], axis=3)
            blocks.append(block)
            for e in range(n_env):
                histories[e] = histories[e].append(designs[e],
                                                   x_t.data[e].copy())
        history_tensor = ad.concat(blocks, axis=1) if blocks else ad.constant(pad)
        return RolloutBatch(history_tensor=history_tensor, histories=histories,
                            zs=zs, psis=psis, dags=dags, mechanisms=mechs,
                            query=cfg.query, stage_logits=stage_logits,
                            stage_choices=stage_choices,
                            stage_on_policy=stage_on_policy)

    # -- optimization ----------------------------------------------------------------

    def train_step(self, step: int) -> tuple[float, float]:
        batch = self.rollout_envs(step, mode=TRAIN_SOFT)
        log_q = self.posterior.log_prob(
            batch.history_tensor, batch.zs, psi=batch.psis, train=True,
            rng=derive_rng(self.cfg.seed, _TAG_DROPOUT, step),
        )
        if not np.all(np.isfinite(log_q.data)):
            raise TrainerError(
                f"non-finite objective at step {step} "
                f"(seed={self.cfg.seed}, env tag={_TAG_ENV})"
            )
        mean = log_q.mean()
        n_env = len(batch)
        stderr = float(log_q.data.std(ddof=1) / math.sqrt(n_env))
        loss = -mean
        anneal_step = max(step - self.cfg.warmup_steps, 0)
        if batch.stage_logits and self.opt_policy is not None:
            # the gradient of the rollout expectation also carries a
            # score-function term for the discrete target choices, which the
            # straight-through path does not see; estimate it with a
            # leave-one-out baseline over the environment batch
            rewards = log_q.data
            baseline = (rewards.sum() - rewards) / max(n_env - 1, 1)
            advantage = rewards - baseline
            for logits, choices, on_policy in zip(
                    batch.stage_logits, batch.stage_choices,
                    batch.stage_on_policy):
                shift = ad.stop_gradient(logits.max(axis=-1, keepdims=True))
                lse = ad.log(ad.exp(logits - shift).sum(axis=-1,
                                                        keepdims=True)) + shift
                log_p = logits - lse
                chosen = log_p[np.arange(n_env), choices]
                weight = ad.constant(advantage * on_policy / n_env)
                loss = loss - (chosen * weight).sum()
        beta = self.cfg.entropy_bonus * self.cfg.entropy_decay ** anneal_step
        if beta > 1e-6 and batch.stage_logits:
            # annealed exploration bonus: keeps the target categorical from
            # collapsing before the posterior has learned to exploit designs
            entropies = []
            for logits in batch.stage_logits:
                p = ad.softmax(logits, axis=-1)
                entropies.append(-(p * ad.log(p + 1e-12)).sum(axis=-1).mean())
            bonus = entropies[0]
            for h in entropies[1:]:
                bonus = bonus + h
            loss = loss - (beta / len(entropies)) * bonus
        self.policy_store.zero_grad()
        self.post_store.zero_grad()
        loss.backward()
        if self.opt_policy is not None:
            self.opt_policy.step(step)
        self.opt_post.step(step)
        return float(mean.data), stderr

    # -- evaluation --------------------------------------------------------------------

    def evaluate(self, step: int, n_env: int | None = None) -> dict[str, tuple[float, float]]:
        """Deploy-mode metrics on fresh environments (dropout off, hard policy)."""
        cfg = self.cfg
        n_env = cfg.eval_envs if n_env is None else n_env
        batch = self.rollout_envs(step, n_env=n_env, mode=DEPLOY_HARD,
                                  tag=_TAG_EVAL)
        mean, stderr = estimate_bound(batch, self.posterior, train=False)
        out = {"eval_bound": (float(mean.data), stderr)}
        if cfg.objective == OBJECTIVE_GRAPH:
            eshd, f1 = self._graph_metrics(batch, step)
            out["eval_eshd"] = eshd
            out["eval_f1"] = f1
        return out

    def _graph_metrics(self, batch: RolloutBatch, step: int):
        cfg = self.cfg
        n_env = len(batch)
        dists = self.posterior.distributions(batch.history_tensor.data)
        eshds = np.zeros(n_env)
        f1s = np.zeros(n_env)
        for e in range(n_env):
            rng = derive_rng(cfg.seed, _TAG_EVAL, step, 7, e)
            eshds[e], _ = expected_shd(dists[e], batch.dags[e],
                                       cfg.graph_samples, rng)
            f1s[e] = f1_edges(dists[e].probs(), batch.dags[e])
        return ((float(eshds.mean()), float(eshds.std(ddof=1) / math.sqrt(n_env))),
                (float(f1s.mean()), float(f1s.std(ddof=1) / math.sqrt(n_env))))

    # -- orchestration --------------------------------------------------------------------

    def stores(self) -> dict[str, ParamStore]:
        return {"policy": self.policy_store, "posterior": self.post_store}

    def save(self, path: str, step: int) -> None:
        save_stores(path, self.stores(), step)

    def restore(self, path: str) -> int:
        self.step = restore_stores(path, self.stores())
        return self.step

    def train(self, out_dir: str, resume: bool = False) -> dict[str, str]:
        """Run the configured number of steps; returns artifact paths."""
        cfg = self.cfg
        os.makedirs(out_dir, exist_ok=True)
        ckpt_dir = os.path.join(out_dir, "checkpoints")
        os.makedirs(ckpt_dir, exist_ok=True)
        latest = os.path.join(ckpt_dir, "latest.npz")
        metrics_path = os.path.join(out_dir, "metrics.jsonl")

        start = 0
        if resume and os.path.exists(latest):
            start = self.restore(latest)
        mode = "a" if (resume and start > 0) else "w"
        with open(metrics_path, mode) as metrics:
            def log(step: int, name: str, value: float, stderr: float | None):
                rec = {"step": step, "wall": time.time(), "name": name,
                       "value": value, "stderr": stderr}
                metrics.write(json.dumps(rec, sort_keys=True) + "\n")
                metrics.flush()

            for step in range(start, cfg.n_step):
                value, stderr = self.train_step(step)
                log(step, "train_bound", value, stderr)
                done = step + 1
                if done % cfg.eval_every == 0 or done == cfg.n_step:
                    for name, (v, se) in self.evaluate(step).items():
                        log(step, name, v, se)
                if done % cfg.checkpoint_every == 0 or done == cfg.n_step:
                    self.save(latest, done)
                self.step = done
        self.save(latest, self.step)
        return {"checkpoint": latest, "metrics": metrics_path}
