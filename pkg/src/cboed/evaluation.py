"""Discovery/reasoning metrics and stage-sweep evaluation of trained policies."""
from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .posteriors import EdgeBernoulli, graph_sample
from .scm import Dag, Design


def _adjacency(graph) -> np.ndarray:
    if isinstance(graph, Dag):
        return graph.edges.astype(bool)
    arr = np.asarray(graph)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
        raise ValueError("adjacency must be square")
    return arr.astype(bool)


def shd(a, b) -> int:
    """Structural Hamming distance; a reversed edge counts as one error."""
    a = _adjacency(a)
    b = _adjacency(b)
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    diff = a ^ b
    reversed_pairs = a & b.T & ~a.T & ~b
    return int(diff.sum() - reversed_pairs.sum())


def expected_shd(posterior: EdgeBernoulli, truth, n: int,
                 rng: np.random.Generator,
                 max_tries: int = 200) -> tuple[float, float]:
    """Monte Carlo average distance of acyclic posterior draws to the truth."""
    if n < 2:
        raise ValueError("need at least two posterior samples")
    truth = _adjacency(truth)
    values = np.empty(n)
    for k in range(n):
        dag = graph_sample(posterior, rng, acyclic_only=True, max_tries=max_tries)
        values[k] = shd(dag, truth)
    return float(values.mean()), float(values.std(ddof=1) / math.sqrt(n))


def f1_edges(marginals: np.ndarray, truth, threshold: float = 0.5) -> float:
    """Directed-edge F1 of thresholded marginals; empty vs empty scores 1."""
    truth = _adjacency(truth)
    p = np.asarray(marginals, dtype=float)
    if p.shape != truth.shape:
        raise ValueError("marginal matrix shape mismatch")
    off = ~np.eye(truth.shape[0], dtype=bool)
    pred = (p > threshold) & off
    actual = truth & off
    tp = int((pred & actual).sum())
    fp = int((pred & ~actual).sum())
    fn = int((~pred & actual).sum())
    if tp == 0 and fp == 0 and fn == 0:
        return 1.0
    if tp == 0:
        return 0.0
    precision = tp / (tp + fp)
    recall = tp / (tp + fn)
    return 2 * precision * recall / (precision + recall)


def random_policy(d: int, rng: np.random.Generator, low: float = -10.0,
                  high: float = 10.0) -> Design:
    """Uniform intervention target and uniform clamp value."""
    return Design(targets=(int(rng.integers(d)),),
                  values=(float(rng.uniform(low, high)),))


@dataclass
class EvalReport:
    """Per-stage metric curves from a sweep over evaluation horizons."""

    stages: list[int]
    bound_mean: list[float]
    bound_stderr: list[float]
    eshd_mean: list[float | None]
    eshd_stderr: list[float | None]
    f1_mean: list[float | None]
    f1_stderr: list[float | None]
    seeds: list[int]
    config_hash: str
    n_envs: int
    graph_samples: int
    policy: str
    per_seed_bound: dict[int, list[float]] = field(default_factory=dict)
    per_seed_eshd: dict[int, list[float]] = field(default_factory=dict)
    per_seed_f1: dict[int, list[float]] = field(default_factory=dict)
    trained_horizon: int | None = None
    schema: int = 1

    def __post_init__(self):
        n = len(self.stages)
        for name in ("bound_mean", "bound_stderr", "eshd_mean", "eshd_stderr",
                     "f1_mean", "f1_stderr"):
            if len(getattr(self, name)) != n:
                raise ValueError(f"{name} must have one entry per stage")
        if any(se is not None and se < 0 for se in self.bound_stderr):
            raise ValueError("standard errors must be nonnegative")

    def to_json(self) -> str:
        payload = {
            "schema": self.schema,
            "stages": self.stages,
            "bound_mean": self.bound_mean,
            "bound_stderr": self.bound_stderr,
            "eshd_mean": self.eshd_mean,
            "eshd_stderr": self.eshd_stderr,
            "f1_mean": self.f1_mean,
            "f1_stderr": self.f1_stderr,
            "seeds": self.seeds,
            "config_hash": self.config_hash,
            "n_envs": self.n_envs,
            "graph_samples": self.graph_samples,
            "policy": self.policy,
            "per_seed_bound": {str(k): v for k, v in self.per_seed_bound.items()},
            "per_seed_eshd": {str(k): v for k, v in self.per_seed_eshd.items()},
            "per_seed_f1": {str(k): v for k, v in self.per_seed_f1.items()},
            "trained_horizon": self.trained_horizon,
        }
        return json.dumps(payload, sort_keys=True, indent=2)

    def to_csv(self) -> str:
        lines = [f"# config_hash={self.config_hash}"]
        lines.append("stage,bound_mean,bound_stderr,eshd_mean,eshd_stderr,"
                     "f1_mean,f1_stderr")
        for k, stage in enumerate(self.stages):
            cells = [str(stage)]
            for col in (self.bound_mean, self.bound_stderr, self.eshd_mean,
                        self.eshd_stderr, self.f1_mean, self.f1_stderr):
                cells.append("" if col[k] is None else repr(col[k]))
            lines.append(",".join(cells))
        return "\n".join(lines) + "\n"


def _prefix_tensor(batch, stage: int, n_int: int, d: int) -> np.ndarray:
    """History rows for the first `stage` steps; stage 0 is the pad row."""
    full = batch.history_tensor.data
    if stage == 0:
        return np.zeros((full.shape[0], 1, d, 2))
    return full[:, : stage * n_int]


def stage_sweep(config, checkpoint_path: str, stages, seeds,
                n_env: int | None = None, policy: str | None = None,
                graph_samples: int | None = None) -> EvalReport:
    """Evaluate a checkpoint at several horizons with fresh deploy rollouts.

    ``policy`` may override the config's policy kind (e.g. "random" for a
    paired baseline on identical environment seeds). Stages beyond the
    trained horizon are allowed; the policy is horizon-agnostic at
    deployment.
    """
    from .checkpoint import load_subset
    from .networks import DEPLOY_HARD
    from .trainer import (
        OBJECTIVE_GRAPH,
        Trainer,
        TrainConfig,
        derive_rng,
        parse_config,
    )

    if isinstance(config, dict):
        config = parse_config(config)
    stages = sorted(set(int(s) for s in stages))
    if any(s < 0 for s in stages):
        raise ValueError("stages must be nonnegative")
    seeds = [int(s) for s in seeds]
    if not seeds:
        raise ValueError("need at least one evaluation seed")
    raw = config.to_dict()
    if policy is not None:
        raw["policy"] = ({"kind": "random"} if policy == "random"
                         else {"kind": policy})
        config = parse_config(raw)
    n_env = config.eval_envs if n_env is None else int(n_env)
    graph_samples = (config.graph_samples if graph_samples is None
                     else int(graph_samples))
    max_stage = max(stages) if stages else 0
    if max_stage > config.horizon:
        warnings.warn(
            f"evaluating at stage {max_stage} beyond the trained horizon "
            f"{config.horizon}; the policy is horizon-agnostic at deployment"
        )

    trainer = Trainer(config)
    trained_step = load_subset(checkpoint_path, trainer.post_store)
    if trainer.policy is not None and config.policy_kind == "learned":
        load_subset(checkpoint_path, trainer.policy_store)

    is_graph = config.objective == OBJECTIVE_GRAPH
    per_seed_bound: dict[int, list[float]] = {}
    per_seed_eshd: dict[int, list[float]] = {}
    per_seed_f1: dict[int, list[float]] = {}
    _SWEEP_TAG = 6

    for seed in seeds:
        batch = trainer.rollout_envs(step=seed, n_env=n_env, mode=DEPLOY_HARD,
                                     tag=_SWEEP_TAG,
                                     horizon=max(max_stage, 1))
        bounds, eshds, f1s = [], [], []
        for stage in stages:
            prefix = ad.constant(_prefix_tensor(batch, stage, config.n_int,
                                                config.d))
            log_q = trainer.posterior.log_prob(prefix, batch.zs,
                                               psi=batch.psis)
            bounds.append(float(log_q.data.mean()))
            if is_graph:
                dists = trainer.posterior.distributions(prefix)
                se_vals = np.empty(n_env)
                f1_vals = np.empty(n_env)
                for e in range(n_env):
                    rng = derive_rng(config.seed, _SWEEP_TAG, seed, stage, e)
                    se_vals[e], _ = expected_shd(dists[e], batch.dags[e],
                                                 graph_samples, rng)
                    f1_vals[e] = f1_edges(dists[e].probs(), batch.dags[e])
                eshds.append(float(se_vals.mean()))
                f1s.append(float(f1_vals.mean()))
        per_seed_bound[seed] = bounds
        if is_graph:
            per_seed_eshd[seed] = eshds
            per_seed_f1[seed] = f1s

    def aggregate(per_seed: dict[int, list[float]]):
        if not per_seed:
            return [None] * len(stages), [None] * len(stages)
        arr = np.array([per_seed[s] for s in seeds])      # (seeds, stages)
        mean = arr.mean(axis=0)
        if len(seeds) > 1:
            se = arr.std(axis=0, ddof=1) / math.sqrt(len(seeds))
        else:
            se = np.zeros(len(stages))
        return [float(v) for v in mean], [float(v) for v in se]

    bound_mean, bound_stderr = aggregate(per_seed_bound)
    eshd_mean, eshd_stderr = aggregate(per_seed_eshd)
    f1_mean, f1_stderr = aggregate(per_seed_f1)
    return EvalReport(
        stages=stages, bound_mean=bound_mean, bound_stderr=bound_stderr,
        eshd_mean=eshd_mean, eshd_stderr=eshd_stderr, f1_mean=f1_mean,
        f1_stderr=f1_stderr, seeds=seeds, config_hash=config.config_hash(),
        n_envs=n_env, graph_samples=graph_samples,
        policy=config.policy_kind, per_seed_bound=per_seed_bound,
        per_seed_eshd=per_seed_eshd, per_seed_f1=per_seed_f1,
        trained_horizon=config.horizon,
    )
