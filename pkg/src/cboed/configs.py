"""Named training configurations for the bundled benchmarks.

`load_config` accepts either a path to a JSON file or one of these names.
All values are desk-scale: small networks and step counts that train in
minutes on a laptop core while preserving the qualitative behaviour of the
full-size setups.
"""
from __future__ import annotations

import copy
import json
import os

_SIX_NODE_BASE = {
    "schema_version": 1,
    "d": 6,
    "horizon": 3,
    "n_int": 1,
    "n_env": 32,
    "graph_prior": {"kind": "fixed", "preset": "six_node"},
    "mechanism": {"kind": "linear_gaussian", "preset": "six_node"},
    "policy": {"kind": "learned"},
    "policy_net": {"embed": 16, "layers": 2, "heads": 4, "key_size": 4,
                   "dropout": 0.02, "tau_init": 5.0, "tau_decay": 0.9992,
                   "tau_floor": 0.5, "warmup_steps": 1500,
                   "target_gradient": "score", "entropy_bonus": 0.3,
                   "entropy_decay": 0.9992, "explore_mix": 0.3,
                   "explore_decay": 0.9992},
    "posterior_net": {"embed": 16, "layers": 2, "heads": 4, "key_size": 4,
                      "dropout": 0.02, "n_trans": 4, "widths": [64, 64]},
    "optim": {"policy_lr": 5e-4, "posterior_lr": 2e-3, "lr_gamma": 0.8,
              "lr_interval": 1200},
    "seed": 0,
    "eval_every": 500,
    "eval_envs": 256,
    "checkpoint_every": 1000,
}

NAMED_CONFIGS: dict[str, dict] = {}


def _register(name: str, cfg: dict) -> None:
    NAMED_CONFIGS[name] = cfg


_toy_z = copy.deepcopy(_SIX_NODE_BASE)
_toy_z.update({
    "objective": "effect",
    "n_step": 6000,
    "query": {"kind": "effect", "targets": [4, 5], "intervene": 2,
              "psi_mean": 10.0},
})
_register("toy_fixed_graph", _toy_z)

_toy_theta = copy.deepcopy(_SIX_NODE_BASE)
_toy_theta.update({
    "objective": "theta",
    "n_step": 6000,
    "query": {"kind": "theta", "exclude_parents_of": 2},
})
_register("toy_fixed_graph_theta", _toy_theta)

_register("chain3_reasoning", {
    "schema_version": 1,
    "objective": "effect",
    "d": 3,
    "horizon": 2,
    "n_int": 1,
    "n_step": 1500,
    "n_env": 24,
    "graph_prior": {"kind": "chain"},
    "mechanism": {"kind": "linear_gaussian", "theta_mean": 0.0, "theta_var": 1.0,
                  "zero_bias": True, "noise_var": 0.1},
    "query": {"kind": "effect", "targets": [2], "intervene": 0, "psi_mean": 2.0},
    "policy": {"kind": "random"},
    "policy_net": {"embed": 8, "layers": 1, "heads": 2, "key_size": 4},
    "posterior_net": {"embed": 8, "layers": 2, "heads": 2, "key_size": 4,
                      "dropout": 0.02, "n_trans": 3, "widths": [48, 48]},
    "optim": {"posterior_lr": 2e-3, "lr_gamma": 0.8, "lr_interval": 600},
    "seed": 0,
    "eval_every": 500,
    "eval_envs": 256,
    "checkpoint_every": 1000,
})

_register("er5_discovery", {
    "schema_version": 1,
    "objective": "graph",
    "d": 5,
    "horizon": 5,
    "n_int": 3,
    "n_step": 2500,
    "n_env": 24,
    "graph_prior": {"kind": "erdos_renyi", "expected_degree": 2.0},
    "mechanism": {"kind": "linear_gaussian", "theta_mean": 0.0, "theta_var": 2.0,
                  "noise_var": 0.1},
    "query": {"kind": "graph"},
    "policy": {"kind": "learned"},
    "policy_net": {"embed": 16, "layers": 2, "heads": 4, "key_size": 4,
                   "dropout": 0.02, "tau_init": 5.0, "tau_decay": 0.9992,
                   "tau_floor": 0.5, "warmup_steps": 800,
                   "target_gradient": "score", "entropy_bonus": 0.2,
                   "entropy_decay": 0.9992, "explore_mix": 0.3,
                   "explore_decay": 0.9992},
    "posterior_net": {"embed": 24, "layers": 2, "heads": 4, "key_size": 6,
                      "dropout": 0.02, "temp_init": 2.0, "bias_init": -3.0},
    "optim": {"policy_lr": 5e-4, "posterior_lr": 2e-3, "lr_gamma": 0.8,
              "lr_interval": 1000},
    "seed": 0,
    "eval_every": 500,
    "eval_envs": 128,
    "checkpoint_every": 1000,
    "graph_samples": 128,
})

_register("one_edge_smoke", {
    "schema_version": 1,
    "objective": "effect",
    "d": 2,
    "horizon": 1,
    "n_int": 1,
    "n_step": 200,
    "n_env": 16,
    "graph_prior": {"kind": "chain"},
    "mechanism": {"kind": "linear_gaussian", "theta_mean": 0.0, "theta_var": 1.0,
                  "zero_bias": True, "noise_var": 0.1},
    "query": {"kind": "effect", "targets": [1], "intervene": 0, "psi_mean": 2.0},
    "policy": {"kind": "random"},
    "policy_net": {"embed": 8, "layers": 1, "heads": 2, "key_size": 4},
    "posterior_net": {"embed": 8, "layers": 2, "heads": 2, "key_size": 4,
                      "n_trans": 2, "widths": [32, 32]},
    "optim": {"posterior_lr": 1e-3},
    "seed": 0,
    "eval_every": 100,
    "eval_envs": 64,
    "checkpoint_every": 100,
})


def named_config(name: str) -> dict:
    if name not in NAMED_CONFIGS:
        known = ", ".join(sorted(NAMED_CONFIGS))
        raise KeyError(f"unknown config name {name!r}; known: {known}")
    return copy.deepcopy(NAMED_CONFIGS[name])


def load_config(path_or_name: str) -> dict:
    """Read a config dict from a JSON file or the named registry."""
    if os.path.exists(path_or_name):
        with open(path_or_name) as fh:
            return json.load(fh)
    if path_or_name in NAMED_CONFIGS:
        return named_config(path_or_name)
    raise FileNotFoundError(
        f"{path_or_name!r} is neither a config file nor a named config "
        f"(known names: {', '.join(sorted(NAMED_CONFIGS))})"
    )
