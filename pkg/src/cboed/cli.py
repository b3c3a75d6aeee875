"""Command-line operator surface: train, eval, estimate, ingest.

Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.
The default output root comes from CBOED_OUTPUT_ROOT (falling back to
``./runs``); every command refuses to clobber an existing output directory
unless --overwrite is given.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import subprocess
import sys
import time
import uuid

import numpy as np

from .configs import load_config
from .trainer import ConfigError, Trainer, derive_rng, parse_config

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_USAGE = 2

OUTPUT_ROOT_ENV = "CBOED_OUTPUT_ROOT"


class UsageError(Exception):
    pass


def _output_root() -> str:
    return os.environ.get(OUTPUT_ROOT_ENV, "runs")


def _source_revision() -> str:
    try:
        out = subprocess.run(["git", "rev-parse", "HEAD"], capture_output=True,
                             text=True, timeout=5)
        if out.returncode == 0:
            return out.stdout.strip()
    except OSError:
        pass
    return "unknown"


def _prepare_out_dir(path: str, overwrite: bool) -> None:
    if os.path.exists(path) and os.listdir(path):
        if not overwrite:
            raise UsageError(
                f"output directory {path} exists; pass --overwrite to replace it"
            )
    os.makedirs(path, exist_ok=True)


def _write_json(path: str, payload: dict) -> None:
    with open(path, "w") as fh:
        json.dump(payload, fh, sort_keys=True, indent=2)
        fh.write("\n")


def _load_and_parse(config_arg: str, seed: int | None):
    raw = load_config(config_arg)
    if seed is not None:
        raw["seed"] = int(seed)
    return raw, parse_config(raw)


# -- train ------------------------------------------------------------------------


def cmd_train(args) -> int:
    raw, config = _load_and_parse(args.config, args.seed)
    out_dir = args.out or os.path.join(_output_root(),
                                       f"train-{config.config_hash()}-s{config.seed}")
    _prepare_out_dir(out_dir, args.overwrite)
    _write_json(os.path.join(out_dir, "config.json"), raw)
    trainer = Trainer(config)
    try:
        artifacts = trainer.train(out_dir, resume=args.resume)
    except Exception as err:  # noqa: BLE001 - report and keep the checkpoint
        latest = os.path.join(out_dir, "checkpoints", "latest.npz")
        kept = latest if os.path.exists(latest) else "none"
        print(f"training failed: {err} (latest checkpoint retained: {kept})",
              file=sys.stderr)
        return EXIT_RUNTIME
    manifest = {
        "schema": 1,
        "run_id": str(uuid.uuid4()),
        "kind": "train",
        "config": raw,
        "config_hash": config.config_hash(),
        "seed": config.seed,
        "source_revision": _source_revision(),
        "created": time.strftime("%Y-%m-%dT%H:%M:%S", time.gmtime()),
        "artifacts": {
            "checkpoint": os.path.abspath(artifacts["checkpoint"]),
            "metrics": os.path.abspath(artifacts["metrics"]),
            "config": os.path.abspath(os.path.join(out_dir, "config.json")),
        },
    }
    for path in manifest["artifacts"].values():
        if not os.path.exists(path):
            raise RuntimeError(f"manifest references missing artifact {path}")
    _write_json(os.path.join(out_dir, "manifest.json"), manifest)
    print(f"run complete: {out_dir}")
    return EXIT_OK


# -- eval --------------------------------------------------------------------------


def cmd_eval(args) -> int:
    from .evaluation import stage_sweep

    raw, config = _load_and_parse(args.config, None)
    stages = [int(s) for s in args.stages.split(",")] if args.stages else list(
        range(0, config.horizon + 1))
    seeds = [int(s) for s in args.seeds.split(",")]
    out_dir = args.out or os.path.join(_output_root(),
                                       f"eval-{config.config_hash()}")
    _prepare_out_dir(out_dir, args.overwrite)

    def emit(report, label: str) -> None:
        with open(os.path.join(out_dir, f"{label}.json"), "w") as fh:
            fh.write(report.to_json() + "\n")
        with open(os.path.join(out_dir, f"{label}.csv"), "w") as fh:
            fh.write(report.to_csv())

    for seed in seeds:
        report = stage_sweep(config, args.checkpoint, stages, [seed],
                             n_env=args.n_env)
        emit(report, f"report_seed{seed}")
    aggregate = stage_sweep(config, args.checkpoint, stages, seeds,
                            n_env=args.n_env)
    emit(aggregate, "report_aggregate")
    if args.baseline:
        for seed in seeds:
            report = stage_sweep(config, args.checkpoint, stages, [seed],
                                 n_env=args.n_env, policy=args.baseline)
            emit(report, f"baseline_{args.baseline}_seed{seed}")
        baseline = stage_sweep(config, args.checkpoint, stages, seeds,
                               n_env=args.n_env, policy=args.baseline)
        emit(baseline, f"baseline_{args.baseline}_aggregate")
    print(f"evaluation written to {out_dir}")
    return EXIT_OK


# -- estimate -----------------------------------------------------------------------


def _bias_study_config(args, estimator: str) -> dict:
    """Fixed-design single-stage setup over the six-node benchmark
    (noise widened to 0.3) used for inner-sample-size comparisons."""
    return {
        "schema_version": 1,
        "objective": "effect",
        "d": 6,
        "horizon": 1,
        "n_int": 1,
        "n_step": 1,
        "n_env": 32,
        "graph_prior": {"kind": "fixed", "preset": "six_node"},
        "mechanism": {"kind": "linear_gaussian", "preset": "six_node"},
        "query": {"kind": "effect", "targets": [2, 3], "intervene": 1,
                  "psi_mean": 2.0},
        "policy": {"kind": "fixed",
                   "designs": [[args.design_node, args.design_value]]},
        "policy_net": {"embed": 8, "layers": 1, "heads": 2, "key_size": 4},
        "posterior_net": {"embed": 12, "layers": 2, "heads": 4, "key_size": 4,
                          "dropout": 0.02, "n_trans": 3, "widths": [48, 48]},
        "optim": {"posterior_lr": 2e-3, "lr_gamma": 0.8, "lr_interval": 600},
        "seed": args.seed,
        "eval_every": 10 ** 9,
        "eval_envs": args.n_outer,
        "checkpoint_every": 10 ** 9,
    }


def cmd_estimate(args) -> int:
    from .estimators import estimate_bound, estimate_nmc
    from .oracle import draw_weight_matrices, prior_belief

    if args.setup == "toy":
        raw = _bias_study_config(args, args.estimator)
    else:
        raw = load_config(args.config)
        raw["seed"] = args.seed
    config = parse_config(raw)
    if args.estimator == "nmc" and config.mechanism.kind != "linear_gaussian":
        raise UsageError("the nested MC estimator needs linear-Gaussian mechanisms")

    m_sweep = [int(m) for m in args.m_sweep.split(",")]
    out_dir = args.out or os.path.join(_output_root(),
                                       f"estimate-{config.config_hash()}")
    _prepare_out_dir(out_dir, args.overwrite)

    rows = []
    for m in m_sweep:
        t0 = time.time()
        if args.estimator == "nmc":
            trainer = Trainer(config)
            batch = trainer.rollout_envs(step=0, n_env=args.n_outer,
                                         mode="deploy-hard", tag=6)
            dag = batch.dags[0]
            belief = prior_belief(dag, config.mechanism)

            def sampler(rng, size, _belief=belief, _dag=dag):
                return draw_weight_matrices(_belief, _dag, rng, size)

            est = estimate_nmc(batch, sampler, m, m,
                               derive_rng(config.seed, 99, m))
            rows.append((m, est.value, est.stderr, args.n_outer))
        else:
            fit_raw = dict(raw)
            fit_raw["n_step"] = max(100, m // config.n_env)
            fit = parse_config(fit_raw)
            trainer = Trainer(fit)
            for step in range(fit.n_step):
                trainer.train_step(step)
            batch = trainer.rollout_envs(step=10 ** 6, n_env=args.n_outer,
                                         mode="deploy-hard", tag=6)
            mean, stderr = estimate_bound(batch, trainer.posterior)
            rows.append((m, float(mean.data), stderr, args.n_outer))
        print(f"M={m}: {rows[-1][1]:+.4f} +- {rows[-1][2]:.4f} "
              f"({time.time() - t0:.0f}s)")

    csv_path = os.path.join(out_dir, f"{args.estimator}_sweep.csv")
    with open(csv_path, "w") as fh:
        fh.write(f"# config_hash={config.config_hash()}\n")
        fh.write("m,value,stderr,n_outer\n")
        for m, value, stderr, n_outer in rows:
            fh.write(f"{m},{value!r},{stderr!r},{n_outer}\n")
    print(f"estimates written to {csv_path}")
    return EXIT_OK


# -- ingest -------------------------------------------------------------------------


def cmd_ingest(args) -> int:
    from .scm import load_adjacency

    dag = load_adjacency(args.path)
    payload = {
        "schema": 1,
        "d": dag.d,
        "n_edges": dag.n_edges(),
        "edges": [[int(i), int(j)] for i, j in zip(*np.nonzero(dag.edges))],
        "topo_order": list(dag.topo_order),
        "sha256": hashlib.sha256(open(args.path, "rb").read()).hexdigest(),
    }
    if args.out:
        _write_json(args.out, payload)
    print(json.dumps(payload, sort_keys=True))
    return EXIT_OK


# -- entry point ---------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cboed",
        description="Goal-directed causal experimental design toolkit",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="train a policy/posterior pair")
    p_train.add_argument("--config", required=True,
                         help="config file path or named config")
    p_train.add_argument("--seed", type=int, default=None)
    p_train.add_argument("--out", default=None)
    p_train.add_argument("--overwrite", action="store_true")
    p_train.add_argument("--resume", action="store_true")
    p_train.set_defaults(func=cmd_train)

    p_eval = sub.add_parser("eval", help="stage-sweep a trained checkpoint")
    p_eval.add_argument("--checkpoint", required=True)
    p_eval.add_argument("--config", required=True)
    p_eval.add_argument("--stages", default=None,
                        help="comma-separated stage lengths (default 0..T)")
    p_eval.add_argument("--seeds", default="0")
    p_eval.add_argument("--n-env", type=int, default=None)
    p_eval.add_argument("--baseline", choices=["random"], default=None)
    p_eval.add_argument("--out", default=None)
    p_eval.add_argument("--overwrite", action="store_true")
    p_eval.set_defaults(func=cmd_eval)

    p_est = sub.add_parser("estimate",
                           help="compare gain estimators on a fixed-design setup")
    p_est.add_argument("--setup", choices=["toy", "custom"], default="toy")
    p_est.add_argument("--config", default=None,
                       help="required for --setup custom")
    p_est.add_argument("--estimator", choices=["nmc", "bound"], required=True)
    p_est.add_argument("--m-sweep", default="100,3000,10000")
    p_est.add_argument("--n-outer", type=int, default=2000)
    p_est.add_argument("--design-node", type=int, default=0)
    p_est.add_argument("--design-value", type=float, default=3.0)
    p_est.add_argument("--seed", type=int, default=0)
    p_est.add_argument("--out", default=None)
    p_est.add_argument("--overwrite", action="store_true")
    p_est.set_defaults(func=cmd_estimate)

    p_ing = sub.add_parser("ingest", help="validate and summarize an adjacency file")
    p_ing.add_argument("path")
    p_ing.add_argument("--out", default=None)
    p_ing.set_defaults(func=cmd_ingest)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as err:
        return EXIT_USAGE if err.code not in (0, None) else EXIT_OK
    if args.command == "estimate" and args.setup == "custom" and not args.config:
        print("--setup custom requires --config", file=sys.stderr)
        return EXIT_USAGE
    try:
        return args.func(args)
    except (ConfigError, UsageError, FileNotFoundError, KeyError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_USAGE
    except ValueError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as err:  # noqa: BLE001
        print(f"runtime failure: {err}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
