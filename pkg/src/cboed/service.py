"""Live adaptive-design service.

Loads trained checkpoints, manages experiment sessions, recommends the next
intervention for each session, accepts human-entered outcomes, and reports
posterior beliefs and what-if predictions. Sessions persist as append-only
JSON-lines event logs, one file per session, so a crash can never leave a
half-appended history.
"""
from __future__ import annotations

import json
import math
import os
import threading
import time
import uuid
from dataclasses import dataclass, field

import numpy as np
from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse, RedirectResponse
from fastapi.staticfiles import StaticFiles

from . import autodiff as ad
from .checkpoint import CheckpointError, load_subset
from .networks import DEPLOY_HARD
from .oracle import (
    UnsupportedMechanismError,
    belief_sigma,
    draw_weight_matrices,
    prior_belief,
    update_belief,
)
from .scm import (
    Design,
    FixedGraph,
    History,
    Query,
    Scm,
    sample_dag,
    sample_mechanism,
    simulate,
)
from .trainer import (
    OBJECTIVE_EFFECT,
    OBJECTIVE_GRAPH,
    Trainer,
    derive_rng,
    parse_config,
)

SCHEMA = 1
BELIEF_SAMPLES = 1024
QUANTILES = (5, 25, 50, 75, 95)


class ServiceError(Exception):
    def __init__(self, status: int, code: str, message: str):
        self.status = status
        self.code = code
        self.message = message
        super().__init__(message)


@dataclass
class Session:
    session_id: str
    run: str
    horizon: int
    seed: int
    query: dict
    created_at: float
    history: History = field(default_factory=History)
    updated_at: float = 0.0

    @property
    def status(self) -> str:
        return "complete" if len(self.history) >= self.horizon else "active"


class _LoadedRun:
    """A run directory's config and parameters, shared read-only."""

    def __init__(self, run_dir: str):
        config_path = os.path.join(run_dir, "config.json")
        ckpt_path = os.path.join(run_dir, "checkpoints", "latest.npz")
        if not os.path.exists(config_path):
            raise ServiceError(400, "bad_checkpoint",
                               f"no config.json under {run_dir}")
        if not os.path.exists(ckpt_path):
            raise ServiceError(400, "bad_checkpoint",
                               f"no checkpoints/latest.npz under {run_dir}")
        with open(config_path) as fh:
            self.raw_config = json.load(fh)
        self.config = parse_config(self.raw_config)
        self.trainer = Trainer(self.config)
        try:
            load_subset(ckpt_path, self.trainer.post_store)
            if self.config.policy_kind == "learned":
                load_subset(ckpt_path, self.trainer.policy_store)
        except CheckpointError as err:
            raise ServiceError(400, "bad_checkpoint", str(err)) from err

    @property
    def d(self) -> int:
        return self.config.d


class SessionStore:
    """Append-only on-disk session log with in-memory replay cache."""

    def __init__(self, sessions_dir: str):
        self.dir = sessions_dir
        os.makedirs(sessions_dir, exist_ok=True)
        self._locks: dict[str, threading.Lock] = {}
        self._guard = threading.Lock()

    def lock(self, session_id: str) -> threading.Lock:
        with self._guard:
            return self._locks.setdefault(session_id, threading.Lock())

    def _path(self, session_id: str) -> str:
        return os.path.join(self.dir, f"{session_id}.jsonl")

    def append(self, session_id: str, event: dict) -> None:
        line = json.dumps(event, sort_keys=True)
        with open(self._path(session_id), "a") as fh:
            fh.write(line + "\n")
            fh.flush()
            os.fsync(fh.fileno())

    def load(self, session_id: str) -> Session:
        path = self._path(session_id)
        if not os.path.exists(path):
            raise ServiceError(404, "unknown_session",
                               f"no session {session_id}")
        session: Session | None = None
        with open(path) as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                try:
                    event = json.loads(line)
                except json.JSONDecodeError:
                    break  # torn trailing write: the event was never committed
                if event["event"] == "created":
                    session = Session(
                        session_id=event["session_id"], run=event["run"],
                        horizon=int(event["horizon"]), seed=int(event["seed"]),
                        query=event["query"], created_at=float(event["at"]),
                        updated_at=float(event["at"]),
                    )
                elif event["event"] == "outcome" and session is not None:
                    design = Design(targets=tuple(event["design"]["targets"]),
                                    values=tuple(event["design"]["values"]))
                    rows = np.asarray(event["rows"], dtype=float)
                    session.history = session.history.append(design, rows)
                    session.updated_at = float(event["at"])
        if session is None:
            raise ServiceError(404, "unknown_session",
                               f"session log {session_id} is empty")
        return session

    def exists(self, session_id: str) -> bool:
        return os.path.exists(self._path(session_id))

    def list_ids(self) -> list[str]:
        return sorted(
            name[:-6] for name in os.listdir(self.dir) if name.endswith(".jsonl")
        )


def _history_array(history: History, d: int) -> np.ndarray:
    return history.as_array(d)[None, ...]     # batch of one


def _beliefs(run: _LoadedRun, session: Session, seed: int) -> dict:
    """Posterior summary conditioned on the session's current history."""
    cfg = run.config
    hist = ad.constant(_history_array(session.history, cfg.d))
    rng = derive_rng(seed, len(session.history), 11)
    if cfg.objective == OBJECTIVE_GRAPH:
        marginals = run.trainer.posterior.marginals(hist.data)[0]
        return {
            "kind": "graph",
            "edge_marginals": [[float(v) for v in row] for row in marginals],
            "n_samples": 0,
            "seed": seed,
        }
    if cfg.objective == OBJECTIVE_EFFECT:
        query = _session_query(cfg, session)
        psis = query.psi_mean + query.psi_std * rng.standard_normal(BELIEF_SAMPLES)
        hist_tiled = np.repeat(hist.data, BELIEF_SAMPLES, axis=0)
        cond = run.trainer.posterior._condition(
            ad.constant(hist_tiled), psis, train=False, rng=None)
        draws = run.trainer.posterior.flow.sample(cond, rng)
        return {
            "kind": "effect",
            "targets": list(query.targets),
            "mean": [float(v) for v in draws.mean(axis=0)],
            "quantiles": {
                str(q): [float(v) for v in np.percentile(draws, q, axis=0)]
                for q in QUANTILES
            },
            "n_samples": BELIEF_SAMPLES,
            "seed": seed,
        }
    # weight-vector objectives: summarize the flow over the weight entries
    hist_tiled = np.repeat(hist.data, BELIEF_SAMPLES, axis=0)
    cond = run.trainer.posterior._condition(ad.constant(hist_tiled), None,
                                            train=False, rng=None)
    draws = run.trainer.posterior.flow.sample(cond, rng)
    return {
        "kind": "theta",
        "edges": [list(e) for e in cfg.theta_edges],
        "mean": [float(v) for v in draws.mean(axis=0)],
        "quantiles": {
            str(q): [float(v) for v in np.percentile(draws, q, axis=0)]
            for q in QUANTILES
        },
        "n_samples": BELIEF_SAMPLES,
        "seed": seed,
    }


def _session_query(cfg, session: Session) -> Query:
    q = session.query
    return Query(kind="effect", targets=tuple(q["targets"]),
                 intervene=int(q["intervene"]),
                 psi_mean=float(q["psi_mean"]), psi_std=float(q["psi_std"]))


def _recommendation(run: _LoadedRun, session: Session) -> dict:
    cfg = run.config
    hist = ad.constant(_history_array(session.history, cfg.d))
    step = len(session.history)
    if run.trainer.policy is not None:
        act = run.trainer.policy.act(hist, temperature=1.0, rng=None,
                                     mode=DEPLOY_HARD)
        design = act.designs[0]
        scores = [float(v) for v in act.target_probs[0]]
    else:
        rng = derive_rng(session.seed, step, 13)
        from .networks import random_designs
        design = random_designs(cfg.d, 1, rng, low=cfg.policy_net.min_val,
                                high=cfg.policy_net.max_val)[0]
        scores = [1.0 / cfg.d] * cfg.d
    return {
        "design": {"targets": list(design.targets),
                   "values": list(design.values)},
        "target_scores": scores,
        "step": step,
        "beyond_trained_horizon": session.horizon > cfg.horizon,
    }


def _whatif(run: _LoadedRun, session: Session, design: Design,
            mc_budget: int, seed: int) -> dict:
    """Model-based predictive summary of all nodes under a candidate design."""
    cfg = run.config
    rng = derive_rng(seed, 17)
    fixed_linear = (isinstance(cfg.graph_prior, FixedGraph)
                    and cfg.mechanism.kind == "linear_gaussian"
                    and cfg.mechanism.bias_range is None)
    if fixed_linear:
        dag = cfg.graph_prior.dag
        belief = update_belief(prior_belief(dag, cfg.mechanism), session.history)
        weights = draw_weight_matrices(belief, dag, rng, mc_budget)
        sigma = belief_sigma(belief)
        from .oracle import _laws_for_weight_batch
        means, covs = _laws_for_weight_batch(
            dag, weights, np.zeros(dag.d), sigma, design, list(range(dag.d)))
        mean = means.mean(axis=0)
        var = covs.diagonal(axis1=1, axis2=2).mean(axis=0) + means.var(axis=0)
        basis = "conjugate_posterior"
    else:
        draws = np.zeros((mc_budget, cfg.d))
        for k in range(mc_budget):
            local = derive_rng(seed, 17, k)
            dag = sample_dag(cfg.graph_prior, cfg.d, local)
            mech = sample_mechanism(dag, cfg.mechanism.kind, local, cfg.mechanism)
            draws[k] = simulate(Scm(dag=dag, mechanism=mech), design, 1, local)[0]
        mean = draws.mean(axis=0)
        var = draws.var(axis=0)
        basis = "prior_simulation"
    for t, v in zip(design.targets, design.values):
        mean[t] = v
        var[t] = 0.0
    return {
        "design": {"targets": list(design.targets), "values": list(design.values)},
        "predictive_mean": [float(v) for v in mean],
        "predictive_std": [float(math.sqrt(max(v, 0.0))) for v in var],
        "basis": basis,
        "model_based": True,
        "n_samples": mc_budget,
        "seed": seed,
    }


def create_app(runs_root: str, sessions_dir: str,
               console_dir: str | None = None) -> FastAPI:
    app = FastAPI(title="cboed design service")
    store = SessionStore(sessions_dir)
    runs: dict[str, _LoadedRun] = {}
    runs_guard = threading.Lock()

    def get_run(name: str) -> _LoadedRun:
        with runs_guard:
            if name not in runs:
                run_dir = os.path.join(runs_root, name)
                if not os.path.isdir(run_dir):
                    raise ServiceError(404, "unknown_checkpoint",
                                       f"no run directory {name!r}")
                runs[name] = _LoadedRun(run_dir)
            return runs[name]

    @app.exception_handler(ServiceError)
    async def _service_error(_req: Request, err: ServiceError):
        return JSONResponse(
            status_code=err.status,
            content={"schema": SCHEMA,
                     "error": {"code": err.code, "message": err.message}},
        )

    def ok(payload: dict, status: int = 200) -> JSONResponse:
        return JSONResponse(status_code=status,
                            content={"schema": SCHEMA, **payload})

    def session_view(run: _LoadedRun, session: Session) -> dict:
        return {
            "session": {
                "id": session.session_id,
                "run": session.run,
                "status": session.status,
                "step": len(session.history),
                "horizon": session.horizon,
                "d": run.d,
                "objective": run.config.objective,
                "query": session.query,
                "seed": session.seed,
                "created_at": session.created_at,
                "updated_at": session.updated_at,
                "history": [
                    {"design": {"targets": list(dsn.targets),
                                "values": list(dsn.values)},
                     "rows": [[float(v) for v in row] for row in rows]}
                    for dsn, rows in session.history.steps
                ],
            },
            "beliefs": _beliefs(run, session, session.seed),
        }

    @app.get("/checkpoints")
    async def list_checkpoints():
        entries = []
        if os.path.isdir(runs_root):
            for name in sorted(os.listdir(runs_root)):
                manifest = os.path.join(runs_root, name, "manifest.json")
                config = os.path.join(runs_root, name, "config.json")
                ckpt = os.path.join(runs_root, name, "checkpoints", "latest.npz")
                if not (os.path.exists(config) and os.path.exists(ckpt)):
                    continue
                with open(config) as fh:
                    raw = json.load(fh)
                entry = {"name": name, "objective": raw.get("objective"),
                         "d": raw.get("d"), "horizon": raw.get("horizon")}
                if os.path.exists(manifest):
                    with open(manifest) as fh:
                        entry["config_hash"] = json.load(fh).get("config_hash")
                entries.append(entry)
        return ok({"checkpoints": entries})

    async def _parse_body(request: Request) -> dict:
        try:
            body = await request.json()
        except json.JSONDecodeError as err:
            raise ServiceError(400, "bad_json", f"invalid JSON body: {err}")
        if not isinstance(body, dict):
            raise ServiceError(400, "bad_json", "body must be a JSON object")
        if body.get("schema") != SCHEMA:
            raise ServiceError(400, "bad_schema",
                               f"payload schema must be {SCHEMA}")
        return body

    @app.post("/sessions")
    async def create_session(request: Request):
        body = await _parse_body(request)
        run_name = body.get("checkpoint")
        if not run_name:
            raise ServiceError(400, "missing_field",
                               "'checkpoint' (run directory name) is required")
        run = get_run(str(run_name))
        cfg = run.config
        horizon = int(body.get("horizon", cfg.horizon))
        if horizon < 1:
            raise ServiceError(400, "bad_horizon", "horizon must be >= 1")
        seed = int(body.get("seed", 0))
        query = body.get("query")
        if cfg.objective == OBJECTIVE_EFFECT:
            base = cfg.query
            if query is None:
                query = {"kind": "effect", "targets": list(base.targets),
                         "intervene": base.intervene,
                         "psi_mean": base.psi_mean, "psi_std": base.psi_std}
            else:
                try:
                    parsed = Query(kind="effect",
                                   targets=tuple(query["targets"]),
                                   intervene=int(query["intervene"]),
                                   psi_mean=float(query["psi_mean"]),
                                   psi_std=float(query.get("psi_std", 0.0)))
                except (KeyError, ValueError, TypeError) as err:
                    raise ServiceError(400, "bad_query", f"invalid query: {err}")
                if len(parsed.targets) != base.n_z:
                    raise ServiceError(
                        400, "bad_query",
                        f"this checkpoint answers {base.n_z}-dimensional "
                        f"queries; got {len(parsed.targets)} targets")
                if any(t >= cfg.d for t in parsed.targets) or parsed.intervene >= cfg.d:
                    raise ServiceError(400, "bad_query",
                                       f"query nodes out of range for d={cfg.d}")
                query = {"kind": "effect", "targets": list(parsed.targets),
                         "intervene": parsed.intervene,
                         "psi_mean": parsed.psi_mean, "psi_std": parsed.psi_std}
        elif cfg.objective == OBJECTIVE_GRAPH:
            query = {"kind": "graph"}
        else:
            query = {"kind": "theta",
                     "edges": [list(e) for e in cfg.theta_edges]}
        session = Session(
            session_id=uuid.uuid4().hex, run=str(run_name), horizon=horizon,
            seed=seed, query=query, created_at=time.time(),
            updated_at=time.time(),
        )
        store.append(session.session_id, {
            "event": "created", "schema": SCHEMA,
            "session_id": session.session_id, "run": session.run,
            "horizon": horizon, "seed": seed, "query": query,
            "at": session.created_at,
        })
        view = session_view(run, session)
        view["recommendation"] = _recommendation(run, session)
        return ok(view, status=201)

    @app.get("/sessions/{session_id}")
    async def get_session(session_id: str):
        session = store.load(session_id)
        run = get_run(session.run)
        return ok(session_view(run, session))

    @app.get("/sessions/{session_id}/recommendation")
    async def get_recommendation(session_id: str):
        session = store.load(session_id)
        run = get_run(session.run)
        if session.status == "complete":
            raise ServiceError(409, "session_complete",
                               "all experiment stages are already recorded")
        return ok({"recommendation": _recommendation(run, session)})

    @app.post("/sessions/{session_id}/outcomes")
    async def submit_outcome(session_id: str, request: Request):
        body = await _parse_body(request)
        with store.lock(session_id):
            session = store.load(session_id)
            run = get_run(session.run)
            if session.status == "complete":
                raise ServiceError(409, "session_complete",
                                   "history is already at the session horizon")
            design_spec = body.get("design")
            rows_spec = body.get("outcomes")
            if not design_spec or rows_spec is None:
                raise ServiceError(400, "missing_field",
                                   "'design' and 'outcomes' are required")
            try:
                design = Design(targets=tuple(design_spec["targets"]),
                                values=tuple(design_spec["values"]))
                design.validate_for(run.d)
            except (KeyError, ValueError, TypeError) as err:
                raise ServiceError(400, "bad_design", f"invalid design: {err}")
            rows = np.asarray(rows_spec, dtype=float)
            if rows.ndim == 1:
                rows = rows[None, :]
            if rows.ndim != 2 or rows.shape[1] != run.d:
                raise ServiceError(400, "bad_outcomes",
                                   f"outcome rows must have {run.d} values")
            if not np.all(np.isfinite(rows)):
                raise ServiceError(400, "bad_outcomes",
                                   "outcome values must be finite")
            for t, v in zip(design.targets, design.values):
                if not np.all(rows[:, t] == v):
                    raise ServiceError(
                        400, "clamp_mismatch",
                        f"outcome column {t} must equal the clamp value {v}")
            session.history = session.history.append(design, rows)
            session.updated_at = time.time()
            store.append(session_id, {
                "event": "outcome", "schema": SCHEMA,
                "design": {"targets": list(design.targets),
                           "values": list(design.values)},
                "rows": [[float(v) for v in row] for row in rows],
                "at": session.updated_at,
            })
        view = session_view(run, session)
        if session.status == "active":
            view["recommendation"] = _recommendation(run, session)
        return ok(view)

    @app.post("/sessions/{session_id}/whatif")
    async def whatif(session_id: str, request: Request):
        body = await _parse_body(request)
        session = store.load(session_id)
        run = get_run(session.run)
        if session.status == "complete":
            raise ServiceError(409, "session_complete",
                               "session is complete; no further planning")
        design_spec = body.get("design")
        if not design_spec:
            raise ServiceError(400, "missing_field", "'design' is required")
        mc_budget = int(body.get("mc_budget", 256))
        if mc_budget <= 0:
            raise ServiceError(400, "bad_budget", "mc_budget must be positive")
        seed = int(body.get("seed", 0))
        try:
            design = Design(targets=tuple(design_spec["targets"]),
                            values=tuple(design_spec["values"]))
            design.validate_for(run.d)
        except (KeyError, ValueError, TypeError) as err:
            raise ServiceError(400, "bad_design", f"invalid design: {err}")
        try:
            prediction = _whatif(run, session, design, mc_budget, seed)
        except UnsupportedMechanismError as err:
            raise ServiceError(400, "unsupported", str(err))
        return ok({"whatif": prediction})

    @app.get("/")
    async def root():
        if console_dir and os.path.isdir(console_dir):
            return RedirectResponse(url="/console/")
        return JSONResponse({"schema": SCHEMA, "service": "cboed design service",
                             "endpoints": ["/checkpoints", "/sessions"]})

    if console_dir and os.path.isdir(console_dir):
        app.mount("/console", StaticFiles(directory=console_dir, html=True),
                  name="console")

    return app


def main(argv: list[str] | None = None) -> int:
    import argparse

    import uvicorn

    parser = argparse.ArgumentParser(prog="cboed-service")
    parser.add_argument("--runs", required=True,
                        help="directory containing training run folders")
    parser.add_argument("--sessions", default="sessions")
    parser.add_argument("--console", default=None,
                        help="directory with the built console bundle")
    parser.add_argument("--host", default="127.0.0.1")
    parser.add_argument("--port", type=int, default=8000)
    args = parser.parse_args(argv)
    app = create_app(args.runs, args.sessions, console_dir=args.console)
    uvicorn.run(app, host=args.host, port=args.port)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
