"""Scripted session against the live design service: train a tiny model,
serve it, and walk the recommend/measure/update loop over HTTP.

Run:  python3 demos/06_live_design_service.py
"""
import json
import os
import tempfile

import numpy as np
from fastapi.testclient import TestClient

from cboed.configs import named_config
from cboed.scm import Design, Scm, sample_dag, sample_mechanism, simulate
from cboed.service import create_app
from cboed.trainer import Trainer, parse_config

root = tempfile.mkdtemp(prefix="cboed-service-demo-")
run_dir = os.path.join(root, "runs", "demo_run")
os.makedirs(os.path.join(run_dir, "checkpoints"))

raw = named_config("one_edge_smoke")
raw.update({"horizon": 3, "n_step": 150})
with open(os.path.join(run_dir, "config.json"), "w") as fh:
    json.dump(raw, fh)
config = parse_config(raw)
trainer = Trainer(config)
print("fitting a small checkpoint ...")
for step in range(config.n_step):
    trainer.train_step(step)
trainer.save(os.path.join(run_dir, "checkpoints", "latest.npz"), config.n_step)

client = TestClient(create_app(os.path.join(root, "runs"),
                               os.path.join(root, "sessions")))

print("available checkpoints:", [c["name"] for c in
                                 client.get("/checkpoints").json()["checkpoints"]])

session = client.post("/sessions", json={"schema": 1,
                                         "checkpoint": "demo_run"}).json()
sid = session["session"]["id"]
print(f"session {sid[:8]}... created, horizon "
      f"{session['session']['horizon']}")

# a hidden ground-truth system plays the role of the lab
rng = np.random.default_rng(7)
dag = sample_dag(config.graph_prior, config.d, rng)
mech = sample_mechanism(dag, config.mechanism.kind, rng, config.mechanism)
truth = Scm(dag=dag, mechanism=mech)
print(f"hidden true weight X0->X1: {mech.weights[1][0]:+.3f}")

while True:
    rec = client.get(f"/sessions/{sid}/recommendation").json()["recommendation"]
    design = Design(targets=tuple(rec["design"]["targets"]),
                    values=tuple(rec["design"]["values"]))
    print(f"\nstage {rec['step'] + 1}: recommended do(X{design.targets[0]} = "
          f"{design.values[0]:+.2f}), scores {np.round(rec['target_scores'], 2)}")
    outcome = simulate(truth, design, 1, rng)
    view = client.post(f"/sessions/{sid}/outcomes", json={
        "schema": 1,
        "design": {"targets": list(design.targets), "values": list(design.values)},
        "outcomes": outcome.tolist(),
    }).json()
    beliefs = view["beliefs"]
    print(f"  measured {np.round(outcome[0], 3).tolist()}; "
          f"posterior mean of z now {np.round(beliefs['mean'], 3).tolist()} "
          f"(90% band {np.round(beliefs['quantiles']['5'], 2).tolist()} .. "
          f"{np.round(beliefs['quantiles']['95'], 2).tolist()})")
    if view["session"]["status"] == "complete":
        break

true_effect = mech.weights[1][0] * 2.0
print(f"\nsession complete. true effect at psi=2: {true_effect:+.3f}")
