"""End-to-end training on the six-node benchmark, then a stage sweep
comparing the learned policy against random interventions.

This is the expensive demo (a few minutes of CPU).

Run:  python3 demos/05_policy_training.py
"""
import json
import tempfile

from cboed.configs import named_config
from cboed.evaluation import stage_sweep
from cboed.trainer import Trainer, parse_config

raw = named_config("toy_fixed_graph")
raw.update({"n_step": 2500, "eval_every": 500, "n_env": 16})
raw["policy_net"] = {**raw["policy_net"], "warmup_steps": 600}
config = parse_config(raw)

out = tempfile.mkdtemp(prefix="cboed-demo-")
print(f"training into {out} ...")
trainer = Trainer(config)
artifacts = trainer.train(out)

for line in open(artifacts["metrics"]):
    rec = json.loads(line)
    if rec["name"] == "eval_bound":
        print(f"  step {rec['step']:5d}: eval objective {rec['value']:+.3f} "
              f"+- {rec['stderr']:.3f}")

print("\nstage sweep (learned policy vs random, shared seeds):")
stages = list(range(0, config.horizon + 1))
learned = stage_sweep(raw, artifacts["checkpoint"], stages, seeds=[0, 1],
                      n_env=96)
random = stage_sweep(raw, artifacts["checkpoint"], stages, seeds=[0, 1],
                     n_env=96, policy="random")
print(f"{'stage':>6} {'learned':>10} {'random':>10}")
for k, stage in enumerate(stages):
    print(f"{stage:>6} {learned.bound_mean[k]:>10.3f} {random.bound_mean[k]:>10.3f}")
