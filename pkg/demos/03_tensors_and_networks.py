"""The differentiable substrate: tape tensors, attention encoders, and the
symmetries the policy network is built around.

Run:  python3 demos/03_tensors_and_networks.py
"""
import numpy as np

from cboed import autodiff as ad
from cboed.autodiff import Tensor
from cboed.networks import DEPLOY_HARD, EncoderConfig, HistoryEncoder, PolicyConfig, PolicyNetwork
from cboed.nn import ParamStore

rng = np.random.default_rng(0)

print("== Reverse-mode gradients ==")
x = Tensor(3.0, requires_grad=True)
y = ad.tanh(x * x) * 2.0
y.backward()
print(f"d/dx 2*tanh(x^2) at x=3: {float(x.grad):.6f} "
      f"(finite diff {(2*np.tanh(3.001**2) - 2*np.tanh(2.999**2)) / 0.002:.6f})")

print("\n== History encoder symmetries ==")
cfg = EncoderConfig(embed=16, layers=2, heads=4, key_size=4, dropout=0.0)
store = ParamStore()
enc = HistoryEncoder(store, "encoder_z", cfg, rng)
history = np.concatenate(
    [rng.standard_normal((1, 6, 4, 1)),
     (rng.random((1, 6, 4, 1)) < 0.25).astype(float)], axis=-1)
base = enc(history).data

perm_rows = rng.permutation(6)
row_permuted = enc(history[:, perm_rows]).data
print(f"sample-permutation invariance error: "
      f"{np.abs(base - row_permuted).max():.2e}")

perm_vars = rng.permutation(4)
var_permuted = enc(history[:, :, perm_vars]).data
print(f"variable-permutation equivariance error: "
      f"{np.abs(base[:, perm_vars] - var_permuted).max():.2e}")

print("\n== Policy heads ==")
pstore = ParamStore()
policy = PolicyNetwork(pstore, PolicyConfig(encoder=cfg), rng)
act = policy.act(history, temperature=1.0, rng=None, mode=DEPLOY_HARD)
print(f"deploy-mode design: clamp node {act.designs[0].targets[0]} "
      f"to {act.designs[0].values[0]:+.3f}")
print(f"target scores: {np.round(act.target_probs[0], 3)}")
print(f"parameters in the policy store: {len(pstore)}")
