"""Shared test utilities: independent numerical oracles."""
from __future__ import annotations

import numpy as np


def finite_difference_gradients(fn, params: list, h: float = 1e-4) -> list[np.ndarray]:
    """Central-difference gradients of a scalar function of Tensor params.

    `fn` must re-run the full computation from the current parameter values;
    nothing from the autodiff tape is reused, so this is an independent check.
    """
    grads = []
    for p in params:
        g = np.zeros_like(p.data)
        flat = p.data.reshape(-1)
        gflat = g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            up = float(fn())
            flat[i] = orig - h
            down = float(fn())
            flat[i] = orig
            gflat[i] = (up - down) / (2.0 * h)
        grads.append(g)
    return grads


def max_relative_error(analytic: list[np.ndarray], numeric: list[np.ndarray]) -> float:
    """Largest per-tensor scaled gradient discrepancy.

    The scale floor keeps exactly-zero gradients (softmax shift invariances
    and the like) from amplifying finite-difference roundoff into spurious
    relative error.
    """
    worst = 0.0
    for a, b in zip(analytic, numeric):
        scale = max(np.abs(a).max(initial=0.0), np.abs(b).max(initial=0.0), 1e-6)
        worst = max(worst, float(np.abs(a - b).max(initial=0.0) / scale))
    return worst


def run_gradient_check(build_loss, params, h: float = 1e-4) -> float:
    """Backward pass vs. central differences; returns the max relative error."""
    loss = build_loss()
    for p in params:
        p.grad = None
    loss.backward()
    analytic = [p.grad if p.grad is not None else np.zeros_like(p.data) for p in params]
    numeric = finite_difference_gradients(build_loss, params, h=h)
    return max_relative_error(analytic, numeric)
