"""Neural-network building blocks on top of the autodiff tape.

Layers register their parameters in a :class:`ParamStore` under
slash-separated names; the store is the unit of checkpointing and of
optimizer ownership.
"""
from __future__ import annotations

import math

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor


class ParamStore:
    """Named, ordered collection of trainable tensors."""

    def __init__(self):
        self._params: dict[str, Tensor] = {}

    def add(self, name: str, array: np.ndarray) -> Tensor:
        if name in self._params:
            raise ValueError(f"duplicate parameter name: {name}")
        t = Tensor(np.asarray(array, dtype=np.float64), requires_grad=True)
        self._params[name] = t
        return t

    def __getitem__(self, name: str) -> Tensor:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __len__(self) -> int:
        return len(self._params)

    def names(self) -> list[str]:
        return list(self._params)

    def tensors(self) -> list[Tensor]:
        return list(self._params.values())

    def items(self):
        return self._params.items()

    def zero_grad(self) -> None:
        for t in self._params.values():
            t.grad = None

    def state_arrays(self) -> dict[str, np.ndarray]:
        return {k: v.data.copy() for k, v in self._params.items()}

    def load_state(self, arrays: dict[str, np.ndarray]) -> None:
        """Overwrite parameter values in place; names must match exactly."""
        missing = sorted(set(self._params) - set(arrays))
        unknown = sorted(set(arrays) - set(self._params))
        if missing or unknown:
            raise KeyError(
                f"parameter name mismatch: missing={missing} unknown={unknown}"
            )
        for name, tensor in self._params.items():
            arr = np.asarray(arrays[name], dtype=np.float64)
            if arr.shape != tensor.data.shape:
                raise ValueError(
                    f"shape mismatch for {name}: "
                    f"{arr.shape} vs {tensor.data.shape}"
                )
            tensor.data = arr.copy()


class Dense:
    """Affine layer with fan-in-scaled uniform initialization."""

    def __init__(self, store: ParamStore, name: str, n_in: int, n_out: int,
                 rng: np.random.Generator, zero_init: bool = False):
        if zero_init or n_in == 0:
            w = np.zeros((n_in, n_out))
            b = np.zeros(n_out)
        else:
            limit = 1.0 / math.sqrt(n_in)
            w = rng.uniform(-limit, limit, size=(n_in, n_out))
            b = rng.uniform(-limit, limit, size=n_out)
        self.w = store.add(f"{name}/w", w)
        self.b = store.add(f"{name}/b", b)

    def __call__(self, x: Tensor) -> Tensor:
        return ad.matmul(x, self.w) + self.b


class LayerNorm:
    """Normalization over the last axis with learned gain and offset."""

    EPS = 1e-5

    def __init__(self, store: ParamStore, name: str, dim: int):
        self.gain = store.add(f"{name}/gain", np.ones(dim))
        self.offset = store.add(f"{name}/offset", np.zeros(dim))

    def __call__(self, x: Tensor) -> Tensor:
        m = ad.tmean(x, axis=-1, keepdims=True)
        centered = x - m
        var = ad.tmean(centered * centered, axis=-1, keepdims=True)
        return centered / ad.sqrt(var + self.EPS) * self.gain + self.offset


class MultiHeadAttention:
    """Scaled dot-product self-attention over the second-to-last axis.

    Works on inputs of shape (..., n, d_model); any leading axes are treated
    as batch. Queries/keys/values use `n_heads` heads of width `key_size`.
    """

    def __init__(self, store: ParamStore, name: str, d_model: int,
                 n_heads: int, key_size: int | None, rng: np.random.Generator):
        if key_size is None:
            if d_model % n_heads != 0:
                raise ValueError(
                    f"d_model={d_model} not divisible by n_heads={n_heads}; "
                    "pass key_size explicitly"
                )
            key_size = d_model // n_heads
        self.n_heads = n_heads
        self.key_size = key_size
        inner = n_heads * key_size
        self.wq = Dense(store, f"{name}/q", d_model, inner, rng)
        self.wk = Dense(store, f"{name}/k", d_model, inner, rng)
        self.wv = Dense(store, f"{name}/v", d_model, inner, rng)
        self.wo = Dense(store, f"{name}/out", inner, d_model, rng)

    def _split(self, x: Tensor, lead: tuple[int, ...], n: int) -> Tensor:
        x = x.reshape(lead + (n, self.n_heads, self.key_size))
        return x.swapaxes(-2, -3)  # (..., heads, n, key)

    def __call__(self, x: Tensor) -> Tensor:
        *lead, n, _ = x.shape
        lead = tuple(lead)
        q = self._split(self.wq(x), lead, n)
        k = self._split(self.wk(x), lead, n)
        v = self._split(self.wv(x), lead, n)
        scores = ad.matmul(q, k.swapaxes(-1, -2)) * (1.0 / math.sqrt(self.key_size))
        weights = ad.softmax(scores, axis=-1)
        ctx = ad.matmul(weights, v)                      # (..., heads, n, key)
        ctx = ctx.swapaxes(-2, -3).reshape(lead + (n, self.n_heads * self.key_size))
        return self.wo(ctx)


def dropout(x: Tensor, rate: float, rng: np.random.Generator | None,
            train: bool) -> Tensor:
    """Inverted dropout; identity when not training or rate is zero."""
    if not train or rate <= 0.0:
        return x
    if rng is None:
        raise ValueError("dropout in training mode needs an rng")
    keep = (rng.random(x.shape) >= rate) / (1.0 - rate)
    return x * ad.constant(keep)


def gumbel_softmax(logits: Tensor, temperature: float,
                   rng: np.random.Generator, hard: bool = False) -> Tensor:
    """Sample from a relaxed categorical over the last axis.

    With ``hard=True`` the returned value is the one-hot argmax of the soft
    sample while gradients follow the soft sample (straight-through).
    """
    if temperature <= 0.0:
        raise ValueError("temperature must be positive")
    u = rng.random(logits.shape)
    gumbel = -np.log(-np.log(np.clip(u, 1e-12, 1.0)))
    y = ad.softmax((logits + ad.constant(gumbel)) * (1.0 / temperature), axis=-1)
    if not hard:
        return y
    idx = np.argmax(y.data, axis=-1)
    one_hot = np.zeros_like(y.data)
    np.put_along_axis(one_hot, np.expand_dims(idx, -1), 1.0, axis=-1)
    return y + ad.constant(one_hot - y.data)
