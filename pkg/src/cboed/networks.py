"""History encoders and the intervention policy network.

The encoder ingests batches shaped (batch, samples, variables, 2), where the
trailing channels are observed values and the binary intervention mask. Each
of its layers attends across the variable axis and then across the sample
axis with shared parameters, so the output is permutation-equivariant over
variables and, after max-pooling the sample axis, permutation-invariant over
samples.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .nn import Dense, LayerNorm, MultiHeadAttention, ParamStore, dropout, gumbel_softmax
from .optim import TemperatureSchedule
from .scm import Design

TRAIN_SOFT = "train-soft"
DEPLOY_HARD = "deploy-hard"


@dataclass(frozen=True)
class EncoderConfig:
    embed: int = 32
    layers: int = 4
    heads: int = 8
    key_size: int | None = 16
    ffn_hidden: int | None = None     # defaults to 4 * embed
    dropout: float = 0.05

    def __post_init__(self):
        if min(self.embed, self.layers, self.heads) < 1:
            raise ValueError("encoder dimensions must be positive")

    @property
    def ffn_dim(self) -> int:
        return self.ffn_hidden if self.ffn_hidden is not None else 4 * self.embed


@dataclass(frozen=True)
class PolicyConfig:
    encoder: EncoderConfig = field(default_factory=EncoderConfig)
    min_val: float = -10.0
    max_val: float = 10.0
    temperature: TemperatureSchedule = field(default_factory=TemperatureSchedule)

    def __post_init__(self):
        if self.min_val >= self.max_val:
            raise ValueError("need min_val < max_val")


class _EncoderLayer:
    """Variable-axis attention, sample-axis attention, then a feedforward
    sublayer; each pre-normalized with a residual connection and dropout."""

    def __init__(self, store: ParamStore, name: str, cfg: EncoderConfig,
                 rng: np.random.Generator):
        self.cfg = cfg
        self.ln_var = LayerNorm(store, f"{name}/ln_var", cfg.embed)
        self.attn_var = MultiHeadAttention(store, f"{name}/attn_var", cfg.embed,
                                           cfg.heads, cfg.key_size, rng)
        self.ln_samp = LayerNorm(store, f"{name}/ln_samp", cfg.embed)
        self.attn_samp = MultiHeadAttention(store, f"{name}/attn_samp", cfg.embed,
                                            cfg.heads, cfg.key_size, rng)
        self.ln_ffn = LayerNorm(store, f"{name}/ln_ffn", cfg.embed)
        self.ffn_in = Dense(store, f"{name}/ffn_in", cfg.embed, cfg.ffn_dim, rng)
        self.ffn_out = Dense(store, f"{name}/ffn_out", cfg.ffn_dim, cfg.embed, rng)

    def __call__(self, x: Tensor, train: bool, rng) -> Tensor:
        # x: (batch, samples, variables, embed); attention acts on axis -2
        h = self.attn_var(self.ln_var(x))
        x = x + dropout(h, self.cfg.dropout, rng, train)

        swapped = x.swapaxes(1, 2)
        h = self.attn_samp(self.ln_samp(swapped))
        h = dropout(h, self.cfg.dropout, rng, train)
        x = (swapped + h).swapaxes(1, 2)

        h = self.ffn_out(ad.relu(self.ffn_in(self.ln_ffn(x))))
        return x + dropout(h, self.cfg.dropout, rng, train)


class HistoryEncoder:
    """Stack of alternating-axis attention layers with a final sample max-pool."""

    def __init__(self, store: ParamStore, name: str, cfg: EncoderConfig,
                 rng: np.random.Generator):
        self.cfg = cfg
        self.embed = Dense(store, f"{name}/embed", 2, cfg.embed, rng)
        self.layers = [
            _EncoderLayer(store, f"{name}/layer{k}", cfg, rng)
            for k in range(cfg.layers)
        ]
        self.final_ln = LayerNorm(store, f"{name}/final_ln", cfg.embed)

    def __call__(self, history, train: bool = False, rng=None) -> Tensor:
        """(batch, samples, variables, 2) -> (batch, variables, embed)."""
        x = ad.as_tensor(history)
        if x.ndim != 4 or x.shape[-1] != 2:
            raise ValueError(
                f"history tensor must be (batch, samples, variables, 2); got {x.shape}"
            )
        x = self.embed(x)
        for layer in self.layers:
            x = layer(x, train, rng)
        x = self.final_ln(x)
        return x.max(axis=1)


@dataclass
class PolicyAction:
    """Differentiable policy output plus its concrete designs."""

    one_hot: Tensor            # (batch, variables); hard rows, soft gradients
    clamp_values: Tensor       # (batch,)
    node_values: Tensor        # (batch, variables) squashed value head
    logits: Tensor             # (batch, variables), on tape
    target_logits: np.ndarray  # (batch, variables)
    target_probs: np.ndarray   # (batch, variables) softmax of the logits
    designs: list[Design]


class PolicyNetwork:
    """Encoder plus target/value heads producing one intervention per row."""

    def __init__(self, store: ParamStore, cfg: PolicyConfig,
                 rng: np.random.Generator, name: str = "policy"):
        self.cfg = cfg
        self.encoder = HistoryEncoder(store, f"{name}/encoder", cfg.encoder, rng)
        self.target_head = Dense(store, f"{name}/target", cfg.encoder.embed, 1, rng)
        self.value_head = Dense(store, f"{name}/value", cfg.encoder.embed, 1, rng)

    def _squash(self, raw: Tensor) -> Tensor:
        span = self.cfg.max_val - self.cfg.min_val
        return ad.sigmoid(raw) * span + self.cfg.min_val

    def node_values(self, history, train: bool = False, rng=None) -> Tensor:
        """Squashed clamp values for every node, (batch, variables)."""
        pooled = self.encoder(history, train=train, rng=rng)
        values = self._squash(self.value_head(pooled))
        return values.reshape(values.shape[0], values.shape[1])

    def act(self, history, temperature: float, rng: np.random.Generator | None,
            mode: str = TRAIN_SOFT, train: bool | None = None,
            hard: bool = True, pathwise_targets: bool = True) -> PolicyAction:
        if mode not in (TRAIN_SOFT, DEPLOY_HARD):
            raise ValueError(f"unknown policy mode: {mode!r}")
        training = mode == TRAIN_SOFT if train is None else train
        pooled = self.encoder(history, train=training, rng=rng)
        logits = self.target_head(pooled)            # (batch, d, 1)
        logits = logits.reshape(logits.shape[0], logits.shape[1])
        values = self._squash(self.value_head(pooled))
        values = values.reshape(values.shape[0], values.shape[1])

        probs = np.exp(logits.data - logits.data.max(axis=-1, keepdims=True))
        probs = probs / probs.sum(axis=-1, keepdims=True)

        if mode == DEPLOY_HARD:
            # argmax; ties resolve to the lowest node index
            idx = np.argmax(logits.data, axis=-1)
            hard = np.zeros_like(logits.data)
            hard[np.arange(len(idx)), idx] = 1.0
            one_hot = ad.constant(hard)
        else:
            if rng is None:
                raise ValueError("training mode requires an rng")
            one_hot = gumbel_softmax(logits, temperature, rng, hard=hard)
            idx = np.argmax(one_hot.data, axis=-1)
            if not pathwise_targets:
                # discrete choice learns through the score-function term
                # instead; downstream paths see the selection as data
                one_hot = ad.stop_gradient(one_hot)
        clamp = (one_hot * values).sum(axis=-1)
        designs = [
            Design(targets=(int(i),), values=(float(clamp.data[row]),))
            for row, i in enumerate(idx)
        ]
        return PolicyAction(one_hot=one_hot, clamp_values=clamp,
                            node_values=values, logits=logits,
                            target_logits=logits.data.copy(),
                            target_probs=probs, designs=designs)


def random_designs(d: int, n: int, rng: np.random.Generator,
                   low: float = -10.0, high: float = 10.0) -> list[Design]:
    """Uniform target and uniform clamp value, one design per row."""
    targets = rng.integers(d, size=n)
    values = rng.uniform(low, high, size=n)
    return [Design(targets=(int(t),), values=(float(v),))
            for t, v in zip(targets, values)]
