"""Variational posterior families for query values and for graphs.

Effect-style queries use a conditional coupling flow (affine transforms of
alternating halves, conditioned on the history embedding and the query clamp
value). Graph queries use a factorized per-edge Bernoulli whose logits come
from normalized pairwise embedding products.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from . import autodiff as ad
from .autodiff import Tensor
from .networks import EncoderConfig, HistoryEncoder
from .nn import Dense, ParamStore
from .scm import CycleError, Dag

_LOG_2PI = math.log(2.0 * math.pi)

SCALE_CLAMP = 7.0   # bound on log-scale outputs before exponentiation


class NonFiniteInputError(ValueError):
    pass


@dataclass(frozen=True)
class FlowConfig:
    n_z: int
    cond_dim: int
    n_trans: int = 4
    widths: tuple[int, ...] = (256, 256, 256)

    def __post_init__(self):
        if self.n_z < 1:
            raise ValueError("n_z must be positive")
        if self.n_trans < 1:
            raise ValueError("need at least one coupling transformation")


class _CouplingNet:
    """One scale-or-shift conditioner: (frozen half, cond) -> active half."""

    def __init__(self, store: ParamStore, name: str, n_in: int, n_out: int,
                 widths: tuple[int, ...], rng: np.random.Generator):
        dims = (n_in,) + tuple(widths)
        self.hidden = [
            Dense(store, f"{name}/h{k}", dims[k], dims[k + 1], rng)
            for k in range(len(widths))
        ]
        # zero-init output so a fresh flow is exactly the identity map
        self.out = Dense(store, f"{name}/out", dims[-1], n_out, rng, zero_init=True)

    def __call__(self, x: Tensor) -> Tensor:
        h = x
        for layer in self.hidden:
            h = ad.relu(layer(h))
        return self.out(h)


class CouplingFlow:
    """Conditional Real-NVP-style flow with a standard-normal base.

    The z->base direction multiplies the active half by exp(s) and adds t,
    so the log-density is the base log-density plus the plain sum of the
    s-outputs; no determinant is ever materialized.
    """

    def __init__(self, store: ParamStore, name: str, cfg: FlowConfig,
                 rng: np.random.Generator):
        self.cfg = cfg
        first = (cfg.n_z + 1) // 2          # odd n_z: first half is the larger
        self._splits = []
        self.s_nets: list[_CouplingNet] = []
        self.t_nets: list[_CouplingNet] = []
        for k in range(cfg.n_trans):
            active_first = k % 2 == 0       # partitions alternate per layer
            n_active = first if active_first else cfg.n_z - first
            n_frozen = cfg.n_z - n_active
            self._splits.append((active_first, n_active, n_frozen))
            self.s_nets.append(_CouplingNet(
                store, f"{name}/t{k}/scale", n_frozen + cfg.cond_dim,
                n_active, cfg.widths, rng))
            self.t_nets.append(_CouplingNet(
                store, f"{name}/t{k}/shift", n_frozen + cfg.cond_dim,
                n_active, cfg.widths, rng))
        self._first = first

    def _halves(self, z: Tensor, active_first: bool) -> tuple[Tensor, Tensor]:
        za, zb = z[:, :self._first], z[:, self._first:]
        return (za, zb) if active_first else (zb, za)

    def _join(self, active: Tensor, frozen: Tensor, active_first: bool) -> Tensor:
        parts = [active, frozen] if active_first else [frozen, active]
        return ad.concat(parts, axis=1)

    def _conditioner_input(self, frozen: Tensor, cond: Tensor) -> Tensor:
        if frozen.shape[1] == 0:
            return cond
        return ad.concat([frozen, cond], axis=1)

    def to_base(self, z: Tensor, cond: Tensor) -> tuple[Tensor, Tensor]:
        """Map query values to base coordinates; also return the log-det sum."""
        logdet = ad.constant(np.zeros(z.shape[0]))
        cur = z
        for k, (active_first, n_active, _) in enumerate(self._splits):
            if n_active == 0:
                continue
            active, frozen = self._halves(cur, active_first)
            inp = self._conditioner_input(frozen, cond)
            s = ad.clip(self.s_nets[k](inp), -SCALE_CLAMP, SCALE_CLAMP)
            t = self.t_nets[k](inp)
            active = active * ad.exp(s) + t
            logdet = logdet + s.sum(axis=1)
            cur = self._join(active, frozen, active_first)
        return cur, logdet

    def from_base(self, eta: Tensor, cond: Tensor) -> Tensor:
        """Inverse of :meth:`to_base`: push base draws out to query values."""
        cur = eta
        for k in reversed(range(len(self._splits))):
            active_first, n_active, _ = self._splits[k]
            if n_active == 0:
                continue
            active, frozen = self._halves(cur, active_first)
            inp = self._conditioner_input(frozen, cond)
            s = ad.clip(self.s_nets[k](inp), -SCALE_CLAMP, SCALE_CLAMP)
            t = self.t_nets[k](inp)
            active = (active - t) * ad.exp(-s)
            cur = self._join(active, frozen, active_first)
        return cur

    def log_prob(self, z, cond) -> Tensor:
        """Change-of-variables log density, shape (batch,)."""
        z = ad.as_tensor(z)
        cond = ad.as_tensor(cond)
        if not np.all(np.isfinite(z.data)):
            raise NonFiniteInputError("flow log_prob received non-finite values")
        eta, logdet = self.to_base(z, cond)
        base = (eta * eta).sum(axis=1) * (-0.5) - 0.5 * self.cfg.n_z * _LOG_2PI
        return base + logdet

    def sample(self, cond, rng: np.random.Generator) -> np.ndarray:
        """One draw per conditioning row."""
        cond = ad.as_tensor(cond)
        eta = ad.constant(rng.standard_normal((cond.shape[0], self.cfg.n_z)))
        return self.from_base(eta, cond).data


# -- factorized graph posterior -------------------------------------------------


@dataclass(frozen=True)
class EdgeBernoulli:
    """Independent inclusion probabilities for every directed edge slot.

    Edge probabilities are sigmoid(logit * exp(temp) + bias); the diagonal
    is ignored everywhere.
    """

    logits: np.ndarray
    temp: float = 2.0
    bias: float = -3.0

    def __post_init__(self):
        logits = np.asarray(self.logits, dtype=float)
        if logits.ndim != 2 or logits.shape[0] != logits.shape[1]:
            raise ValueError("logits must be a square matrix")
        object.__setattr__(self, "logits", logits)

    @property
    def d(self) -> int:
        return self.logits.shape[0]

    def probs(self) -> np.ndarray:
        scaled = self.logits * math.exp(self.temp) + self.bias
        p = expit(scaled)
        np.fill_diagonal(p, 0.0)
        return p

    def log_prob(self, adjacency: np.ndarray) -> float:
        adj = np.asarray(adjacency, dtype=float)
        if adj.shape != self.logits.shape:
            raise ValueError("adjacency shape mismatch")
        scaled = self.logits * math.exp(self.temp) + self.bias
        # log sigma(x) = -softplus(-x)
        log_p = -np.logaddexp(0.0, -scaled)
        log_q = -np.logaddexp(0.0, scaled)
        total = adj * log_p + (1.0 - adj) * log_q
        off = ~np.eye(self.d, dtype=bool)
        return float(total[off].sum())


class RejectionError(RuntimeError):
    def __init__(self, attempts: int):
        self.attempts = attempts
        super().__init__(f"no acyclic graph after {attempts} attempts")


def graph_sample(posterior: EdgeBernoulli, rng: np.random.Generator,
                 acyclic_only: bool = True, max_tries: int = 100):
    """Draw from the edge marginals.

    With ``acyclic_only`` the draw is rejection-sampled until it forms a DAG
    and returned as :class:`Dag`; otherwise the raw boolean adjacency of a
    single flip is returned.
    """
    if max_tries < 1:
        raise ValueError("max_tries must be at least 1")
    p = posterior.probs()
    d = posterior.d
    if not acyclic_only:
        adj = rng.random((d, d)) < p
        np.fill_diagonal(adj, False)
        return adj
    for _ in range(max_tries):
        adj = rng.random((d, d)) < p
        np.fill_diagonal(adj, False)
        try:
            return Dag(d=d, edges=adj)
        except CycleError:
            continue
    raise RejectionError(max_tries)


class GraphPosteriorHead:
    """Maps per-variable embeddings to edge logits via normalized products."""

    def __init__(self, store: ParamStore, name: str, embed_dim: int,
                 out_dim: int, rng: np.random.Generator,
                 temp_init: float = 2.0, bias_init: float = -3.0):
        self.u = Dense(store, f"{name}/u", embed_dim, out_dim, rng)
        self.v = Dense(store, f"{name}/v", embed_dim, out_dim, rng)
        self.temp = store.add(f"{name}/temp", np.array(temp_init))
        self.bias = store.add(f"{name}/bias", np.array(bias_init))

    @staticmethod
    def _normalize(x: Tensor) -> Tensor:
        norm = ad.sqrt((x * x).sum(axis=-1, keepdims=True) + 1e-12)
        return x / norm

    def edge_logits(self, embeddings: Tensor) -> Tensor:
        """(batch, d, e) -> raw pairwise logits (batch, d, d)."""
        u = self._normalize(self.u(embeddings))
        v = self._normalize(self.v(embeddings))
        return ad.matmul(u, v.swapaxes(-1, -2))

    def scaled_logits(self, embeddings: Tensor) -> Tensor:
        return self.edge_logits(embeddings) * ad.exp(self.temp) + self.bias

    def log_prob(self, embeddings: Tensor, adjacency: np.ndarray) -> Tensor:
        """Summed edge log-likelihoods per batch row, diagonal excluded."""
        adj = np.asarray(adjacency, dtype=float)
        scaled = self.scaled_logits(embeddings)
        log_p = -ad.softplus(-scaled)
        log_q = -ad.softplus(scaled)
        mask = np.broadcast_to(
            ~np.eye(adj.shape[-1], dtype=bool), adj.shape
        ).astype(float)
        terms = (log_p * ad.constant(adj) + log_q * ad.constant(1.0 - adj))
        return (terms * ad.constant(mask)).sum(axis=(-1, -2))

    def distribution(self, embeddings: Tensor, row: int = 0) -> EdgeBernoulli:
        logits = self.edge_logits(embeddings).data[row]
        return EdgeBernoulli(logits=logits, temp=float(self.temp.data),
                             bias=float(self.bias.data))


# -- amortized posteriors (encoder + family) ----------------------------------


class AmortizedFlowPosterior:
    """History-conditional flow over query values.

    The conditioning vector is the flattened variable embedding of the
    history; for effect queries the clamp draw is appended so the posterior
    is aware of the query value it answers for.
    """

    def __init__(self, store: ParamStore, d: int, n_z: int,
                 encoder_cfg: EncoderConfig, rng: np.random.Generator,
                 n_trans: int = 4, widths: tuple[int, ...] = (256, 256, 256),
                 with_psi: bool = True, name: str = "encoder_z"):
        self.d = d
        self.with_psi = with_psi
        self.encoder = HistoryEncoder(store, name, encoder_cfg, rng)
        cond_dim = d * encoder_cfg.embed + (1 if with_psi else 0)
        self.flow = CouplingFlow(
            store, "flow",
            FlowConfig(n_z=n_z, cond_dim=cond_dim, n_trans=n_trans, widths=widths),
            rng,
        )

    def _condition(self, history, psi, train: bool, rng) -> Tensor:
        emb = self.encoder(history, train=train, rng=rng)
        cond = emb.reshape(emb.shape[0], emb.shape[1] * emb.shape[2])
        if self.with_psi:
            if psi is None:
                raise ValueError("this posterior conditions on the query clamp draw")
            psi_col = ad.constant(np.asarray(psi, dtype=float).reshape(-1, 1))
            cond = ad.concat([cond, psi_col], axis=1)
        return cond

    def log_prob(self, history, z, psi=None, train: bool = False,
                 rng=None) -> Tensor:
        cond = self._condition(history, psi, train, rng)
        return self.flow.log_prob(z, cond)

    def sample(self, history, psi, rng: np.random.Generator,
               n: int) -> np.ndarray:
        """n draws conditioned on a single history (batch row 0)."""
        hist = np.asarray(ad.as_tensor(history).data)
        tiled = np.repeat(hist[:1], n, axis=0)
        psi_arr = None
        if self.with_psi:
            psi_arr = np.broadcast_to(np.asarray(psi, dtype=float).reshape(-1), (n,))
        cond = self._condition(ad.constant(tiled), psi_arr, train=False, rng=None)
        return self.flow.sample(cond, rng)


class AmortizedGraphPosterior:
    """History-conditional factorized edge posterior."""

    def __init__(self, store: ParamStore, d: int, encoder_cfg: EncoderConfig,
                 rng: np.random.Generator, out_dim: int | None = None,
                 temp_init: float = 2.0, bias_init: float = -3.0,
                 name: str = "encoder_g"):
        self.d = d
        self.encoder = HistoryEncoder(store, name, encoder_cfg, rng)
        self.head = GraphPosteriorHead(
            store, "edge_bernoulli", encoder_cfg.embed,
            out_dim if out_dim is not None else encoder_cfg.embed,
            rng, temp_init=temp_init, bias_init=bias_init,
        )

    def log_prob(self, history, adjacency, psi=None, train: bool = False,
                 rng=None) -> Tensor:
        emb = self.encoder(history, train=train, rng=rng)
        return self.head.log_prob(emb, np.asarray(adjacency, dtype=float))

    def distribution(self, history, row: int = 0) -> EdgeBernoulli:
        emb = self.encoder(history, train=False, rng=None)
        return self.head.distribution(emb, row=row)

    def distributions(self, history) -> list[EdgeBernoulli]:
        """One edge distribution per batch row, from a single encoder pass."""
        emb = self.encoder(history, train=False, rng=None)
        raw = self.head.edge_logits(emb).data
        temp = float(self.head.temp.data)
        bias = float(self.head.bias.data)
        return [EdgeBernoulli(logits=raw[k], temp=temp, bias=bias)
                for k in range(raw.shape[0])]

    def marginals(self, history) -> np.ndarray:
        """Edge inclusion probabilities per batch row, (batch, d, d)."""
        emb = self.encoder(history, train=False, rng=None)
        scaled = self.head.scaled_logits(emb).data
        p = expit(scaled)
        for row in range(p.shape[0]):
            np.fill_diagonal(p[row], 0.0)
        return p
