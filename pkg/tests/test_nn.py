import numpy as np
import pytest

from cboed import autodiff as ad
from cboed.autodiff import Tensor
from cboed.checkpoint import CheckpointError, restore_stores, save_stores
from cboed.nn import (
    Dense,
    LayerNorm,
    MultiHeadAttention,
    ParamStore,
    dropout,
    gumbel_softmax,
)
from cboed.optim import Adam, ExponentialDecay, TemperatureSchedule

from helpers import run_gradient_check


@pytest.fixture
def rng():
    return np.random.default_rng(0)


def test_dense_gradient_check(rng):
    store = ParamStore()
    layer = Dense(store, "lin", 4, 3, rng)
    x = Tensor(rng.standard_normal((5, 4)))

    def loss():
        return (layer(x) * layer(x)).mean()

    assert run_gradient_check(loss, store.tensors()) < 1e-5


def test_layernorm_gradient_check(rng):
    store = ParamStore()
    ln = LayerNorm(store, "ln", 6)
    x = Tensor(rng.standard_normal((3, 6)) * 4.0, requires_grad=True)

    def loss():
        return (ln(x) * ln(x)).mean()

    assert run_gradient_check(loss, store.tensors() + [x]) < 1e-4


def test_attention_gradient_check(rng):
    store = ParamStore()
    attn = MultiHeadAttention(store, "attn", d_model=6, n_heads=2, key_size=3, rng=rng)
    x = Tensor(rng.standard_normal((2, 4, 6)), requires_grad=True)

    def loss():
        return (attn(x) * attn(x)).mean()

    assert run_gradient_check(loss, store.tensors() + [x]) < 1e-4


def test_attention_single_token_softmax_is_identity(rng):
    store = ParamStore()
    attn = MultiHeadAttention(store, "attn", d_model=8, n_heads=2, key_size=4, rng=rng)
    x = Tensor(rng.standard_normal((1, 8)))
    out = attn(x)
    # one token: attention weights are exactly 1, so output is Wo(Wv(x))
    expected = attn.wo(attn.wv(x))
    assert np.allclose(out.data, expected.data, atol=1e-12)


def test_attention_permutation_equivariance(rng):
    store = ParamStore()
    attn = MultiHeadAttention(store, "attn", d_model=6, n_heads=3, key_size=2, rng=rng)
    x = rng.standard_normal((5, 6))
    perm = rng.permutation(5)
    out = attn(Tensor(x)).data
    out_perm = attn(Tensor(x[perm])).data
    assert np.allclose(out[perm], out_perm, atol=1e-10)


def test_attention_key_size_inference_requires_divisibility(rng):
    store = ParamStore()
    with pytest.raises(ValueError):
        MultiHeadAttention(store, "attn", d_model=7, n_heads=2, key_size=None, rng=rng)


def test_dropout_inverted_scaling_and_eval_identity(rng):
    x = Tensor(np.ones((200, 50)))
    kept = dropout(x, 0.25, rng, train=True)
    assert np.isclose(kept.data.mean(), 1.0, atol=0.02)
    vals = np.unique(kept.data)
    assert set(np.round(vals, 6)) <= {0.0, np.round(1 / 0.75, 6)}
    assert dropout(x, 0.25, None, train=False) is x


def test_gumbel_softmax_simplex_output(rng):
    logits = Tensor(rng.standard_normal((32, 5)))
    y = gumbel_softmax(logits, temperature=0.7, rng=rng)
    assert np.allclose(y.data.sum(axis=-1), 1.0, atol=1e-9)
    assert np.all(y.data >= 0)


def test_gumbel_softmax_low_temperature_follows_dominant_logit(rng):
    logits = Tensor(np.array([[10.0, 0.0, 0.0, 0.0]] * 64))
    y = gumbel_softmax(logits, temperature=0.01, rng=rng)
    assert np.all(np.abs(y.data[:, 0] - 1.0) < 1e-6)


def test_gumbel_softmax_uniform_logits_uniform_argmax(rng):
    n, k = 30000, 4
    logits = Tensor(np.zeros((n, k)))
    y = gumbel_softmax(logits, temperature=1.0, rng=rng, hard=True)
    counts = y.data.argmax(axis=-1)
    freq = np.bincount(counts, minlength=k) / n
    tol = 3.0 * np.sqrt(0.25 * 0.75 / n)
    assert np.all(np.abs(freq - 1.0 / k) < tol)


def test_gumbel_softmax_hard_is_one_hot_with_soft_gradient(rng):
    logits = Tensor(rng.standard_normal((8, 5)), requires_grad=True)
    y = gumbel_softmax(logits, temperature=1.0, rng=rng, hard=True)
    assert np.allclose(np.sort(y.data, axis=-1)[:, :-1], 0.0)
    assert np.allclose(y.data.max(axis=-1), 1.0)
    y.sum().backward()
    assert logits.grad is not None and np.any(logits.grad != 0)


def test_gumbel_softmax_rejects_nonpositive_temperature(rng):
    with pytest.raises(ValueError):
        gumbel_softmax(Tensor(np.zeros(3)), temperature=0.0, rng=rng)


def test_exponential_decay_exact_powers():
    sched = ExponentialDecay(base_lr=0.5, gamma=0.8, interval=1000)
    assert sched.lr(0) == 0.5
    assert sched.lr(999) == 0.5
    assert sched.lr(1000) == 0.5 * 0.8
    assert sched.lr(5000) == 0.5 * 0.8 ** 5


def test_temperature_schedule_decays_to_floor():
    sched = TemperatureSchedule(init=5.0, decay=0.9995, floor=0.1)
    assert sched.at(0) == 5.0
    assert sched.at(10) < 5.0
    assert sched.at(10 ** 6) == 0.1


def test_adam_zero_lr_leaves_params_unchanged(rng):
    store = ParamStore()
    p = store.add("p", rng.standard_normal(4))
    before = p.data.copy()
    opt = Adam(store, ExponentialDecay(base_lr=1e-30, gamma=1.0, interval=1))
    p.grad = np.ones(4)
    opt.step(0)
    assert np.allclose(p.data, before, atol=1e-20)


def test_adam_descends_quadratic(rng):
    store = ParamStore()
    p = store.add("p", np.array([5.0, -3.0]))
    opt = Adam(store, ExponentialDecay(base_lr=0.1, gamma=1.0, interval=1))
    for step in range(500):
        store.zero_grad()
        loss = (Tensor(p.data * 0) + p * p).sum()
        loss.backward()
        opt.step(step)
    assert np.all(np.abs(p.data) < 1e-2)


def test_checkpoint_round_trip(tmp_path, rng):
    store = ParamStore()
    Dense(store, "layer", 3, 2, rng)
    path = str(tmp_path / "ckpt.npz")
    save_stores(path, store, step=42)

    store2 = ParamStore()
    Dense(store2, "layer", 3, 2, np.random.default_rng(99))
    step = restore_stores(path, store2)
    assert step == 42
    for name in store.names():
        assert np.array_equal(store[name].data, store2[name].data)


def test_checkpoint_unknown_names_fail(tmp_path, rng):
    store = ParamStore()
    Dense(store, "layer", 3, 2, rng)
    path = str(tmp_path / "ckpt.npz")
    save_stores(path, store, step=1)

    other = ParamStore()
    Dense(other, "different", 3, 2, rng)
    with pytest.raises(CheckpointError, match="unknown"):
        restore_stores(path, other)
