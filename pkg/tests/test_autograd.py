"""Autodiff engine: op gradients against oracles and finite differences."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from seqmarl.nn import (Adam, AttentionMask, LayerNorm, Linear,
                        MultiHeadAttention, Tensor, clip_grad_norm,
                        global_grad_norm, grad_check, is_grad_enabled,
                        no_grad, softmax)


def fd_slope(fn, arr, idx, step=1e-6):
    orig = arr[idx]
    arr[idx] = orig + step
    up = fn()
    arr[idx] = orig - step
    down = fn()
    arr[idx] = orig
    return (up - down) / (2 * step)


def test_matmul_matches_triple_loop_oracle(rng):
    a = rng.standard_normal((3, 4))
    b = rng.standard_normal((4, 2))
    out = (Tensor(a) @ Tensor(b)).data
    naive = np.zeros((3, 2))
    for i in range(3):
        for j in range(2):
            for k in range(4):
                naive[i, j] += a[i, k] * b[k, j]
    assert np.abs(out - naive).max() < 1e-12


def test_matmul_gradient_finite_difference(rng):
    a = Tensor(rng.standard_normal((3, 4)), requires_grad=True)
    b = Tensor(rng.standard_normal((4, 2)), requires_grad=True)
    loss = ((a @ b) ** 2).sum()
    loss.backward()

    def f():
        return float(((a @ b) ** 2).sum().data)

    with no_grad():
        for idx in ((0, 0), (2, 3)):
            assert abs(a.grad[idx] - fd_slope(f, a.data, idx)) < 1e-5
        for idx in ((0, 1), (3, 0)):
            assert abs(b.grad[idx] - fd_slope(f, b.data, idx)) < 1e-5


def test_layernorm_output_statistics(rng):
    ln = LayerNorm(64)
    x = rng.standard_normal((10, 64)) * 3.0 + 1.5
    out = ln(Tensor(x)).data  # gain 1, shift 0 at init: pre-gain stats
    assert np.abs(out.mean(axis=-1)).max() < 1e-10
    assert np.abs(out.var(axis=-1) - 1.0).max() < 1e-4


def test_attention_matches_per_head_softmax_oracle(rng):
    embed, heads, n = 8, 2, 4
    attn = MultiHeadAttention(embed, heads, rng)
    x = rng.standard_normal((1, n, embed))
    mask = AttentionMask.causal(n)
    out, w = attn(Tensor(x), Tensor(x), Tensor(x), mask)

    hd = embed // heads
    q = x @ attn.wq.weight.data + attn.wq.bias.data
    k = x @ attn.wk.weight.data + attn.wk.bias.data
    v = x @ attn.wv.weight.data + attn.wv.bias.data
    ctx = np.zeros((1, n, embed))
    weights = np.zeros((heads, n, n))
    for h in range(heads):
        qs, ks, vs = (t[0, :, h * hd:(h + 1) * hd] for t in (q, k, v))
        scores = qs @ ks.T / np.sqrt(hd)
        for i in range(n):
            for j in range(n):
                if j > i:
                    scores[i, j] = -np.inf
        e = np.exp(scores - scores.max(axis=-1, keepdims=True))
        p = e / e.sum(axis=-1, keepdims=True)
        weights[h] = p
        ctx[0, :, h * hd:(h + 1) * hd] = p @ vs
    oracle = ctx @ attn.wo.weight.data + attn.wo.bias.data
    assert np.abs(out.data - oracle).max() < 1e-12
    assert np.abs(w.data[0] - weights.mean(axis=0)).max() < 1e-12


def test_attention_weights_rows_sum_to_one(rng):
    attn = MultiHeadAttention(8, 2, rng)
    x = Tensor(rng.standard_normal((2, 5, 8)))
    _, w = attn(x, x, x, AttentionMask.causal(5))
    assert np.abs(w.data.sum(axis=-1) - 1.0).max() < 1e-12


def test_adam_matches_hand_recurrence():
    lr, b1, b2, eps = 0.1, 0.9, 0.999, 1e-8
    p = Tensor(np.array([1.0, -2.0]), requires_grad=True)
    p.grad = np.zeros(2)
    opt = Adam([("p", p)], lr=lr, beta1=b1, beta2=b2, eps=eps)

    x = np.array([1.0, -2.0])
    m = np.zeros(2)
    v = np.zeros(2)
    g = np.array([0.5, -1.0])
    for t in (1, 2):
        p.grad[:] = g
        opt.step()
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        mh = m / (1 - b1 ** t)
        vh = v / (1 - b2 ** t)
        x = x - lr * mh / (np.sqrt(vh) + eps)
        assert np.abs(p.data - x).max() < 1e-12


def test_clip_grad_norm_scales_to_bound(rng):
    p = Tensor(np.zeros(4), requires_grad=True)
    p.grad = np.array([3.0, 4.0, 0.0, 0.0])
    norm = clip_grad_norm([p], 1.0)
    assert abs(norm - 5.0) < 1e-12
    assert abs(np.linalg.norm(p.grad) - 1.0) < 1e-12
    # already within the bound: untouched
    q = Tensor(np.zeros(2), requires_grad=True)
    q.grad = np.array([0.1, 0.2])
    clip_grad_norm([q], 1.0)
    assert np.abs(q.grad - [0.1, 0.2]).max() < 1e-15
    assert global_grad_norm([q]) == pytest.approx(np.sqrt(0.05))


def test_no_grad_suppresses_graph(rng):
    x = Tensor(rng.standard_normal(3), requires_grad=True)
    with no_grad():
        assert not is_grad_enabled()
        y = (x * 2.0).sum()
    assert y._parents == () or not y._parents  # no recorded graph
    assert is_grad_enabled()


def test_softmax_rows_and_gradcheck(rng):
    lin = Linear(4, 3, rng)
    x = Tensor(rng.standard_normal((5, 4)))

    def loss():
        return (softmax(lin(x)) ** 2).sum()

    res = grad_check("softmax_linear", lin, loss)
    assert res.passed, res.per_param
    probs = softmax(Tensor(rng.standard_normal((6, 3)))).data
    assert np.abs(probs.sum(axis=-1) - 1.0).max() < 1e-12


@settings(max_examples=25, deadline=None)
@given(st.integers(1, 4), st.integers(1, 5), st.integers(1, 5))
def test_sum_mean_broadcast_gradients(b, n, m):
    rng = np.random.default_rng(b * 100 + n * 10 + m)
    x = Tensor(rng.standard_normal((b, n, m)), requires_grad=True)
    loss = (x.mean(axis=0) * 3.0).sum() + (x.sum(axis=(1, 2)) ** 2).mean()
    loss.backward()
    fd = np.zeros_like(x.data)

    def f():
        y = (Tensor(x.data).mean(axis=0) * 3.0).sum() \
            + (Tensor(x.data).sum(axis=(1, 2)) ** 2).mean()
        return float(y.data)

    with no_grad():
        idx = (0, 0, 0)
        fd[idx] = fd_slope(f, x.data, idx)
        assert abs(x.grad[idx] - fd[idx]) < 1e-5


def test_float64_everywhere(rng):
    lin = Linear(3, 3, rng)
    out = lin(Tensor(rng.standard_normal((2, 3)).astype(np.float32)))
    assert out.data.dtype == np.float64
    assert lin.weight.data.dtype == np.float64
