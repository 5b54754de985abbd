"""Encoder-decoder policy/value network with sequential per-agent decoding.

Decoder position p (0-indexed) holds action token a^p, where a^0 is the
learned start token; its output e^p pairs with observation embedding o^{p+1}.
The policy for agent i reads position i-1; per-agent values are convex
combinations of per-position scalar heads f(o^{p+1}, e^p) under the final
decoder block's head-averaged cross-attention row.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import erf as _np_erf

from ..nn import (
    AttentionMask,
    ContractError,
    LayerNorm,
    Linear,
    MASK_FILL,
    MLP,
    Module,
    ModuleList,
    MultiHeadAttention,
    Parameter,
    Tensor,
    concatenate,
    gelu,
    log_softmax,
    no_grad,
    softmax,
)
from .config import ContinuousSpace, DiscreteSpace, ModelConfig

LOG_STD_MIN, LOG_STD_MAX = -20.0, 2.0
_HALF_LOG_2PI = 0.5 * np.log(2.0 * np.pi)


class EncoderBlock(Module):
    """Unmasked self-attention block with post-LN residuals."""

    def __init__(self, embed_dim: int, n_heads: int, rng):
        super().__init__()
        self.attn = MultiHeadAttention(embed_dim, n_heads, rng)
        self.ln1 = LayerNorm(embed_dim)
        self.ln2 = LayerNorm(embed_dim)
        self.mlp = MLP(embed_dim, embed_dim, rng)

    def forward(self, x: Tensor):
        mask = AttentionMask.full(x.data.shape[-2])
        h, w = self.attn(x, x, x, mask)
        x = self.ln1(x + h)
        x = self.ln2(x + self.mlp(x))
        return x, w


class DecoderBlock(Module):
    """Masked self-attention over action tokens, then masked cross-attention
    with observation queries, then MLP; the mixed stream feeds the next block."""

    def __init__(self, embed_dim: int, n_heads: int, rng):
        super().__init__()
        self.self_attn = MultiHeadAttention(embed_dim, n_heads, rng)
        self.cross_attn = MultiHeadAttention(embed_dim, n_heads, rng)
        self.ln1 = LayerNorm(embed_dim)
        self.ln2 = LayerNorm(embed_dim)
        self.ln3 = LayerNorm(embed_dim)
        self.mlp = MLP(embed_dim, embed_dim, rng)

    def forward(self, x: Tensor, obs_q: Tensor, mask: AttentionMask):
        h, _ = self.self_attn(x, x, x, mask)
        x = self.ln1(x + h)
        h, w = self.cross_attn(obs_q, x, x, mask)
        y = self.ln2(obs_q + h)
        y = self.ln3(y + self.mlp(y))
        return y, w


class ScalarHead(Module):
    """Two-layer GELU head mapping an embedding to one scalar."""

    def __init__(self, n_in: int, hidden: int, rng):
        super().__init__()
        self.fc1 = Linear(n_in, hidden, rng)
        self.fc2 = Linear(hidden, 1, rng)

    def forward(self, x: Tensor) -> Tensor:
        return self.fc2(gelu(self.fc1(x)))


@dataclass
class PolicyOutput:
    """Per-agent action distribution: masked logits, or Gaussian mean/log-std."""

    kind: str
    logits: Tensor | None = None
    mean: Tensor | None = None
    log_std: Tensor | None = None

    def sample(self, rng: np.random.Generator) -> np.ndarray:
        if self.kind == "discrete":
            probs = softmax(self.logits).data
            cdf = np.cumsum(probs, axis=-1)
            u = rng.random(probs.shape[:-1] + (1,))
            return np.minimum((u > cdf).sum(axis=-1), probs.shape[-1] - 1)
        std = np.exp(self.log_std.data)
        return self.mean.data + std * rng.standard_normal(self.mean.data.shape)

    def argmax(self) -> np.ndarray:
        # np.argmax breaks ties by lowest index
        if self.kind == "discrete":
            return np.argmax(self.logits.data, axis=-1)
        return self.mean.data.copy()

    def log_prob(self, actions: np.ndarray) -> Tensor:
        if self.kind == "discrete":
            lp = log_softmax(self.logits)
            onehot = np.eye(self.logits.data.shape[-1])[np.asarray(actions, dtype=int)]
            return (lp * Tensor(onehot)).sum(axis=-1)
        a = Tensor(np.asarray(actions, dtype=np.float64))
        z = (a - self.mean) * (-self.log_std).exp()
        per_dim = z * z * (-0.5) - self.log_std - _HALF_LOG_2PI
        return per_dim.sum(axis=-1)

    def entropy(self) -> Tensor:
        if self.kind == "discrete":
            lp = log_softmax(self.logits)
            return -(softmax(self.logits) * lp).sum(axis=-1)
        per_dim = self.log_std + (_HALF_LOG_2PI + 0.5)
        ones = Tensor(np.ones(self.mean.data.shape))
        return (per_dim * ones).sum(axis=-1)


@dataclass
class DecoderTrace:
    """Raw decoder internals for external verification of the value aggregation."""

    outputs: np.ndarray  # e^0..e^{L-1}, shape [..., L, embed]
    weights: np.ndarray  # final-block head-averaged cross-attention, [..., L, L]
    f_values: np.ndarray | None = None  # per-position scalar heads, [..., L]


def _avail_additive(avail: np.ndarray) -> np.ndarray:
    avail = np.asarray(avail, dtype=bool)
    if not avail.any(axis=-1).all():
        raise ContractError("some availability rows allow no action")
    return np.where(avail, 0.0, MASK_FILL)


class SeqModel(Module):
    """Shared-parameter policy/value network over an ordered agent sequence.

    Parameter shapes never depend on the agent count, so a trained model
    evaluates unchanged on larger populations.
    """

    def __init__(self, config: ModelConfig, seed: int = 0):
        super().__init__()
        self.config = config
        e = config.embed_dim
        rng = np.random.default_rng(seed)

        self.obs_embed = Linear(config.obs_dim, e, rng)
        self.ln_obs = LayerNorm(e)
        self.enc_blocks = ModuleList(
            [EncoderBlock(e, config.n_heads, rng) for _ in range(config.n_blocks_encoder)]
        )
        if config.value_mode == "joint_encoder":
            self.enc_value = ScalarHead(e, e, rng)

        space = config.action_space
        self.act_embed = Linear(space.token_dim, e, rng)
        self.start_token = Parameter(0.02 * rng.standard_normal(e))
        self.dec_blocks = ModuleList(
            [DecoderBlock(e, config.n_heads, rng) for _ in range(config.n_blocks_decoder)]
        )
        if space.kind == "discrete":
            self.policy_head = Linear(e, space.n_actions, rng, gain=0.01)
        else:
            self.policy_head = Linear(e, space.dim, rng, gain=0.01)
            self.log_std = Parameter(np.full(space.dim, config.log_std_init))
        if config.value_mode in ("srsv", "srsv_no_pi"):
            self.f_theta = ScalarHead(2 * e, e, rng)

    # ---- encoding ----

    def encode(self, obs, return_weights: bool = False):
        """Raw observations [.., n, obs_dim] -> embeddings [.., n, embed_dim]."""
        x = obs if isinstance(obs, Tensor) else Tensor(obs)
        if x.data.ndim < 2 or x.data.shape[-1] != self.config.obs_dim:
            raise ContractError(
                f"expected observations [..., n, {self.config.obs_dim}], got {x.data.shape}"
            )
        x = self.ln_obs(gelu(self.obs_embed(x)))
        w = None
        for blk in self.enc_blocks:
            x, w = blk(x)
        return (x, w) if return_weights else x

    # ---- action token handling ----

    def _check_actions(self, actions: np.ndarray):
        space = self.config.action_space
        if space.kind == "discrete":
            a = np.asarray(actions)
            if a.size and (a.min() < 0 or a.max() >= space.n_actions):
                raise ContractError(
                    f"discrete action outside [0, {space.n_actions}): "
                    f"min {a.min()}, max {a.max()}"
                )
        else:
            a = np.asarray(actions, dtype=np.float64)
            if a.shape[-1] != space.dim:
                raise ContractError(
                    f"continuous action dim {a.shape[-1]} != space dim {space.dim}"
                )
            if a.size and not np.isfinite(a).all():
                raise ContractError("non-finite continuous action")

    def _embed_actions(self, actions: np.ndarray) -> Tensor:
        self._check_actions(actions)
        if self.config.action_space.kind == "discrete":
            idx = np.asarray(actions, dtype=int)
            tok = self.act_embed.weight[idx] + self.act_embed.bias
        else:
            tok = self.act_embed(Tensor(np.asarray(actions, dtype=np.float64)))
        return gelu(tok)

    def _decoder_tokens(self, actions, batch_shape: tuple, length: int) -> Tensor:
        """[start, embed(a^1), .., embed(a^{length-1})] along a new sequence axis."""
        e = self.config.embed_dim
        start = self.start_token.reshape((1,) * len(batch_shape) + (1, e))
        start = start.broadcast_to(batch_shape + (1, e))
        if length == 1:
            return start
        return concatenate([start, self._embed_actions(actions)], axis=-2)

    def _decode(self, tokens: Tensor, obs_q: Tensor, mask: AttentionMask):
        x = tokens
        w = None
        for blk in self.dec_blocks:
            x, w = blk(x, obs_q, mask)
        return x, w

    def _policy_from(self, out: Tensor, avail=None) -> PolicyOutput:
        space = self.config.action_space
        if space.kind == "discrete":
            logits = self.policy_head(out)
            if avail is not None:
                logits = logits + Tensor(_avail_additive(avail))
            return PolicyOutput(kind="discrete", logits=logits)
        mean = self.policy_head(out)
        log_std = self.log_std.clip(LOG_STD_MIN, LOG_STD_MAX)
        return PolicyOutput(kind="continuous", mean=mean, log_std=log_std)

    # ---- policy decoding ----

    def decode_policy(self, embeddings, prefix_actions=None, avail=None) -> PolicyOutput:
        """Distribution for agent i = len(prefix)+1 given executed prefix a^{1:i-1}.

        avail, if given, is the availability row for agent i only.
        """
        emb = embeddings if isinstance(embeddings, Tensor) else Tensor(embeddings)
        single = emb.data.ndim == 2
        if single:
            emb = emb.reshape((1,) + emb.data.shape)
            if prefix_actions is not None:
                prefix_actions = np.asarray(prefix_actions)[None]
            if avail is not None:
                avail = np.asarray(avail)[None]
        B, n, e = emb.data.shape
        if prefix_actions is None:
            plen = 0
        else:
            prefix_actions = np.asarray(prefix_actions)
            plen = prefix_actions.shape[1]
        if plen + 1 > n:
            raise ContractError(
                f"prefix of {plen} actions implies agent {plen + 1} > n_agents {n}"
            )
        L = plen + 1
        tokens = self._decoder_tokens(prefix_actions, (B,), L)
        out, _ = self._decode(tokens, emb[:, :L], AttentionMask.causal(L))
        po = self._policy_from(out[:, L - 1], avail=avail)
        if single:
            if po.kind == "discrete":
                po = PolicyOutput(kind="discrete",
                                  logits=po.logits.reshape(po.logits.data.shape[1:]))
            else:
                po = PolicyOutput(kind="continuous",
                                  mean=po.mean.reshape(po.mean.data.shape[1:]),
                                  log_std=po.log_std)
        return po

    # ---- joint autoregressive rollout (incremental, numpy-only) ----

    def rollout_joint(self, embeddings, mode: str = "sample", rng=None, avail=None):
        """Sequential decode of all n agents, feeding each action back in.

        Returns (actions, log_probs) as numpy arrays. This runs a cached
        incremental decoder outside the autodiff graph; teacher-forced
        re-evaluation of the produced actions reproduces the log-probs.
        """
        if mode not in ("sample", "argmax"):
            raise ContractError(f"rollout mode must be sample or argmax, got {mode!r}")
        if mode == "sample" and rng is None:
            raise ContractError("sample mode requires an rng")
        emb = embeddings.data if isinstance(embeddings, Tensor) else np.asarray(embeddings)
        single = emb.ndim == 2
        if single:
            emb = emb[None]
            avail = None if avail is None else np.asarray(avail)[None]
        B, n, e = emb.shape
        space = self.config.action_space

        session = _DecodeSession(self, B, n)
        token = np.broadcast_to(self.start_token.data, (B, e)).copy()
        acts, lps = [], []
        for i in range(n):
            out = session.step(token, emb[:, i])
            a_i, lp_i = self._head_np(out, mode, rng,
                                      None if avail is None else avail[:, i])
            acts.append(a_i)
            lps.append(lp_i)
            token = self._embed_action_np(a_i)
        if space.kind == "discrete":
            actions = np.stack(acts, axis=1)
        else:
            actions = np.stack(acts, axis=1)  # [B, n, d]
        log_probs = np.stack(lps, axis=1)
        if single:
            return actions[0], log_probs[0]
        return actions, log_probs

    def _head_np(self, out: np.ndarray, mode: str, rng, avail):
        space = self.config.action_space
        if space.kind == "discrete":
            logits = out @ self.policy_head.weight.data + self.policy_head.bias.data
            if avail is not None:
                logits = logits + _avail_additive(avail)
            logp_all = _np_log_softmax(logits)
            if mode == "argmax":
                a = np.argmax(logits, axis=-1)
            else:
                cdf = np.cumsum(np.exp(logp_all), axis=-1)
                u = rng.random(logits.shape[:-1] + (1,))
                a = np.minimum((u > cdf).sum(axis=-1), logits.shape[-1] - 1)
            return a, np.take_along_axis(logp_all, a[..., None], axis=-1)[..., 0]
        mean = out @ self.policy_head.weight.data + self.policy_head.bias.data
        log_std = np.clip(self.log_std.data, LOG_STD_MIN, LOG_STD_MAX)
        std = np.exp(log_std)
        a = mean if mode == "argmax" else mean + std * rng.standard_normal(mean.shape)
        z = (a - mean) / std
        lp = (-0.5 * z * z - log_std - _HALF_LOG_2PI).sum(axis=-1)
        return a, lp

    def _embed_action_np(self, actions: np.ndarray) -> np.ndarray:
        if self.config.action_space.kind == "discrete":
            tok = self.act_embed.weight.data[np.asarray(actions, dtype=int)]
        else:
            tok = actions @ self.act_embed.weight.data
        return _np_gelu(tok + self.act_embed.bias.data)

    # ---- value estimation ----

    def estimate_values(self, embeddings, actions=None, value_mode=None, avail=None,
                        return_trace: bool = False):
        """Per-agent values [.., n]; actions are the executed joint actions.

        actions=None estimates at a fresh state (greedy prefix), used for
        time-limit bootstrapping.
        """
        cfg_mode = self.config.value_mode
        if value_mode is not None and value_mode != cfg_mode:
            raise ContractError(
                f"value_mode {value_mode!r} does not match model config {cfg_mode!r}"
            )
        emb = embeddings if isinstance(embeddings, Tensor) else Tensor(embeddings)
        single = emb.data.ndim == 2
        if single:
            emb = emb.reshape((1,) + emb.data.shape)
            if actions is not None:
                actions = np.asarray(actions)[None]
            if avail is not None:
                avail = np.asarray(avail)[None]
        B, n, e = emb.data.shape

        if cfg_mode == "joint_encoder":
            values = self.enc_value(emb).reshape((B, n))
            trace = None
        elif cfg_mode == "srsv_no_pi":
            if actions is None:
                actions, _ = self.rollout_joint(emb.data, mode="argmax", avail=avail)
            out, w, f = self._value_pass_prefix(emb, actions)
            values = (w @ f.reshape((B, n, 1))).reshape((B, n))
            trace = DecoderTrace(outputs=out.data, weights=w.data, f_values=f.data)
        else:
            values, trace = self._estimate_srsv(emb, actions, avail)

        if single:
            values = values.reshape((n,))
            if trace is not None:
                trace = DecoderTrace(
                    outputs=trace.outputs[0],
                    weights=trace.weights[0],
                    f_values=None if trace.f_values is None else trace.f_values[0],
                )
        return (values, trace) if return_trace else values

    def _value_pass_prefix(self, emb: Tensor, actions):
        """Single causal pass over n positions; row i weights f over j <= i."""
        B, n, e = emb.data.shape
        tokens = self._decoder_tokens(
            None if n == 1 else np.asarray(actions)[:, : n - 1], (B,), n
        )
        out, w = self._decode(tokens, emb, AttentionMask.causal(n))
        f = self.f_theta(concatenate([emb, out], axis=-1)).reshape((B, n))
        return out, w, f

    def _estimate_srsv(self, emb: Tensor, actions, avail):
        """Append a query row per agent; weight f over all n+1 positions."""
        B, n, e = emb.data.shape
        full = self._greedy_completions(emb.data, actions, avail)  # [B, n, n(,d)] numpy

        flat_shape = (B * n, n) + full.shape[3:]
        tokens = self._decoder_tokens(full.reshape(flat_shape), (B * n,), n + 1)
        rep = emb.reshape((B, 1, n, e)).broadcast_to((B, n, n, e))
        own = emb.reshape((B, n, 1, e))
        obs_q = concatenate([rep, own], axis=2).reshape((B * n, n + 1, e))

        out, w = self._decode(tokens, obs_q, AttentionMask.causal(n + 1))
        f = self.f_theta(concatenate([obs_q, out], axis=-1)).reshape((B * n, n + 1))
        last_row = w[:, n]  # [B*n, n+1]
        values = (last_row * f).sum(axis=-1).reshape((B, n))
        trace = DecoderTrace(
            outputs=out.data.reshape((B, n, n + 1, e)),
            weights=w.data.reshape((B, n, n + 1, n + 1)),
            f_values=f.data.reshape((B, n, n + 1)),
        )
        return values, trace

    def _greedy_completions(self, emb_np: np.ndarray, actions, avail) -> np.ndarray:
        """Row t keeps executed actions before position t and argmax afterwards.

        Argmax completions are constants of the estimation (no gradient flows
        through the choice); the token embeddings of those actions still sit
        in the graph of the subsequent value pass.
        """
        B, n, e = emb_np.shape
        with no_grad():
            if actions is None:
                actions, _ = self.rollout_joint(emb_np, mode="argmax", avail=avail)
            else:
                self._check_actions(actions)
            actions = np.asarray(actions)
            full = np.repeat(actions[:, None], n, axis=1)  # [B, n, n(, d)]
            emb_t = Tensor(emb_np)
            for j in range(n):
                # rows for target agents t <= j still need a greedy action at j
                rows = j + 1
                prefix = full[:, :rows, :j].reshape((B * rows, j) + full.shape[3:])
                tokens = self._decoder_tokens(prefix, (B * rows,), j + 1)
                obs_q = (
                    emb_t[:, : j + 1]
                    .reshape((B, 1, j + 1, e))
                    .broadcast_to((B, rows, j + 1, e))
                    .reshape((B * rows, j + 1, e))
                )
                out, _ = self._decode(tokens, obs_q, AttentionMask.causal(j + 1))
                po = self._policy_from(
                    out[:, j], avail=None if avail is None else
                    np.broadcast_to(avail[:, None, j], (B, rows) + avail.shape[2:])
                    .reshape((B * rows,) + avail.shape[2:]),
                )
                full[:, :rows, j] = po.argmax().reshape((B, rows) + full.shape[3:])
        return full

    # ---- training-time joint evaluation ----

    def evaluate_actions(self, embeddings, actions, avail=None):
        """Teacher-forced pass: (log-probs [.., n], entropies [.., n], values [.., n])."""
        emb = embeddings if isinstance(embeddings, Tensor) else Tensor(embeddings)
        single = emb.data.ndim == 2
        if single:
            emb = emb.reshape((1,) + emb.data.shape)
            actions = np.asarray(actions)[None]
            if avail is not None:
                avail = np.asarray(avail)[None]
        B, n, e = emb.data.shape
        actions = np.asarray(actions)
        self._check_actions(actions)

        tokens = self._decoder_tokens(
            None if n == 1 else actions[:, : n - 1], (B,), n
        )
        out, w = self._decode(tokens, emb, AttentionMask.causal(n))
        po = self._policy_from(out, avail=avail)
        logp = po.log_prob(actions)
        entropy = po.entropy()

        mode = self.config.value_mode
        if mode == "joint_encoder":
            values = self.enc_value(emb).reshape((B, n))
        elif mode == "srsv_no_pi":
            f = self.f_theta(concatenate([emb, out], axis=-1)).reshape((B, n))
            values = (w @ f.reshape((B, n, 1))).reshape((B, n))
        else:
            values = self._estimate_srsv(emb, actions, avail)[0]

        if single:
            return logp.reshape((n,)), entropy.reshape((n,)), values.reshape((n,))
        return logp, entropy, values

    def decoder_trace(self, embeddings, actions) -> DecoderTrace:
        """Teacher-forced policy-pass internals (no appended value rows)."""
        emb = embeddings if isinstance(embeddings, Tensor) else Tensor(embeddings)
        single = emb.data.ndim == 2
        if single:
            emb = emb.reshape((1,) + emb.data.shape)
            actions = np.asarray(actions)[None]
        B, n, e = emb.data.shape
        tokens = self._decoder_tokens(
            None if n == 1 else np.asarray(actions)[:, : n - 1], (B,), n
        )
        out, w = self._decode(tokens, emb, AttentionMask.causal(n))
        f = None
        if self.config.value_mode in ("srsv", "srsv_no_pi"):
            f = self.f_theta(concatenate([emb, out], axis=-1)).reshape((B, n)).data
        if single:
            return DecoderTrace(out.data[0], w.data[0], None if f is None else f[0])
        return DecoderTrace(out.data, w.data, f)


# ---- incremental numpy decoder (rollout fast path) ----


def _np_linear(x, lin: Linear):
    return x @ lin.weight.data + lin.bias.data


def _np_ln(x, ln: LayerNorm):
    mu = x.mean(axis=-1, keepdims=True)
    var = ((x - mu) ** 2).mean(axis=-1, keepdims=True)
    return (x - mu) / np.sqrt(var + ln.eps) * ln.gain.data + ln.shift.data


def _np_gelu(x):
    return 0.5 * x * (1.0 + _np_erf(x / np.sqrt(2.0)))


def _np_softmax(x):
    shifted = x - x.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def _np_log_softmax(x):
    shifted = x - x.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


class _DecodeSession:
    """Key/value-cached autoregressive decoding; one token per step.

    Causality makes masks unnecessary: only already-seen keys exist.
    """

    def __init__(self, model: SeqModel, batch: int, max_len: int):
        self.model = model
        e = model.config.embed_dim
        h = model.config.n_heads
        self.h, self.hd = h, e // h
        self.t = 0
        self.cache = [
            {k: np.empty((batch, h, max_len, self.hd)) for k in ("ks", "vs", "kc", "vc")}
            for _ in model.dec_blocks
        ]

    def _split(self, x):
        b, e = x.shape
        return x.reshape(b, self.h, self.hd)

    def _attend(self, q, keys, vals):
        # q: [B, H, hd]; keys/vals: [B, H, t, hd]
        logits = np.einsum("bhd,bhkd->bhk", q, keys) * (self.hd ** -0.5)
        w = _np_softmax(logits)
        return np.einsum("bhk,bhkd->bhd", w, vals)

    def step(self, token: np.ndarray, obs: np.ndarray) -> np.ndarray:
        t = self.t
        x = token
        for blk, c in zip(self.model.dec_blocks, self.cache):
            sa, ca = blk.self_attn, blk.cross_attn
            c["ks"][:, :, t] = self._split(_np_linear(x, sa.wk))
            c["vs"][:, :, t] = self._split(_np_linear(x, sa.wv))
            q = self._split(_np_linear(x, sa.wq))
            mixed = self._attend(q, c["ks"][:, :, : t + 1], c["vs"][:, :, : t + 1])
            attn = _np_linear(mixed.reshape(x.shape), sa.wo)
            x1 = _np_ln(x + attn, blk.ln1)

            c["kc"][:, :, t] = self._split(_np_linear(x1, ca.wk))
            c["vc"][:, :, t] = self._split(_np_linear(x1, ca.wv))
            qc = self._split(_np_linear(obs, ca.wq))
            mixed = self._attend(qc, c["kc"][:, :, : t + 1], c["vc"][:, :, : t + 1])
            attn = _np_linear(mixed.reshape(x.shape), ca.wo)
            y = _np_ln(obs + attn, blk.ln2)

            hidden = _np_gelu(_np_linear(y, blk.mlp.fc1))
            y = _np_ln(y + _np_linear(hidden, blk.mlp.fc2), blk.ln3)
            x = y
        self.t += 1
        return x
