"""Neural network layers built on the Tensor autodiff engine."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autograd import (
    ContractError,
    ShapeError,
    Tensor,
    gelu,
    softmax,
)

MASK_FILL = -1e30  # additive logit for disallowed attention entries; exp underflows to exactly 0


class Parameter(Tensor):
    """A trainable leaf tensor."""

    def __init__(self, data):
        super().__init__(data, requires_grad=True)


def orthogonal(shape, rng: np.random.Generator, gain: float = 1.0) -> np.ndarray:
    """Orthogonal init (QR of a Gaussian), sign-fixed for determinism."""
    rows, cols = int(np.prod(shape[:-1])), shape[-1]
    flat = rng.standard_normal((max(rows, cols), min(rows, cols)))
    q, r = np.linalg.qr(flat)
    q = q * np.sign(np.diag(r))
    if rows < cols:
        q = q.T
    return np.ascontiguousarray(gain * q.reshape(shape))


class Module:
    """Base class; tracks parameters and submodules by attribute name."""

    def __init__(self):
        object.__setattr__(self, "_params", {})
        object.__setattr__(self, "_modules", {})

    def __setattr__(self, name, value):
        if isinstance(value, Parameter):
            self._params[name] = value
        elif isinstance(value, Module):
            self._modules[name] = value
        object.__setattr__(self, name, value)

    def named_parameters(self, prefix: str = ""):
        for name, p in self._params.items():
            yield (prefix + name, p)
        for name, mod in self._modules.items():
            yield from mod.named_parameters(prefix + name + ".")

    def parameters(self):
        return [p for _, p in self.named_parameters()]

    def num_parameters(self) -> int:
        return sum(p.data.size for p in self.parameters())

    def zero_grad(self):
        for p in self.parameters():
            p.grad = np.zeros_like(p.data)

    def state_dict(self) -> dict:
        return {name: p.data.copy() for name, p in self.named_parameters()}

    def load_state_dict(self, state: dict):
        own = dict(self.named_parameters())
        missing = sorted(set(own) - set(state))
        extra = sorted(set(state) - set(own))
        if missing or extra:
            raise ContractError(f"state dict mismatch: missing={missing} unexpected={extra}")
        for name, p in own.items():
            src = np.asarray(state[name], dtype=np.float64)
            if src.shape != p.data.shape:
                raise ShapeError(
                    f"parameter {name}: checkpoint shape {src.shape} vs model shape {p.data.shape}"
                )
            p.data = src.copy()

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)


class ModuleList(Module):
    def __init__(self, modules):
        super().__init__()
        self._items = list(modules)
        for i, m in enumerate(self._items):
            setattr(self, str(i), m)

    def __iter__(self):
        return iter(self._items)

    def __len__(self):
        return len(self._items)

    def __getitem__(self, i):
        return self._items[i]


class Linear(Module):
    """y = x @ W + b with orthogonal W and zero b."""

    def __init__(self, n_in: int, n_out: int, rng: np.random.Generator, gain: float = 1.0):
        super().__init__()
        self.n_in, self.n_out = n_in, n_out
        self.weight = Parameter(orthogonal((n_in, n_out), rng, gain=gain))
        self.bias = Parameter(np.zeros(n_out))

    def forward(self, x: Tensor) -> Tensor:
        if x.data.shape[-1] != self.n_in:
            raise ShapeError(
                f"linear expects trailing dim {self.n_in}, got input shape {x.data.shape}"
            )
        return x @ self.weight + self.bias


class LayerNorm(Module):
    """Normalizes the trailing axis to zero mean, unit variance."""

    def __init__(self, dim: int, eps: float = 1e-5):
        super().__init__()
        self.dim, self.eps = dim, eps
        self.gain = Parameter(np.ones(dim))
        self.shift = Parameter(np.zeros(dim))

    def forward(self, x: Tensor) -> Tensor:
        if x.data.shape[-1] != self.dim:
            raise ShapeError(f"layer_norm expects trailing dim {self.dim}, got {x.data.shape}")
        mu = x.mean(axis=-1, keepdims=True)
        centered = x - mu
        var = (centered * centered).mean(axis=-1, keepdims=True)
        return centered / (var + self.eps).sqrt() * self.gain + self.shift


class MLP(Module):
    """Two-layer GELU feedforward."""

    def __init__(self, dim: int, hidden: int, rng: np.random.Generator):
        super().__init__()
        self.fc1 = Linear(dim, hidden, rng)
        self.fc2 = Linear(hidden, dim, rng)

    def forward(self, x: Tensor) -> Tensor:
        return self.fc2(gelu(self.fc1(x)))


@dataclass(frozen=True)
class AttentionMask:
    """Boolean [n_query, n_key] grid; True marks key positions a query may read."""

    allowed: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.allowed, dtype=bool)
        object.__setattr__(self, "allowed", arr)
        if arr.ndim != 2:
            raise ContractError(f"attention mask must be 2-d, got shape {arr.shape}")
        if not arr.any(axis=1).all():
            rows = np.where(~arr.any(axis=1))[0].tolist()
            raise ContractError(f"attention mask rows {rows} allow no keys")

    @classmethod
    def causal(cls, n: int) -> "AttentionMask":
        return cls(np.tril(np.ones((n, n), dtype=bool)))

    @classmethod
    def full(cls, n_query: int, n_key: int | None = None) -> "AttentionMask":
        return cls(np.ones((n_query, n_key if n_key is not None else n_query), dtype=bool))

    def additive(self) -> np.ndarray:
        return np.where(self.allowed, 0.0, MASK_FILL)


class MultiHeadAttention(Module):
    """Scaled dot-product attention with a boolean mask.

    forward returns (output, weights) where weights is the post-softmax
    attention averaged over heads, shape [..., n_query, n_key].
    """

    def __init__(self, embed_dim: int, n_heads: int, rng: np.random.Generator):
        super().__init__()
        if embed_dim % n_heads != 0:
            raise ContractError(f"embed_dim {embed_dim} not divisible by n_heads {n_heads}")
        self.embed_dim, self.n_heads = embed_dim, n_heads
        self.head_dim = embed_dim // n_heads
        self.wq = Linear(embed_dim, embed_dim, rng)
        self.wk = Linear(embed_dim, embed_dim, rng)
        self.wv = Linear(embed_dim, embed_dim, rng)
        self.wo = Linear(embed_dim, embed_dim, rng)

    def _split(self, x: Tensor) -> Tensor:
        # [..., L, e] -> [..., H, L, hd]
        shape = x.data.shape[:-1] + (self.n_heads, self.head_dim)
        return x.reshape(shape).swapaxes(-3, -2)

    def forward(self, query: Tensor, key: Tensor, value: Tensor, mask: AttentionMask):
        lq, lk = query.data.shape[-2], key.data.shape[-2]
        if key.data.shape[-2] != value.data.shape[-2]:
            raise ShapeError(
                f"key/value lengths differ: {key.data.shape} vs {value.data.shape}"
            )
        if mask.allowed.shape != (lq, lk):
            raise ShapeError(
                f"mask shape {mask.allowed.shape} does not match query/key lengths ({lq}, {lk})"
            )
        q = self._split(self.wq(query))
        k = self._split(self.wk(key))
        v = self._split(self.wv(value))
        logits = q @ k.swapaxes(-1, -2) * (self.head_dim ** -0.5) + Tensor(mask.additive())
        attn = softmax(logits, axis=-1)  # [..., H, Lq, Lk]
        mixed = (attn @ v).swapaxes(-3, -2)  # [..., Lq, H, hd]
        out = self.wo(mixed.reshape(mixed.data.shape[:-2] + (self.embed_dim,)))
        return out, attn.mean(axis=-3)
