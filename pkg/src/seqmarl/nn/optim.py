"""Adam optimizer and gradient-norm clipping."""

from __future__ import annotations

import numpy as np

from .autograd import ContractError, Tensor


class TrainingAbortError(RuntimeError):
    """Raised when non-finite numbers enter the update path."""


def global_grad_norm(params) -> float:
    total = 0.0
    for p in params:
        if p.grad is not None:
            total += float((p.grad * p.grad).sum())
    return float(np.sqrt(total))


def clip_grad_norm(params, max_norm: float) -> float:
    """Scales gradients in place so their global norm is at most max_norm.

    Returns the pre-clip norm.
    """
    params = list(params)
    norm = global_grad_norm(params)
    if not np.isfinite(norm):
        raise TrainingAbortError(f"gradient norm is non-finite ({norm})")
    if norm > max_norm and norm > 0.0:
        scale = max_norm / norm
        for p in params:
            if p.grad is not None:
                p.grad *= scale
    return norm


class Adam:
    """Adam with bias correction; epsilon sits outside the sqrt."""

    def __init__(self, named_params, lr: float = 3e-4, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        if not (0.0 <= beta1 < 1.0 and 0.0 <= beta2 < 1.0):
            raise ContractError(f"betas must lie in [0, 1), got {beta1}, {beta2}")
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.names: list[str] = []
        self.params: list[Tensor] = []
        for name, p in named_params:
            if name in self.names:
                raise ContractError(f"duplicate parameter name {name!r}")
            self.names.append(name)
            self.params.append(p)
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]
        self.t = 0

    def step(self):
        """One Adam update from the gradients currently stored on the params."""
        self.t += 1
        bc1 = 1.0 - self.beta1 ** self.t
        bc2 = 1.0 - self.beta2 ** self.t
        for name, p, m, v in zip(self.names, self.params, self.m, self.v):
            g = p.grad if p.grad is not None else np.zeros_like(p.data)
            if not np.isfinite(g).all():
                raise TrainingAbortError(f"non-finite gradient in parameter {name!r}")
            m += (1.0 - self.beta1) * (g - m)
            v += (1.0 - self.beta2) * (g * g - v)
            p.data -= self.lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)

    def state_dict(self) -> dict:
        return {
            "t": self.t,
            "m": {n: m.copy() for n, m in zip(self.names, self.m)},
            "v": {n: v.copy() for n, v in zip(self.names, self.v)},
        }

    def load_state_dict(self, state: dict):
        if sorted(state["m"]) != sorted(self.names):
            raise ContractError("optimizer state parameter names do not match")
        self.t = int(state["t"])
        self.m = [np.asarray(state["m"][n], dtype=np.float64).copy() for n in self.names]
        self.v = [np.asarray(state["v"][n], dtype=np.float64).copy() for n in self.names]
        for p, m in zip(self.params, self.m):
            if m.shape != p.data.shape:
                raise ContractError("optimizer state shape mismatch")
