"""PPO losses: squared Bellman residual value loss and clipped surrogate."""

from __future__ import annotations

import numpy as np

from ..nn import Tensor, TrainingAbortError, minimum


def value_loss(predictions: Tensor, targets: np.ndarray) -> Tensor:
    """Mean over batch of the per-step sum over agents of squared residuals.

    Targets are constants (no gradient flows through them).
    """
    targets = np.asarray(targets, dtype=np.float64)
    if not np.isfinite(predictions.data).all():
        bad = int(np.argwhere(~np.isfinite(predictions.data))[0][0])
        raise TrainingAbortError(f"non-finite value prediction at batch index {bad}")
    if not np.isfinite(targets).all():
        bad = int(np.argwhere(~np.isfinite(targets))[0][0])
        raise TrainingAbortError(f"non-finite value target at batch index {bad}")
    diff = predictions - Tensor(targets)
    per_step = (diff * diff).sum(axis=-1)
    return per_step.mean()


def standardize(advantages: np.ndarray) -> np.ndarray:
    """Zero mean, unit variance over the whole batch."""
    a = np.asarray(advantages, dtype=np.float64)
    return (a - a.mean()) / (a.std() + 1e-8)


def policy_loss(new_log_probs: Tensor, old_log_probs: np.ndarray,
                advantages: np.ndarray, clip_eps: float,
                entropy: Tensor | None = None, entropy_coef: float = 0.0,
                standardize_adv: bool = True):
    """-mean(min(ratio*A, clip(ratio)*A)) - entropy_coef * mean(entropy).

    Returns (loss, stats). Advantages are standardized over the given batch
    unless standardize_adv is False (the raw clip arithmetic is then exact,
    which the analytic ratio/advantage cases rely on).
    """
    old = np.asarray(old_log_probs, dtype=np.float64)
    adv = standardize(advantages) if standardize_adv else np.asarray(advantages, dtype=np.float64)
    ratio = (new_log_probs - Tensor(old)).exp()
    if not np.isfinite(ratio.data).all():
        bad = int(np.argwhere(~np.isfinite(ratio.data))[0][0])
        raise TrainingAbortError(f"non-finite probability ratio at batch index {bad}")
    adv_t = Tensor(adv)
    surrogate = minimum(ratio * adv_t, ratio.clip(1.0 - clip_eps, 1.0 + clip_eps) * adv_t)
    loss = -surrogate.mean()
    stats = {
        "ratio_dev_max": float(np.abs(ratio.data - 1.0).max()),
        "clip_fraction": float(((ratio.data < 1.0 - clip_eps) | (ratio.data > 1.0 + clip_eps)).mean()),
    }
    if entropy is not None:
        loss = loss - entropy_coef * entropy.mean()
        stats["entropy"] = float(entropy.data.mean())
    return loss, stats
