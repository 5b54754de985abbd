"""Per-agent generalized advantage estimation with a step-length cutoff."""

from __future__ import annotations

import numpy as np

from ..nn import ContractError


def gae_advantages(rewards: np.ndarray, values: np.ndarray, bootstrap: np.ndarray,
                   gamma: float, lam: float, h: int | None = None):
    """A^i_t = sum_{j=0..h} (gamma*lam)^j * delta^i_{t+j}, cut at episode end.

    rewards [T] is the shared team reward; values [T, n] per-agent estimates;
    bootstrap [n] is V at the post-episode state (zeros when truly terminal).
    h=None sums to the end of the episode. Returns (advantages, value_targets),
    both [T, n].
    """
    rewards = np.asarray(rewards, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    bootstrap = np.asarray(bootstrap, dtype=np.float64)
    T, n = values.shape
    if rewards.shape != (T,):
        raise ContractError(f"rewards shape {rewards.shape} does not match values {values.shape}")
    if bootstrap.shape != (n,):
        raise ContractError(f"bootstrap shape {bootstrap.shape}, expected ({n},)")

    v_next = np.concatenate([values[1:], bootstrap[None]], axis=0)
    delta = rewards[:, None] + gamma * v_next - values

    if h is None or h >= T - 1:
        adv = np.empty_like(delta)
        acc = np.zeros(n)
        for t in range(T - 1, -1, -1):
            acc = delta[t] + gamma * lam * acc
            adv[t] = acc
    else:
        if h < 0:
            raise ContractError(f"GAE step length must be >= 0, got {h}")
        adv = delta.copy()
        decay = 1.0
        for j in range(1, h + 1):
            decay *= gamma * lam
            adv[: T - j] += decay * delta[j:]
    return adv, adv + values


def compute_gae(buffer, gamma: float, lam: float, h: int | None = None):
    """Fills advantages/value_targets on every episode of the buffer in place.

    Episodes must carry values and a bootstrap vector (zeros if terminal).
    """
    for k, ep in enumerate(buffer.episodes):
        if ep.values is None:
            raise ContractError(f"episode {k} has no value estimates")
        if ep.bootstrap is None:
            raise ContractError(f"episode {k} has no bootstrap value")
        ep.advantages, ep.value_targets = gae_advantages(
            ep.rewards, ep.values, ep.bootstrap, gamma, lam, h
        )
