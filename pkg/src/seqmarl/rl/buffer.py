"""Rollout storage: per-step transitions grouped into episodes."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..nn import ContractError


@dataclass
class Transition:
    """One environment step: joint observation, joint action, behavior
    log-probs frozen at collection time, shared team reward."""

    obs: np.ndarray          # [n, obs_dim]
    actions: np.ndarray      # [n] int or [n, d] float
    log_probs: np.ndarray    # [n]
    reward: float
    done: bool
    avail: np.ndarray | None = None  # [n, k] bool


@dataclass
class Episode:
    obs: np.ndarray          # [T, n, obs_dim]
    actions: np.ndarray      # [T, n(, d)]
    log_probs: np.ndarray    # [T, n]
    rewards: np.ndarray      # [T]
    final_obs: np.ndarray    # [n, obs_dim] observation after the last step
    terminal: bool           # True: episode truly ended; False: time-limit cut
    avail: np.ndarray | None = None
    final_avail: np.ndarray | None = None
    # caches filled by the trainer
    values: np.ndarray | None = None       # [T, n]
    bootstrap: np.ndarray | None = None    # [n]
    advantages: np.ndarray | None = None   # [T, n]
    value_targets: np.ndarray | None = None

    @classmethod
    def from_transitions(cls, transitions: list, final_obs, terminal: bool,
                         final_avail=None) -> "Episode":
        if not transitions:
            raise ContractError("episode must contain at least one transition")
        has_avail = transitions[0].avail is not None
        return cls(
            obs=np.stack([t.obs for t in transitions]),
            actions=np.stack([t.actions for t in transitions]),
            log_probs=np.stack([t.log_probs for t in transitions]),
            rewards=np.array([t.reward for t in transitions], dtype=np.float64),
            final_obs=np.asarray(final_obs),
            terminal=bool(terminal),
            avail=np.stack([t.avail for t in transitions]) if has_avail else None,
            final_avail=None if final_avail is None else np.asarray(final_avail),
        )

    @property
    def length(self) -> int:
        return self.obs.shape[0]

    @property
    def total_reward(self) -> float:
        return float(self.rewards.sum())


class RolloutBuffer:
    """Episodes collected in one inference phase."""

    def __init__(self):
        self.episodes: list[Episode] = []

    def add_episode(self, ep: Episode):
        self.episodes.append(ep)

    def __len__(self):
        return len(self.episodes)

    @property
    def num_transitions(self) -> int:
        return sum(ep.length for ep in self.episodes)

    def mean_return(self) -> float:
        if not self.episodes:
            raise ContractError("empty buffer")
        return float(np.mean([ep.total_reward for ep in self.episodes]))

    def flatten(self) -> dict:
        """Concatenates episodes into flat arrays; requires GAE already done."""
        if not self.episodes:
            raise ContractError("empty buffer")
        for k, ep in enumerate(self.episodes):
            if ep.advantages is None or ep.value_targets is None:
                raise ContractError(f"episode {k} has no computed advantages")
        has_avail = self.episodes[0].avail is not None
        return {
            "obs": np.concatenate([ep.obs for ep in self.episodes]),
            "actions": np.concatenate([ep.actions for ep in self.episodes]),
            "log_probs": np.concatenate([ep.log_probs for ep in self.episodes]),
            "advantages": np.concatenate([ep.advantages for ep in self.episodes]),
            "value_targets": np.concatenate([ep.value_targets for ep in self.episodes]),
            "avail": np.concatenate([ep.avail for ep in self.episodes]) if has_avail else None,
        }


def minibatch_indices(rng: np.random.Generator, total: int, size: int):
    """Shuffled index chunks covering all samples once."""
    if size < 1:
        raise ContractError(f"minibatch size must be >= 1, got {size}")
    perm = rng.permutation(total)
    n_chunks = max(1, int(np.ceil(total / size)))
    return np.array_split(perm, n_chunks)
