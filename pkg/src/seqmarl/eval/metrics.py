"""Episode-level metrics: reach ratio, dead ratio, win rate, step reward."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..nn import ContractError


@dataclass
class EpisodeResult:
    """Outcome of one evaluation episode, env-agnostic.

    reached/collided are per-agent flags for envs that define them (None
    otherwise); frames is an optional list of (t, pose, reached) snapshots
    recorded for trajectory dumps.
    """

    seed: int
    steps: int
    total_reward: float
    win: bool
    reached: np.ndarray | None = None
    collided: np.ndarray | None = None
    frames: list = field(default_factory=list)


@dataclass
class MetricRecord:
    """One metric value for one (population, seed) cell entry.

    mean/std aggregate the metric across the cell's seed list and are shared
    by every record of that cell.
    """

    metric: str
    value: float
    population: int
    seed: int
    episodes: int
    mean: float
    std: float

    def __post_init__(self):
        if self.episodes < 1:
            raise ContractError("MetricRecord needs at least one episode")
        if self.std < 0:
            raise ContractError(f"negative std {self.std}")


def reach_ratio(results: list) -> float:
    """Fraction of agents (over all episodes) whose reached flag ended true."""
    flags = [r.reached for r in results if r.reached is not None]
    if not flags:
        raise ContractError("reach_ratio needs episodes with reached flags")
    total = sum(f.size for f in flags)
    return float(sum(int(f.sum()) for f in flags)) / total


def dead_ratio(results: list) -> float:
    """Fraction of agents that collided at least once during their episode."""
    flags = [r.collided for r in results if r.collided is not None]
    if not flags:
        raise ContractError("dead_ratio needs episodes with collision flags")
    total = sum(f.size for f in flags)
    return float(sum(int(f.sum()) for f in flags)) / total


def win_rate(results: list) -> float:
    if not results:
        raise ContractError("win_rate needs at least one episode")
    return float(sum(1 for r in results if r.win)) / len(results)


def avg_step_reward(results: list) -> float:
    """Total reward over total steps, pooled across episodes."""
    steps = sum(r.steps for r in results)
    if steps == 0:
        raise ContractError("avg_step_reward needs at least one step")
    return float(sum(r.total_reward for r in results)) / steps


METRIC_FNS = {
    "reach_ratio": reach_ratio,
    "dead_ratio": dead_ratio,
    "win_rate": win_rate,
    "avg_step_reward": avg_step_reward,
}
