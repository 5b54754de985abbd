"""Cooperative matrix games, small enough to verify by exhaustive enumeration.

Observations are constant one-hot agent identities; all task structure lives
in the payoff tensor, which makes these environments exact oracles for the
sequential-policy machinery.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..model import DiscreteSpace
from ..nn import ContractError
from .base import Env

MAX_ENUMERABLE = 10 ** 6


def coordination_payoff(n_agents: int = 2, n_actions: int = 2) -> np.ndarray:
    """1 when all agents pick the same action, else 0."""
    payoff = np.zeros((n_actions,) * n_agents)
    for a in range(n_actions):
        payoff[(a,) * n_agents] = 1.0
    return payoff


def xor_payoff(n_agents: int = 3) -> np.ndarray:
    """1 when the parity of binary actions is odd, else 0."""
    grids = np.indices((2,) * n_agents).sum(axis=0)
    return (grids % 2 == 1).astype(np.float64)


@dataclass(frozen=True)
class MatrixGameConfig:
    n_agents: int = 2
    n_actions: int = 2
    payoff: np.ndarray = None
    horizon: int = 1

    def __post_init__(self):
        if not 2 <= self.n_agents <= 4:
            raise ContractError(f"n_agents must be in [2, 4], got {self.n_agents}")
        if self.n_actions < 2:
            raise ContractError(f"n_actions must be >= 2, got {self.n_actions}")
        if self.horizon < 1:
            raise ContractError(f"horizon must be >= 1, got {self.horizon}")
        payoff = self.payoff
        if payoff is None:
            payoff = coordination_payoff(self.n_agents, self.n_actions)
        payoff = np.asarray(payoff, dtype=np.float64)
        expected = (self.n_actions,) * self.n_agents
        if payoff.shape != expected:
            raise ContractError(
                f"payoff shape {payoff.shape} does not match {expected}"
            )
        if not np.isfinite(payoff).all():
            raise ContractError("payoff tensor has non-finite entries")
        object.__setattr__(self, "payoff", payoff)

    def to_dict(self) -> dict:
        return {
            "n_agents": self.n_agents,
            "n_actions": self.n_actions,
            "payoff": self.payoff.reshape(-1).tolist(),
            "horizon": self.horizon,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MatrixGameConfig":
        payoff = d.get("payoff")
        if payoff is not None:
            payoff = np.asarray(payoff, dtype=np.float64).reshape(
                (int(d["n_actions"]),) * int(d["n_agents"])
            )
        return cls(
            n_agents=int(d["n_agents"]),
            n_actions=int(d["n_actions"]),
            payoff=payoff,
            horizon=int(d.get("horizon", 1)),
        )


class MatrixGameEnv(Env):
    def __init__(self, config: MatrixGameConfig):
        self.config = config
        self.n_agents = config.n_agents
        self.obs_dim = config.n_agents
        self.action_space = DiscreteSpace(config.n_actions)
        self.max_steps = config.horizon
        self._obs = np.eye(config.n_agents)
        self._t = 0

    def reset(self, seed: int = 0):
        self._t = 0
        return self._obs.copy()

    def step(self, actions):
        actions = np.asarray(actions, dtype=int)
        if actions.shape != (self.n_agents,):
            raise ContractError(
                f"expected {self.n_agents} actions, got shape {actions.shape}"
            )
        k = self.config.n_actions
        if actions.min() < 0 or actions.max() >= k:
            raise ContractError(f"action outside [0, {k}): {actions.tolist()}")
        reward = float(self.config.payoff[tuple(actions)])
        self._t += 1
        done = self._t >= self.config.horizon
        info = {
            "optimal_return": float(self.config.payoff.max()) * self.config.horizon,
            "time_limit": False,  # horizon end is a true terminal: the game is over
        }
        return self._obs.copy(), reward, done, info

    def available_actions(self):
        return np.ones((self.n_agents, self.config.n_actions), dtype=bool)


@dataclass
class MatrixGameOracle:
    """Exhaustively enumerated reference values for a payoff tensor."""

    optimal_per_step: float
    optimal_return: float
    best_joint_action: tuple
    independent_best: float        # best product-of-deterministic-policies value
    uniform_first_best: float      # first agent forced uniform, rest best-respond

    def to_dict(self) -> dict:
        return {
            "optimal_per_step": self.optimal_per_step,
            "optimal_return": self.optimal_return,
            "best_joint_action": list(self.best_joint_action),
            "independent_best": self.independent_best,
            "uniform_first_best": self.uniform_first_best,
        }


def matrix_game_oracle(config: MatrixGameConfig) -> MatrixGameOracle:
    payoff = config.payoff
    if payoff.size > MAX_ENUMERABLE:
        raise ContractError(
            f"payoff tensor with {payoff.size} entries exceeds the "
            f"{MAX_ENUMERABLE} enumeration limit"
        )
    best_flat = int(np.argmax(payoff))
    best_joint = tuple(int(i) for i in np.unravel_index(best_flat, payoff.shape))
    optimal = float(payoff.max())
    # A product of independent distributions is multilinear in each factor, so
    # its optimum sits at a deterministic profile: enumerate those directly.
    independent_best = float(
        max(payoff[joint] for joint in np.ndindex(payoff.shape))
    )
    uniform_first_best = float(payoff.mean(axis=0).max()) if config.n_agents > 1 else optimal
    return MatrixGameOracle(
        optimal_per_step=optimal,
        optimal_return=optimal * config.horizon,
        best_joint_action=best_joint,
        independent_best=independent_best,
        uniform_first_best=uniform_first_best,
    )
