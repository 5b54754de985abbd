"""Common environment interface: shared-reward, simultaneous-move episodes."""

from __future__ import annotations


class Env:
    """reset(seed) -> obs [n, obs_dim]; step(joint action) -> (obs, reward, done, info).

    Equal seeds must give identical initial states, and step must be a
    deterministic function of state and action. info carries per-env extras;
    when done is True, info["time_limit"] distinguishes a time cutoff (value
    should bootstrap) from a true terminal state (future value is zero).
    """

    n_agents: int
    obs_dim: int
    action_space: object
    max_steps: int

    def reset(self, seed: int):
        raise NotImplementedError

    def step(self, actions):
        raise NotImplementedError

    def available_actions(self):
        """[n, k] boolean mask for discrete spaces, or None."""
        return None


class SimulationFault(RuntimeError):
    """The simulator produced a non-finite or otherwise invalid state."""
