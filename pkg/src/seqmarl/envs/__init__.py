"""Environments: shared-reward interface, matrix games, multi-agent navigation."""

from __future__ import annotations

import dataclasses

from ..nn import ContractError
from .base import Env, SimulationFault
from .dubins import (
    DubinsAction,
    DubinsCarEnv,
    DubinsConfig,
    DubinsState,
    dubins_observe,
    dubins_reset,
    dubins_reward,
    dubins_step,
    nominal_action,
    wrap_angle,
)
from .matrix_game import (
    MatrixGameConfig,
    MatrixGameEnv,
    MatrixGameOracle,
    coordination_payoff,
    matrix_game_oracle,
    xor_payoff,
)
from .scenario import load_scenario, population_scenario, write_scenario

ENV_KINDS = ("matrix", "dubins")


def _matrix_from_spec(spec: dict) -> MatrixGameEnv:
    payoff = spec.pop("payoff", "coordination")
    n_agents = int(spec.pop("n_agents", 2))
    n_actions = int(spec.pop("n_actions", 2))
    horizon = int(spec.pop("horizon", 1))
    if spec:
        raise ContractError(f"unknown matrix env fields: {sorted(spec)}")
    if payoff == "coordination":
        table = coordination_payoff(n_agents, n_actions)
    elif payoff == "xor":
        if n_actions != 2:
            raise ContractError("xor payoff is defined for n_actions=2")
        table = xor_payoff(n_agents)
    else:
        raise ContractError(f"unknown payoff {payoff!r}")
    return MatrixGameEnv(MatrixGameConfig(
        n_agents=n_agents, n_actions=n_actions, payoff=table, horizon=horizon))


def _dubins_from_spec(spec: dict) -> DubinsCarEnv:
    scenario = spec.pop("scenario", None)
    fields = {f.name: f.type for f in dataclasses.fields(DubinsConfig)}
    bad = sorted(set(spec) - set(fields))
    if bad:
        raise ContractError(f"unknown dubins env fields: {bad}")
    typed = {k: (int(v) if fields[k] == "int" else float(v)) for k, v in spec.items()}
    if scenario is not None:
        cfg = dataclasses.replace(load_scenario(scenario), **typed)
    else:
        cfg = DubinsConfig(**typed)
    return DubinsCarEnv(cfg)


def env_from_spec(spec: dict) -> Env:
    """Build an environment from a flat spec dict.

    `kind` picks the family; `scenario` (dubins only) loads a file first and
    remaining keys override individual config fields.
    """
    spec = dict(spec)
    kind = spec.pop("kind", None)
    if kind not in ENV_KINDS:
        raise ContractError(f"env kind must be one of {ENV_KINDS}, got {kind!r}")
    return _matrix_from_spec(spec) if kind == "matrix" else _dubins_from_spec(spec)
