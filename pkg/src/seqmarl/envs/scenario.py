"""Flat-text scenario files for the navigation environment.

One `key = value` pair per line, `#` comments, keys matching DubinsConfig
fields. Population scenarios hold agent density fixed by scaling the arena
half-width with sqrt(n) and the step budget with the arena diagonal.
"""

from __future__ import annotations

import dataclasses
import math
from pathlib import Path

from ..nn import ContractError
from .dubins import DubinsConfig

_FIELDS = {f.name: f.type for f in dataclasses.fields(DubinsConfig)}


def _parse_value(name: str, raw: str):
    kind = _FIELDS[name]
    try:
        if kind == "int":
            return int(raw)
        return float(raw)
    except ValueError as exc:
        raise ContractError(f"scenario field {name!r}: bad value {raw!r}") from exc


def load_scenario(path) -> DubinsConfig:
    text = Path(path).read_text()
    values = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ContractError(f"{path}:{lineno}: expected 'key = value', got {line!r}")
        key, raw = (part.strip() for part in line.split("=", 1))
        if key not in _FIELDS:
            raise ContractError(f"{path}:{lineno}: unknown scenario field {key!r}")
        if key in values:
            raise ContractError(f"{path}:{lineno}: duplicate scenario field {key!r}")
        values[key] = _parse_value(key, raw)
    return DubinsConfig(**values)


def write_scenario(path, config: DubinsConfig, comment: str | None = None) -> None:
    lines = []
    if comment:
        lines.extend(f"# {row}" for row in comment.splitlines())
    for f in dataclasses.fields(DubinsConfig):
        lines.append(f"{f.name} = {getattr(config, f.name)!r}")
    Path(path).write_text("\n".join(lines) + "\n")


def population_scenario(n_agents: int, base: DubinsConfig | None = None) -> DubinsConfig:
    """Scale a base scenario to a population at constant agent density."""
    if n_agents < 1:
        raise ContractError(f"n_agents must be >= 1, got {n_agents}")
    base = base if base is not None else DubinsConfig(n_agents=4)
    scale = math.sqrt(n_agents / base.n_agents)
    return dataclasses.replace(
        base,
        n_agents=n_agents,
        arena_half_width=base.arena_half_width * scale,
        max_steps=int(round(base.max_steps * scale)),
    )
