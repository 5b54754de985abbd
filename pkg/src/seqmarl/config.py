"""Run configuration: flat dotted key-value files, defaults, CLI overrides.

Precedence is field-wise: CLI overrides > config file > defaults. Unknown
keys are rejected with the offending key named, so typos fail loudly before
any work starts.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields as dc_fields

from .envs import ENV_KINDS
from .envs.dubins import DubinsConfig
from .envs.matrix_game import MatrixGameConfig
from .rl.trainer import TrainConfig


class ConfigError(ValueError):
    """Invalid, unknown, or unparseable configuration input."""


def _bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("true", "1", "yes", "on"):
        return True
    if t in ("false", "0", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


# dotted key -> (type constructor, default). Model obs_dim/action_space are
# derived from the env and deliberately absent.
def _registry() -> dict:
    reg = {
        "env.kind": (str, "matrix"),
        "model.embed_dim": (int, 64),
        "model.n_heads": (int, 4),
        "model.n_blocks_encoder": (int, 2),
        "model.n_blocks_decoder": (int, 2),
        "model.value_mode": (str, "srsv"),
        "model.log_std_init": (float, -0.5),
        "run.seed": (int, 0),
        "run.log_dir": (str, "runs"),
        "run.checkpoint_every": (int, 0),
        "run.workers": (int, 1),
        "run.tag": (str, ""),
        "env.matrix.n_agents": (int, 2),
        "env.matrix.n_actions": (int, 2),
        "env.matrix.payoff": (str, "coordination"),
        "env.matrix.horizon": (int, 1),
        "env.dubins.scenario": (str, ""),
    }
    for f in dc_fields(DubinsConfig):
        kind = int if f.type == "int" else float
        reg[f"env.dubins.{f.name}"] = (kind, f.default)
    for f in dc_fields(TrainConfig):
        if f.name == "gae_h":
            reg["train.gae_h"] = (int, -1)  # -1 encodes None (sum to episode end)
            continue
        kind = {"int": int, "float": float, "bool": _bool}[f.type]
        reg[f"train.{f.name}"] = (kind, f.default)
    return reg


REGISTRY = _registry()


def parse_config_file(path) -> dict:
    """Reads `key = value` lines; '#' starts a comment; keys must be known."""
    out = {}
    try:
        with open(path) as fh:
            lines = fh.readlines()
    except OSError as e:
        raise ConfigError(f"cannot read config file {path}: {e}") from e
    for lineno, raw in enumerate(lines, 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {raw!r}")
        key, val = (s.strip() for s in line.split("=", 1))
        if key not in REGISTRY:
            raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
        if key in out:
            raise ConfigError(f"{path}:{lineno}: duplicate key {key!r}")
        out[key] = val
    return out


def resolve(file_values: dict | None = None, overrides: dict | None = None) -> dict:
    """Merges defaults, file values, and overrides into a typed flat dict."""
    resolved = {k: v for k, (_, v) in REGISTRY.items()}
    for source, name in ((file_values, "config file"), (overrides, "override")):
        if not source:
            continue
        for key, val in source.items():
            if key not in REGISTRY:
                raise ConfigError(f"unknown {name} key {key!r}")
            kind, _ = REGISTRY[key]
            if isinstance(val, str):
                try:
                    val = kind(val)
                except ValueError as e:
                    raise ConfigError(f"{name} key {key!r}: {e}") from e
            resolved[key] = val
    if resolved["env.kind"] not in ENV_KINDS:
        raise ConfigError(f"env.kind must be one of {ENV_KINDS}, "
                          f"got {resolved['env.kind']!r}")
    return resolved


def env_spec(resolved: dict) -> dict:
    """Extracts the env_from_spec argument from a resolved config."""
    kind = resolved["env.kind"]
    spec = {"kind": kind}
    prefix = f"env.{kind}."
    # only non-default values are forwarded, so a scenario file's settings
    # are not silently clobbered by registry defaults
    for key, val in resolved.items():
        if not key.startswith(prefix):
            continue
        name = key[len(prefix):]
        _, default = REGISTRY[key]
        if val != default and not (name == "scenario" and not val):
            spec[name] = val
    return spec


def train_config(resolved: dict) -> TrainConfig:
    kw = {}
    for f in dc_fields(TrainConfig):
        val = resolved[f"train.{f.name}"]
        if f.name == "gae_h":
            val = None if val in (-1, "") else int(val)
        kw[f.name] = val
    return TrainConfig(**kw)


def model_kwargs(resolved: dict) -> dict:
    """ModelConfig kwargs minus the env-derived obs_dim/action_space."""
    return {
        "embed_dim": resolved["model.embed_dim"],
        "n_heads": resolved["model.n_heads"],
        "n_blocks_encoder": resolved["model.n_blocks_encoder"],
        "n_blocks_decoder": resolved["model.n_blocks_decoder"],
        "value_mode": resolved["model.value_mode"],
        "log_std_init": resolved["model.log_std_init"],
    }
