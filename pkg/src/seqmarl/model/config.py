"""Model configuration and action-space descriptors."""

from __future__ import annotations

from dataclasses import dataclass, field

from ..nn import ContractError

VALUE_MODES = ("srsv", "srsv_no_pi", "joint_encoder")


@dataclass(frozen=True)
class DiscreteSpace:
    """k mutually exclusive actions, integer-indexed."""

    n_actions: int

    kind = "discrete"

    def __post_init__(self):
        if self.n_actions < 2:
            raise ContractError(f"discrete space needs >= 2 actions, got {self.n_actions}")

    @property
    def token_dim(self) -> int:
        return self.n_actions

    def to_dict(self) -> dict:
        return {"kind": "discrete", "n_actions": self.n_actions}


@dataclass(frozen=True)
class ContinuousSpace:
    """Box of d real action components with per-dimension bounds."""

    low: tuple
    high: tuple

    kind = "continuous"

    def __post_init__(self):
        lo, hi = tuple(float(x) for x in self.low), tuple(float(x) for x in self.high)
        object.__setattr__(self, "low", lo)
        object.__setattr__(self, "high", hi)
        if len(lo) != len(hi) or not lo:
            raise ContractError(f"bound lengths differ: {len(lo)} vs {len(hi)}")
        if any(l >= h for l, h in zip(lo, hi)):
            raise ContractError(f"each low must be < high, got {lo} vs {hi}")

    @property
    def dim(self) -> int:
        return len(self.low)

    @property
    def token_dim(self) -> int:
        return self.dim

    def to_dict(self) -> dict:
        return {"kind": "continuous", "low": list(self.low), "high": list(self.high)}


def space_from_dict(d: dict):
    if d["kind"] == "discrete":
        return DiscreteSpace(int(d["n_actions"]))
    if d["kind"] == "continuous":
        return ContinuousSpace(tuple(d["low"]), tuple(d["high"]))
    raise ContractError(f"unknown action space kind {d.get('kind')!r}")


@dataclass(frozen=True)
class ModelConfig:
    """Shapes and mode switches for the encoder-decoder policy/value network.

    value_mode selects how per-agent values are produced:
      srsv         attention-weighted sum over per-position value heads, with
                   greedy completion of the action sequence beyond each agent;
      srsv_no_pi   same weighted sum but row i, using only preceding actions;
      joint_encoder  scalar head on the encoder output (no decoder involvement).
    """

    obs_dim: int
    action_space: object
    embed_dim: int = 64
    n_heads: int = 4
    n_blocks_encoder: int = 2
    n_blocks_decoder: int = 2
    value_mode: str = "srsv"
    log_std_init: float = -0.5   # continuous spaces only; clamped to [-20, 2]

    def __post_init__(self):
        if self.obs_dim < 1 or self.embed_dim < 1:
            raise ContractError("obs_dim and embed_dim must be positive")
        if self.n_blocks_encoder < 1 or self.n_blocks_decoder < 1 or self.n_heads < 1:
            raise ContractError("block and head counts must be positive")
        if self.embed_dim % self.n_heads != 0:
            raise ContractError(
                f"embed_dim {self.embed_dim} not divisible by n_heads {self.n_heads}"
            )
        if self.value_mode not in VALUE_MODES:
            raise ContractError(
                f"value_mode must be one of {VALUE_MODES}, got {self.value_mode!r}"
            )
        if not isinstance(self.action_space, (DiscreteSpace, ContinuousSpace)):
            raise ContractError("action_space must be DiscreteSpace or ContinuousSpace")

    def to_dict(self) -> dict:
        return {
            "obs_dim": self.obs_dim,
            "action_space": self.action_space.to_dict(),
            "embed_dim": self.embed_dim,
            "n_heads": self.n_heads,
            "n_blocks_encoder": self.n_blocks_encoder,
            "n_blocks_decoder": self.n_blocks_decoder,
            "value_mode": self.value_mode,
            "log_std_init": self.log_std_init,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        return cls(
            obs_dim=int(d["obs_dim"]),
            action_space=space_from_dict(d["action_space"]),
            embed_dim=int(d["embed_dim"]),
            n_heads=int(d["n_heads"]),
            n_blocks_encoder=int(d["n_blocks_encoder"]),
            n_blocks_decoder=int(d["n_blocks_decoder"]),
            value_mode=str(d["value_mode"]),
            log_std_init=float(d.get("log_std_init", -0.5)),
        )
