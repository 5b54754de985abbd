from .config import (
    VALUE_MODES,
    ContinuousSpace,
    DiscreteSpace,
    ModelConfig,
    space_from_dict,
)
from .net import DecoderTrace, PolicyOutput, SeqModel

__all__ = [
    "VALUE_MODES", "ContinuousSpace", "DecoderTrace", "DiscreteSpace",
    "ModelConfig", "PolicyOutput", "SeqModel", "space_from_dict",
]
