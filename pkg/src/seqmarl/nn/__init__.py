from .autograd import (
    ContractError,
    ShapeError,
    Tensor,
    as_tensor,
    concatenate,
    gelu,
    is_grad_enabled,
    log_softmax,
    maximum,
    minimum,
    no_grad,
    softmax,
    stack,
)
from .gradcheck import GradCheckResult, grad_check
from .layers import (
    MASK_FILL,
    AttentionMask,
    LayerNorm,
    Linear,
    MLP,
    Module,
    ModuleList,
    MultiHeadAttention,
    Parameter,
    orthogonal,
)
from .optim import Adam, TrainingAbortError, clip_grad_norm, global_grad_norm

__all__ = [
    "Adam", "AttentionMask", "ContractError", "GradCheckResult", "LayerNorm",
    "Linear", "MASK_FILL", "MLP", "Module", "ModuleList", "MultiHeadAttention",
    "Parameter", "ShapeError", "Tensor", "TrainingAbortError", "as_tensor",
    "clip_grad_norm", "concatenate", "gelu", "global_grad_norm", "grad_check",
    "is_grad_enabled", "log_softmax", "maximum", "minimum", "no_grad",
    "orthogonal", "softmax", "stack",
]
