from .optim import AdamWState, WarmupSchedule, adamw_step, lr_at
from .tensor import (
    Parameter,
    ShapeError,
    Tensor,
    add,
    backward,
    checked_mode,
    concat,
    cross_entropy,
    dropout,
    embedding,
    gelu,
    is_grad_enabled,
    layer_norm,
    log_softmax,
    matmul,
    mean,
    mul,
    no_grad,
    reshape,
    softmax,
    sub,
    sum,
    tensor,
    transpose,
)

__all__ = [
    "AdamWState", "WarmupSchedule", "adamw_step", "lr_at",
    "Parameter", "ShapeError", "Tensor", "add", "backward", "checked_mode", "concat",
    "cross_entropy", "dropout", "embedding", "gelu", "is_grad_enabled", "layer_norm",
    "log_softmax", "matmul", "mean", "mul", "no_grad", "reshape", "softmax", "sub",
    "sum", "tensor", "transpose",
]
