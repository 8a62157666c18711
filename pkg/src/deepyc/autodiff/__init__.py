from .gradcheck import GradCheckReport, GradEntry, grad_check
from .losses import central_loss, gaussian_nll, pinball_loss
from .ops import (
    ACTIVATIONS,
    activation,
    add,
    attention,
    attention_weights,
    dense,
    dropout,
    embed,
    flatten_last,
    linear,
    mean_all,
    mul,
    reshape,
    scale,
    softmax_np,
    softplus_np,
    sub,
    sum_all,
)
from .optim import AdamState, adam_step
from .params import ParamStore
from .tensor import Tape, Tensor, active_tape, apply_op, as_tensor, backward

__all__ = [
    "ACTIVATIONS",
    "AdamState",
    "GradCheckReport",
    "GradEntry",
    "ParamStore",
    "Tape",
    "Tensor",
    "activation",
    "active_tape",
    "adam_step",
    "add",
    "apply_op",
    "as_tensor",
    "attention",
    "attention_weights",
    "backward",
    "central_loss",
    "dense",
    "dropout",
    "embed",
    "flatten_last",
    "gaussian_nll",
    "grad_check",
    "linear",
    "mean_all",
    "mul",
    "pinball_loss",
    "reshape",
    "scale",
    "softmax_np",
    "softplus_np",
    "sub",
    "sum_all",
]
