"""Fixed-primitive reverse-mode differentiation."""

from .adam import AdamState, adam_step
from .ops import add, concat, conv2d, l1_loss, linear, scale, silu, sub, total, vdot
from .tensor import Tape, Tensor, active_tape, as_tensor, emit

__all__ = [
    "AdamState", "Tape", "Tensor", "active_tape", "adam_step", "add", "as_tensor",
    "concat", "conv2d", "emit", "l1_loss", "linear", "scale", "silu", "sub", "total", "vdot",
]
