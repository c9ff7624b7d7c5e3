from . import tensor as ops
from .gradcheck import GradCheckReport, check_gradients, relative_error
from .optim import (
    LrSchedule,
    Parameter,
    adam_step,
    glorot_uniform,
    load_checkpoint,
    save_checkpoint,
    zero_grad,
)
from .tensor import ShapeError, Tensor, backward, no_grad

__all__ = [
    "GradCheckReport",
    "LrSchedule",
    "Parameter",
    "ShapeError",
    "Tensor",
    "adam_step",
    "backward",
    "check_gradients",
    "glorot_uniform",
    "load_checkpoint",
    "no_grad",
    "ops",
    "relative_error",
    "save_checkpoint",
    "zero_grad",
]
