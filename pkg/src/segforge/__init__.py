"""segforge: a from-scratch semantic segmentation engine for SAR imagery.

Residual encoders with DeepLabV3/DeepLabV3+ heads, trained by SGD with
polynomial learning-rate decay, evaluated by confusion-matrix IoU. The hot
convolution/pooling kernels run through a compiled extension when available
and a numpy fallback otherwise (see segforge.kernels.BACKEND).
"""

from . import data, evaluation, models, ops, training
from .kernels import BACKEND as KERNEL_BACKEND
from .tensor import (
    Parameter,
    Tensor,
    backward,
    default_dtype,
    get_default_dtype,
    no_grad,
    reset_tape,
    set_debug_checks,
    set_default_dtype,
)

__version__ = "0.1.0"

__all__ = [
    "KERNEL_BACKEND",
    "Parameter",
    "Tensor",
    "backward",
    "data",
    "default_dtype",
    "evaluation",
    "get_default_dtype",
    "models",
    "no_grad",
    "ops",
    "reset_tape",
    "set_debug_checks",
    "set_default_dtype",
    "training",
]
