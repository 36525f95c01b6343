from .layers import (
    BatchNorm,
    BatchTooSmallError,
    Context,
    Conv2d,
    Dropout,
    Flatten,
    LeakyReLU,
    Linear,
    Param,
    Sequential,
    ShapeError,
    Sigmoid,
    bce_loss,
    conv_out_extent,
)
from .models import (
    ARCHITECTURES,
    DEFAULT_INPUT_SHAPE,
    REFERENCE_PARAM_COUNTS,
    Model,
    ResidualBlock,
    UnknownArchitectureError,
    build_model,
)
from .optim import Adam, adam_step
from .checkpoint import load_checkpoint, save_checkpoint

__all__ = [
    "ARCHITECTURES",
    "Adam",
    "BatchNorm",
    "BatchTooSmallError",
    "Context",
    "Conv2d",
    "DEFAULT_INPUT_SHAPE",
    "Dropout",
    "Flatten",
    "LeakyReLU",
    "Linear",
    "Model",
    "Param",
    "REFERENCE_PARAM_COUNTS",
    "ResidualBlock",
    "Sequential",
    "ShapeError",
    "Sigmoid",
    "UnknownArchitectureError",
    "adam_step",
    "bce_loss",
    "build_model",
    "conv_out_extent",
    "load_checkpoint",
    "save_checkpoint",
]
