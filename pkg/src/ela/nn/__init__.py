"""Dense numeric core: float64 tensors with reverse-mode autodiff, MLP and
GRU primitives, Gaussian/cross-entropy losses, Adam, and finite-difference
gradient verification."""

from . import tensor
from .adam import RowAdam, adam_update
from .checkpoint import load_params, save_params
from .gradcheck import fd_gradient, max_gradient_error
from .layers import GruCell, Mlp, ParamStore
from .tensor import Tensor

__all__ = [
    "GruCell",
    "Mlp",
    "ParamStore",
    "RowAdam",
    "Tensor",
    "adam_update",
    "fd_gradient",
    "load_params",
    "max_gradient_error",
    "save_params",
    "tensor",
]
