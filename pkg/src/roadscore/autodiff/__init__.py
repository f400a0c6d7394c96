from .tensor import Tensor, stack
from .serialize import save_tensor, load_tensor

__all__ = ["Tensor", "stack", "save_tensor", "load_tensor"]
