"""Minimal dense-tensor reverse-mode automatic differentiation."""
from . import ops
from .gradcheck import grad_check, numerical_gradient
from .ops import *  # noqa: F401,F403
from .tensor import Tensor, as_tensor, gradients, topo_order

__all__ = ["Tensor", "as_tensor", "gradients", "topo_order", "grad_check", "numerical_gradient", "ops"]
__all__ += ops.__all__
