"""Counterfactual-explanation-infused knowledge distillation on small 2-D problems."""
from .errors import CodError

__version__ = "0.1.0"
