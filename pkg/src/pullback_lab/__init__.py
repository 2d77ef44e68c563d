"""Numerical experiments on pullbacks of points under derivatives of polynomial iterates."""

__version__ = "0.1.0"

from .errors import PullbackLabError
from .poly import Poly

__all__ = ["Poly", "PullbackLabError", "__version__"]
