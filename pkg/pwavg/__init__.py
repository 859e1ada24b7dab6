"""pwavg - first-order averaging for discontinuous piecewise differential systems."""

__version__ = "0.1.0"

from .core.config import RunConfig
from .core.model import PiecewiseModel, load_model, load_model_file

__all__ = [
    "RunConfig",
    "PiecewiseModel",
    "load_model",
    "load_model_file",
]
