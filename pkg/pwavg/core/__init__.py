"""Core components: configuration, expressions, models, flow and linearization."""

from .config import RunConfig
from .errors import PwavgError
from .flow import PiecewiseFlow, integrate
from .model import PiecewiseModel, load_model

__all__ = [
    "RunConfig",
    "PwavgError",
    "PiecewiseFlow",
    "integrate",
    "PiecewiseModel",
    "load_model",
]
