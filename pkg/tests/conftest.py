"""Test configuration for pwavg."""

import math
import sys
from pathlib import Path

import pytest

# Add the project root to Python path
project_root = Path(__file__).parent.parent
sys.path.insert(0, str(project_root))


@pytest.fixture
def sample_config():
    """Configuration loaded from the repository config.yaml."""
    from pwavg.core.config import RunConfig
    return RunConfig.from_yaml(project_root / "config.yaml")


@pytest.fixture
def polar_model():
    """Pinned polar built-in: f1(r) = 2*pi*r - 2."""
    from pwavg.core.builtin_models import builtin_proposition1_polar
    model, _ = builtin_proposition1_polar()
    return model


@pytest.fixture
def cartesian_model():
    from pwavg.core.builtin_models import builtin_proposition1
    return builtin_proposition1()


def single_zone_document(f0, f1=None, dimension=None, period=2 * math.pi, manifold=None):
    """One zone, no switching surfaces."""
    dimension = dimension or len(f0)
    zone = {"name": "all", "signature": [], "F0": list(f0)}
    if f1 is not None:
        zone["F1"] = list(f1)
    document = {"dimension": dimension, "period": period, "surfaces": [], "zones": [zone]}
    if manifold is not None:
        document["manifold"] = manifold
    return document


@pytest.fixture
def sliding_document():
    """x' = -1 above x = 0 and +1 below: every orbit reaches a sliding segment."""
    return {
        "dimension": 1,
        "period": 1.0,
        "surfaces": ["x1"],
        "zones": [
            {"name": "up", "signature": [1], "F0": ["-1"]},
            {"name": "down", "signature": [-1], "F0": ["1"]},
        ],
    }


@pytest.fixture
def saltation_model():
    """Crossing of h = x1 where only the x2 speed jumps (0 to 1)."""
    from pwavg.core.model import load_model
    return load_model({
        "dimension": 2,
        "period": 2.0,
        "surfaces": ["x1"],
        "zones": [
            {"name": "left", "signature": [-1], "F0": ["1", "0"]},
            {"name": "right", "signature": [1], "F0": ["1", "1"]},
        ],
    })


@pytest.fixture
def time_averaging_model():
    """F0 = 0, two zones split by sin(t); f1(z) is a time quadrature of F1."""
    from pwavg.core.model import load_model
    return load_model({
        "dimension": 2,
        "period": 2 * math.pi,
        "surfaces": ["sin(t)"],
        "zones": [
            {"name": "first", "signature": [1], "F0": ["0", "0"], "F1": ["x1^2 + t", "x1*x2"]},
            {"name": "second", "signature": [-1], "F0": ["0", "0"], "F1": ["1 - x2", "t*x2"]},
        ],
        "manifold": {"k": 2, "box": [[-1.0, 1.0], [-1.0, 1.0]], "beta0": []},
    })
