"""CSV and JSON report writers.

Floats are written with 17 significant digits and JSON keys sorted, so files
are identical across runs with the same inputs and configuration.
"""

import json
import math
from pathlib import Path
from typing import Any, Dict, Optional, Union

import numpy as np
import pandas as pd

FLOAT_FORMAT = "%.17g"


def write_csv(frame: pd.DataFrame, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False, float_format=FLOAT_FORMAT)
    return path


def _plain(value: Any) -> Any:
    if isinstance(value, dict):
        return {str(k): _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if isinstance(value, np.ndarray):
        return _plain(value.tolist())
    if isinstance(value, (np.bool_,)):
        return bool(value)
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        return value if math.isfinite(value) else None
    return value


def write_json(payload: Dict[str, Any], path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as f:
        json.dump(_plain(payload), f, indent=2, sort_keys=True)
        f.write("\n")
    return path


def report_header(command: str, config: Dict[str, Any], model_hash: Optional[str]) -> Dict[str, Any]:
    """Fields every report starts with."""
    return {"command": command, "config": config, "model_sha256": model_hash}
