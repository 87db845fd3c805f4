"""JSON helpers: non-finite floats become the strings "inf", "-inf", "nan"."""
from __future__ import annotations

import json
import math

import numpy as np

_SPECIAL = {"inf": math.inf, "-inf": -math.inf, "nan": math.nan}


def encode(obj):
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return x
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.ndarray):
        return [encode(v) for v in obj.tolist()]
    if isinstance(obj, dict):
        return {str(k): encode(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [encode(v) for v in obj]
    return obj


def decode_float(v) -> float:
    if isinstance(v, str):
        return _SPECIAL[v]
    return float(v)


def dumps(obj) -> str:
    return json.dumps(encode(obj), indent=2, sort_keys=True, allow_nan=False) + "\n"
