# solver/serializers.py
"""Artifact writers and readers: CSV through pandas, JSON with sorted keys."""

from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np
import pandas as pd

from .exceptions import UsageError
from .funcspace import SampledFunction

FLOAT_FORMAT = "%.17g"


def _plain(value):
    """numpy scalars and arrays to builtins; non-finite floats to None."""
    if isinstance(value, dict):
        return {str(k): _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple, np.ndarray)):
        return [_plain(v) for v in value]
    if isinstance(value, (np.bool_, bool)):
        return bool(value)
    if isinstance(value, (np.integer, int)):
        return int(value)
    if isinstance(value, (np.floating, float)):
        value = float(value)
        return value if math.isfinite(value) else None
    return value


def dumps(payload) -> str:
    return json.dumps(_plain(payload), sort_keys=True, indent=2) + "\n"


def write_json(path: Path, payload) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dumps(payload), encoding="utf-8")
    return path


def write_frame(path: Path, frame: pd.DataFrame) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
    return path


def sidecar_path(path: Path) -> Path:
    return Path(path).with_suffix(".json")


def write_sampled(path: Path, fn: SampledFunction) -> Path:
    """``x,value`` CSV plus a JSON sidecar with the window and tail policy."""
    write_frame(path, fn.to_frame())
    write_json(sidecar_path(path), fn.metadata())
    return Path(path)


def read_sampled(path: Path) -> SampledFunction:
    path = Path(path)
    if not path.exists():
        raise UsageError(f"solution file {str(path)!r} not found", field="solution")
    frame = pd.read_csv(path, float_precision="round_trip")
    if list(frame.columns) != ["x", "value"]:
        raise UsageError(f"{path.name} is not a grid solution (columns {list(frame.columns)})", field="solution")
    meta_path = sidecar_path(path)
    meta = json.loads(meta_path.read_text(encoding="utf-8")) if meta_path.exists() else {"tail": "constant"}
    return SampledFunction(frame["x"].to_numpy(), frame["value"].to_numpy(), tail=meta.get("tail", "constant"),
                           kappa=meta.get("kappa"))


def error_line(payload: dict) -> str:
    """One-line JSON for the stderr error contract."""
    return json.dumps(_plain(payload), sort_keys=True)
