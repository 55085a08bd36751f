import json
import hashlib
import logging
from pathlib import Path
from typing import Any, Dict, Optional

import numpy as np
import pandas as pd

logger = logging.getLogger(__name__)

SCHEMA_VERSION = "1"


def canonical_json(payload: Any) -> str:
    return json.dumps(payload, sort_keys=True, separators=(",", ":"), default=_to_builtin)


def config_hash(payload: Dict[str, Any]) -> str:
    return hashlib.sha256(canonical_json(payload).encode("utf-8")).hexdigest()


def _to_builtin(value: Any) -> Any:
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, np.bool_):
        return bool(value)
    if isinstance(value, (np.floating, np.integer)):
        return value.item()
    if isinstance(value, (set, frozenset)):
        return sorted(value)
    raise TypeError(f"Object of type {type(value).__name__} is not JSON serializable")


def meta_line(meta: Optional[Dict[str, Any]]) -> str:
    meta = meta or {}
    parts = [f"{key}={meta[key]}" for key in sorted(meta)]
    return "# " + " ".join(parts)


def write_csv(df: pd.DataFrame, path, meta: Optional[Dict[str, Any]] = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as f:
        f.write(meta_line(meta) + "\n")
        df.to_csv(f, index=False, sep=",", decimal=".", lineterminator="\n")
    logger.debug(f"Wrote {len(df)} rows to {path}")
    return path


def read_csv(path) -> pd.DataFrame:
    return pd.read_csv(path, comment="#")


def write_json(payload: Dict[str, Any], path, meta: Optional[Dict[str, Any]] = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    body = dict(payload)
    if meta is not None:
        body["meta"] = meta
    with open(path, "w") as f:
        f.write(json.dumps(body, sort_keys=True, indent=2, default=_to_builtin))
        f.write("\n")
    logger.debug(f"Wrote JSON to {path}")
    return path
