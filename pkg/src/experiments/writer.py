import logging
from pathlib import Path
from typing import Any, Dict, List, Optional

import pandas as pd

from src import __version__
from src.monitoring.metrics_collector import MetricsCollector
from src.solvers.nonlinear_solvers import IterationTrace
from src.utils.io import SCHEMA_VERSION, write_csv, write_json

logger = logging.getLogger(__name__)

TRACE_FILE = "traces.jsonl"


class ResultWriter:
    """Single writer for one run directory.

    Every file carries the config hash, tool version and schema version.
    The trace file is truncated when the writer opens so reruns into the
    same directory produce identical bytes.
    """

    def __init__(self, out_dir, config_hash: str, command: str):
        self.out_dir = Path(out_dir)
        self.out_dir.mkdir(parents=True, exist_ok=True)
        self.command = command
        self.meta = {
            "command": command,
            "config_hash": config_hash,
            "schema": SCHEMA_VERSION,
            "version": __version__,
        }
        trace_path = self.out_dir / TRACE_FILE
        trace_path.write_text("")
        self.traces = MetricsCollector(log_file=str(trace_path), meta=self.meta)
        self.written: List[Path] = []

    def table(self, name: str, df: pd.DataFrame) -> Path:
        path = write_csv(df, self.out_dir / f"{name}.csv", self.meta)
        self.written.append(path)
        logger.info(f"Wrote {path}")
        return path

    def document(self, name: str, payload: Dict[str, Any]) -> Path:
        path = write_json(payload, self.out_dir / f"{name}.json", self.meta)
        self.written.append(path)
        logger.info(f"Wrote {path}")
        return path

    def trace(self, label: str, trace: Optional[IterationTrace], **context: Any):
        self.traces.log_trace(label, trace, context)

    def manifest(self) -> Path:
        files = sorted(p.name for p in self.written)
        return self.document("manifest", {"files": files})
