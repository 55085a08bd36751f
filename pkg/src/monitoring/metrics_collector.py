import json
import logging
from pathlib import Path
from typing import Any, Dict, Optional

import pandas as pd

from src.solvers.nonlinear_solvers import IterationTrace

logger = logging.getLogger(__name__)


class MetricsCollector:
    """Appends solver iteration traces to a JSON-lines file.

    Entries carry no wall-clock data so reruns produce identical files.
    With ``meta`` (config hash, tool version, ...) the fields are stamped on
    every entry and on a leading header record.
    """

    HEADER = "header"

    def __init__(self, log_file: str = "runs/traces.jsonl", meta: Optional[Dict[str, Any]] = None):
        self.log_file = log_file
        self.meta = dict(meta or {})
        Path(log_file).parent.mkdir(parents=True, exist_ok=True)
        if self.meta:
            with open(self.log_file, 'a') as f:
                f.write(json.dumps({"record": self.HEADER, **self.meta}, sort_keys=True) + '\n')

        logger.debug(f"MetricsCollector writing to {log_file}")

    def log_trace(self, label: str, trace: Optional[IterationTrace], context: Optional[Dict[str, Any]] = None):
        if trace is None:
            return
        context = context or {}
        with open(self.log_file, 'a') as f:
            for i in range(trace.iterations):
                entry = {
                    "label": label,
                    "method": trace.method,
                    "iteration": i + 1,
                    "sup_norm": trace.sup_norms[i],
                    "increment": trace.increments[i],
                    "residual": trace.residuals[i],
                    "energy": trace.energies[i],
                    "termination": trace.termination,
                    **context,
                    **self.meta,
                }
                f.write(json.dumps(entry, sort_keys=True) + '\n')

    def load_traces(self, label: Optional[str] = None) -> pd.DataFrame:
        try:
            entries = []
            with open(self.log_file, 'r') as f:
                for line in f:
                    if line.strip():
                        entry = json.loads(line)
                        if entry.get("record") != self.HEADER:
                            entries.append(entry)
        except FileNotFoundError:
            logger.warning(f"Trace file not found: {self.log_file}")
            return pd.DataFrame()

        df = pd.DataFrame(entries)
        if label is not None and not df.empty:
            df = df[df["label"] == label].reset_index(drop=True)
        return df

    def header(self) -> Dict[str, Any]:
        try:
            with open(self.log_file, 'r') as f:
                first = f.readline()
        except FileNotFoundError:
            return {}
        entry = json.loads(first) if first.strip() else {}
        return entry if entry.get("record") == self.HEADER else {}

    def get_summary_stats(self, df: pd.DataFrame) -> Dict[str, Any]:
        if df.empty:
            return {"traces": 0, "total_iterations": 0, "converged": 0, "max_final_residual": 0.0}

        last = df.groupby("label").tail(1)
        return {
            "traces": int(df["label"].nunique()),
            "total_iterations": int(len(df)),
            "converged": int((last["termination"] == "converged").sum()),
            "max_final_residual": float(last["residual"].max()),
        }
