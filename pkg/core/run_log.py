"""Structured run logging for demirage experiments.

Logs stages, notices and errors of one experiment run to a JSONL file. Each
line is a self-contained JSON object.

Log files are written to the output directory as
.demirage-run-YYYYMMDD-HHMMSS.jsonl. They carry wall-clock timestamps, so
they are the one output of a run that is not reproducible byte for byte.
"""

import json
import os
import time
from datetime import datetime, timezone


class RunLog:
    """Append-only structured logger for run events."""

    def __init__(self, log_dir: str = ".", enabled: bool = True):
        self.log_dir = log_dir
        ts = datetime.now().strftime("%Y%m%d-%H%M%S")
        self.log_path = os.path.join(log_dir, f".demirage-run-{ts}.jsonl")
        self.enabled = enabled
        self._run_id = ts
        self._event_count = 0
        self._start_time = time.time()
        self._file = None

    def _ensure_open(self):
        """Lazily open the log file on first write."""
        if self._file is None:
            os.makedirs(self.log_dir, exist_ok=True)
            self._file = open(self.log_path, "a", encoding="utf-8")

    def _write(self, event_type: str, data: dict) -> None:
        self._event_count += 1
        if not self.enabled:
            return
        self._ensure_open()
        entry = {
            "seq": self._event_count,
            "ts": datetime.now(timezone.utc).isoformat(),
            "elapsed_s": round(time.time() - self._start_time, 2),
            "event": event_type,
            **data,
        }
        self._file.write(json.dumps(entry, separators=(",", ":"), default=str) + "\n")
        self._file.flush()

    def run_start(self, experiment: str, config_hash: str, seed: int, threads: int) -> None:
        self._write("run_start", {
            "run_id": self._run_id,
            "experiment": experiment,
            "config_hash": config_hash,
            "seed": seed,
            "threads": threads,
        })

    def stage(self, name: str, duration_ms: int, **details) -> None:
        """Log a completed pipeline stage (assembly, eigensolve, fit, ...)."""
        self._write("stage", {"name": name, "duration_ms": duration_ms, "details": details})

    def notice(self, category: str, message: str) -> None:
        """Log a recoverable numerical condition raised as a warning."""
        self._write("notice", {"category": category, "message": message[:500]})

    def error(self, source: str, message: str) -> None:
        self._write("error", {"source": source, "message": message[:500]})

    def run_end(self, ok: bool, outputs: list[str] = None) -> None:
        self._write("run_end", {
            "ok": ok,
            "duration_s": round(time.time() - self._start_time, 1),
            "outputs": outputs or [],
        })
        self.close()

    def record_warnings(self, caught) -> None:
        """Log every warning captured by ``warnings.catch_warnings(record=True)``."""
        for w in caught:
            self.notice(w.category.__name__, str(w.message))

    def close(self) -> None:
        if self._file is not None:
            self._file.flush()
            self._file.close()
            self._file = None

    @property
    def event_count(self) -> int:
        return self._event_count

    @property
    def run_id(self) -> str:
        return self._run_id
