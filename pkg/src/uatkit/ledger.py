"""Append-only run ledger.

Every pipeline action — generation, regeneration, verdict, feedback — lands
as one JSON object per line in ``<run dir>/ledger.jsonl``.  Appends are
atomic at line granularity (single buffered write under a lock), events are
never rewritten, and the file doubles as the input for metrics reporting.
"""

from __future__ import annotations

import json
import threading
from pathlib import Path

from .errors import UatkitError

LEDGER_FILENAME = "ledger.jsonl"


class LedgerError(UatkitError):
    """Ledger file missing, unreadable, or internally inconsistent."""


class RunLedger:
    """Line-delimited JSON event log inside a run directory."""

    def __init__(self, run_dir: str | Path):
        self.run_dir = Path(run_dir)
        self.run_dir.mkdir(parents=True, exist_ok=True)
        self.path = self.run_dir / LEDGER_FILENAME
        self._lock = threading.Lock()

    def append(self, event: dict) -> None:
        if "event" not in event:
            raise LedgerError("ledger events need an 'event' field")
        line = json.dumps(event, ensure_ascii=False, sort_keys=True)
        with self._lock:
            with self.path.open("a", encoding="utf-8") as fh:
                fh.write(line + "\n")

    def events(self) -> list[dict]:
        if not self.path.is_file():
            return []
        return load_ledger(self.path)


def load_ledger(path: str | Path) -> list[dict]:
    """Read ledger events from a ``.jsonl`` file or a run directory."""
    p = Path(path)
    if p.is_dir():
        p = p / LEDGER_FILENAME
    if not p.is_file():
        raise LedgerError(f"no ledger at {p}")
    events: list[dict] = []
    with p.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                event = json.loads(line)
            except json.JSONDecodeError as exc:
                raise LedgerError(f"{p}:{lineno}: invalid JSON: {exc}") from exc
            if not isinstance(event, dict) or "event" not in event:
                raise LedgerError(f"{p}:{lineno}: not a ledger event")
            events.append(event)
    return events
