"""
Append-only JSONL result stream.

One ResultRecord per line, written as soon as the episode finishes. Writes go
through a lock, so concurrent episode workers share one writer. Readers skip
lines that do not parse into a ResultRecord and count them as warnings.
"""

from __future__ import annotations

import json
import logging
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, List

from transmatch_lab.models.results import ResultRecord

logger = logging.getLogger(__name__)

RECORDS_SUFFIX = ".jsonl"


@dataclass
class RecordReadResult:
    """Records parsed from one or more streams plus the number of skipped lines."""
    records: List[ResultRecord] = field(default_factory=list)
    warnings: int = 0
    skipped: List[str] = field(default_factory=list)


class ResultStore:
    """
    Append-only writer/reader for one records file.

    Args:
        path: The .jsonl file (parent directories are created)

    Example:
        >>> store = ResultStore(run_dir / "benchmark.jsonl")
        >>> store.append(record)
        >>> store.read().records
        [ResultRecord(...)]
    """

    def __init__(self, path: Path):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._lock = threading.Lock()

    def append(self, record: ResultRecord) -> None:
        line = json.dumps(record.to_dict(), sort_keys=True)
        with self._lock:
            with self.path.open("a", encoding="utf-8") as f:
                f.write(line + "\n")
                f.flush()

    def extend(self, records: Iterable[ResultRecord]) -> None:
        for record in records:
            self.append(record)

    def reset(self) -> None:
        """Truncate the stream (a fresh run of the same experiment)."""
        with self._lock:
            self.path.write_text("", encoding="utf-8")

    def read(self) -> RecordReadResult:
        return read_records([self.path])


def read_records(paths: Iterable[Path]) -> RecordReadResult:
    """
    Parse every line of the given streams, skipping corrupted ones.

    Blank lines are ignored silently; any other unparseable line (invalid
    UTF-8 included) is logged at WARNING and counted.
    """
    result = RecordReadResult()
    for path in paths:
        path = Path(path)
        if not path.exists():
            continue
        # decoded per line: one line of invalid UTF-8 must not hide the rest
        for lineno, raw in enumerate(path.read_bytes().splitlines(), 1):
            if not raw.strip():
                continue
            try:
                line = raw.decode("utf-8")
                result.records.append(ResultRecord.from_dict(json.loads(line)))
            except (UnicodeDecodeError, json.JSONDecodeError, TypeError, ValueError) as e:
                where = f"{path.name}:{lineno}"
                logger.warning(f"Skipping corrupted record at {where}: {e}")
                result.warnings += 1
                result.skipped.append(where)
    return result


def record_files(results_dir: Path) -> List[Path]:
    """All record streams in a results directory, sorted by name."""
    return sorted(Path(results_dir).glob(f"*{RECORDS_SUFFIX}"))
