import json
import logging
import threading
from dataclasses import dataclass
from datetime import datetime, timedelta, timezone
from pathlib import Path


@dataclass(frozen=True)
class CacheRecord:
    backend_id: str
    key: str
    value: object
    captured_at: str


def record_to_line(record):
    payload = {
        "backend_id": record.backend_id,
        "captured_at": record.captured_at,
        "key": record.key,
        "value": record.value,
    }
    return json.dumps(payload, sort_keys=True, separators=(",", ":"), ensure_ascii=False) + "\n"


def read_records(path):
    records = []
    with Path(path).open("rb") as handle:
        for number, raw in enumerate(handle, start=1):
            if not raw.strip():
                continue
            try:
                data = json.loads(raw.decode("utf-8"))
                records.append(
                    CacheRecord(
                        backend_id=str(data.get("backend_id", "")),
                        key=str(data["key"]),
                        value=data.get("value"),
                        captured_at=str(data.get("captured_at", "")),
                    )
                )
            except (ValueError, KeyError, AttributeError) as exc:
                logging.warning("Skipping malformed record %s:%d (%s)", path, number, exc)
    return records


class ResultCache:
    def __init__(self, path=None):
        self.path = Path(path) if path else None
        self._records = {}
        self._lock = threading.Lock()
        if self.path is not None and self.path.exists():
            for record in read_records(self.path):
                self._records[(record.backend_id, record.key)] = record
            logging.info("Cache %s: %d records", self.path, len(self._records))

    def __len__(self):
        return len(self._records)

    def get(self, backend_id, key):
        return self._records.get((backend_id, key))

    def put(self, record):
        with self._lock:
            self._records[(record.backend_id, record.key)] = record
            if self.path is not None:
                self.path.parent.mkdir(parents=True, exist_ok=True)
                with self.path.open("a", encoding="utf-8", newline="\n") as handle:
                    handle.write(record_to_line(record))

    def records(self):
        return [self._records[key] for key in sorted(self._records)]

    def stale_records(self, max_age_days, now=None):
        now = now or datetime.now(timezone.utc)
        cutoff = now - timedelta(days=max_age_days)
        stale = []
        for record in self.records():
            try:
                captured = datetime.fromisoformat(record.captured_at)
            except ValueError:
                continue
            if captured.tzinfo is None:
                captured = captured.replace(tzinfo=timezone.utc)
            if captured < cutoff:
                stale.append(record)
        return stale
