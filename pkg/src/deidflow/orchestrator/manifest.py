"""Per-instance outcome records and the Table-style aggregate report."""

from __future__ import annotations

import json
import queue as queue_mod
import threading
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

MANIFEST_HEADER = {"schema": "deidflow-manifest", "version": 1}
REPORT_COLUMNS = ("filtered", "anonymized", "scrubbed", "bytes", "duration", "throughput")

# Fields that legitimately differ between identical reruns.
VOLATILE_FIELDS = ("worker_id", "attempt", "started", "finished", "message_id")


@dataclass
class ManifestEntry:
    study_id: str
    accession: str
    instance_id: str
    status: str
    reason: str = ""
    error_kind: str | None = None
    rects: list = field(default_factory=list)
    transforms: dict = field(default_factory=dict)
    bytes_in: int = 0
    bytes_out: int = 0
    output_key: str | None = None
    output_syntax: str | None = None
    real_accession: str | None = None
    input_key: str | None = None
    request_id: str = ""
    worker_id: str = ""
    attempt: int = 0
    message_id: int = 0
    started: float = 0.0
    finished: float = 0.0
    synthetic: bool = False  # written by the coordinator for a dead-lettered message

    @property
    def key(self) -> tuple:
        return (self.study_id, self.accession, self.instance_id)

    def as_dict(self) -> dict:
        return asdict(self)

    def stable(self) -> dict:
        d = self.as_dict()
        for k in VOLATILE_FIELDS:
            d.pop(k)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ManifestEntry":
        names = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in names})


def write_manifest(path, entries) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        fh.write(json.dumps(MANIFEST_HEADER) + "\n")
        for e in entries:
            fh.write(json.dumps(e.as_dict(), sort_keys=True) + "\n")


def read_manifest(path) -> list[ManifestEntry]:
    with open(path) as fh:
        header = json.loads(fh.readline())
        if header.get("schema") != MANIFEST_HEADER["schema"]:
            raise ValueError(f"{path}: not a manifest")
        return [ManifestEntry.from_dict(json.loads(ln)) for ln in fh if ln.strip()]


def consolidate(entries) -> list[ManifestEntry]:
    """One entry per instance. Redeliveries collapse to the latest real outcome;
    coordinator-written dead-letter entries only fill instances nobody reported."""
    best: dict[tuple, ManifestEntry] = {}
    for e in entries:
        cur = best.get(e.key)
        if cur is None:
            best[e.key] = e
        elif cur.synthetic and not e.synthetic:
            best[e.key] = e
        elif cur.synthetic == e.synthetic and e.finished >= cur.finished:
            best[e.key] = e
    return sorted(best.values(), key=lambda e: e.key)


class ManifestWriter:
    """Single writer fed through a channel; workers never touch the file directly.

    ``channel`` may be a ``queue.Queue`` or a ``multiprocessing.Queue``.
    Items on the channel are lists of entry dicts; ``None`` stops the writer.
    """

    def __init__(self, path=None, channel=None, on_entries=None):
        self.path = Path(path) if path is not None else None
        self.channel = channel if channel is not None else queue_mod.Queue()
        self.on_entries = on_entries
        self.entries: list[ManifestEntry] = []
        self._fh = None
        if self.path is not None:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            self._fh = open(self.path, "w")
            self._fh.write(json.dumps(MANIFEST_HEADER) + "\n")
            self._fh.flush()
        self._thread = threading.Thread(target=self._run, name="manifest-writer", daemon=True)
        self._thread.start()

    def submit(self, entries) -> None:
        self.channel.put([e.as_dict() if isinstance(e, ManifestEntry) else e for e in entries])

    def _run(self):
        while True:
            batch = self.channel.get()
            if batch is None:
                break
            parsed = [ManifestEntry.from_dict(d) for d in batch]
            self.entries.extend(parsed)
            if self._fh is not None:
                for e in parsed:
                    self._fh.write(json.dumps(e.as_dict(), sort_keys=True) + "\n")
                self._fh.flush()
            if self.on_entries is not None:
                self.on_entries(parsed)

    def close(self) -> list[ManifestEntry]:
        self.channel.put(None)
        self._thread.join()
        if self._fh is not None:
            self._fh.close()
        return self.entries


@dataclass
class AggregateReport:
    """Counts, volume and speed for one run, shaped like a benchmark table row."""

    filtered: int = 0
    anonymized: int = 0
    scrubbed: int = 0
    error: int = 0
    instances: int = 0
    bytes: int = 0
    bytes_out: int = 0
    duration: float = 0.0

    @property
    def throughput(self) -> float:
        """Input bytes per second; 0 for an empty or instantaneous run."""
        return self.bytes / self.duration if self.duration > 0 else 0.0

    @classmethod
    def from_entries(cls, entries, duration: float) -> "AggregateReport":
        r = cls(duration=duration)
        for e in entries:
            setattr(r, e.status, getattr(r, e.status) + 1)
            r.instances += 1
            r.bytes += e.bytes_in
            r.bytes_out += e.bytes_out
        return r

    def table_row(self) -> dict:
        return {"filtered": self.filtered, "anonymized": self.anonymized, "scrubbed": self.scrubbed,
                "bytes": self.bytes, "duration": self.duration, "throughput": self.throughput}

    def as_dict(self) -> dict:
        return {**asdict(self), "throughput": self.throughput}

    def summary(self) -> str:
        return (f"instances={self.instances} filtered={self.filtered} anonymized={self.anonymized} "
                f"scrubbed={self.scrubbed} error={self.error} bytes={format_bytes(self.bytes)} "
                f"duration={self.duration:.2f}s throughput={format_bytes(self.throughput)}/s")


def format_bytes(n: float) -> str:
    for unit in ("B", "KB", "MB", "GB", "TB"):
        if abs(n) < 1000 or unit == "TB":
            return f"{n:.0f} {unit}" if unit == "B" else f"{n:.2f} {unit}"
        n /= 1000
    return f"{n:.2f} TB"
