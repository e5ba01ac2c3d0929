"""Throughput benchmark: the same corpus through pools of different sizes."""

from __future__ import annotations

import json
import shutil
import tempfile
from dataclasses import asdict, dataclass, field
from pathlib import Path

from ..orchestrator import (
    REPORT_COLUMNS,
    LocalObjectStore,
    ProcessRuntime,
    ScalePolicy,
    ThreadRuntime,
    WorkQueue,
    ingest_directory,
    run_pool,
    submit_request,
)
from ..orchestrator.manifest import format_bytes
from ..pseudonym import MappingStore, Mode, StudyRegistration
from ..rules import ScriptTexts, default_texts

BENCH_STUDY = "BENCH"


@dataclass
class BenchRow:
    workers: int
    filtered: int
    anonymized: int
    scrubbed: int
    error: int
    instances: int
    bytes: int
    duration: float
    throughput: float
    efficiency: float | None = None
    output_digest: str = ""

    def table_row(self) -> dict:
        return {k: getattr(self, k) for k in REPORT_COLUMNS}


@dataclass
class BenchReport:
    rows: list[BenchRow] = field(default_factory=list)
    runtime: str = "process"

    def efficiency(self, workers: int) -> float | None:
        for r in self.rows:
            if r.workers == workers:
                return r.efficiency
        return None

    def as_dict(self) -> dict:
        return {"runtime": self.runtime, "columns": list(REPORT_COLUMNS),
                "rows": [asdict(r) for r in self.rows]}

    def table(self) -> str:
        head = ["workers", *REPORT_COLUMNS, "efficiency"]
        body = []
        for r in self.rows:
            body.append([str(r.workers), str(r.filtered), str(r.anonymized), str(r.scrubbed),
                         format_bytes(r.bytes), f"{r.duration:.2f} s", f"{format_bytes(r.throughput)}/s",
                         "-" if r.efficiency is None else f"{r.efficiency:.2f}"])
        widths = [max(len(h), *(len(row[i]) for row in body)) if body else len(h) for i, h in enumerate(head)]
        lines = ["  ".join(h.rjust(w) for h, w in zip(head, widths))]
        lines += ["  ".join(c.rjust(w) for c, w in zip(row, widths)) for row in body]
        return "\n".join(lines)

    def write(self, path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(self.as_dict(), indent=2) + "\n")
        path.with_suffix(".txt").write_text(self.table() + "\n")


def _efficiency(rows: list[BenchRow]) -> None:
    base = next((r for r in rows if r.workers == 1), None)
    for r in rows:
        if base is None or base.throughput <= 0:
            r.efficiency = None
        else:
            r.efficiency = r.throughput / (r.workers * base.throughput)


def run_benchmark(corpus_dir, worker_counts=(1, 2, 4), texts: ScriptTexts | None = None,
                  runtime: str = "process", work_dir=None, window: float = 3600.0,
                  cadence: float = 0.25, seed: int = 0) -> BenchReport:
    """Ingest once, then drain one fresh queue per worker count with a fixed-size pool.

    Duration is the pool's wall-clock from first tick to drain, including worker start-up.
    """
    texts = texts or default_texts()
    owned = work_dir is None
    work = Path(tempfile.mkdtemp(prefix="deidflow-bench-")) if owned else Path(work_dir)
    try:
        inputs = LocalObjectStore(work / "input")
        ingest = ingest_directory(corpus_dir, inputs)
        report = BenchReport(runtime=runtime)
        for n in worker_counts:
            run_dir = work / f"workers-{n}"
            shutil.rmtree(run_dir, ignore_errors=True)
            outputs = LocalObjectStore(run_dir / "output")
            queue = WorkQueue(run_dir / "queue.db")
            mappings = MappingStore()
            mappings.register_study(StudyRegistration(BENCH_STUDY, Mode.IRREVERSIBLE,
                                                      set(ingest.accessions), seed=seed))
            if ingest.accessions:
                submit_request(mappings, queue, inputs, BENCH_STUDY, sorted(ingest.accessions), texts)
            rt = ProcessRuntime() if runtime == "process" else ThreadRuntime()
            res = run_pool(ScalePolicy(window, min_workers=n, max_workers=n), queue, inputs, outputs,
                           runtime=rt, cadence=cadence)
            queue.close()
            rep = res.report
            report.rows.append(BenchRow(n, rep.filtered, rep.anonymized, rep.scrubbed, rep.error,
                                        rep.instances, rep.bytes, rep.duration, rep.throughput,
                                        output_digest=outputs.digest()))
        _efficiency(report.rows)
        return report
    finally:
        if owned:
            shutil.rmtree(work, ignore_errors=True)
