"""Coordinator that sizes a worker pool from queue depth and drains the queue."""

from __future__ import annotations

import logging
import multiprocessing as mp
import queue as queue_mod
import sys
import threading
import time
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from pathlib import Path

from .manifest import AggregateReport, ManifestEntry, ManifestWriter, consolidate, write_manifest
from .queue import DeadLetter, WorkQueue
from .scaling import RateEstimator, ScalePolicy, autoscale_tick
from .store import ObjectStore
from .worker import FaultInjector, WorkerKilled, WorkItem, run_worker

log = logging.getLogger(__name__)

DEFAULT_CADENCE = 5.0
STALL_LIMIT = 20


class PoolStalled(RuntimeError):
    """Workers keep dying without the queue making progress."""


class WorkerHandle(ABC):
    worker_id: str
    retiring: bool = False

    @abstractmethod
    def alive(self) -> bool: ...

    @abstractmethod
    def stop(self) -> None:
        """Ask the worker to exit after its current message."""

    @abstractmethod
    def join(self, timeout: float | None = None) -> None: ...


class WorkerRuntime(ABC):
    """Where workers run. The pool logic only sees handles, so a runtime that
    provisions remote machines could stand in for these local ones."""

    @abstractmethod
    def channel(self):
        """A put/get channel the workers can send manifest batches through."""

    @abstractmethod
    def start(self, worker_id: str, queue: WorkQueue, input_store: ObjectStore,
              output_store: ObjectStore, channel, faults: FaultInjector | None) -> WorkerHandle: ...


class _ChannelSink:
    def __init__(self, channel):
        self.channel = channel

    def __call__(self, entries):
        self.channel.put([e.as_dict() for e in entries])


def _worker_main(worker_id, queue, input_store, output_store, channel, stop, faults):
    try:
        run_worker(queue, input_store, output_store, _ChannelSink(channel), worker_id, stop, faults)
    except WorkerKilled as exc:
        log.info("%s killed at %s", worker_id, exc)
        return False
    return True


class _ThreadHandle(WorkerHandle):
    def __init__(self, worker_id, thread, stop):
        self.worker_id = worker_id
        self.thread = thread
        self._stop = stop

    def alive(self):
        return self.thread.is_alive()

    def stop(self):
        self.retiring = True
        self._stop.set()

    def join(self, timeout=None):
        self.thread.join(timeout)


class ThreadRuntime(WorkerRuntime):
    def channel(self):
        return queue_mod.Queue()

    def start(self, worker_id, queue, input_store, output_store, channel, faults):
        stop = threading.Event()
        t = threading.Thread(target=_worker_main, name=worker_id, daemon=True,
                             args=(worker_id, queue, input_store, output_store, channel, stop, faults))
        t.start()
        return _ThreadHandle(worker_id, t, stop)


def _process_main(*args):
    if not _worker_main(*args):
        sys.exit(1)


class _ProcessHandle(WorkerHandle):
    def __init__(self, worker_id, proc, stop):
        self.worker_id = worker_id
        self.proc = proc
        self._stop = stop

    def alive(self):
        return self.proc.is_alive()

    def stop(self):
        self.retiring = True
        self._stop.set()

    def join(self, timeout=None):
        self.proc.join(timeout)


class ProcessRuntime(WorkerRuntime):
    """One OS process per worker. The queue must be file-backed and the stores picklable.

    Workers start from a fork server with the pipeline already imported, so
    a new worker costs a fork rather than a fresh interpreter.
    """

    def __init__(self, start_method: str | None = None):
        if start_method is None:
            start_method = "forkserver" if "forkserver" in mp.get_all_start_methods() else "spawn"
        self.ctx = mp.get_context(start_method)
        if start_method == "forkserver":
            self.ctx.set_forkserver_preload(["deidflow.orchestrator.pool", "numpy"])

    def channel(self):
        return self.ctx.Queue()

    def start(self, worker_id, queue, input_store, output_store, channel, faults):
        stop = self.ctx.Event()
        p = self.ctx.Process(target=_process_main, name=worker_id, daemon=True,
                             args=(worker_id, queue, input_store, output_store, channel, stop, faults))
        p.start()
        return _ProcessHandle(worker_id, p, stop)


@dataclass
class PoolResult:
    entries: list[ManifestEntry]
    report: AggregateReport
    dead_letters: list[DeadLetter] = field(default_factory=list)
    manifests: dict[str, Path] = field(default_factory=dict)
    peak_workers: int = 0
    spawned: int = 0
    scale_history: list[tuple[int, int]] = field(default_factory=list)  # (depth, desired) per tick

    @property
    def ok(self) -> bool:
        return not self.dead_letters and self.report.error == 0


def dead_letter_entries(dead: DeadLetter) -> list[ManifestEntry]:
    item = WorkItem.from_body(dead.body)
    reason = (dead.last_error or "").strip() or "max attempts exceeded"
    return [ManifestEntry(
        study_id=item.study_id, accession=item.manifest_accession(), instance_id=iid, status="error",
        reason=reason, error_kind="DeadLetter",
        real_accession=None if item.irreversible else item.real_accession,
        input_key=None if item.irreversible else key, request_id=item.request_id,
        attempt=dead.attempts, message_id=dead.message_id, synthetic=True,
    ) for iid, key in zip(item.instance_ids(), item.input_keys)]


def run_pool(policy: ScalePolicy, queue: WorkQueue, input_store: ObjectStore, output_store: ObjectStore,
             runtime: WorkerRuntime | None = None, manifest_dir=None, cadence: float = DEFAULT_CADENCE,
             faults: FaultInjector | None = None, poll_interval: float = 0.02,
             estimator: RateEstimator | None = None, stall_limit: int = STALL_LIMIT) -> PoolResult:
    """Run workers until every message is acked or dead-lettered.

    Every ``cadence`` seconds the desired size is recomputed from queue depth;
    workers are started to reach it and asked to stop when above it. Workers
    that die are replaced on the next tick, up to ``stall_limit`` deaths in a
    row with no message settled in between.
    """
    runtime = runtime or ThreadRuntime()
    estimator = estimator or RateEstimator()
    started = time.monotonic()

    def observe(batch):
        if batch:
            estimator.observe(batch[0].finished - batch[0].started)

    writer = ManifestWriter(channel=runtime.channel(), on_entries=observe)
    handles: list[WorkerHandle] = []
    result_history: list[tuple[int, int]] = []
    spawned = peak = deaths = 0
    settled = -1
    next_tick = started
    try:
        while True:
            stats = queue.settle()
            if stats.depth == 0:
                break
            if stats.done + stats.dead != settled:
                settled, deaths = stats.done + stats.dead, 0
            now = time.monotonic()
            if now >= next_tick:
                deaths += sum(1 for h in handles if not h.alive() and not h.retiring)
                if deaths > stall_limit:
                    raise PoolStalled(f"{deaths} worker deaths without progress")
                handles = [h for h in handles if h.alive()]
                rate = policy.per_worker_rate or estimator.rate()
                desired = autoscale_tick(policy, stats.depth, len(handles), rate)
                if desired == 0:
                    raise ValueError("scale policy allows no workers but the queue is not empty")
                result_history.append((stats.depth, desired))
                active = [h for h in handles if not h.retiring]
                while len(active) < desired:
                    h = runtime.start(f"worker-{spawned}", queue, input_store, output_store,
                                      writer.channel, faults)
                    spawned += 1
                    handles.append(h)
                    active.append(h)
                for h in active[desired:]:
                    h.stop()
                peak = max(peak, len(active[:desired]))
                next_tick = now + cadence
            time.sleep(poll_interval)
    finally:
        for h in handles:
            h.stop()
        for h in handles:
            h.join()
        raw = writer.close()
    duration = time.monotonic() - started

    dead = queue.drain_dead()
    synthetic = [e for d in dead for e in dead_letter_entries(d)]
    entries = consolidate(raw + synthetic)
    report = AggregateReport.from_entries(entries, duration)
    res = PoolResult(entries, report, dead, peak_workers=peak, spawned=spawned, scale_history=result_history)
    if manifest_dir is not None:
        res.manifests = write_request_manifests(manifest_dir, entries, duration)
    return res


def write_request_manifests(directory, entries, duration: float) -> dict[str, Path]:
    """One ``manifest-<request id>.jsonl`` plus a summary text per request."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    by_request: dict[str, list[ManifestEntry]] = {}
    for e in entries:
        by_request.setdefault(e.request_id, []).append(e)
    paths = {}
    for rid, group in sorted(by_request.items()):
        path = directory / f"manifest-{rid}.jsonl"
        write_manifest(path, group)
        report = AggregateReport.from_entries(group, duration)
        (directory / f"manifest-{rid}.summary.txt").write_text(report.summary() + "\n")
        paths[rid] = path
    return paths
