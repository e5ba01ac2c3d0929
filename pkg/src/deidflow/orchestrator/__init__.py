"""Queue-driven execution: submission, workers, pool coordination, stores and manifests."""

from .manifest import (
    MANIFEST_HEADER,
    REPORT_COLUMNS,
    AggregateReport,
    ManifestEntry,
    ManifestWriter,
    consolidate,
    read_manifest,
    write_manifest,
)
from .pool import PoolResult, ProcessRuntime, ThreadRuntime, WorkerRuntime, run_pool
from .queue import DeadLetter, Lease, QueueStats, WorkQueue
from .scaling import RateEstimator, ScalePolicy, autoscale_tick
from .store import LocalObjectStore, MemoryObjectStore, ObjectNotFound, ObjectStore
from .submit import (
    IngestReport,
    NothingApproved,
    Rejection,
    Submission,
    accession_inputs,
    ingest_directory,
    submit_request,
)
from .worker import FaultInjector, WorkerKilled, WorkItem, instance_id, process_item, run_worker

__all__ = [
    "MANIFEST_HEADER", "REPORT_COLUMNS", "AggregateReport", "ManifestEntry", "ManifestWriter",
    "consolidate", "read_manifest", "write_manifest",
    "PoolResult", "ProcessRuntime", "ThreadRuntime", "WorkerRuntime", "run_pool",
    "DeadLetter", "Lease", "QueueStats", "WorkQueue",
    "RateEstimator", "ScalePolicy", "autoscale_tick",
    "LocalObjectStore", "MemoryObjectStore", "ObjectNotFound", "ObjectStore",
    "IngestReport", "NothingApproved", "Rejection", "Submission", "accession_inputs",
    "ingest_directory", "submit_request",
    "FaultInjector", "WorkerKilled", "WorkItem", "instance_id", "process_item", "run_worker",
]
