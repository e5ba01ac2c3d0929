"""Shared staging for queue-driven runs in tests."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

from deidflow.corpus.fixtures import write_default_scripts, write_pet_ct_fixtures
from deidflow.orchestrator import (
    LocalObjectStore,
    MemoryObjectStore,
    ScalePolicy,
    ThreadRuntime,
    WorkQueue,
    ingest_directory,
    run_pool,
    submit_request,
)
from deidflow.pseudonym import MappingStore, Mode, StudyRegistration
from deidflow.rules import default_texts


@dataclass
class Staged:
    queue: WorkQueue
    inputs: object
    outputs: object
    mappings: MappingStore
    accessions: list
    submission: object


def stage(corpus_dir, work: Path | None = None, study="S", mode=Mode.IRREVERSIBLE, seed=11,
          visibility_timeout=60.0, max_attempts=3, inputs=None, texts=None) -> Staged:
    """Ingest ``corpus_dir``, register every accession and enqueue one request."""
    if work is None:
        queue = WorkQueue(visibility_timeout=visibility_timeout, max_attempts=max_attempts)
        inputs = inputs or MemoryObjectStore()
        outputs = MemoryObjectStore()
    else:
        queue = WorkQueue(Path(work) / "queue.db", visibility_timeout=visibility_timeout,
                          max_attempts=max_attempts)
        inputs = inputs or LocalObjectStore(Path(work) / "input")
        outputs = LocalObjectStore(Path(work) / "output")
    ingest = ingest_directory(corpus_dir, inputs)
    mappings = MappingStore()
    accessions = sorted(ingest.accessions)
    mappings.register_study(StudyRegistration(study, mode, set(accessions), seed=seed))
    sub = submit_request(mappings, queue, inputs, study, accessions, texts or default_texts())
    return Staged(queue, inputs, outputs, mappings, accessions, sub)


def drain(staged: Staged, workers=2, runtime=None, faults=None, cadence=0.05, **kw):
    return run_pool(ScalePolicy(3600.0, min_workers=workers, max_workers=workers), staged.queue,
                    staged.inputs, staged.outputs, runtime=runtime or ThreadRuntime(), cadence=cadence,
                    faults=faults, **kw)


SUITE_SCRIPT_NAMES = {"anon": "stanford-anonymizer.script", "scrub": "stanford-scrubber.script",
                      "filter": "stanford-filter.script"}


def suite_tree(root, feature: Path, count=2, seed=0) -> Path:
    """A directory holding the suite file, its three scripts and generated PET/CT fixtures."""
    root = Path(root)
    write_default_scripts(root, SUITE_SCRIPT_NAMES)
    write_pet_ct_fixtures(root, count=count, seed=seed)
    target = root / feature.name
    target.write_text(feature.read_text())
    return target
