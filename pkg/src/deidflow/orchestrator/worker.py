"""Work items and the worker loop that consumes them."""

from __future__ import annotations

import hashlib
import logging
import random
import time
from dataclasses import asdict, dataclass, field

from ..dicom import read_file_meta
from ..dicom.tags import Tag
from ..engine import deid_study
from ..rules import RuleSet, ScriptParams, ScriptTexts
from .manifest import ManifestEntry
from .queue import Lease, WorkQueue
from .store import ObjectStore

log = logging.getLogger(__name__)

SCRIPT_PREFIX = "_scripts/"
SCRIPT_KINDS = ("filter", "scrub", "anon")
KILL_STAGES = ("before_fetch", "mid_write", "after_write", "after_manifest")
_MEDIA_SOP_INSTANCE = Tag(0x0002, 0x0003)


def script_key(digest: str, kind: str) -> str:
    return f"{SCRIPT_PREFIX}{digest}.{kind}"


def publish_scripts(store: ObjectStore, texts: ScriptTexts) -> dict[str, str]:
    """Store script sources content-addressed; returns kind -> digest."""
    refs = {}
    for kind in SCRIPT_KINDS:
        data = getattr(texts, kind).encode("utf-8")
        digest = hashlib.sha256(data).hexdigest()
        key = script_key(digest, kind)
        if not store.exists(key):
            store.put(key, data)
        refs[kind] = digest
    return refs


def instance_id(salt: str, input_key: str) -> str:
    return hashlib.sha256(f"{salt}\0{input_key}".encode()).hexdigest()[:20]


@dataclass
class WorkItem:
    """Everything a worker needs for one accession, besides the two stores."""

    request_id: str
    study_id: str
    real_accession: str
    anon_accession: str
    anon_mrn: str
    jitter: int
    study_salt: str
    scripts: dict[str, str]
    input_keys: list[str]
    irreversible: bool = False
    extra_params: dict[str, str] = field(default_factory=dict)

    def params(self) -> ScriptParams:
        return ScriptParams(self.anon_accession, self.anon_mrn, self.jitter, self.study_salt,
                            dict(self.extra_params))

    def to_body(self) -> dict:
        return asdict(self)

    @classmethod
    def from_body(cls, body: dict) -> "WorkItem":
        return cls(**body)

    def instance_ids(self) -> list[str]:
        return [instance_id(self.study_salt, k) for k in self.input_keys]

    def manifest_accession(self) -> str:
        return self.anon_accession if self.irreversible else self.real_accession


class WorkerKilled(BaseException):
    """Simulated abrupt worker death. Not an Exception, so nothing downstream swallows it."""


class FaultInjector:
    """Kills a worker at a random stage on the first delivery of selected messages.

    The choice is a pure function of (seed, message id), so a trial is reproducible.
    """

    def __init__(self, probability: float, seed: int = 0, first_attempt_only: bool = True):
        self.probability = probability
        self.seed = seed
        self.first_attempt_only = first_attempt_only

    def plan(self, lease: Lease) -> str | None:
        if self.first_attempt_only and lease.attempt > 1:
            return None
        rng = random.Random(f"{self.seed}:{lease.message_id}:{0 if self.first_attempt_only else lease.attempt}")
        if rng.random() >= self.probability:
            return None
        return rng.choice(KILL_STAGES)


class _RuleCache:
    def __init__(self, store: ObjectStore):
        self.store = store
        self._cache: dict[tuple, RuleSet] = {}

    def get(self, refs: dict[str, str]) -> RuleSet:
        key = tuple(refs[k] for k in SCRIPT_KINDS)
        rules = self._cache.get(key)
        if rules is None:
            texts = {k: self.store.get(script_key(refs[k], k)).decode("utf-8") for k in SCRIPT_KINDS}
            rules = ScriptTexts(name=key[2][:12], **texts).compile()
            self._cache[key] = rules
        return rules


def output_key(item: WorkItem, data: bytes) -> str:
    uid = read_file_meta(data)[_MEDIA_SOP_INSTANCE].text
    return f"{item.study_id}/{item.anon_accession}/{uid}.dcm"


def process_item(item: WorkItem, lease: Lease, input_store: ObjectStore, output_store: ObjectStore,
                 rules: RuleSet, worker_id: str, submit, kill_at: str | None = None) -> list[ManifestEntry]:
    """Fetch, de-identify, publish outputs, hand manifest entries to ``submit``.

    Output keys depend only on anonymized identifiers, so a redelivery writes the
    same bytes under the same keys.
    """
    started = time.time()
    if kill_at == "before_fetch":
        raise WorkerKilled(kill_at)
    ids = item.instance_ids()
    inputs = [(iid, input_store.get(k)) for iid, k in zip(ids, item.input_keys)]
    result = deid_study(inputs, rules, item.params())

    keys: dict[str, str] = {}
    for n, (iid, data) in enumerate(result.outputs.items()):
        if kill_at == "mid_write" and n == len(result.outputs) // 2:
            raise WorkerKilled(kill_at)
        keys[iid] = output_key(item, data)
        output_store.put(keys[iid], data)
    if kill_at == "after_write" or (kill_at == "mid_write" and not result.outputs):
        raise WorkerKilled(kill_at)

    finished = time.time()
    entries = []
    for (iid, outcome), in_key in zip(result.outcomes, item.input_keys):
        d = outcome.as_dict()
        entries.append(ManifestEntry(
            study_id=item.study_id,
            accession=item.manifest_accession(),
            instance_id=iid,
            status=d["status"],
            reason=d["reason"],
            error_kind=d["error_kind"],
            rects=d["rects"],
            transforms=d["transforms"],
            bytes_in=d["bytes_in"],
            bytes_out=d["bytes_out"],
            output_key=keys.get(iid),
            output_syntax=d["output_syntax"],
            real_accession=None if item.irreversible else item.real_accession,
            input_key=None if item.irreversible else in_key,
            request_id=item.request_id,
            worker_id=worker_id,
            attempt=lease.attempt,
            message_id=lease.message_id,
            started=started,
            finished=finished,
        ))
    submit(entries)
    if kill_at == "after_manifest":
        raise WorkerKilled(kill_at)
    return entries


def run_worker(queue: WorkQueue, input_store: ObjectStore, output_store: ObjectStore, submit,
               worker_id: str = "worker-0", stop=None, faults: FaultInjector | None = None,
               poll_interval: float = 0.05) -> int:
    """Consume messages until the queue is drained or ``stop`` is set. Returns messages acked.

    ``submit`` receives each message's manifest entries. ``stop`` is any object
    with ``is_set()`` (threading or multiprocessing Event). A simulated kill
    propagates as :class:`WorkerKilled` without acking, leaving the lease to expire.
    """
    rules = _RuleCache(input_store)
    processed = 0
    while stop is None or not stop.is_set():
        lease = queue.lease(worker_id)
        if lease is None:
            if queue.stats().depth == 0:
                break
            time.sleep(poll_interval)
            continue
        kill_at = faults.plan(lease) if faults is not None else None
        try:
            item = WorkItem.from_body(lease.body)
            process_item(item, lease, input_store, output_store, rules.get(item.scripts),
                         worker_id, submit, kill_at)
        except Exception as exc:
            log.warning("%s: message %d attempt %d failed: %s", worker_id, lease.message_id,
                        lease.attempt, exc)
            queue.nack(lease, f"{type(exc).__name__}: {exc}")
            continue
        if queue.ack(lease):
            processed += 1
    return processed
