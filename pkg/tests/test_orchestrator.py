import pickle
import queue as queue_mod
from collections import Counter
from fractions import Fraction

import pytest
from hypothesis import given
from hypothesis import strategies as st
from pipeline import drain, stage

from deidflow.corpus.generate import CorpusSpec, InstanceClass, generate_corpus
from deidflow.dicom import tags as T
from deidflow.orchestrator import (
    AggregateReport,
    FaultInjector,
    LocalObjectStore,
    ManifestEntry,
    ManifestWriter,
    MemoryObjectStore,
    NothingApproved,
    ObjectNotFound,
    RateEstimator,
    ScalePolicy,
    ThreadRuntime,
    WorkQueue,
    autoscale_tick,
    consolidate,
    ingest_directory,
    read_manifest,
    run_pool,
    submit_request,
    write_manifest,
)
from deidflow.orchestrator.pool import PoolStalled, write_request_manifests
from deidflow.pseudonym import MappingStore, Mode, StudyRegistration, UnknownStudy
from deidflow.rules import default_texts


@pytest.fixture(scope="module")
def small_corpus(tmp_path_factory):
    """40 instances in 10 accessions: CT, a filtered SR class and one scrubbed PT class."""
    root = tmp_path_factory.mktemp("small")
    classes = [
        InstanceClass("ct", "CT", "GE", "LightSpeed VCT", 32, 32, count=24),
        InstanceClass("sr", "SR", "GE", "PACS", sop_class=T.BASIC_TEXT_SR_STORAGE, pixels=False,
                      expect="filtered", count=8),
        InstanceClass("pt", "PT", "GE", "Discovery", 512, 512, sop_class=T.PET_IMAGE_STORAGE, count=8,
                      markers=((256, 0, 256, 22),), expect="scrubbed",
                      expect_rects=((256, 0, 256, 22), (300, 22, 212, 80), (10, 478, 100, 10))),
    ]
    ledger = generate_corpus(CorpusSpec(classes, seed=3), root)
    return root, ledger


# -- stores --------------------------------------------------------------------

@pytest.mark.parametrize("make", [MemoryObjectStore, "local"])
def test_store_contract(make, tmp_path):
    store = LocalObjectStore(tmp_path / "s") if make == "local" else make()
    store.put("a/b.dcm", b"one")
    store.put("a/c.dcm", b"two")
    store.put("a/b.dcm", b"one")
    assert store.get("a/b.dcm") == b"one"
    assert store.list("a/") == ["a/b.dcm", "a/c.dcm"]
    assert store.total_bytes() == 6
    before = store.digest()
    store.put("a/c.dcm", b"TWO")
    assert store.digest() != before
    store.delete("a/c.dcm")
    assert not store.exists("a/c.dcm")
    with pytest.raises(ObjectNotFound):
        store.get("a/c.dcm")
    for bad in ("", "/abs", "a/../b", "a//b"):
        with pytest.raises(ValueError):
            store.put(bad, b"x")


def test_local_store_hides_temp_files(tmp_path):
    store = LocalObjectStore(tmp_path)
    store.put("k/v", b"1")
    (tmp_path / "k" / ".tmp-partial").write_bytes(b"half")
    assert store.list() == ["k/v"]


def test_digest_agrees_across_backends(tmp_path):
    a, b = MemoryObjectStore(), LocalObjectStore(tmp_path)
    for s in (a, b):
        s.put("x/1", b"abc")
        s.put("y", b"")
    assert a.digest() == b.digest()


# -- queue ---------------------------------------------------------------------

class FakeClock:
    def __init__(self):
        self.now = 1000.0

    def __call__(self):
        return self.now


def test_lease_expiry_redelivers():
    clock = FakeClock()
    q = WorkQueue(visibility_timeout=10, clock=clock)
    q.put({"n": 1})
    first = q.lease("w1")
    assert first.attempt == 1 and q.lease("w2") is None
    clock.now += 11
    second = q.lease("w2")
    assert second.message_id == first.message_id and second.attempt == 2
    assert not q.ack(first), "stale lease must not ack"
    assert q.ack(second)
    assert q.stats().depth == 0 and q.stats().done == 1


def test_dead_letter_after_max_attempts():
    q = WorkQueue(max_attempts=3)
    q.put({"n": 1})
    for attempt in (1, 2, 3):
        lease = q.lease()
        assert lease.attempt == attempt
        q.nack(lease, "boom")
    assert q.lease() is None
    stats = q.settle()
    assert stats.dead == 1 and stats.depth == 0
    (dead,) = q.drain_dead()
    assert dead.attempts == 3 and "boom" in dead.last_error


def test_queue_pickles_only_when_file_backed(tmp_path):
    with pytest.raises(TypeError):
        pickle.dumps(WorkQueue())
    q = WorkQueue(tmp_path / "q.db", visibility_timeout=5)
    q.put({"n": 1})
    clone = pickle.loads(pickle.dumps(q))
    assert clone.visibility_timeout == 5
    assert clone.lease().body == {"n": 1}
    assert q.stats().leased == 1


# -- scaling -------------------------------------------------------------------

def smallest_sufficient(depth, rate, window, lo, hi):
    """Oracle: the least n with n*rate*window >= depth, then clamped."""
    if depth == 0:
        return 0
    cap = Fraction(rate) * Fraction(window)
    n = 0
    while n * cap < depth and n <= hi:
        n += 1
    return min(max(n, lo), hi)


def test_scaling_examples():
    policy = ScalePolicy(100, per_worker_rate=10, max_workers=8)
    assert autoscale_tick(policy, 0, 5) == 0
    assert autoscale_tick(policy, 1000) == 1
    assert autoscale_tick(policy, 1001) == 2
    assert autoscale_tick(policy, 10 ** 9) == 8
    assert autoscale_tick(ScalePolicy(100, per_worker_rate=10, min_workers=3), 1) == 3
    assert autoscale_tick(ScalePolicy(100, per_worker_rate=10, min_workers=3), 0) == 0
    with pytest.raises(ValueError):
        ScalePolicy(0)
    with pytest.raises(ValueError):
        ScalePolicy(10, min_workers=5, max_workers=2)


@given(st.integers(0, 10 ** 6), st.integers(0, 10 ** 6), st.integers(1, 50), st.integers(1, 500),
       st.integers(0, 4), st.integers(4, 64))
def test_scaling_clamp_and_monotone(d1, d2, rate, window, lo, hi):
    policy = ScalePolicy(window, per_worker_rate=rate, min_workers=lo, max_workers=hi)
    a, b = sorted((d1, d2))
    assert autoscale_tick(policy, a) <= autoscale_tick(policy, b)
    assert autoscale_tick(policy, a) == smallest_sufficient(a, rate, window, lo, hi)


def test_rate_estimator_warmup():
    est = RateEstimator(warmup=3)
    assert est.rate() is None
    for s in (0.5, 0.5, 1.0, 100.0):
        est.observe(s)
    assert est.samples == 3 and est.ready()
    assert est.rate() == pytest.approx(3 / 2.0)


# -- manifest ------------------------------------------------------------------

def entry(iid, status="anonymized", finished=1.0, synthetic=False, **kw):
    return ManifestEntry("S", "ACN", iid, status, finished=finished, synthetic=synthetic, **kw)


def test_consolidate_prefers_real_then_latest():
    merged = consolidate([
        entry("a", "error", synthetic=True),
        entry("a", "anonymized", finished=2.0),
        entry("b", "anonymized", finished=5.0, worker_id="old"),
        entry("b", "anonymized", finished=6.0, worker_id="new"),
        entry("c", "error", synthetic=True),
    ])
    assert [(e.instance_id, e.status, e.worker_id) for e in merged] == [
        ("a", "anonymized", ""), ("b", "anonymized", "new"), ("c", "error", "")]


def test_manifest_round_trip_and_writer(tmp_path):
    entries = [entry("a", bytes_in=10), entry("b", "filtered", bytes_in=5)]
    write_manifest(tmp_path / "m.jsonl", entries)
    assert read_manifest(tmp_path / "m.jsonl") == entries
    seen = []
    w = ManifestWriter(tmp_path / "w.jsonl", queue_mod.Queue(), on_entries=seen.append)
    w.channel.put([e.as_dict() for e in entries])
    assert w.close() == entries
    assert read_manifest(tmp_path / "w.jsonl") == entries and len(seen) == 1


def test_report_from_entries():
    r = AggregateReport.from_entries([entry("a", bytes_in=10), entry("b", "filtered", bytes_in=30),
                                      entry("c", "error")], 2.0)
    assert (r.anonymized, r.filtered, r.error, r.instances, r.bytes) == (1, 1, 1, 3, 40)
    assert r.throughput == 20.0
    assert AggregateReport().throughput == 0.0
    assert list(r.table_row()) == ["filtered", "anonymized", "scrubbed", "bytes", "duration", "throughput"]


# -- submission ----------------------------------------------------------------

def test_submit_rejects_ineligible(small_corpus):
    root, _ = small_corpus
    inputs = MemoryObjectStore()
    ingest = ingest_directory(root, inputs)
    accs = sorted(ingest.accessions)[:3]
    mappings = MappingStore(exclusions={accs[2]})
    mappings.register_study(StudyRegistration("S", Mode.REVERSIBLE, set(accs), seed=1))
    q = WorkQueue()
    sub = submit_request(mappings, q, inputs, "S", accs, default_texts())
    assert sub.count == 2 and q.stats().pending == 2
    assert [(r.accession, r.reason) for r in sub.rejected] == [(accs[2], "excluded")]
    again = submit_request(mappings, WorkQueue(), inputs, "S", accs, default_texts())
    assert again.request_id == sub.request_id


def test_submit_errors(small_corpus):
    root, _ = small_corpus
    inputs = MemoryObjectStore()
    ingest_directory(root, inputs)
    mappings = MappingStore()
    with pytest.raises(UnknownStudy):
        submit_request(mappings, WorkQueue(), inputs, "nope", ["x"], default_texts())
    mappings.register_study(StudyRegistration("E", Mode.IRREVERSIBLE, set()))
    with pytest.raises(NothingApproved):
        submit_request(mappings, WorkQueue(), inputs, "E", ["x"], default_texts())
    mappings.register_study(StudyRegistration("F", Mode.IRREVERSIBLE, {"never-ingested"}))
    sub = submit_request(mappings, WorkQueue(), inputs, "F", ["never-ingested"], default_texts())
    assert sub.count == 0 and sub.rejected[0].reason == "no ingested instances"


# -- pool ----------------------------------------------------------------------

def test_one_worker_ten_items(small_corpus, tmp_path):
    root, ledger = small_corpus
    s = stage(root)
    assert s.submission.count == 10
    res = drain(s, workers=1, manifest_dir=tmp_path / "manifests")
    assert s.queue.stats().depth == 0 and s.queue.stats().done == 10
    assert res.ok and res.peak_workers == 1
    assert len({e.accession for e in res.entries}) == 10
    assert len({e.instance_id for e in res.entries}) == len(res.entries) == len(ledger)
    (path,) = res.manifests.values()
    assert read_manifest(path) == res.entries
    assert path.with_name(path.name.replace(".jsonl", ".summary.txt")).read_text().startswith("instances=40")


def test_outcomes_match_ledger(small_corpus):
    root, ledger = small_corpus
    s = stage(root, mode=Mode.REVERSIBLE)
    res = drain(s)
    assert Counter(e.status for e in res.entries) == Counter(le.expect for le in ledger)


def test_report_equals_recount(small_corpus):
    root, ledger = small_corpus
    res = drain(stage(root), workers=3)
    recount = {"filtered": 0, "anonymized": 0, "scrubbed": 0, "error": 0}
    for e in res.entries:
        recount[e.status] += 1
    r = res.report
    assert recount == {"filtered": r.filtered, "anonymized": r.anonymized, "scrubbed": r.scrubbed,
                       "error": r.error}
    assert sum(recount.values()) == len(ledger) == r.instances


def test_empty_queue_terminates_immediately():
    res = run_pool(ScalePolicy(60), WorkQueue(), MemoryObjectStore(), MemoryObjectStore())
    assert res.entries == [] and res.spawned == 0 and res.report.instances == 0


def test_zero_max_workers_with_work_is_refused(small_corpus):
    root, _ = small_corpus
    s = stage(root)
    with pytest.raises(ValueError):
        run_pool(ScalePolicy(60, max_workers=0), s.queue, s.inputs, s.outputs, cadence=0.01)


class KillAfterWrite(FaultInjector):
    def __init__(self):
        super().__init__(1.0)

    def plan(self, lease):
        return "after_write" if lease.attempt == 1 else None


def test_kill_after_write_converges(small_corpus):
    root, _ = small_corpus
    clean = stage(root)
    base = drain(clean)
    faulty = stage(root, visibility_timeout=0.2)
    res = drain(faulty, faults=KillAfterWrite())
    assert faulty.outputs.digest() == clean.outputs.digest()
    assert [e.stable() for e in res.entries] == [e.stable() for e in base.entries]
    assert all(e.attempt == 2 for e in res.entries)
    assert res.spawned > 2


def test_poison_item_dead_letters(small_corpus):
    root, _ = small_corpus
    s = stage(root, mode=Mode.REVERSIBLE, visibility_timeout=5)
    poisoned = s.accessions[0]
    victim = next(k for k in s.inputs.list(poisoned + "/"))
    s.inputs.delete(victim)
    res = drain(s)
    assert len(res.dead_letters) == 1 and res.dead_letters[0].attempts == 3
    assert not res.ok
    dead = [e for e in res.entries if e.error_kind == "DeadLetter"]
    assert dead and {e.real_accession for e in dead} == {poisoned}
    assert all(e.status == "error" and e.synthetic for e in dead)
    others = [e for e in res.entries if e.real_accession != poisoned]
    assert all(e.error_kind != "DeadLetter" for e in others)


def test_irreversible_outputs_carry_no_real_ids(small_corpus, tmp_path):
    root, ledger = small_corpus
    s = stage(root, mode=Mode.IRREVERSIBLE)
    res = drain(s, manifest_dir=tmp_path)
    real = {le.accession for le in ledger} | {le.mrn for le in ledger}
    keys = s.outputs.list()
    assert keys
    for k in keys:
        assert not any(r in k for r in real)
    for path in tmp_path.iterdir():
        text = path.read_text()
        assert not any(r in text for r in real)
    assert all(e.real_accession is None and e.input_key is None for e in res.entries)


def test_identical_rerun_same_manifest_and_outputs(small_corpus):
    root, _ = small_corpus
    a, b = stage(root), stage(root)
    ra, rb = drain(a, workers=1), drain(b, workers=3)
    assert a.outputs.digest() == b.outputs.digest()
    assert [e.stable() for e in ra.entries] == [e.stable() for e in rb.entries]


def test_resubmission_is_idempotent(small_corpus):
    root, _ = small_corpus
    s = stage(root)
    drain(s)
    first = s.outputs.digest()
    sub = submit_request(s.mappings, s.queue, s.inputs, "S", s.accessions, default_texts())
    assert sub.request_id == s.submission.request_id
    drain(s)
    assert s.outputs.digest() == first


def test_pool_stalls_when_workers_always_die(small_corpus):
    root, _ = small_corpus

    class AlwaysKill(FaultInjector):
        def plan(self, lease):
            return "before_fetch"

    s = stage(root, visibility_timeout=0.01, max_attempts=1000)
    with pytest.raises(PoolStalled):
        drain(s, workers=1, faults=AlwaysKill(1.0), cadence=0.01, stall_limit=5)


def test_request_manifests_split_by_request(tmp_path):
    paths = write_request_manifests(tmp_path, [entry("a", request_id="r1"), entry("b", request_id="r2")], 1.0)
    assert sorted(paths) == ["r1", "r2"]
    assert [e.instance_id for e in read_manifest(paths["r2"])] == ["b"]


def test_thread_runtime_is_default(small_corpus):
    root, _ = small_corpus
    s = stage(root)
    res = run_pool(ScalePolicy(3600, min_workers=1, max_workers=1), s.queue, s.inputs, s.outputs,
                   runtime=ThreadRuntime(), cadence=0.05)
    assert res.report.instances == 40
