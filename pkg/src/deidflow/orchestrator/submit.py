"""Bulk ingest of identified files and request submission."""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from urllib.parse import quote

from ..dicom import MalformedFile, read_file_meta, scan_header
from ..dicom.tags import Tag
from ..pseudonym import MappingStore, Mode, PseudonymError
from ..rules import ScriptTexts
from .queue import WorkQueue
from .store import ObjectStore
from .worker import WorkItem, publish_scripts

log = logging.getLogger(__name__)

INDEX_PREFIX = "_index/"
_ACCESSION = Tag(0x0008, 0x0050)
_PATIENT_ID = Tag(0x0010, 0x0020)
_SOP_INSTANCE = Tag(0x0008, 0x0018)
_MEDIA_SOP_INSTANCE = Tag(0x0002, 0x0003)


class NothingApproved(PseudonymError):
    """The study has no approved accessions, so nothing may be released."""


def accession_prefix(accession: str) -> str:
    return quote(accession, safe="") + "/"


def index_key(accession: str) -> str:
    return INDEX_PREFIX + quote(accession, safe="") + ".json"


@dataclass
class IngestReport:
    accessions: dict[str, list[str]] = field(default_factory=dict)
    patients: dict[str, str] = field(default_factory=dict)
    unroutable: list[tuple[str, str]] = field(default_factory=list)  # (path, reason)

    @property
    def instances(self) -> int:
        return sum(len(v) for v in self.accessions.values())


def _identify(data: bytes) -> tuple[str, str, str]:
    header = scan_header(data)
    acc = header[_ACCESSION].text if _ACCESSION in header else ""
    mrn = header[_PATIENT_ID].text if _PATIENT_ID in header else ""
    uid = header[_SOP_INSTANCE].text if _SOP_INSTANCE in header else ""
    if not uid:
        meta = read_file_meta(data)
        uid = meta[_MEDIA_SOP_INSTANCE].text if _MEDIA_SOP_INSTANCE in meta else ""
    return acc, mrn, uid or hashlib.sha256(data).hexdigest()


def ingest_directory(src, store: ObjectStore) -> IngestReport:
    """Copy every ``*.dcm`` under ``src`` to ``<accession>/<sop uid>.dcm`` and index by accession.

    Files are routed from whatever header attributes can be read, so a file
    damaged after its identifying attributes is still ingested (and later
    reported as a per-instance error by the engine).
    """
    report = IngestReport()
    src = Path(src)
    paths = sorted(p for p in src.rglob("*") if p.is_file() and p.suffix.lower() in (".dcm", ""))
    for path in paths:
        try:
            data = path.read_bytes()
            acc, mrn, uid = _identify(data)
        except (OSError, MalformedFile) as exc:
            report.unroutable.append((str(path), str(exc)))
            continue
        if not acc:
            report.unroutable.append((str(path), "no AccessionNumber"))
            continue
        key = accession_prefix(acc) + quote(uid, safe=".") + ".dcm"
        store.put(key, data)
        report.accessions.setdefault(acc, []).append(key)
        if mrn and acc not in report.patients:
            report.patients[acc] = mrn
    for acc, keys in report.accessions.items():
        merged = set(keys)
        patient = report.patients.get(acc, "")
        if store.exists(index_key(acc)):
            old = json.loads(store.get(index_key(acc)))
            merged |= set(old["keys"])
            patient = patient or old.get("mrn", "")
        store.put(index_key(acc), json.dumps({"accession": acc, "mrn": patient,
                                              "keys": sorted(merged)}).encode())
    return report


def accession_inputs(store: ObjectStore, accession: str) -> tuple[list[str], str]:
    """Input keys and real MRN for an accession, from the ingest index."""
    if not store.exists(index_key(accession)):
        return [], ""
    idx = json.loads(store.get(index_key(accession)))
    return idx["keys"], idx.get("mrn", "")


@dataclass
class Rejection:
    accession: str
    reason: str


@dataclass
class Submission:
    request_id: str
    enqueued: list[str] = field(default_factory=list)
    rejected: list[Rejection] = field(default_factory=list)
    message_ids: list[int] = field(default_factory=list)

    @property
    def count(self) -> int:
        return len(self.enqueued)


def request_id_for(study_id: str, accessions, script_refs: dict[str, str]) -> str:
    h = hashlib.sha256(study_id.encode())
    for acc in sorted(accessions):
        h.update(b"\0" + acc.encode())
    for kind in sorted(script_refs):
        h.update(f"\0{kind}={script_refs[kind]}".encode())
    return h.hexdigest()[:16]


def submit_request(mappings: MappingStore, queue: WorkQueue, input_store: ObjectStore, study_id: str,
                   accessions, texts: ScriptTexts, extra_params: dict | None = None) -> Submission:
    """Validate each accession, create pseudonyms and enqueue one work item per eligible accession.

    Ineligible accessions are returned as rejections and never enqueued.
    Resubmitting yields the same request id and the same work items.
    """
    reg = mappings.study(study_id)
    if not reg.approved_accessions:
        raise NothingApproved(study_id)
    refs = publish_scripts(input_store, texts)
    salt = mappings.salt(study_id)
    rejected, items = [], []
    for acc in dict.fromkeys(accessions):
        verdict = mappings.validate_accession(study_id, acc)
        if not verdict:
            rejected.append(Rejection(acc, verdict.reason))
            continue
        keys, mrn = accession_inputs(input_store, acc)
        if not keys:
            rejected.append(Rejection(acc, "no ingested instances"))
            continue
        try:
            m = mappings.get_or_create_mapping(study_id, acc, mrn or f"unknown:{acc}")
        except PseudonymError as exc:
            rejected.append(Rejection(acc, str(exc)))
            continue
        items.append(WorkItem(
            request_id="", study_id=study_id, real_accession=acc, anon_accession=m.anon_accession,
            anon_mrn=m.anon_mrn, jitter=m.jitter_days, study_salt=salt, scripts=refs,
            input_keys=sorted(keys), irreversible=reg.mode is Mode.IRREVERSIBLE,
            extra_params=dict(extra_params or {}),
        ))
    rid = request_id_for(study_id, [i.real_accession for i in items], refs)
    for i in items:
        i.request_id = rid
    sub = Submission(rid, [i.real_accession for i in items], rejected)
    sub.message_ids = queue.put_many(i.to_body() for i in items)
    if rejected:
        log.info("request %s: %d accession(s) rejected", rid, len(rejected))
    return sub
