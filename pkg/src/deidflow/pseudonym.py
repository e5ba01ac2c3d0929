"""Per-study pseudonyms, date jitter and accession eligibility.

Anonymized identifiers are keyed digests of (study seed, study id, real id),
so a store rebuilt from the same registrations yields the same codes. The
store is an append-only JSON-lines log with an in-memory index; purging an
irreversible study compacts the log so the real identifiers (and the seed that
could be used to confirm a guessed link) are gone from disk.
"""

from __future__ import annotations

import enum
import hashlib
import hmac
import json
import logging
import os
import secrets
import tempfile
import threading
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

log = logging.getLogger(__name__)

STORE_HEADER = {"format": "deidflow-mapping-store", "version": 1}
EXCLUSION_HEADER = "# deidflow-exclusions v1"
JITTER_RANGE = 31
ID_DIGITS = 9


class PseudonymError(Exception):
    pass


class DuplicateStudy(PseudonymError):
    pass


class UnknownStudy(PseudonymError):
    pass


class IneligibleAccession(PseudonymError):
    pass


class IrreversibleStudy(PseudonymError):
    pass


class ReversibleStudy(PseudonymError):
    pass


class UnknownAnonId(PseudonymError):
    pass


class StudyPurged(PseudonymError):
    pass


class Mode(str, enum.Enum):
    REVERSIBLE = "reversible"
    IRREVERSIBLE = "irreversible"


@dataclass
class StudyRegistration:
    study_id: str
    mode: Mode
    approved_accessions: set[str] = field(default_factory=set)
    seed: int | None = field(default_factory=lambda: secrets.randbits(64))
    delivery_window: float = 3600.0
    purged: bool = False

    def __post_init__(self):
        self.mode = Mode(self.mode)
        self.approved_accessions = set(self.approved_accessions)

    def to_record(self) -> dict:
        return {
            "type": "study",
            "study_id": self.study_id,
            "mode": self.mode.value,
            "approved_accessions": sorted(self.approved_accessions),
            "seed": self.seed,
            "delivery_window": self.delivery_window,
            "purged": self.purged,
        }


@dataclass(frozen=True)
class Mapping:
    study_id: str
    real_accession: str | None
    anon_accession: str
    real_mrn: str | None
    anon_mrn: str
    jitter_days: int

    def to_record(self) -> dict:
        return {"type": "mapping", **asdict(self)}


@dataclass(frozen=True)
class Eligibility:
    eligible: bool
    reason: str = ""

    def __bool__(self) -> bool:
        return self.eligible


ELIGIBLE = Eligibility(True)


def _digest(seed: int, *parts: str) -> bytes:
    key = (int(seed) & 0xFFFFFFFFFFFFFFFF).to_bytes(8, "big")
    msg = b"\x1f".join(p.encode("utf-8") for p in parts)
    return hmac.new(key, msg, hashlib.sha256).digest()


def anon_code(prefix: str, seed: int, study_id: str, real_id: str, attempt: int = 0) -> str:
    d = _digest(seed, prefix, study_id, real_id, str(attempt))
    return f"{prefix}{int.from_bytes(d[:8], 'big') % 10 ** ID_DIGITS:0{ID_DIGITS}d}"


def jitter_days(seed: int, study_id: str, real_mrn: str) -> int:
    """Uniform over [-31, 31] without zero."""
    d = _digest(seed, "JIT", study_id, real_mrn)
    v = int.from_bytes(d[:8], "big") % (2 * JITTER_RANGE)
    return v - JITTER_RANGE if v < JITTER_RANGE else v - JITTER_RANGE + 1


def study_salt(seed: int, study_id: str) -> str:
    """Per-study secret for UID hashing; unguessable without the seed."""
    return _digest(seed, "UIDSALT", study_id).hex()[:32]


def read_exclusions(path) -> set[str]:
    lines = Path(path).read_text().splitlines()
    if not lines or lines[0].strip() != EXCLUSION_HEADER:
        raise ValueError(f"{path}: missing header {EXCLUSION_HEADER!r}")
    return {ln.strip() for ln in lines[1:] if ln.strip() and not ln.startswith("#")}


def write_exclusions(path, identifiers) -> None:
    Path(path).write_text("\n".join([EXCLUSION_HEADER, *sorted(identifiers)]) + "\n")


class MappingStore:
    """Durable study registrations and pseudonym mappings.

    ``path=None`` keeps everything in memory (tests, single-shot runs).
    Writes are serialized by a lock; every acknowledged write is fsynced.
    """

    def __init__(self, path=None, exclusions=()):
        self.path = Path(path) if path is not None else None
        self.exclusions = set(exclusions)
        self._lock = threading.RLock()
        self._studies: dict[str, StudyRegistration] = {}
        self._by_real: dict[tuple[str, str], Mapping] = {}
        self._by_anon: dict[tuple[str, str], Mapping] = {}
        self._patients: dict[tuple[str, str], tuple[str, int]] = {}
        self._anon_mrns: dict[tuple[str, str], str] = {}
        if self.path is not None:
            if self.path.exists():
                self._replay()
            else:
                self.path.parent.mkdir(parents=True, exist_ok=True)
                self._rewrite([])

    @classmethod
    def open(cls, path, exclusions_path=None) -> "MappingStore":
        excl = read_exclusions(exclusions_path) if exclusions_path else ()
        return cls(path, excl)

    # -- persistence -------------------------------------------------------

    def _replay(self):
        with open(self.path, encoding="utf-8") as fh:
            header = json.loads(fh.readline() or "{}")
            if header.get("format") != STORE_HEADER["format"]:
                raise PseudonymError(f"{self.path}: not a mapping store")
            if header.get("version") != STORE_HEADER["version"]:
                raise PseudonymError(f"{self.path}: unsupported store version {header.get('version')}")
            for lineno, line in enumerate(fh, 2):
                if not line.strip():
                    continue
                try:
                    rec = json.loads(line)
                except json.JSONDecodeError:
                    # Torn final write from a crash; everything before it was acknowledged.
                    log.warning("%s:%d: ignoring unreadable record", self.path, lineno)
                    continue
                self._apply(rec)

    def _apply(self, rec: dict):
        kind = rec.pop("type")
        if kind == "study":
            reg = StudyRegistration(**rec)
            self._studies[reg.study_id] = reg
        elif kind == "mapping":
            self._index(Mapping(**rec))
        elif kind == "approve":
            self._studies[rec["study_id"]].approved_accessions.update(rec["accessions"])
        else:
            raise PseudonymError(f"unknown record type {kind!r}")

    def _index(self, m: Mapping):
        if m.real_accession is not None:
            self._by_real[(m.study_id, m.real_accession)] = m
        self._by_anon[(m.study_id, m.anon_accession)] = m
        if m.real_mrn is not None:
            self._patients[(m.study_id, m.real_mrn)] = (m.anon_mrn, m.jitter_days)
        self._anon_mrns[(m.study_id, m.anon_mrn)] = m.real_mrn or ""

    def _append(self, rec: dict):
        if self.path is None:
            return
        with open(self.path, "a", encoding="utf-8") as fh:
            fh.write(json.dumps(rec, sort_keys=True) + "\n")
            fh.flush()
            os.fsync(fh.fileno())

    def _rewrite(self, records: list[dict]):
        fd, tmp = tempfile.mkstemp(dir=self.path.parent, prefix=self.path.name, suffix=".tmp")
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(json.dumps(STORE_HEADER) + "\n")
            for rec in records:
                fh.write(json.dumps(rec, sort_keys=True) + "\n")
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, self.path)

    def _snapshot(self) -> list[dict]:
        recs = [reg.to_record() for reg in self._studies.values()]
        recs.extend(m.to_record() for m in self._by_anon.values())
        return recs

    # -- operations --------------------------------------------------------

    def register_study(self, reg: StudyRegistration) -> StudyRegistration:
        with self._lock:
            if reg.study_id in self._studies:
                raise DuplicateStudy(reg.study_id)
            self._studies[reg.study_id] = reg
            self._append(reg.to_record())
            return reg

    def approve(self, study_id: str, accessions) -> None:
        with self._lock:
            reg = self.study(study_id)
            new = set(accessions) - reg.approved_accessions
            reg.approved_accessions |= new
            self._append({"type": "approve", "study_id": study_id, "accessions": sorted(new)})

    def study(self, study_id: str) -> StudyRegistration:
        try:
            return self._studies[study_id]
        except KeyError:
            raise UnknownStudy(study_id) from None

    def studies(self) -> list[StudyRegistration]:
        return list(self._studies.values())

    def validate_accession(self, study_id: str, accession: str) -> Eligibility:
        reg = self.study(study_id)
        if accession not in reg.approved_accessions:
            return Eligibility(False, "not approved")
        if accession in self.exclusions:
            return Eligibility(False, "excluded")
        return ELIGIBLE

    def get_or_create_mapping(self, study_id: str, real_accession: str, real_mrn: str) -> Mapping:
        with self._lock:
            reg = self.study(study_id)
            if reg.purged:
                raise StudyPurged(study_id)
            verdict = self.validate_accession(study_id, real_accession)
            if not verdict:
                raise IneligibleAccession(f"{real_accession}: {verdict.reason}")
            if real_mrn in self.exclusions:
                raise IneligibleAccession(f"{real_accession}: patient excluded")
            existing = self._by_real.get((study_id, real_accession))
            if existing is not None:
                return existing

            patient = self._patients.get((study_id, real_mrn))
            if patient is None:
                anon_mrn = self._unique("MRN", reg, real_mrn, self._anon_mrns)
                patient = (anon_mrn, jitter_days(reg.seed, study_id, real_mrn))
            anon_acc = self._unique("ACN", reg, real_accession, self._by_anon)
            m = Mapping(study_id, real_accession, anon_acc, real_mrn, patient[0], patient[1])
            self._append(m.to_record())
            self._index(m)
            return m

    def _unique(self, prefix, reg, real_id, taken) -> str:
        attempt = 0
        while True:
            code = anon_code(prefix, reg.seed, reg.study_id, real_id, attempt)
            if (reg.study_id, code) not in taken:
                return code
            attempt += 1

    def salt(self, study_id: str) -> str:
        reg = self.study(study_id)
        if reg.purged:
            raise StudyPurged(study_id)
        return study_salt(reg.seed, study_id)

    def mappings(self, study_id: str) -> list[Mapping]:
        self.study(study_id)
        return sorted((m for (s, _), m in self._by_anon.items() if s == study_id),
                      key=lambda m: m.anon_accession)

    def resolve(self, study_id: str, anon_accession: str) -> tuple[str, str]:
        reg = self.study(study_id)
        if reg.mode is not Mode.REVERSIBLE:
            raise IrreversibleStudy(study_id)
        m = self._by_anon.get((study_id, anon_accession))
        if m is None or m.real_accession is None:
            raise UnknownAnonId(anon_accession)
        return m.real_accession, m.real_mrn

    def purge_links(self, study_id: str) -> int:
        """Erase real identifiers of an irreversible study. Returns how many mappings changed."""
        with self._lock:
            reg = self.study(study_id)
            if reg.mode is Mode.REVERSIBLE:
                raise ReversibleStudy(study_id)
            count = 0
            for key, m in list(self._by_anon.items()):
                if key[0] != study_id or m.real_accession is None and m.real_mrn is None:
                    continue
                self._by_anon[key] = replace(m, real_accession=None, real_mrn=None)
                count += 1
            self._by_real = {k: v for k, v in self._by_real.items() if k[0] != study_id}
            self._patients = {k: v for k, v in self._patients.items() if k[0] != study_id}
            self._anon_mrns = {k: ("" if k[0] == study_id else v) for k, v in self._anon_mrns.items()}
            if not reg.purged or count:
                reg.purged = True
                reg.seed = None
                reg.approved_accessions = set()
                if self.path is not None:
                    self._rewrite(self._snapshot())
            return count
