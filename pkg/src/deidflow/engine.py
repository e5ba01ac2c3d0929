"""The three-stage pipeline: filter, scrub pixels, anonymize metadata.

Nothing here raises on bad input; every failure becomes an ``error`` outcome
so a batch always yields exactly one outcome per instance.
"""

from __future__ import annotations

import enum
from concurrent.futures import Executor
from dataclasses import dataclass, field
from typing import Iterable, Union

from .dicom import (
    DataSet,
    DicomError,
    MalformedFile,
    Rect,
    RectOutOfBounds,
    UnsupportedEncoding,
    blank_region,
    decode_pixels,
    encode_pixels,
    parse_file,
    write_file,
)
from .dicom.tags import EXPLICIT_VR_LE
from .rules import RuleSet, ScriptParams, TransformRecord, apply_anon, evaluate_filter, lookup_scrub
from .rules.common import RuleError
from .rules.scrub import ScrubVerdict

WHITELIST_REASON = "no scrub whitelist rule"


class Status(str, enum.Enum):
    FILTERED = "filtered"
    ANONYMIZED = "anonymized"
    SCRUBBED = "scrubbed"
    ERROR = "error"


@dataclass
class Outcome:
    status: Status
    reason: str = ""
    rects: tuple[Rect, ...] = ()
    error_kind: str | None = None
    transforms: list[TransformRecord] = field(default_factory=list)
    bytes_in: int = 0
    bytes_out: int = 0
    output_syntax: str | None = None

    @property
    def has_output(self) -> bool:
        return self.status in (Status.ANONYMIZED, Status.SCRUBBED)

    def summary(self) -> dict:
        counts: dict[str, int] = {}
        for t in self.transforms:
            counts[t.action] = counts.get(t.action, 0) + 1
        return dict(sorted(counts.items()))

    def as_dict(self) -> dict:
        return {
            "status": self.status.value,
            "reason": self.reason,
            "error_kind": self.error_kind,
            "rects": [list(r) for r in self.rects],
            "transforms": self.summary(),
            "bytes_in": self.bytes_in,
            "bytes_out": self.bytes_out,
            "output_syntax": self.output_syntax,
        }


def _error(kind: str, detail: str, bytes_in: int = 0) -> Outcome:
    return Outcome(Status.ERROR, detail, error_kind=kind, bytes_in=bytes_in)


def _classify(exc: Exception) -> str:
    if isinstance(exc, UnsupportedEncoding):
        return "UnsupportedEncoding"
    if isinstance(exc, (RuleError, RectOutOfBounds)):
        return "RuleError"
    if isinstance(exc, (MalformedFile, DicomError)):
        return "ParseError"
    return "InternalError"


def _run(ds: DataSet, rules: RuleSet, params: ScriptParams) -> tuple[DataSet | None, Outcome]:
    decision = evaluate_filter(rules.filter, ds)
    if not decision.accepted:
        return None, Outcome(Status.FILTERED, decision.reason)

    lookup = lookup_scrub(rules.scrub, ds)
    if lookup.verdict is ScrubVerdict.WHITELIST_REJECT:
        return None, Outcome(Status.FILTERED, WHITELIST_REASON)

    status = Status.ANONYMIZED
    if lookup.verdict is ScrubVerdict.RECTS and lookup.rects:
        px = decode_pixels(ds)
        for r in lookup.rects:
            if not r.fits(px.rows, px.cols):
                raise RectOutOfBounds(f"rect {r} outside {px.cols}x{px.rows} frame")
        for r in lookup.rects:
            px = blank_region(px, r)
        ds = encode_pixels(ds, px)
        status = Status.SCRUBBED

    out, records = apply_anon(rules.anon, ds, params)
    out = DataSet(out, EXPLICIT_VR_LE)
    rects = lookup.rects if status is Status.SCRUBBED else ()
    return out, Outcome(status, "", rects, transforms=records, output_syntax=EXPLICIT_VR_LE)


def deid_instance(source: DataSet | bytes, rules: RuleSet, params: ScriptParams
                  ) -> tuple[DataSet | None, Outcome]:
    """Run one instance through filter, scrub and anonymize."""
    ds, outcome, _ = _deid(source, rules, params)
    return ds, outcome


def deid_bytes(raw: bytes, rules: RuleSet, params: ScriptParams) -> tuple[bytes | None, Outcome]:
    """Like :func:`deid_instance` but from and to Part-10 bytes."""
    _, outcome, data = _deid(raw, rules, params)
    return data, outcome


def _deid(source, rules, params):
    if isinstance(source, DataSet):
        ds = source
        bytes_in = len(write_file(source))
    else:
        bytes_in = len(source)
        try:
            ds = parse_file(bytes(source))
        except Exception as exc:
            return None, _error(_classify(exc), str(exc), bytes_in), None
    try:
        out, outcome = _run(ds, rules, params)
        data = write_file(out) if out is not None else None
    except Exception as exc:
        return None, _error(_classify(exc), f"{type(exc).__name__}: {exc}", bytes_in), None
    outcome.bytes_in = bytes_in
    if data is not None:
        outcome.bytes_out = len(data)
    return out, outcome, data


InstanceSource = Union[bytes, DataSet]


@dataclass
class Counts:
    filtered: int = 0
    anonymized: int = 0
    scrubbed: int = 0
    error: int = 0
    bytes_in: int = 0
    bytes_out: int = 0

    @property
    def total(self) -> int:
        return self.filtered + self.anonymized + self.scrubbed + self.error

    def add(self, outcome: Outcome) -> None:
        setattr(self, outcome.status.value, getattr(self, outcome.status.value) + 1)
        self.bytes_in += outcome.bytes_in
        self.bytes_out += outcome.bytes_out

    def as_dict(self) -> dict:
        return {"filtered": self.filtered, "anonymized": self.anonymized, "scrubbed": self.scrubbed,
                "error": self.error, "bytes_in": self.bytes_in, "bytes_out": self.bytes_out}


@dataclass
class StudyResult:
    outcomes: list[tuple[str, Outcome]]
    outputs: dict[str, bytes]
    counts: Counts


def deid_study(inputs: Iterable[tuple[str, InstanceSource]], rules: RuleSet, params: ScriptParams,
               executor: Executor | None = None) -> StudyResult:
    """De-identify a batch. Outcomes come back in input order; outputs keyed by instance id."""
    inputs = list(inputs)

    def one(item):
        instance_id, src = item
        _, outcome, data = _deid(src, rules, params)
        return instance_id, data, outcome

    results = list(executor.map(one, inputs)) if executor is not None else [one(i) for i in inputs]
    counts = Counts()
    outcomes, outputs = [], {}
    for instance_id, data, outcome in results:
        counts.add(outcome)
        outcomes.append((instance_id, outcome))
        if data is not None:
            outputs[instance_id] = data
    return StudyResult(outcomes, outputs, counts)
