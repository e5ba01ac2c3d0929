"""Synthetic DICOM corpora with planted, machine-checkable PHI surrogates.

Every planted string is a ``PHI-<KIND>-<n>`` sentinel and every burned-in
marker is a block of non-zero pixels, so a byte scan of the output is enough
to prove removal. The ledger written next to the files records, per
instance, what was planted and what the pipeline is expected to do with it.
Expectations are declared by the corpus author, not computed by the engine.
"""

from __future__ import annotations

import datetime as dt
import json
import random
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from ..dicom import Rect
from ..dicom import tags as T
from . import catalog
from .encoder import EXPLICIT, IMPLICIT, encode_file

LEDGER_NAME = "ledger.jsonl"
LEDGER_HEADER = {"format": "deidflow-ledger", "version": 1}
EXPECTATIONS = ("filtered", "anonymized", "scrubbed", "error")
MARKER_VALUE = {8: 0xFF, 16: 0x0FA0}


class InvalidSpec(ValueError):
    pass


@dataclass
class InstanceClass:
    name: str
    modality: str
    make: str
    model: str
    rows: int = 64
    cols: int = 64
    count: int = 1
    frames: int = 1
    bits: int = 16
    samples: int = 1
    sop_class: str = T.CT_IMAGE_STORAGE
    attributes: dict = field(default_factory=dict)
    markers: tuple = ()
    expect: str = "anonymized"
    expect_rects: tuple | None = None
    syntax: str = EXPLICIT
    pixels: bool = True
    corrupt: bool = False
    directory: str | None = None

    def __post_init__(self):
        self.markers = tuple(Rect(*m) for m in self.markers)
        if self.expect_rects is None:
            self.expect_rects = self.markers if self.expect == "scrubbed" else ()
        self.expect_rects = tuple(Rect(*r) for r in self.expect_rects)


@dataclass
class CorpusSpec:
    classes: list[InstanceClass]
    seed: int = 0
    instances_per_study: int = 4
    studies_per_patient: int = 2
    rules: str = "default"

    def validate(self) -> None:
        names = set()
        for c in self.classes:
            if c.name in names:
                raise InvalidSpec(f"duplicate class name {c.name}")
            names.add(c.name)
            if c.count < 0:
                raise InvalidSpec(f"{c.name}: negative count")
            if c.expect not in EXPECTATIONS:
                raise InvalidSpec(f"{c.name}: unknown expectation {c.expect!r}")
            if c.bits not in (8, 16) or c.samples not in (1, 3) or c.frames < 1:
                raise InvalidSpec(f"{c.name}: unsupported pixel layout")
            for r in (*c.markers, *c.expect_rects):
                if not r.fits(c.rows, c.cols):
                    raise InvalidSpec(f"{c.name}: rect {r} outside {c.cols}x{c.rows}")
        if self.instances_per_study < 1 or self.studies_per_patient < 1:
            raise InvalidSpec("grouping sizes must be positive")

    @property
    def total(self) -> int:
        return sum(c.count for c in self.classes)


@dataclass
class LedgerEntry:
    instance_id: str
    path: str
    cls: str
    expect: str
    accession: str
    mrn: str
    sop_instance_uid: str
    rects: list
    markers: list
    phi: list
    uids: list
    dates: dict
    frames: int
    size: int

    def as_dict(self) -> dict:
        return asdict(self)


def _uid(rng: random.Random) -> str:
    return "1.2.826.0.1.3680043.10.543." + ".".join(str(rng.randrange(1, 10 ** 6)) for _ in range(3))


def _pixels(c: InstanceClass, k: int) -> bytes:
    dtype = np.uint16 if c.bits == 16 else np.uint8
    yy, xx = np.mgrid[0:c.rows, 0:c.cols]
    frames = []
    for f in range(c.frames):
        base = (20 + 10 * f + (k % 7) + (xx + yy) % 16).astype(dtype)
        for m in c.markers:
            base[m.y:m.y + m.h, m.x:m.x + m.w] = MARKER_VALUE[c.bits]
        if c.samples == 3:
            base = np.repeat(base[:, :, None], 3, axis=2)
        frames.append(base.tobytes())
    return b"".join(frames)


def _build(c: InstanceClass, k: int, accession: str, mrn: str, study_uid: str, dates: dict,
           rng: random.Random):
    sop_uid = _uid(rng)
    series_uid = _uid(rng)
    phi = {
        "PatientName": f"PHI-NAME-{k:06d}",
        "InstitutionName": f"PHI-INST-{k:06d}",
        "ReferringPhysicianName": f"PHI-REF-{k:06d}",
        "OperatorsName": f"PHI-OPER-{k:06d}",
        "StudyDescription": f"PHI-DESC-{k:06d}",
        "PatientAddress": f"PHI-ADDR-{k:06d}",
    }
    els = [
        ((0x0008, 0x0016), "UI", c.sop_class),
        ((0x0008, 0x0018), "UI", sop_uid),
        ((0x0008, 0x0020), "DA", dates["StudyDate"]),
        ((0x0008, 0x0021), "DA", dates["SeriesDate"]),
        ((0x0008, 0x0022), "DA", dates["AcquisitionDate"]),
        ((0x0008, 0x0023), "DA", dates["ContentDate"]),
        ((0x0008, 0x0030), "TM", "101500"),
        ((0x0008, 0x0050), "SH", accession),
        ((0x0008, 0x0060), "CS", c.modality),
        ((0x0008, 0x0070), "LO", c.make),
        ((0x0008, 0x0080), "LO", phi["InstitutionName"]),
        ((0x0008, 0x0090), "PN", phi["ReferringPhysicianName"]),
        ((0x0008, 0x1030), "LO", phi["StudyDescription"]),
        ((0x0008, 0x1070), "PN", phi["OperatorsName"]),
        ((0x0008, 0x1090), "LO", c.model),
        ((0x0009, 0x0010), "LO", "SYNTH PRIVATE"),
        ((0x0009, 0x1001), "LO", f"PHI-PRIV-{k:06d}"),
        ((0x0010, 0x0010), "PN", phi["PatientName"]),
        ((0x0010, 0x0020), "LO", mrn),
        ((0x0010, 0x0030), "DA", dates["PatientBirthDate"]),
        ((0x0010, 0x0040), "CS", "O"),
        ((0x0010, 0x1040), "LO", phi["PatientAddress"]),
        ((0x0020, 0x000D), "UI", study_uid),
        ((0x0020, 0x000E), "UI", series_uid),
        ((0x0020, 0x0013), "IS", str(k % 1000)),
        ((0x0040, 0x0275), "SQ", [[((0x0040, 0x1001), "SH", f"PHI-RPID-{k:06d}")]]),
    ]
    phi_strings = [*phi.values(), f"PHI-PRIV-{k:06d}", f"PHI-RPID-{k:06d}", accession, mrn]
    if c.pixels:
        els += [
            ((0x0028, 0x0002), "US", c.samples),
            ((0x0028, 0x0004), "CS", "RGB" if c.samples == 3 else "MONOCHROME2"),
            ((0x0028, 0x0010), "US", c.rows),
            ((0x0028, 0x0011), "US", c.cols),
            ((0x0028, 0x0100), "US", c.bits),
            ((0x0028, 0x0101), "US", c.bits if c.bits == 8 else 12),
            ((0x0028, 0x0102), "US", (c.bits if c.bits == 8 else 12) - 1),
            ((0x0028, 0x0103), "US", 0),
            ((0x7FE0, 0x0010), "OW" if c.bits == 16 else "OB", _pixels(c, k)),
        ]
        if c.samples == 3:
            els.append(((0x0028, 0x0006), "US", 0))
        if c.frames > 1:
            els.append(((0x0028, 0x0008), "IS", str(c.frames)))
    for keyword, value in c.attributes.items():
        tag = T.TAG_BY_KEYWORD[keyword]
        els = [e for e in els if e[0] != tuple(tag)]
        els.append((tuple(tag), T.VR_BY_TAG[tag], value))
    return els, sop_uid, phi_strings, [sop_uid, series_uid, study_uid]


def _random_date(rng: random.Random, start_year=2005, end_year=2020) -> dt.date:
    start = dt.date(start_year, 1, 1).toordinal()
    end = dt.date(end_year, 12, 31).toordinal()
    return dt.date.fromordinal(rng.randint(start, end))


def generate_corpus(spec: CorpusSpec, out_dir) -> list[LedgerEntry]:
    """Write every instance of ``spec`` under ``out_dir`` plus ``ledger.jsonl``."""
    spec.validate()
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rng = random.Random(spec.seed)
    entries: list[LedgerEntry] = []
    k = 0
    study_no = 0
    for c in spec.classes:
        directory = out / (c.directory or c.name)
        directory.mkdir(parents=True, exist_ok=True)
        for start in range(0, c.count, spec.instances_per_study):
            patient_no = study_no // spec.studies_per_patient
            accession = f"PHI-ACC-{study_no:06d}"
            mrn = f"PHI-MRN-{patient_no:06d}"
            study_uid = _uid(rng)
            study_date = _random_date(rng)
            dates = {
                "StudyDate": study_date.strftime("%Y%m%d"),
                "SeriesDate": study_date.strftime("%Y%m%d"),
                "AcquisitionDate": study_date.strftime("%Y%m%d"),
                "ContentDate": (study_date + dt.timedelta(days=1)).strftime("%Y%m%d"),
                "PatientBirthDate": _random_date(rng, 1930, 2000).strftime("%Y%m%d"),
            }
            study_no += 1
            for _ in range(start, min(start + spec.instances_per_study, c.count)):
                els, sop_uid, phi, uids = _build(c, k, accession, mrn, study_uid, dates, rng)
                data = encode_file(els, c.syntax)
                if c.corrupt:
                    data = data[: max(140, len(data) // 2) | 1]
                instance_id = f"{c.name}-{k:06d}"
                path = directory / f"{instance_id}.dcm"
                path.write_bytes(data)
                entries.append(LedgerEntry(
                    instance_id=instance_id,
                    path=str(path.relative_to(out)),
                    cls=c.name,
                    expect=c.expect,
                    accession=accession,
                    mrn=mrn,
                    sop_instance_uid=sop_uid,
                    rects=[list(r) for r in c.expect_rects],
                    markers=[list(m) for m in c.markers],
                    phi=phi,
                    uids=uids,
                    dates=dates,
                    frames=c.frames,
                    size=len(data),
                ))
                k += 1
    with open(out / LEDGER_NAME, "w") as fh:
        fh.write(json.dumps({**LEDGER_HEADER, "rules": spec.rules, "seed": spec.seed}) + "\n")
        for e in entries:
            fh.write(json.dumps(e.as_dict(), sort_keys=True) + "\n")
    return entries


def read_ledger(corpus_dir) -> list[LedgerEntry]:
    lines = (Path(corpus_dir) / LEDGER_NAME).read_text().splitlines()
    header = json.loads(lines[0])
    if header.get("format") != LEDGER_HEADER["format"]:
        raise ValueError(f"{corpus_dir}: not a corpus ledger")
    return [LedgerEntry(**json.loads(ln)) for ln in lines[1:] if ln.strip()]


# -- default corpora -------------------------------------------------------

def filter_catalog_classes(count: int = 1) -> list[InstanceClass]:
    """One class per excluded image type, and one whitelist bypass per bypassable type."""
    def cls(name, expect, **kw):
        base = dict(modality="CT", make="GE", model="LightSpeed VCT", rows=32, cols=32, count=count)
        base.update(kw)
        return InstanceClass(name, expect=expect, **base)

    return [
        cls("vidar", "filtered", modality="CR", make="VIDAR", model="DiagnosticPRO Advantage",
            sop_class=T.CR_IMAGE_STORAGE),
        cls("pdf", "filtered", modality="OT", sop_class=T.ENCAPSULATED_PDF_STORAGE, pixels=False,
            attributes={"EncapsulatedDocument": b"%PDF-1.4 PHI-DOC\n"}),
        cls("sr", "filtered", modality="SR", sop_class=T.BASIC_TEXT_SR_STORAGE, pixels=False),
        cls("presentation-state", "filtered", modality="PR", sop_class=T.GRAYSCALE_PRESENTATION_STATE,
            pixels=False),
        cls("raw-modality", "filtered", modality="RAW", sop_class=T.RAW_DATA_STORAGE, pixels=False),
        cls("secondary-capture", "filtered", modality="OT", sop_class=T.SECONDARY_CAPTURE_STORAGE,
            attributes={"ConversionType": "DV"}),
        cls("burned-in", "filtered", modality="CR", sop_class=T.CR_IMAGE_STORAGE,
            attributes={"BurnedInAnnotation": "YES"}),
        cls("empty-conversion-type", "filtered", modality="OT", sop_class=T.SECONDARY_CAPTURE_STORAGE,
            attributes={"ConversionType": ""}),
        cls("derived", "filtered", attributes={"ImageType": ["DERIVED", "PRIMARY", "AXIAL"]}),
        cls("secondary-image", "filtered", attributes={"ImageType": ["ORIGINAL", "SECONDARY"]}),
        cls("video-capture", "filtered", modality="XC", sop_class=T.VIDEO_PHOTOGRAPHIC_STORAGE,
            samples=3, bits=8),
        cls("video-conversion", "filtered", modality="XC", sop_class=T.SECONDARY_CAPTURE_STORAGE,
            attributes={"ConversionType": "VID"}),
        # whitelist bypasses
        cls("bypass-secondary-capture", "anonymized", modality="OT", make="GE MEDICAL SYSTEMS",
            model="Advantage Workstation", sop_class=T.SECONDARY_CAPTURE_STORAGE,
            attributes={"ConversionType": "WSD"}),
        _us_class("bypass-burned-in", catalog.us_entries()[0], count,
                  attributes={"BurnedInAnnotation": "YES"}),
        cls("bypass-derived", "anonymized",
            attributes={"ImageType": ["DERIVED", "SECONDARY", "REFORMATTED"]}),
    ]


def _us_class(name, entry, count, **kw) -> InstanceClass:
    return InstanceClass(name, "US", entry.make, entry.model, entry.rows, entry.cols, count=count,
                         bits=8, sop_class=T.US_IMAGE_STORAGE, markers=entry.rects, expect="scrubbed", **kw)


def ultrasound_classes(per_entry: int = 1, unmatched_per_entry: int = 1) -> list[InstanceClass]:
    """Matched (scrubbed) and near-miss unmatched (filtered) US classes for every catalog entry."""
    classes = []
    for i, e in enumerate(catalog.us_entries()):
        classes.append(_us_class(f"us-{i:02d}", e, per_entry))
        if unmatched_per_entry:
            # Same make and model at a resolution the catalog does not list.
            classes.append(InstanceClass(f"us-{i:02d}-unlisted", "US", e.make, e.model, e.rows + 2, e.cols,
                                         count=unmatched_per_entry, bits=8, sop_class=T.US_IMAGE_STORAGE,
                                         markers=(Rect(0, 0, e.cols, 40),), expect="filtered"))
    classes.append(InstanceClass("us-unknown-make", "US", "Unlisted Sonics", "Model X", 480, 640,
                                 count=unmatched_per_entry, bits=8, sop_class=T.US_IMAGE_STORAGE,
                                 markers=(Rect(0, 0, 640, 40),), expect="filtered"))
    return classes


def default_corpus_spec(n: int = 1000, seed: int = 0) -> CorpusSpec:
    """Mixed CT/PT/US/DX corpus with filtered, scrubbed and error cases in fixed proportions."""
    us = catalog.us_entries()
    shares = [
        (InstanceClass("ct", "CT", "GE", "LightSpeed VCT", 256, 256,
                       attributes={"ImageType": ["ORIGINAL", "PRIMARY", "AXIAL"]}), 0.40),
        (InstanceClass("ct-implicit", "CT", "Siemens", "SOMATOM Definition", 256, 256, syntax=IMPLICIT), 0.05),
        (InstanceClass("ct-reformat", "CT", "GE", "LightSpeed VCT", 256, 256,
                       attributes={"ImageType": ["DERIVED", "SECONDARY", "REFORMATTED"]}), 0.04),
        (InstanceClass("ct-derived", "CT", "GE", "LightSpeed VCT", 128, 128, expect="filtered",
                       attributes={"ImageType": ["DERIVED", "SECONDARY"]}), 0.05),
        (InstanceClass("pt-fusion", "PT", "GE", "Discovery", 512, 512, sop_class=T.PET_IMAGE_STORAGE,
                       markers=catalog.PT_FUSION.rects, expect="scrubbed"), 0.04),
        (InstanceClass("dx", "DX", "Carestream", "DRX-Evolution", 256, 256, sop_class=T.DX_IMAGE_STORAGE), 0.10),
        (InstanceClass("vidar", "CR", "VIDAR", "DiagnosticPRO Advantage", 128, 128,
                       sop_class=T.CR_IMAGE_STORAGE, expect="filtered"), 0.04),
        (InstanceClass("sr", "SR", "GE", "PACS", sop_class=T.BASIC_TEXT_SR_STORAGE, pixels=False,
                       expect="filtered"), 0.03),
        (InstanceClass("us-unlisted", "US", "Unlisted Sonics", "Model X", 240, 320, bits=8,
                       sop_class=T.US_IMAGE_STORAGE, markers=(Rect(0, 0, 320, 30),), expect="filtered"), 0.04),
        (InstanceClass("corrupt", "CT", "GE", "LightSpeed VCT", 64, 64, corrupt=True, expect="error"), 0.01),
        (InstanceClass("jpeg", "CT", "GE", "LightSpeed VCT", 64, 64, syntax=T.JPEG_LOSSLESS_SV1,
                       expect="error"), 0.01),
    ]
    us_share = 1.0 - sum(s for _, s in shares)
    us_classes = [_us_class(f"us-{i:02d}", e, 0) for i, e in enumerate(us)]
    classes = []
    for c, share in shares:
        c.count = int(n * share)
        classes.append(c)
    us_total = int(n * us_share)
    for i in range(us_total):
        us_classes[i % len(us_classes)].count += 1
    classes.extend(c for c in us_classes if c.count)
    classes[0].count += n - sum(c.count for c in classes)
    return CorpusSpec(classes, seed=seed)
