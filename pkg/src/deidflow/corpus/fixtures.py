"""Fixture trees for scenario suites."""

from __future__ import annotations

from pathlib import Path

from ..dicom import tags as T
from ..rules import default_script_text
from . import catalog
from .generate import CorpusSpec, InstanceClass, LedgerEntry, generate_corpus

PET_ROOT = "dicom-phi/PT"


def pet_ct_classes(count: int = 2, root: str = PET_ROOT) -> list[InstanceClass]:
    """PET/CT fixtures: plain PET that is only anonymized, GE Discovery fusion
    screenshots carrying burned-in markers, and PET objects the filter excludes."""
    pt = dict(sop_class=T.PET_IMAGE_STORAGE, count=count)
    fusion = catalog.PT_FUSION
    return [
        InstanceClass("pt-plain", "PT", "GE", "Discovery MI", 128, 128, directory=f"{root}/Anonymize", **pt),
        InstanceClass("pt-fusion", "PT", fusion.make, fusion.model, fusion.rows, fusion.cols,
                      markers=fusion.rects, expect="scrubbed",
                      directory=f"{root}/Scrub/{fusion.make}/{fusion.model}/{fusion.rows}x{fusion.cols}", **pt),
        InstanceClass("pt-derived", "PT", "GE", "Discovery MI", 128, 128, expect="filtered",
                      attributes={"ImageType": ["DERIVED", "SECONDARY"]}, directory=f"{root}/Filter", **pt),
        InstanceClass("pt-burned-in", "PT", "GE", "Discovery MI", 128, 128, expect="filtered",
                      attributes={"BurnedInAnnotation": "YES"}, directory=f"{root}/Filter", **pt),
        InstanceClass("pt-screen-capture", "OT", "GE", "Discovery MI", 128, 128, expect="filtered",
                      sop_class=T.SECONDARY_CAPTURE_STORAGE, attributes={"ConversionType": "WSD"},
                      count=count, directory=f"{root}/Filter"),
    ]


def write_pet_ct_fixtures(root, count: int = 2, seed: int = 0) -> list[LedgerEntry]:
    return generate_corpus(CorpusSpec(pet_ct_classes(count), seed=seed), root)


def write_default_scripts(directory, names: dict[str, str] | None = None) -> dict[str, Path]:
    """Copy the shipped scripts into ``directory``; ``names`` maps filter/scrub/anon to file names."""
    names = {"filter": "default.filter", "scrub": "default.scrub", "anon": "default.anon", **(names or {})}
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = {}
    for kind, name in names.items():
        paths[kind] = directory / name
        paths[kind].write_text(default_script_text(kind))
    return paths
