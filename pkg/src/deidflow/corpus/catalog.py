"""Device catalog used for synthetic ultrasound data and the default scrub script.

Makes follow the manufacturer mix of a large clinical ultrasound archive; each
(model, resolution) pair needs its own scrub entry because banner layout
changes with resolution.
"""

from __future__ import annotations

from ..dicom import Rect
from ..rules.scrub import ScrubEntry, render_scrub_script

US_DEVICES = [
    ("GE", "LOGIQE9", [(480, 640), (600, 800), (768, 1024), (720, 960)]),
    ("GE", "Voluson E8", [(480, 640), (552, 736)]),
    ("GE", "LOGIQ E10", [(600, 800)]),
    ("Siemens", "ACUSON S2000", [(480, 640), (768, 1024)]),
    ("Siemens", "ACUSON Sequoia", [(600, 800)]),
    ("Acuson", "Sequoia", [(480, 640), (434, 636)]),
    ("Philips", "iU22", [(600, 800), (768, 1024)]),
    ("Philips", "EPIQ 7G", [(480, 640), (720, 960)]),
    ("Toshiba", "Aplio 500", [(480, 640), (600, 800)]),
    ("Toshiba", "Aplio i800", [(768, 1024)]),
    ("SonoSite", "M-Turbo", [(480, 640)]),
    ("SonoSite", "Edge", [(434, 636)]),
    ("Zonare", "ZS3", [(600, 800), (480, 640)]),
    ("BK Medical", "bk3000", [(552, 736)]),
    ("Aloka", "ProSound Alpha 7", [(480, 640), (600, 800)]),
    ("SuperSonic Imaging", "Aixplorer", [(720, 960), (600, 800)]),
    ("Samsung", "RS80A", [(480, 640), (768, 1024)]),
]

# Positron emission / CT fusion entry with the three regions from the
# reference regression suite.
PT_FUSION = ScrubEntry("PT", "GE", "Discovery", 512, 512,
                       (Rect(256, 0, 256, 22), Rect(300, 22, 212, 80), Rect(10, 478, 100, 10)))


def us_rects(index: int, rows: int, cols: int) -> tuple[Rect, ...]:
    """Banner plus, for odd entries, a side label block."""
    rects = [Rect(0, 0, cols, 40 + 4 * (index % 5))]
    if index % 2:
        rects.append(Rect(cols - 120, 60, 120, 40 + 10 * (index % 3)))
    return tuple(rects)


def us_entries() -> list[ScrubEntry]:
    entries = []
    for make, model, resolutions in US_DEVICES:
        for rows, cols in resolutions:
            entries.append(ScrubEntry("US", make, model, rows, cols, us_rects(len(entries), rows, cols)))
    return entries


def default_scrub_entries() -> list[ScrubEntry]:
    return [PT_FUSION, *us_entries()]


def default_scrub_text() -> str:
    header = (
        "# Default pixel scrub catalog.\n"
        "# Ultrasound is whitelist-only: an instance without an exact\n"
        "# (make, model, rows, cols) entry is filtered.\n"
    )
    return header + render_scrub_script(default_scrub_entries(), whitelist=["US"])
