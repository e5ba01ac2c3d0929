"""Pixel scrub catalogs keyed on (modality, make, model, rows, cols).

Grammar::

    policy whitelist <MODALITY>
    [modality=<M> make="<S>" model="<S>" rows=<N> cols=<N>]
    rect <x>,<y>,<w>,<h>
"""

from __future__ import annotations

import enum
import re
import shlex
from dataclasses import dataclass

from ..dicom import DataSet, Rect
from ..dicom.pixels import COLUMNS, ROWS
from .common import DuplicateKey, ScriptSyntaxError, fold, strip_comment

_HEADER = re.compile(r"^\[(.*)\]$")
_KEY_FIELDS = ("modality", "make", "model", "rows", "cols")


@dataclass(frozen=True)
class ScrubKey:
    modality: str
    make: str
    model: str
    rows: int
    cols: int

    @classmethod
    def normalized(cls, modality, make, model, rows, cols) -> "ScrubKey":
        return cls(fold(modality.strip()), fold(make.strip()), fold(model.strip()), int(rows), int(cols))


@dataclass(frozen=True)
class ScrubEntry:
    modality: str
    make: str
    model: str
    rows: int
    cols: int
    rects: tuple[Rect, ...]
    line: int = 0

    @property
    def key(self) -> ScrubKey:
        return ScrubKey.normalized(self.modality, self.make, self.model, self.rows, self.cols)


class ScrubVerdict(enum.Enum):
    RECTS = "rects"
    NO_RULE = "no_rule"
    WHITELIST_REJECT = "whitelist_reject"


@dataclass(frozen=True)
class ScrubLookup:
    verdict: ScrubVerdict
    rects: tuple[Rect, ...] = ()
    entry: ScrubEntry | None = None


@dataclass(frozen=True)
class ScrubScript:
    entries: tuple[ScrubEntry, ...] = ()
    whitelist_only_modalities: frozenset[str] = frozenset()

    def __post_init__(self):
        object.__setattr__(self, "_index", {e.key: e for e in self.entries})

    def find(self, key: ScrubKey) -> ScrubEntry | None:
        return self._index.get(key)


def parse_scrub_script(text: str, source: str | None = None) -> ScrubScript:
    entries: list[ScrubEntry] = []
    seen: dict[ScrubKey, int] = {}
    whitelist: set[str] = set()
    current = None  # (fields, line, rects)

    def close():
        if current is None:
            return
        fields, line, rects = current
        entries.append(ScrubEntry(fields["modality"], fields["make"], fields["model"],
                                  fields["rows"], fields["cols"], tuple(rects), line))

    for lineno, raw in enumerate(text.splitlines(), 1):
        line = strip_comment(raw).strip()
        if not line:
            continue
        header = _HEADER.match(line)
        if header:
            close()
            fields = _parse_header(header.group(1), lineno, source)
            key = ScrubKey.normalized(*(fields[k] for k in _KEY_FIELDS))
            if key in seen:
                raise DuplicateKey(f"scrub key {_describe(fields)} already defined on line {seen[key]}",
                                   lineno, source)
            seen[key] = lineno
            current = (fields, lineno, [])
            continue
        words = line.split(None, 1)
        if words[0].lower() == "policy":
            parts = line.split()
            if len(parts) != 3 or parts[1].lower() != "whitelist":
                raise ScriptSyntaxError("expected 'policy whitelist <MODALITY>'", lineno, source)
            whitelist.add(fold(parts[2]))
            continue
        if words[0].lower() == "rect":
            if current is None:
                raise ScriptSyntaxError("rect before any [key] header", lineno, source)
            try:
                rect = Rect.parse(words[1] if len(words) > 1 else "")
            except ValueError as exc:
                raise ScriptSyntaxError(str(exc), lineno, source) from None
            fields = current[0]
            if not rect.fits(fields["rows"], fields["cols"]):
                raise ScriptSyntaxError(
                    f"rect {rect} exceeds {fields['cols']}x{fields['rows']} image", lineno, source)
            current[2].append(rect)
            continue
        raise ScriptSyntaxError(f"unrecognised line {line!r}", lineno, source)
    close()
    return ScrubScript(tuple(entries), frozenset(whitelist))


def _parse_header(body: str, lineno: int, source: str | None) -> dict:
    try:
        tokens = shlex.split(body)
    except ValueError as exc:
        raise ScriptSyntaxError(str(exc), lineno, source) from None
    fields: dict = {}
    for tok in tokens:
        name, sep, value = tok.partition("=")
        name = name.lower()
        if not sep or name not in _KEY_FIELDS:
            raise ScriptSyntaxError(f"bad key field {tok!r}", lineno, source)
        if name in fields:
            raise ScriptSyntaxError(f"field {name} given twice", lineno, source)
        if name in ("rows", "cols"):
            if not value.isdigit():
                raise ScriptSyntaxError(f"{name} must be a positive integer", lineno, source)
            value = int(value)
        fields[name] = value
    missing = [k for k in _KEY_FIELDS if k not in fields]
    if missing:
        raise ScriptSyntaxError(f"header missing {', '.join(missing)}", lineno, source)
    return fields


def _describe(fields: dict) -> str:
    return f"{fields['modality']}/{fields['make']}/{fields['model']}/{fields['rows']}x{fields['cols']}"


def instance_key(ds: DataSet) -> ScrubKey | None:
    """Catalog key for an instance, or None when an identifying attribute is missing."""
    modality = ds.text("Modality")
    make = ds.text("Manufacturer")
    model = ds.text("ManufacturerModelName")
    try:
        rows = ds.int(ROWS)
        cols = ds.int(COLUMNS)
    except (TypeError, ValueError):
        return None
    if None in (modality, make, model, rows, cols):
        return None
    return ScrubKey.normalized(modality, make, model, rows, cols)


def lookup_scrub(script: ScrubScript, ds: DataSet) -> ScrubLookup:
    key = instance_key(ds)
    entry = script.find(key) if key is not None else None
    if entry is not None:
        return ScrubLookup(ScrubVerdict.RECTS, entry.rects, entry)
    modality = fold((ds.text("Modality") or "").strip())
    if modality in script.whitelist_only_modalities:
        return ScrubLookup(ScrubVerdict.WHITELIST_REJECT)
    return ScrubLookup(ScrubVerdict.NO_RULE)


def render_scrub_script(entries, whitelist=()) -> str:
    """Inverse of :func:`parse_scrub_script` for generated catalogs."""
    lines = [f"policy whitelist {m}" for m in sorted(whitelist)]
    for e in entries:
        lines.append("")
        lines.append(f'[modality={e.modality} make="{e.make}" model="{e.model}" rows={e.rows} cols={e.cols}]')
        lines.extend(f"rect {r}" for r in e.rects)
    return "\n".join(lines) + "\n"
