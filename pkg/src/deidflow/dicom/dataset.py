"""In-memory model of a DICOM data set.

Raw bytes are the source of truth for every element; decoded views are
computed on demand, so anything parsed can be written back unchanged.
"""

from __future__ import annotations

import datetime as dt
import struct
from dataclasses import dataclass
from typing import Iterable, Iterator, Union

from .tags import EXPLICIT_VR_LE, SUPPORTED_SYNTAXES, TEXT_VRS, Tag, resolve_attribute

_INT_FORMATS = {"US": "H", "SS": "h", "UL": "I", "SL": "i"}
_FLOAT_FORMATS = {"FL": "f", "FD": "d"}
# Text blocks keep leading whitespace; everything else strips both ends.
_TEXT_BLOCK_VRS = frozenset({"LT", "ST", "UT"})

TagLike = Union[Tag, str, tuple]


def as_tag(key: TagLike) -> Tag:
    if isinstance(key, Tag):
        return key
    if isinstance(key, tuple):
        return Tag(*key)
    return resolve_attribute(key)


def encode_text(text: str, vr: str) -> bytes:
    try:
        raw = text.encode("latin-1")
    except UnicodeEncodeError:
        raw = text.encode("utf-8")
    if len(raw) % 2:
        raw += b"\0" if vr == "UI" else b" "
    return raw


@dataclass(frozen=True)
class Element:
    tag: Tag
    vr: str
    value: bytes | tuple["DataSet", ...]

    def __post_init__(self):
        if self.vr == "SQ":
            if not isinstance(self.value, tuple):
                raise TypeError("SQ element value must be a tuple of DataSet items")
        elif len(self.value) % 2:
            raise ValueError(f"{self.tag} value length {len(self.value)} is odd")

    @classmethod
    def text_element(cls, tag: TagLike, vr: str, text: str | Iterable[str]) -> "Element":
        if not isinstance(text, str):
            text = "\\".join(text)
        return cls(as_tag(tag), vr, encode_text(text, vr))

    @classmethod
    def int_element(cls, tag: TagLike, vr: str, *values: int) -> "Element":
        fmt = "<" + _INT_FORMATS[vr] * len(values)
        return cls(as_tag(tag), vr, struct.pack(fmt, *values))

    @property
    def is_sequence(self) -> bool:
        return self.vr == "SQ"

    @property
    def items(self) -> tuple["DataSet", ...]:
        return self.value if self.is_sequence else ()

    @property
    def is_empty(self) -> bool:
        if self.is_sequence:
            return not self.value
        return not self.value.strip(b" \0")

    @property
    def text(self) -> str:
        raw = self.value if not self.is_sequence else b""
        s = raw.decode("latin-1")
        if self.vr in _TEXT_BLOCK_VRS:
            return s.rstrip(" \0")
        return s.strip(" \0")

    @property
    def strings(self) -> list[str]:
        """Backslash-separated value components, each trimmed."""
        if self.is_empty:
            return []
        if self.vr in _TEXT_BLOCK_VRS:
            return [self.text]
        return [part.strip(" \0") for part in self.text.split("\\")]

    @property
    def ints(self) -> list[int]:
        if self.vr in _INT_FORMATS:
            code = _INT_FORMATS[self.vr]
            n = len(self.value) // struct.calcsize(code)
            return list(struct.unpack("<" + code * n, self.value[: n * struct.calcsize(code)]))
        if self.vr == "IS":
            return [int(s) for s in self.strings]
        raise TypeError(f"{self.tag} ({self.vr}) has no integer view")

    @property
    def floats(self) -> list[float]:
        if self.vr in _FLOAT_FORMATS:
            code = _FLOAT_FORMATS[self.vr]
            n = len(self.value) // struct.calcsize(code)
            return list(struct.unpack("<" + code * n, self.value))
        if self.vr == "DS":
            return [float(s) for s in self.strings]
        raise TypeError(f"{self.tag} ({self.vr}) has no float view")

    @property
    def dates(self) -> list[dt.date]:
        return [dt.datetime.strptime(s, "%Y%m%d").date() for s in self.strings]

    @property
    def decoded(self):
        """Best-effort Python view: str / list[str] for text, ints, floats, items or raw bytes."""
        if self.is_sequence:
            return self.items
        if self.vr in TEXT_VRS:
            parts = self.strings
            return parts[0] if len(parts) == 1 else parts
        if self.vr in _INT_FORMATS:
            vals = self.ints
            return vals[0] if len(vals) == 1 else vals
        if self.vr in _FLOAT_FORMATS:
            vals = self.floats
            return vals[0] if len(vals) == 1 else vals
        return self.value


class DataSet:
    """Tag-ordered collection of elements, one per tag.

    Treated as immutable: the ``with_*``/``without`` helpers return new objects.
    Equality compares elements only; ``transfer_syntax`` records how the data
    was encoded on disk and is not part of the content.
    """

    __slots__ = ("_elements", "transfer_syntax")

    def __init__(self, elements: Iterable[Element] = (), transfer_syntax: str = EXPLICIT_VR_LE):
        if transfer_syntax not in SUPPORTED_SYNTAXES:
            raise ValueError(f"transfer syntax {transfer_syntax} is not supported")
        table: dict[Tag, Element] = {}
        for el in elements:
            if el.tag in table:
                raise ValueError(f"duplicate element {el.tag}")
            table[el.tag] = el
        self._elements = dict(sorted(table.items()))
        self.transfer_syntax = transfer_syntax

    def __iter__(self) -> Iterator[Element]:
        return iter(self._elements.values())

    def __len__(self) -> int:
        return len(self._elements)

    def __contains__(self, key: TagLike) -> bool:
        return as_tag(key) in self._elements

    def __getitem__(self, key: TagLike) -> Element:
        return self._elements[as_tag(key)]

    def __eq__(self, other) -> bool:
        if not isinstance(other, DataSet):
            return NotImplemented
        return list(self._elements.values()) == list(other._elements.values())

    def __hash__(self):
        return hash(tuple(self._elements))

    def __repr__(self) -> str:
        return f"DataSet({len(self)} elements, {self.transfer_syntax})"

    @property
    def tags(self) -> list[Tag]:
        return list(self._elements)

    def get(self, key: TagLike) -> Element | None:
        return self._elements.get(as_tag(key))

    def text(self, key: TagLike) -> str | None:
        el = self.get(key)
        return None if el is None else el.text

    def int(self, key: TagLike, default: int | None = None) -> int | None:
        el = self.get(key)
        if el is None or el.is_empty:
            return default
        return el.ints[0]

    def with_elements(self, *elements: Element) -> "DataSet":
        table = dict(self._elements)
        for el in elements:
            table[el.tag] = el
        return DataSet(table.values(), self.transfer_syntax)

    def without(self, *keys: TagLike) -> "DataSet":
        drop = {as_tag(k) for k in keys}
        return DataSet((el for t, el in self._elements.items() if t not in drop), self.transfer_syntax)

    def replace_all(self, elements: Iterable[Element]) -> "DataSet":
        return DataSet(elements, self.transfer_syntax)
