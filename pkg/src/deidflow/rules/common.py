from __future__ import annotations

import string

from ..dicom import Tag, resolve_attribute
from ..dicom.dataset import Element
from ..dicom.tags import TEXT_VRS


class ScriptError(Exception):
    """A script failed to parse. ``line`` is 1-based, or None for whole-script errors."""

    kind = "ScriptError"

    def __init__(self, message: str, line: int | None = None, source: str | None = None):
        self.message = message
        self.line = line
        self.source = source
        super().__init__(str(self))

    def __str__(self) -> str:
        where = self.source or "<script>"
        if self.line is not None:
            where += f":{self.line}"
        return f"{where}: {self.kind}: {self.message}"


class ScriptSyntaxError(ScriptError):
    kind = "SyntaxError"


class DuplicateKey(ScriptError):
    kind = "DuplicateKey"


class UnknownAttributeAlias(ScriptError):
    kind = "UnknownAttributeAlias"


class RuleError(Exception):
    """A parsed rule could not be applied to a particular instance."""


class MissingParam(RuleError):
    pass


_ASCII_FOLD = str.maketrans(string.ascii_uppercase, string.ascii_lowercase)


def fold(text: str) -> str:
    """ASCII-only case folding; non-ASCII characters compare exactly."""
    return text.translate(_ASCII_FOLD)


def strip_comment(line: str) -> str:
    """Drop a trailing ``#`` comment that is not inside double quotes."""
    quoted = False
    escaped = False
    for i, ch in enumerate(line):
        if escaped:
            escaped = False
        elif ch == "\\" and quoted:
            escaped = True
        elif ch == '"':
            quoted = not quoted
        elif ch == "#" and not quoted:
            return line[:i]
    return line


def attribute(name: str, lineno: int, source: str | None) -> Tag:
    try:
        return resolve_attribute(name)
    except ValueError:
        raise UnknownAttributeAlias(f"unknown attribute {name!r}", lineno, source) from None


def components(el: Element) -> list[str]:
    """String components used for rule matching."""
    if el.is_sequence:
        return []
    if el.vr in TEXT_VRS:
        return el.strings
    try:
        if el.vr in ("US", "SS", "UL", "SL"):
            return [str(v) for v in el.ints]
        if el.vr in ("FL", "FD"):
            return [repr(v) for v in el.floats]
    except Exception:
        return []
    return []
