"""Metadata anonymizer scripts.

Grammar::

    (GGGG,EEEE) := keep | remove | empty | replace("<lit>") | param(<name>) | hashuid | jitterdate
    default := remove | keep
    private := remove | keep

Attribute keywords are accepted in place of the numeric tag.
"""

from __future__ import annotations

import datetime as dt
import hashlib
import re
from dataclasses import dataclass, field

from ..dicom import DataSet, Element, Tag
from ..dicom.dataset import encode_text
from ..dicom.tags import TEXT_VRS, VR_BY_TAG
from .common import DuplicateKey, MissingParam, RuleError, ScriptSyntaxError, attribute, strip_comment

ACTIONS = ("keep", "remove", "empty", "replace", "param", "hashuid", "jitterdate")

_LINE = re.compile(r"^(\S+)\s*:=\s*(.+)$")
_ACTION = re.compile(
    r'^(?:(keep|remove|empty|hashuid|jitterdate)|replace\("((?:[^"\\]|\\.)*)"\)|param\((\w+)\))$',
    re.IGNORECASE,
)
UID_ROOT = "2.25."


@dataclass(frozen=True)
class Action:
    kind: str
    arg: str | None = None

    def __str__(self) -> str:
        if self.kind == "replace":
            return f'replace("{self.arg}")'
        if self.kind == "param":
            return f"param({self.arg})"
        return self.kind


KEEP = Action("keep")
REMOVE = Action("remove")


@dataclass(frozen=True)
class AnonScript:
    actions: dict[Tag, Action] = field(default_factory=dict)
    default_action: Action = REMOVE
    private_action: Action = REMOVE

    def resolve(self, tag: Tag) -> Action:
        action = self.actions.get(tag)
        if action is not None:
            return action
        if tag.is_private:
            return self.private_action
        return self.default_action


@dataclass
class ScriptParams:
    accession: str
    mrn: str
    jitter: int
    study_salt: str = ""
    extra: dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        if not self.accession or not self.mrn:
            raise ValueError("accession and mrn parameters must be non-empty")
        self.jitter = int(self.jitter)
        if self.jitter == 0:
            raise ValueError("jitter must be non-zero")

    def lookup(self, name: str) -> str:
        builtin = {"accession": self.accession, "mrn": self.mrn, "jitter": str(self.jitter)}
        if name in builtin:
            return builtin[name]
        if name in ("study_salt", "salt"):
            return self.study_salt
        try:
            return self.extra[name]
        except KeyError:
            raise MissingParam(f"script parameter {name!r} is not set") from None

    @classmethod
    def from_mapping(cls, values: dict[str, str]) -> "ScriptParams":
        values = dict(values)
        try:
            accession = values.pop("accession")
            mrn = values.pop("mrn")
            jitter = int(values.pop("jitter"))
        except KeyError as exc:
            raise MissingParam(f"script parameter {exc.args[0]!r} is not set") from None
        salt = values.pop("study_salt", values.pop("salt", ""))
        return cls(accession, mrn, jitter, salt, values)


@dataclass(frozen=True)
class TransformRecord:
    tag: str
    action: str
    had_value: bool

    def as_dict(self) -> dict:
        return {"tag": self.tag, "action": self.action, "had_value": self.had_value}


def parse_anon_script(text: str, source: str | None = None) -> AnonScript:
    actions: dict[Tag, Action] = {}
    first_line: dict[Tag, int] = {}
    defaults = {"default": (REMOVE, None), "private": (REMOVE, None)}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = strip_comment(raw).strip()
        if not line:
            continue
        m = _LINE.match(line)
        if not m:
            raise ScriptSyntaxError(f"expected '<tag> := <action>', got {line!r}", lineno, source)
        target, action_text = m.group(1), m.group(2).strip()
        am = _ACTION.match(action_text)
        if not am:
            raise ScriptSyntaxError(f"unknown action {action_text!r}", lineno, source)
        if am.group(1):
            action = Action(am.group(1).lower())
        elif am.group(3):
            action = Action("param", am.group(3))
        else:
            action = Action("replace", re.sub(r"\\(.)", r"\1", am.group(2)))

        if target.lower() in defaults:
            if action.kind not in ("keep", "remove"):
                raise ScriptSyntaxError(f"{target} accepts only keep or remove", lineno, source)
            if defaults[target.lower()][1] is not None:
                raise DuplicateKey(f"{target} already set on line {defaults[target.lower()][1]}", lineno, source)
            defaults[target.lower()] = (action, lineno)
            continue
        tag = attribute(target, lineno, source)
        if tag in actions:
            raise DuplicateKey(f"{tag} already has an action on line {first_line[tag]}", lineno, source)
        actions[tag] = action
        first_line[tag] = lineno
    return AnonScript(actions, defaults["default"][0], defaults["private"][0])


def hash_uid(uid: str, salt: str) -> str:
    """Deterministic digest-derived UID under the 2.25 root."""
    digest = hashlib.sha256(salt.encode("utf-8") + b"\0" + uid.encode("ascii", "replace")).digest()
    return (UID_ROOT + str(int.from_bytes(digest[:16], "big")))[:64]


def shift_date(value: str, days: int) -> str:
    """Shift a DA value (YYYYMMDD). Raises ValueError when unparseable."""
    if len(value) != 8 or not value.isdigit():
        raise ValueError(value)
    d = dt.datetime.strptime(value, "%Y%m%d").date() + dt.timedelta(days=days)
    return f"{d.year:04d}{d.month:02d}{d.day:02d}"


def shift_datetime(value: str, days: int) -> str:
    """Shift the date part of a DT value; time and offset are left untouched."""
    if len(value) < 8:
        raise ValueError(value)
    return shift_date(value[:8], days) + value[8:]


def apply_anon(script: AnonScript, ds: DataSet, params: ScriptParams) -> tuple[DataSet, list[TransformRecord]]:
    records: list[TransformRecord] = []
    elements = _apply_elements(script, ds, params, records, prefix="")
    present = {el.tag for el in ds}
    for tag, action in script.actions.items():
        if tag in present or action.kind not in ("replace", "param"):
            continue
        vr = VR_BY_TAG.get(tag)
        if vr is None or vr not in TEXT_VRS:
            continue
        value = action.arg if action.kind == "replace" else params.lookup(action.arg)
        elements.append(Element(tag, vr, encode_text(value, vr)))
        records.append(TransformRecord(str(tag), str(action), False))
    return ds.replace_all(elements), records


def _apply_elements(script, ds, params, records, prefix):
    out = []
    for el in ds:
        name = prefix + str(el.tag)
        if el.tag.is_group_length:
            records.append(TransformRecord(name, "remove", True))
            continue
        action = script.resolve(el.tag)
        had_value = not el.is_empty
        kind = action.kind
        if kind == "keep":
            if el.is_sequence:
                items = tuple(
                    DataSet(_apply_elements(script, item, params, records, f"{name}[{i}]."))
                    for i, item in enumerate(el.items)
                )
                out.append(Element(el.tag, "SQ", items))
            else:
                out.append(el)
            continue
        if kind == "remove":
            records.append(TransformRecord(name, "remove", had_value))
            continue
        if kind == "empty":
            out.append(Element(el.tag, el.vr, () if el.is_sequence else b""))
            records.append(TransformRecord(name, "empty", had_value))
            continue
        if el.is_sequence:
            raise RuleError(f"{el.tag}: {action} cannot apply to a sequence")
        if kind in ("replace", "param"):
            if el.vr not in TEXT_VRS:
                raise RuleError(f"{el.tag}: {action} needs a text VR, element is {el.vr}")
            value = action.arg if kind == "replace" else params.lookup(action.arg)
            out.append(Element(el.tag, el.vr, encode_text(value, el.vr)))
            records.append(TransformRecord(name, str(action), had_value))
        elif kind == "hashuid":
            if el.vr != "UI":
                raise RuleError(f"{el.tag}: hashuid needs VR UI, element is {el.vr}")
            new = [hash_uid(u, params.study_salt) for u in el.strings]
            out.append(Element.text_element(el.tag, "UI", new))
            records.append(TransformRecord(name, "hashuid", had_value))
        elif kind == "jitterdate":
            shifted = _jitter(el, params.jitter)
            if shifted is None:
                records.append(TransformRecord(name, "remove/invalid-date", had_value))
            else:
                out.append(shifted)
                records.append(TransformRecord(name, "jitterdate", had_value))
    return out


def _jitter(el: Element, days: int) -> Element | None:
    if el.vr not in ("DA", "DT"):
        raise RuleError(f"{el.tag}: jitterdate needs VR DA or DT, element is {el.vr}")
    shift = shift_date if el.vr == "DA" else shift_datetime
    try:
        parts = [shift(p, days) for p in el.strings]
    except (ValueError, OverflowError):
        return None
    return Element.text_element(el.tag, el.vr, parts)
