"""Reading and writing DICOM Part-10 files.

Input may be implicit or explicit VR little endian; output is always explicit
VR little endian with defined-length sequences and items.
"""

from __future__ import annotations

import struct
import uuid

from .dataset import DataSet, Element
from .errors import MalformedFile, UnsupportedEncoding, UnsupportedTransferSyntax
from .tags import (
    EXPLICIT_VR_LE,
    IMPLICIT_VR_LE,
    ITEM,
    ITEM_DELIMITER,
    KNOWN_VRS,
    LONG_VRS,
    PIXEL_DATA,
    SEQUENCE_DELIMITER,
    SUPPORTED_SYNTAXES,
    Tag,
    lookup_vr,
)

PREAMBLE_LENGTH = 128
MAGIC = b"DICM"
UNDEFINED_LENGTH = 0xFFFFFFFF

IMPLEMENTATION_CLASS_UID = "2.25." + str(uuid.uuid5(uuid.NAMESPACE_URL, "urn:deidflow").int)
IMPLEMENTATION_VERSION = "DEIDFLOW_01"

_unpack_tag = struct.Struct("<HH").unpack_from
_unpack_u16 = struct.Struct("<H").unpack_from
_unpack_u32 = struct.Struct("<I").unpack_from


def parse_file(data: bytes) -> DataSet:
    """Parse a Part-10 file. The file meta group is consumed, not returned."""
    if len(data) < PREAMBLE_LENGTH + 4 or data[PREAMBLE_LENGTH:PREAMBLE_LENGTH + 4] != MAGIC:
        raise MalformedFile("missing preamble or DICM magic")
    buf = memoryview(data)
    meta, pos = _read_meta(buf, PREAMBLE_LENGTH + 4)
    ts_el = meta.get(Tag(0x0002, 0x0010))
    if ts_el is None:
        raise MalformedFile("file meta has no TransferSyntaxUID")
    syntax = ts_el.text
    if syntax not in SUPPORTED_SYNTAXES:
        raise UnsupportedTransferSyntax(syntax)
    elements, _ = _read_elements(buf, pos, len(buf), syntax == EXPLICIT_VR_LE, in_item=False)
    try:
        return DataSet(elements, syntax)
    except ValueError as exc:
        raise MalformedFile(str(exc)) from None


def read_file_meta(data: bytes) -> dict[Tag, Element]:
    if len(data) < PREAMBLE_LENGTH + 4 or data[PREAMBLE_LENGTH:PREAMBLE_LENGTH + 4] != MAGIC:
        raise MalformedFile("missing preamble or DICM magic")
    meta, _ = _read_meta(memoryview(data), PREAMBLE_LENGTH + 4)
    return meta


def _read_meta(buf: memoryview, pos: int) -> tuple[dict[Tag, Element], int]:
    meta: dict[Tag, Element] = {}
    end = len(buf)
    while pos + 4 <= end and _unpack_u16(buf, pos)[0] == 0x0002:
        el, pos = _read_element(buf, pos, end, explicit=True)
        meta[el.tag] = el
    if not meta:
        raise MalformedFile("file meta group 0002 missing")
    return meta, pos


def scan_header(data: bytes, until: Tag = Tag(0x0011, 0x0000)) -> dict[Tag, Element]:
    """Best-effort read of top-level elements below ``until``.

    Stops quietly at the first damage, so truncated or otherwise unparseable
    files still yield whatever identifying attributes precede the damage.
    """
    if len(data) < PREAMBLE_LENGTH + 4 or data[PREAMBLE_LENGTH:PREAMBLE_LENGTH + 4] != MAGIC:
        raise MalformedFile("missing preamble or DICM magic")
    buf = memoryview(data)
    meta, pos = _read_meta(buf, PREAMBLE_LENGTH + 4)
    ts_el = meta.get(Tag(0x0002, 0x0010))
    explicit = ts_el is None or ts_el.text != IMPLICIT_VR_LE
    found: dict[Tag, Element] = {}
    while pos + 8 <= len(buf) and Tag(*_unpack_tag(buf, pos)) < until:
        try:
            el, pos = _read_element(buf, pos, len(buf), explicit)
        except (MalformedFile, UnsupportedEncoding, ValueError):
            break
        found[el.tag] = el
    return found


def _read_elements(buf, pos, end, explicit, in_item):
    out = []
    while pos < end:
        if pos + 8 > end:
            raise MalformedFile(f"truncated element header at offset {pos}")
        if _unpack_tag(buf, pos) == ITEM_DELIMITER:
            if not in_item:
                raise MalformedFile(f"unexpected item delimiter at offset {pos}")
            return out, pos + 8
        el, pos = _read_element(buf, pos, end, explicit)
        out.append(el)
    if in_item == "undefined":
        raise MalformedFile("item without delimiter")
    return out, pos


def _read_element(buf, pos, end, explicit):
    if pos + 8 > end:
        raise MalformedFile(f"truncated element header at offset {pos}")
    tag = Tag(*_unpack_tag(buf, pos))
    if explicit:
        try:
            vr = bytes(buf[pos + 4:pos + 6]).decode("ascii")
        except UnicodeDecodeError:
            raise MalformedFile(f"{tag}: non-ASCII VR") from None
        if not (vr.isalpha() and vr.isupper()):
            raise MalformedFile(f"{tag}: invalid VR {vr!r}")
        if vr in LONG_VRS or vr not in KNOWN_VRS:
            if pos + 12 > end:
                raise MalformedFile(f"truncated element header at offset {pos}")
            length = _unpack_u32(buf, pos + 8)[0]
            pos += 12
        else:
            length = _unpack_u16(buf, pos + 6)[0]
            pos += 8
    else:
        vr = lookup_vr(tag)
        length = _unpack_u32(buf, pos + 4)[0]
        pos += 8

    if length == UNDEFINED_LENGTH:
        if tag == PIXEL_DATA:
            raise UnsupportedEncoding("encapsulated pixel data")
        if vr == "SQ":
            items, pos = _read_items(buf, pos, end, explicit, defined_end=None)
            return Element(tag, "SQ", tuple(items)), pos
        if vr == "UN":
            # Undefined-length UN carries an implicit VR sequence.
            items, pos = _read_items(buf, pos, end, False, defined_end=None)
            return Element(tag, "SQ", tuple(items)), pos
        raise MalformedFile(f"{tag}: undefined length on VR {vr}")

    if pos + length > end:
        raise MalformedFile(f"{tag}: value of {length} bytes runs past end of data")
    if vr == "SQ":
        items, _ = _read_items(buf, pos, pos + length, explicit, defined_end=pos + length)
        return Element(tag, "SQ", tuple(items)), pos + length
    if length % 2:
        raise MalformedFile(f"{tag}: odd value length {length}")
    return Element(tag, vr, bytes(buf[pos:pos + length])), pos + length


def _read_items(buf, pos, end, explicit, defined_end):
    items = []
    while pos < end:
        if pos + 8 > end:
            raise MalformedFile(f"truncated item header at offset {pos}")
        tag = _unpack_tag(buf, pos)
        length = _unpack_u32(buf, pos + 4)[0]
        pos += 8
        if tag == SEQUENCE_DELIMITER:
            if defined_end is not None:
                raise MalformedFile("sequence delimiter inside defined-length sequence")
            return items, pos
        if tag != ITEM:
            raise MalformedFile(f"expected item tag, found {Tag(*tag)}")
        if length == UNDEFINED_LENGTH:
            elements, pos = _read_elements(buf, pos, end, explicit, in_item="undefined")
        else:
            if pos + length > end:
                raise MalformedFile("item runs past end of sequence")
            elements, _ = _read_elements(buf, pos, pos + length, explicit, in_item=False)
            pos += length
        try:
            items.append(DataSet(elements))
        except ValueError as exc:
            raise MalformedFile(str(exc)) from None
    if defined_end is None:
        raise MalformedFile("sequence without delimiter")
    return items, pos


def write_file(ds: DataSet) -> bytes:
    """Serialize as explicit VR little endian with a regenerated file meta group."""
    meta = [Element(Tag(0x0002, 0x0001), "OB", b"\x00\x01")]
    for src, dst in ((Tag(0x0008, 0x0016), 0x0002), (Tag(0x0008, 0x0018), 0x0003)):
        el = ds.get(src)
        if el is not None and not el.is_sequence:
            meta.append(Element(Tag(0x0002, dst), "UI", el.value))
    meta.append(Element.text_element(Tag(0x0002, 0x0010), "UI", EXPLICIT_VR_LE))
    meta.append(Element.text_element(Tag(0x0002, 0x0012), "UI", IMPLEMENTATION_CLASS_UID))
    meta.append(Element.text_element(Tag(0x0002, 0x0013), "SH", IMPLEMENTATION_VERSION))
    meta_body = b"".join(_encode(el) for el in meta)
    group_length = _encode(Element(Tag(0x0002, 0x0000), "UL", struct.pack("<I", len(meta_body))))
    parts = [b"\0" * PREAMBLE_LENGTH, MAGIC, group_length, meta_body]
    parts.extend(_encode(el) for el in ds)
    return b"".join(parts)


def encode_elements(elements) -> bytes:
    return b"".join(_encode(el) for el in elements)


def _encode(el: Element) -> bytes:
    if el.is_sequence:
        value = b"".join(
            struct.pack("<HHI", ITEM.group, ITEM.element, len(body)) + body
            for body in (encode_elements(item) for item in el.items)
        )
    else:
        value = el.value
    head = struct.pack("<HH", el.tag.group, el.tag.element) + el.vr.encode("ascii")
    if el.vr in LONG_VRS or el.vr not in KNOWN_VRS:
        return head + struct.pack("<HI", 0, len(value)) + value
    if len(value) > 0xFFFF:
        raise ValueError(f"{el.tag}: {len(value)} bytes do not fit VR {el.vr}")
    return head + struct.pack("<H", len(value)) + value
