"""Minimal stand-alone Part-10 writer used to produce synthetic fixtures.

Deliberately shares no code with :mod:`deidflow.dicom.io` so that files it
produces can serve as an independent check on the parser.
"""

from __future__ import annotations

import struct

EXPLICIT = "1.2.840.10008.1.2.1"
IMPLICIT = "1.2.840.10008.1.2"

_LONG = {"OB", "OW", "OF", "SQ", "UT", "UN", "UC", "UR"}


def _pad(raw: bytes, vr: str) -> bytes:
    if len(raw) % 2:
        return raw + (b"\x00" if vr in ("UI", "OB", "UN") else b" ")
    return raw


def value_bytes(vr: str, value) -> bytes:
    if isinstance(value, bytes):
        return _pad(value, vr)
    if vr == "US":
        vals = value if isinstance(value, (list, tuple)) else [value]
        return struct.pack(f"<{len(vals)}H", *vals)
    if vr == "UL":
        vals = value if isinstance(value, (list, tuple)) else [value]
        return struct.pack(f"<{len(vals)}I", *vals)
    if isinstance(value, (list, tuple)):
        value = "\\".join(str(v) for v in value)
    return _pad(str(value).encode("ascii"), vr)


def _header(group, element, vr, length, explicit):
    if not explicit:
        return struct.pack("<HHI", group, element, length)
    if vr in _LONG:
        return struct.pack("<HH2sHI", group, element, vr.encode(), 0, length)
    return struct.pack("<HH2sH", group, element, vr.encode(), length)


def encode_items(items, explicit: bool) -> bytes:
    out = bytearray()
    for item in items:
        body = encode_body(item, explicit)
        out += struct.pack("<HHI", 0xFFFE, 0xE000, len(body)) + body
    return bytes(out)


def _encapsulated(fragment: bytes) -> bytes:
    item = struct.Struct("<HHI").pack
    frag = _pad(fragment, "OB")
    return (struct.pack("<HH2sHI", 0x7FE0, 0x0010, b"OB", 0, 0xFFFFFFFF)
            + item(0xFFFE, 0xE000, 0) + item(0xFFFE, 0xE000, len(frag)) + frag
            + item(0xFFFE, 0xE0DD, 0))


def encode_body(elements, explicit: bool, encapsulated: bool = False) -> bytes:
    """``elements``: iterable of ``((group, element), vr, value)``; SQ values are lists of item lists.

    With ``encapsulated`` the pixel data is written as one undefined-length fragment sequence.
    """
    out = bytearray()
    for (group, element), vr, value in sorted(elements, key=lambda e: e[0]):
        if encapsulated and (group, element) == (0x7FE0, 0x0010):
            out += _encapsulated(value)
            continue
        raw = encode_items(value, explicit) if vr == "SQ" else value_bytes(vr, value)
        out += _header(group, element, vr, len(raw), explicit) + raw
    return bytes(out)


def encode_file(elements, syntax: str = EXPLICIT) -> bytes:
    elements = list(elements)
    by_tag = {tag: value for tag, _, value in elements}
    meta = [
        ((0x0002, 0x0001), "OB", b"\x00\x01"),
        ((0x0002, 0x0002), "UI", by_tag.get((0x0008, 0x0016), "")),
        ((0x0002, 0x0003), "UI", by_tag.get((0x0008, 0x0018), "")),
        ((0x0002, 0x0010), "UI", syntax),
        ((0x0002, 0x0013), "SH", "SYNTHGEN"),
    ]
    meta_body = encode_body(meta, True)
    group_len = encode_body([((0x0002, 0x0000), "UL", len(meta_body))], True)
    # Anything other than the two native syntaxes is explicit VR with compressed pixels.
    body = encode_body(elements, syntax != IMPLICIT, encapsulated=syntax not in (EXPLICIT, IMPLICIT))
    return b"\x00" * 128 + b"DICM" + group_len + meta_body + body
