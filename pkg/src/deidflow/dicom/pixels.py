"""Native pixel data access and rectangle blanking."""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .dataset import DataSet, Element
from .errors import InconsistentDimensions, MissingPixelData, RectOutOfBounds, UnsupportedEncoding
from .tags import PIXEL_DATA, Tag

ROWS = Tag(0x0028, 0x0010)
COLUMNS = Tag(0x0028, 0x0011)
BITS_ALLOCATED = Tag(0x0028, 0x0100)
SAMPLES_PER_PIXEL = Tag(0x0028, 0x0002)
PLANAR_CONFIGURATION = Tag(0x0028, 0x0006)
NUMBER_OF_FRAMES = Tag(0x0028, 0x0008)


class Rect(NamedTuple):
    x: int
    y: int
    w: int
    h: int

    @classmethod
    def parse(cls, text: str) -> "Rect":
        parts = [p.strip() for p in text.split(",")]
        if len(parts) != 4:
            raise ValueError(f"rect needs x,y,w,h: {text!r}")
        r = cls(*(int(p) for p in parts))
        if r.w < 0 or r.h < 0 or r.x < 0 or r.y < 0:
            raise ValueError(f"rect has negative component: {text!r}")
        return r

    def fits(self, rows: int, cols: int) -> bool:
        return min(self) >= 0 and self.x + self.w <= cols and self.y + self.h <= rows

    def __str__(self) -> str:
        return f"{self.x},{self.y},{self.w},{self.h}"


@dataclass(frozen=True)
class PixelMatrix:
    rows: int
    cols: int
    bits_allocated: int
    samples_per_pixel: int
    frames: tuple[np.ndarray, ...]  # each (rows, cols, samples), read-only
    planar: int = 0

    @property
    def frame_nbytes(self) -> int:
        return self.rows * self.cols * self.samples_per_pixel * self.bits_allocated // 8

    def frame_bytes(self, index: int) -> bytes:
        frame = self.frames[index]
        if self.planar and self.samples_per_pixel > 1:
            frame = np.moveaxis(frame, 2, 0)
        return np.ascontiguousarray(frame).tobytes()

    def region(self, index: int, r: Rect) -> np.ndarray:
        return self.frames[index][r.y:r.y + r.h, r.x:r.x + r.w]


def _frozen(a: np.ndarray) -> np.ndarray:
    a.flags.writeable = False
    return a


def decode_pixels(ds: DataSet) -> PixelMatrix:
    el = ds.get(PIXEL_DATA)
    if el is None:
        raise MissingPixelData("no PixelData element")
    try:
        rows = ds.int(ROWS)
        cols = ds.int(COLUMNS)
        bits = ds.int(BITS_ALLOCATED)
        samples = ds.int(SAMPLES_PER_PIXEL, 1)
        planar = ds.int(PLANAR_CONFIGURATION, 0)
        nframes = ds.int(NUMBER_OF_FRAMES, 1)
    except (TypeError, ValueError) as exc:
        raise InconsistentDimensions(f"unreadable image pixel attributes: {exc}") from None
    if rows is None or cols is None or bits is None:
        raise MissingPixelData("Rows, Columns or BitsAllocated missing")
    if bits not in (8, 16):
        raise UnsupportedEncoding(f"BitsAllocated={bits}")
    if samples not in (1, 3):
        raise UnsupportedEncoding(f"SamplesPerPixel={samples}")
    if el.is_sequence:
        raise UnsupportedEncoding("PixelData is not native")

    frame_size = rows * cols * samples * bits // 8
    expected = frame_size * nframes
    raw = el.value
    if len(raw) != expected and not (expected % 2 and len(raw) == expected + 1):
        raise InconsistentDimensions(
            f"PixelData holds {len(raw)} bytes, {nframes}x{rows}x{cols}x{samples}x{bits}bit needs {expected}"
        )
    dtype = np.dtype("<u2") if bits == 16 else np.dtype("u1")
    flat = np.frombuffer(raw, dtype=dtype, count=expected // dtype.itemsize)
    frames = []
    for i in range(nframes):
        chunk = flat[i * rows * cols * samples:(i + 1) * rows * cols * samples]
        if planar and samples > 1:
            frame = np.moveaxis(chunk.reshape(samples, rows, cols), 0, 2)
        else:
            frame = chunk.reshape(rows, cols, samples)
        frames.append(_frozen(frame))
    return PixelMatrix(rows, cols, bits, samples, tuple(frames), planar)


def blank_region(px: PixelMatrix, r: Rect) -> PixelMatrix:
    """Return a copy of ``px`` with ``r`` set to zero in every frame."""
    if not r.fits(px.rows, px.cols):
        raise RectOutOfBounds(f"rect {r} outside {px.cols}x{px.rows} frame")
    if r.w == 0 or r.h == 0:
        return px
    frames = []
    for frame in px.frames:
        out = frame.copy()
        out[r.y:r.y + r.h, r.x:r.x + r.w] = 0
        frames.append(_frozen(out))
    return PixelMatrix(px.rows, px.cols, px.bits_allocated, px.samples_per_pixel, tuple(frames), px.planar)


def encode_pixels(ds: DataSet, px: PixelMatrix) -> DataSet:
    """Replace the PixelData of ``ds`` with the frames of ``px``."""
    raw = b"".join(px.frame_bytes(i) for i in range(len(px.frames)))
    if len(raw) % 2:
        raw += b"\0"
    old = ds.get(PIXEL_DATA)
    vr = old.vr if old is not None else ("OW" if px.bits_allocated == 16 else "OB")
    return ds.with_elements(Element(PIXEL_DATA, vr, raw))
