"""DICOM Part-10 parsing, serialization and native pixel access."""

from .dataset import DataSet, Element, as_tag
from .errors import (
    DicomError,
    InconsistentDimensions,
    MalformedFile,
    MissingPixelData,
    RectOutOfBounds,
    UnsupportedEncoding,
    UnsupportedTransferSyntax,
)
from .io import parse_file, read_file_meta, scan_header, write_file
from .pixels import PixelMatrix, Rect, blank_region, decode_pixels, encode_pixels
from .tags import EXPLICIT_VR_LE, IMPLICIT_VR_LE, Tag, keyword, resolve_attribute

__all__ = [
    "DataSet", "Element", "as_tag", "Tag", "keyword", "resolve_attribute",
    "EXPLICIT_VR_LE", "IMPLICIT_VR_LE",
    "parse_file", "write_file", "read_file_meta", "scan_header",
    "PixelMatrix", "Rect", "decode_pixels", "blank_region", "encode_pixels",
    "DicomError", "MalformedFile", "UnsupportedEncoding", "UnsupportedTransferSyntax",
    "MissingPixelData", "InconsistentDimensions", "RectOutOfBounds",
]
