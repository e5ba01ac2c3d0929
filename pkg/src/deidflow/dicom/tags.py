"""Tags, value representations and the small data dictionary the pipeline needs.

Only attributes that rules, tests or the anonymizer profile touch are named.
Everything else is addressed numerically and read as ``UN`` under implicit VR.
"""

from __future__ import annotations

import re
from typing import NamedTuple


class Tag(NamedTuple):
    group: int
    element: int

    @property
    def is_private(self) -> bool:
        return bool(self.group & 1)

    @property
    def is_group_length(self) -> bool:
        return self.element == 0

    def __str__(self) -> str:
        return f"({self.group:04X},{self.element:04X})"

    @classmethod
    def parse(cls, text: str) -> "Tag":
        """Parse ``(GGGG,EEEE)`` or ``GGGGEEEE``."""
        m = _TAG_RE.fullmatch(text.strip())
        if not m:
            raise ValueError(f"not a tag: {text!r}")
        return cls(int(m.group(1), 16), int(m.group(2), 16))


_TAG_RE = re.compile(r"\(?\s*([0-9A-Fa-f]{4})\s*,?\s*([0-9A-Fa-f]{4})\s*\)?")

PIXEL_DATA = Tag(0x7FE0, 0x0010)
ITEM = Tag(0xFFFE, 0xE000)
ITEM_DELIMITER = Tag(0xFFFE, 0xE00D)
SEQUENCE_DELIMITER = Tag(0xFFFE, 0xE0DD)

# VRs encoded with 2 reserved bytes and a 32-bit length in explicit VR.
LONG_VRS = frozenset({"OB", "OD", "OF", "OL", "OV", "OW", "SQ", "SV", "UC", "UN", "UR", "UT", "UV"})
TEXT_VRS = frozenset({
    "AE", "AS", "CS", "DA", "DS", "DT", "IS", "LO", "LT", "PN", "SH", "ST", "TM", "UC", "UI", "UR", "UT",
})
KNOWN_VRS = LONG_VRS | TEXT_VRS | frozenset({"AT", "FD", "FL", "SL", "SS", "UL", "US"})

# (group, element, VR, keyword)
_DICTIONARY = [
    (0x0002, 0x0000, "UL", "FileMetaInformationGroupLength"),
    (0x0002, 0x0001, "OB", "FileMetaInformationVersion"),
    (0x0002, 0x0002, "UI", "MediaStorageSOPClassUID"),
    (0x0002, 0x0003, "UI", "MediaStorageSOPInstanceUID"),
    (0x0002, 0x0010, "UI", "TransferSyntaxUID"),
    (0x0002, 0x0012, "UI", "ImplementationClassUID"),
    (0x0002, 0x0013, "SH", "ImplementationVersionName"),
    (0x0008, 0x0005, "CS", "SpecificCharacterSet"),
    (0x0008, 0x0008, "CS", "ImageType"),
    (0x0008, 0x0012, "DA", "InstanceCreationDate"),
    (0x0008, 0x0013, "TM", "InstanceCreationTime"),
    (0x0008, 0x0014, "UI", "InstanceCreatorUID"),
    (0x0008, 0x0016, "UI", "SOPClassUID"),
    (0x0008, 0x0018, "UI", "SOPInstanceUID"),
    (0x0008, 0x0020, "DA", "StudyDate"),
    (0x0008, 0x0021, "DA", "SeriesDate"),
    (0x0008, 0x0022, "DA", "AcquisitionDate"),
    (0x0008, 0x0023, "DA", "ContentDate"),
    (0x0008, 0x002A, "DT", "AcquisitionDateTime"),
    (0x0008, 0x0030, "TM", "StudyTime"),
    (0x0008, 0x0031, "TM", "SeriesTime"),
    (0x0008, 0x0032, "TM", "AcquisitionTime"),
    (0x0008, 0x0033, "TM", "ContentTime"),
    (0x0008, 0x0050, "SH", "AccessionNumber"),
    (0x0008, 0x0060, "CS", "Modality"),
    (0x0008, 0x0064, "CS", "ConversionType"),
    (0x0008, 0x0068, "CS", "PresentationIntentType"),
    (0x0008, 0x0070, "LO", "Manufacturer"),
    (0x0008, 0x0080, "LO", "InstitutionName"),
    (0x0008, 0x0081, "ST", "InstitutionAddress"),
    (0x0008, 0x0090, "PN", "ReferringPhysicianName"),
    (0x0008, 0x0092, "ST", "ReferringPhysicianAddress"),
    (0x0008, 0x0094, "SH", "ReferringPhysicianTelephoneNumbers"),
    (0x0008, 0x1010, "SH", "StationName"),
    (0x0008, 0x1030, "LO", "StudyDescription"),
    (0x0008, 0x103E, "LO", "SeriesDescription"),
    (0x0008, 0x1040, "LO", "InstitutionalDepartmentName"),
    (0x0008, 0x1048, "PN", "PhysiciansOfRecord"),
    (0x0008, 0x1050, "PN", "PerformingPhysicianName"),
    (0x0008, 0x1060, "PN", "NameOfPhysiciansReadingStudy"),
    (0x0008, 0x1070, "PN", "OperatorsName"),
    (0x0008, 0x1080, "LO", "AdmittingDiagnosesDescription"),
    (0x0008, 0x1090, "LO", "ManufacturerModelName"),
    (0x0008, 0x1110, "SQ", "ReferencedStudySequence"),
    (0x0008, 0x1111, "SQ", "ReferencedPerformedProcedureStepSequence"),
    (0x0008, 0x1120, "SQ", "ReferencedPatientSequence"),
    (0x0008, 0x1140, "SQ", "ReferencedImageSequence"),
    (0x0008, 0x1150, "UI", "ReferencedSOPClassUID"),
    (0x0008, 0x1155, "UI", "ReferencedSOPInstanceUID"),
    (0x0008, 0x2111, "ST", "DerivationDescription"),
    (0x0010, 0x0010, "PN", "PatientName"),
    (0x0010, 0x0020, "LO", "PatientID"),
    (0x0010, 0x0021, "LO", "IssuerOfPatientID"),
    (0x0010, 0x0030, "DA", "PatientBirthDate"),
    (0x0010, 0x0032, "TM", "PatientBirthTime"),
    (0x0010, 0x0040, "CS", "PatientSex"),
    (0x0010, 0x1000, "LO", "OtherPatientIDs"),
    (0x0010, 0x1001, "PN", "OtherPatientNames"),
    (0x0010, 0x1010, "AS", "PatientAge"),
    (0x0010, 0x1020, "DS", "PatientSize"),
    (0x0010, 0x1030, "DS", "PatientWeight"),
    (0x0010, 0x1040, "LO", "PatientAddress"),
    (0x0010, 0x1060, "PN", "PatientMotherBirthName"),
    (0x0010, 0x2154, "SH", "PatientTelephoneNumbers"),
    (0x0010, 0x2160, "SH", "EthnicGroup"),
    (0x0010, 0x4000, "LT", "PatientComments"),
    (0x0012, 0x0062, "CS", "PatientIdentityRemoved"),
    (0x0012, 0x0063, "LO", "DeidentificationMethod"),
    (0x0018, 0x0015, "CS", "BodyPartExamined"),
    (0x0018, 0x0050, "DS", "SliceThickness"),
    (0x0018, 0x0060, "DS", "KVP"),
    (0x0018, 0x1000, "LO", "DeviceSerialNumber"),
    (0x0018, 0x1020, "LO", "SoftwareVersions"),
    (0x0018, 0x1030, "LO", "ProtocolName"),
    (0x0018, 0x5100, "CS", "PatientPosition"),
    (0x0020, 0x000D, "UI", "StudyInstanceUID"),
    (0x0020, 0x000E, "UI", "SeriesInstanceUID"),
    (0x0020, 0x0010, "SH", "StudyID"),
    (0x0020, 0x0011, "IS", "SeriesNumber"),
    (0x0020, 0x0013, "IS", "InstanceNumber"),
    (0x0020, 0x0032, "DS", "ImagePositionPatient"),
    (0x0020, 0x0037, "DS", "ImageOrientationPatient"),
    (0x0020, 0x0052, "UI", "FrameOfReferenceUID"),
    (0x0020, 0x4000, "LT", "ImageComments"),
    (0x0028, 0x0002, "US", "SamplesPerPixel"),
    (0x0028, 0x0004, "CS", "PhotometricInterpretation"),
    (0x0028, 0x0006, "US", "PlanarConfiguration"),
    (0x0028, 0x0008, "IS", "NumberOfFrames"),
    (0x0028, 0x0010, "US", "Rows"),
    (0x0028, 0x0011, "US", "Columns"),
    (0x0028, 0x0030, "DS", "PixelSpacing"),
    (0x0028, 0x0100, "US", "BitsAllocated"),
    (0x0028, 0x0101, "US", "BitsStored"),
    (0x0028, 0x0102, "US", "HighBit"),
    (0x0028, 0x0103, "US", "PixelRepresentation"),
    (0x0028, 0x0301, "CS", "BurnedInAnnotation"),
    (0x0028, 0x1050, "DS", "WindowCenter"),
    (0x0028, 0x1051, "DS", "WindowWidth"),
    (0x0028, 0x1052, "DS", "RescaleIntercept"),
    (0x0028, 0x1053, "DS", "RescaleSlope"),
    (0x0032, 0x1032, "PN", "RequestingPhysician"),
    (0x0032, 0x1060, "LO", "RequestedProcedureDescription"),
    (0x0040, 0x0244, "DA", "PerformedProcedureStepStartDate"),
    (0x0040, 0x0253, "SH", "PerformedProcedureStepID"),
    (0x0040, 0x0275, "SQ", "RequestAttributesSequence"),
    (0x0040, 0x1001, "SH", "RequestedProcedureID"),
    (0x0040, 0xA730, "SQ", "ContentSequence"),
    (0x0042, 0x0011, "OB", "EncapsulatedDocument"),
    (0x7FE0, 0x0010, "OW", "PixelData"),
]

VR_BY_TAG: dict[Tag, str] = {Tag(g, e): vr for g, e, vr, _ in _DICTIONARY}
KEYWORD_BY_TAG: dict[Tag, str] = {Tag(g, e): kw for g, e, _, kw in _DICTIONARY}
TAG_BY_KEYWORD: dict[str, Tag] = {kw: Tag(g, e) for g, e, _, kw in _DICTIONARY}
_TAG_BY_KEYWORD_LOWER = {kw.lower(): t for kw, t in TAG_BY_KEYWORD.items()}


def lookup_vr(tag: Tag) -> str:
    """VR used when reading implicit-VR data; unknown tags become ``UN``."""
    if tag.element == 0:
        return "UL"
    if tag.is_private and 0x0010 <= tag.element <= 0x00FF:
        return "LO"  # private creator
    return VR_BY_TAG.get(tag, "UN")


def resolve_attribute(name: str) -> Tag:
    """Resolve a keyword alias (case-insensitive) or a literal ``(GGGG,EEEE)``."""
    tag = _TAG_BY_KEYWORD_LOWER.get(name.lower())
    if tag is not None:
        return tag
    return Tag.parse(name)


def keyword(tag: Tag) -> str:
    return KEYWORD_BY_TAG.get(tag, str(tag))


# Transfer syntaxes.
IMPLICIT_VR_LE = "1.2.840.10008.1.2"
EXPLICIT_VR_LE = "1.2.840.10008.1.2.1"
SUPPORTED_SYNTAXES = frozenset({IMPLICIT_VR_LE, EXPLICIT_VR_LE})
JPEG_LOSSLESS_SV1 = "1.2.840.10008.1.2.4.70"

# SOP classes referenced by the shipped rules, the corpus and tests.
CT_IMAGE_STORAGE = "1.2.840.10008.5.1.4.1.1.2"
PET_IMAGE_STORAGE = "1.2.840.10008.5.1.4.1.1.128"
US_IMAGE_STORAGE = "1.2.840.10008.5.1.4.1.1.6.1"
US_MULTIFRAME_STORAGE = "1.2.840.10008.5.1.4.1.1.3.1"
DX_IMAGE_STORAGE = "1.2.840.10008.5.1.4.1.1.1.1"
CR_IMAGE_STORAGE = "1.2.840.10008.5.1.4.1.1.1"
SECONDARY_CAPTURE_STORAGE = "1.2.840.10008.5.1.4.1.1.7"
ENCAPSULATED_PDF_STORAGE = "1.2.840.10008.5.1.4.1.1.104.1"
BASIC_TEXT_SR_STORAGE = "1.2.840.10008.5.1.4.1.1.88.11"
ENHANCED_SR_STORAGE = "1.2.840.10008.5.1.4.1.1.88.22"
GRAYSCALE_PRESENTATION_STATE = "1.2.840.10008.5.1.4.1.1.11.1"
RAW_DATA_STORAGE = "1.2.840.10008.5.1.4.1.1.66"
VIDEO_ENDOSCOPIC_STORAGE = "1.2.840.10008.5.1.4.1.1.77.1.1.1"
VIDEO_PHOTOGRAPHIC_STORAGE = "1.2.840.10008.5.1.4.1.1.77.1.4.1"
