class DicomError(Exception):
    """Base class for everything raised by :mod:`deidflow.dicom`."""


class MalformedFile(DicomError):
    pass


class UnsupportedEncoding(DicomError):
    """Compressed or otherwise non-native encodings the pipeline refuses to touch."""


class UnsupportedTransferSyntax(UnsupportedEncoding):
    def __init__(self, uid: str):
        super().__init__(f"unsupported transfer syntax {uid}")
        self.uid = uid


class MissingPixelData(DicomError):
    pass


class InconsistentDimensions(DicomError):
    pass


class RectOutOfBounds(DicomError, ValueError):
    pass
