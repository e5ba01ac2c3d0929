"""On-demand DICOM de-identification: filter, scrub and anonymize at scale."""

__version__ = "0.1.0"
