"""Exception hierarchy shared across the engine."""

from __future__ import annotations


class PatchdexError(Exception):
    """Base class for all engine errors."""


class FormatError(PatchdexError):
    """A binary file violates its on-disk contract."""


class BadMagicError(FormatError):
    """The file does not start with the expected magic bytes."""


class UnsupportedVersionError(FormatError):
    """The file carries a format version this reader does not understand."""


class InvalidHeaderError(FormatError):
    """A header field is out of range (e.g. a zero dimension)."""


class TruncatedFileError(FormatError):
    """The file ends before the declared payload is complete."""


class NonFiniteValueError(PatchdexError):
    """A NaN or infinity was found where only finite values are allowed."""

    def __init__(self, message: str, index: int | None = None):
        super().__init__(message)
        self.index = index


class ManifestError(PatchdexError):
    """A dataset manifest is malformed or inconsistent."""


class DimensionMismatchError(PatchdexError):
    """Two vectors or codes that must agree in length do not."""


class DegenerateTrainingSetError(PatchdexError):
    """Whitening cannot be fitted because the training data has no spread."""


class EmptySetError(PatchdexError):
    """An operation that needs at least one element received none."""


class MissingLabelError(PatchdexError):
    """A ranked reference has no relevance label."""


class ConfigError(PatchdexError):
    """An unknown or contradictory pipeline configuration was requested."""
