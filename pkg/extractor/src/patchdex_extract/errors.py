"""Exception types raised by the extractor."""


class ExtractorError(Exception):
    """Base class for all extractor failures."""


class ConfigError(ExtractorError):
    """An extraction configuration is malformed or inconsistent."""


class ImageError(ExtractorError):
    """An input image is missing, unreadable, or degenerate."""


class ManifestError(ExtractorError):
    """A dataset manifest is missing required fields or malformed."""
