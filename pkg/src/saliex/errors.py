"""Exception hierarchy shared across the package."""


class SaliexError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(SaliexError):
    """A configuration value violates its documented constraint."""


class DegenerateEmbeddingError(SaliexError):
    """An embedding was zero before normalization (e.g. an all-black input)."""


class TransportError(SaliexError):
    """Communication with an external embedding process or socket failed."""


class FormatError(SaliexError):
    """A file did not conform to its expected on-disk format."""
