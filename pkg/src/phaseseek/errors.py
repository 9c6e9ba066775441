"""Exception taxonomy shared across the package.

Feature-file problems get distinct classes so callers (and the CLI exit-code
mapping) can tell a malformed file from a short read from bad payload values.
"""


class PhaseseekError(Exception):
    """Base class for all errors raised by this package."""


class FeatureFileError(PhaseseekError):
    """A feature file could not be read or written."""


class BadMagicError(FeatureFileError):
    """File does not start with the expected magic bytes."""


class BadVersionError(FeatureFileError):
    """File declares a format version this reader does not understand."""


class TruncatedError(FeatureFileError):
    """File ends before the payload declared in its header."""


class NonFiniteError(PhaseseekError):
    """A feature matrix contains NaN or infinite entries."""


class LabelsFileError(PhaseseekError):
    """A label CSV is malformed or does not cover every clip exactly once."""


class NonContiguousPhaseError(PhaseseekError):
    """A phase occupies two or more disjoint runs of clips."""
