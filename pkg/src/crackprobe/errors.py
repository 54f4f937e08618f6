"""Exception and warning types shared across the package."""


class CrackProbeError(Exception):
    """Base class for all errors raised by crackprobe."""


class InvalidInputError(CrackProbeError, ValueError):
    pass


class InvalidGraphError(CrackProbeError, ValueError):
    pass


class DegenerateBranchError(CrackProbeError, ValueError):
    pass


class EmptyPlanError(CrackProbeError, ValueError):
    pass


class InvalidSegmentError(CrackProbeError, ValueError):
    pass


class SchemaError(CrackProbeError, ValueError):
    pass


class InvalidLengthError(CrackProbeError, ValueError):
    pass


class InvalidLevelsError(CrackProbeError, ValueError):
    pass


class InsufficientDataError(CrackProbeError, ValueError):
    pass


class DimensionMismatchError(CrackProbeError, ValueError):
    pass


class ModelFormatError(CrackProbeError, ValueError):
    pass


class WidthUndefinedError(CrackProbeError, ValueError):
    """P channel shows no usable slope; usually a classifier false positive."""


class ConfigError(CrackProbeError, ValueError):
    pass


class DegenerateHistogramWarning(UserWarning):
    """Raised by binarize when the image has a single intensity."""


class NoCrackCandidateWarning(UserWarning):
    """Raised when no contour survives and the object mask is empty."""


class NoCrackCandidateError(CrackProbeError):
    """The image holds nothing that could be a crack."""
