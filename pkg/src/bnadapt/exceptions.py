"""Exception types shared across the package."""


class BnAdaptError(Exception):
    """Base class for all package-specific errors."""


class ShapeError(BnAdaptError, ValueError):
    """Operand dimensions are incompatible."""


class NumericError(BnAdaptError, ArithmeticError):
    """A computation produced or received non-finite values."""


class EmptyBatchError(BnAdaptError, ValueError):
    """An operation that needs at least one row received none."""


class NonScalarLossError(BnAdaptError, ValueError):
    """backward() was asked to differentiate a non-scalar node."""


class InvalidProbabilityError(BnAdaptError, ValueError):
    """A prediction batch violates the rows-sum-to-one contract."""


class AbortSampleError(BnAdaptError):
    """A single adaptation step went numerically bad; the model was left unchanged."""


class StreamExhaustedError(BnAdaptError, ValueError):
    """The sample stream is shorter than the configured stage lengths."""


class EmptyReportError(BnAdaptError, ValueError):
    """A report writer received a report with no records."""


class ConfigError(BnAdaptError, ValueError):
    """A run config file could not be parsed or has an invalid value."""


class MissingArtifactError(BnAdaptError, FileNotFoundError):
    """A required input file (dataset, checkpoint) does not exist."""


class CheckpointFormatError(BnAdaptError, ValueError):
    """Base class for checkpoint file format violations."""


class CheckpointMagicError(CheckpointFormatError):
    """The file does not start with the expected magic bytes."""


class CheckpointVersionError(CheckpointFormatError):
    """The file's format version is not supported."""


class CheckpointTruncatedError(CheckpointFormatError):
    """The file ended in the middle of a tensor record."""
