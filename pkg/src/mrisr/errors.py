"""Exception types shared across the package."""


class ParameterError(ValueError):
    """An argument violates a documented precondition."""


class ShapeError(ValueError):
    """Array shapes or channel counts are incompatible."""


class VolumeFormatError(IOError):
    """A volume file has a malformed or invalid header."""


class TruncatedPayloadError(IOError):
    """A volume file payload is shorter than the header promises."""


class UnsupportedEncodingError(IOError):
    """A volume file declares a scalar encoding we do not support."""


class NiftiImportError(IOError):
    """A NIfTI-1 file cannot be imported."""


class CheckpointVersionError(IOError):
    """A checkpoint file carries an unknown magic or format version."""


class CheckpointCorruptError(IOError):
    """A checkpoint file payload is truncated or inconsistent."""


class CheckpointConfigError(ValueError):
    """A checkpoint is incompatible with the requested configuration."""


class UndefinedMetricError(ValueError):
    """A metric is mathematically undefined for the given inputs."""


class TrainingDivergedError(RuntimeError):
    """Training produced a non-finite loss."""
