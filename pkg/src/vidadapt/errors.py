"""Exception types raised across the library."""


class VidAdaptError(Exception):
    """Base class for all library errors."""


class ConfigError(VidAdaptError):
    """Invalid or inconsistent configuration."""


class IngestionError(VidAdaptError):
    """On-disk dataset missing, malformed, or undecodable."""


class SplitError(VidAdaptError):
    """Dataset cannot be split as requested."""


class SamplingError(VidAdaptError):
    """Frame-pair or epoch construction is impossible for the given clips."""


class DimensionError(VidAdaptError):
    """Tensor shape does not match the model configuration."""


class StateError(VidAdaptError):
    """Operation invoked out of order (e.g. backward before forward)."""


class NumericError(VidAdaptError):
    """Non-finite values where finite ones are required."""


class TrainingError(VidAdaptError):
    """Training aborted (e.g. non-finite loss)."""


class EvalError(VidAdaptError):
    """Evaluation invoked on unusable inputs."""


class CheckpointError(VidAdaptError):
    """Checkpoint file is missing, corrupt, or of an unsupported version."""
