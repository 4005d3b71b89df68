"""Exception types shared across the package."""


class GdtError(Exception):
    """Base class for all package-specific errors."""


class ConfigError(GdtError, ValueError):
    """Invalid configuration value (bad lambda, bad dims, bad config key)."""


class ShapeError(GdtError, ValueError):
    """Dimension mismatch between arrays, networks, or traces."""


class DegenerateVectorError(GdtError, ValueError):
    """A vector with near-zero norm where a direction is required."""

    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = index


class DataFormatError(GdtError, ValueError):
    """Malformed dataset file (CSV parse/schema problems, bad IDX payloads).

    `line` carries the 1-based offending line for text formats, when known.
    """

    def __init__(self, message, line=None):
        super().__init__(message)
        self.line = line


class TrainingDivergedError(GdtError, RuntimeError):
    """Training produced a non-finite objective or degenerate features.

    `epoch` is the 1-based epoch at which divergence was detected.
    """

    def __init__(self, message, epoch):
        super().__init__(message)
        self.epoch = epoch
