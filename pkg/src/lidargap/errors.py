"""Exception types shared across the toolkit."""


class ToolkitError(Exception):
    """Base class for all errors raised by this package."""


class FormatError(ToolkitError):
    """A file does not conform to its on-disk format.

    `offset` is the byte offset at which decoding failed, when known.
    """

    def __init__(self, message: str, offset: int | None = None):
        super().__init__(message)
        self.offset = offset


class ValidationError(ToolkitError):
    """Data violates a type invariant (non-finite coordinate, bad dims, ...)."""


class OutOfRangeError(ToolkitError):
    """A target lies beyond the configured detection range."""

    def __init__(self, message: str, distance: float | None = None):
        super().__init__(message)
        self.distance = distance


class TrajectorySpanError(ToolkitError):
    """A query time lies outside the trajectory's sampled span."""


class ConfigurationError(ToolkitError):
    """Invalid configuration (empty mesh, bad rig, unknown config key, ...)."""


class PairingError(ToolkitError):
    """Two manifests share no frame ids, or a required pairing is empty."""


class EmptyCloudError(ToolkitError):
    """An operation that needs a non-empty point cloud received an empty one."""


class EvaluationError(ToolkitError):
    """Evaluation inputs are inconsistent (missing frames, zero ground truth)."""
