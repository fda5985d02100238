"""Exception hierarchy shared across the package."""


class SpacegroundError(Exception):
    """Base class for all package errors."""


class GeometryError(SpacegroundError):
    """Invalid geometric primitive (e.g. non-positive ellipse semi-axis)."""


class DimensionMismatchError(SpacegroundError):
    """Two rasters that must share dimensions do not."""


class DegenerateHistogramError(SpacegroundError):
    """Otsu thresholding received a map whose histogram has a single populated bin."""


class EmptyMaskError(SpacegroundError):
    """An operation that needs a nonempty mask received an empty one."""


class PromptContractError(SpacegroundError):
    """Prompt construction called with arguments violating the iteration contract."""


class ResponseParseError(SpacegroundError):
    """A model response could not be parsed into the expected structure."""


class TransportError(SpacegroundError):
    """A network call failed at the transport level."""


class RetryExhaustedError(SpacegroundError):
    """A call kept failing after the configured number of attempts."""


class SchemaError(SpacegroundError):
    """A dataset manifest entry violates the sample schema."""

    def __init__(self, sample_id, field, message):
        super().__init__(f"sample {sample_id!r}, field {field!r}: {message}")
        self.sample_id = sample_id
        self.field = field


class ConfigError(SpacegroundError):
    """Run configuration is invalid or incomplete."""
