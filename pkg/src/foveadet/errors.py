"""Exception hierarchy shared by all pipeline stages."""


class FoveaError(Exception):
    """Base class for every error raised by this package."""


class ConfigError(FoveaError, ValueError):
    """Invalid configuration, calibration or input file."""


class FrameMismatchError(FoveaError, ValueError):
    """Two transforms were chained whose frame labels do not line up."""


class BehindCameraError(FoveaError, ValueError):
    """A point at or behind the camera plane cannot be projected."""


class PathError(FoveaError, ValueError):
    """Empty or badly spaced waypoint path."""


class BackendUnavailableError(FoveaError, RuntimeError):
    """The detector backend cannot serve a request."""


class ReplayFormatError(FoveaError, ValueError):
    """A replay file does not follow the expected layout."""


class OutOfCropError(FoveaError, ValueError):
    """A region-local box does not fit inside its crop."""


class DuplicateSourceError(FoveaError, ValueError):
    """The same source index appears twice when building a detection matrix."""
