"""Exception types shared across the package."""


class StreamGateError(Exception):
    """Base class for all streamgate errors."""


class ConfigError(StreamGateError):
    """Invalid parameter, shape, or option combination."""


class StateError(StreamGateError):
    """Streaming session buffers used out of order."""
