"""Exception types shared across the toolkit."""


class FwctlError(Exception):
    """Base class for all toolkit errors."""


class InvalidStateError(FwctlError):
    """A state or input vector contains non-finite values."""


class DivergenceError(FwctlError):
    """Integration produced a non-finite state.

    Carries the last valid state so callers can inspect or log it.
    """

    def __init__(self, message, last_valid_state=None):
        super().__init__(message)
        self.last_valid_state = last_valid_state


class ConfigError(FwctlError):
    """A configuration value or file is invalid."""


class LifecycleError(FwctlError):
    """An operation was called out of order (e.g. step before reset)."""


class SchemaError(FwctlError):
    """Array shapes or field layouts do not match the expected schema."""
