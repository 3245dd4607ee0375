"""Exception types shared across the package."""


class ConfigurationError(ValueError):
    """Invalid geometry, schedule, or run configuration.

    ``keys`` optionally names the offending config keys so the CLI can
    report them all at once.
    """

    def __init__(self, message, keys=()):
        super().__init__(message)
        self.keys = tuple(keys)


class UsageError(ValueError):
    """An operation was called outside its contract (bad argument)."""


class ResourceError(RuntimeError):
    """A computation exceeds a hard resource cap (e.g. dense state space)."""
