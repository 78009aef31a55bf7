"""Package-specific exceptions."""


class CapacityError(RuntimeError):
    """Raised when an operation would materialize more data than its cap allows."""
