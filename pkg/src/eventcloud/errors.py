"""Exception types raised across the package."""


class EventCloudError(Exception):
    """Base class for package errors."""


class ShapeError(EventCloudError, ValueError):
    """Operand extents do not match."""


class ContractError(EventCloudError, ValueError):
    """A documented precondition was violated."""


class DegenerateBatchError(ContractError):
    """Batch statistics requested on fewer than two rows."""


class ConfigError(EventCloudError, ValueError):
    """Invalid configuration value or unknown key."""


class ParseError(EventCloudError, ValueError):
    """Malformed input record."""


class ValidationError(EventCloudError, ValueError):
    """Well-formed input that violates a domain invariant."""


class CheckpointError(EventCloudError, ValueError):
    """Checkpoint is truncated, corrupt, or belongs to another configuration."""
