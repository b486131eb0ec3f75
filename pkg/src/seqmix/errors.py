"""Exception types shared across the package."""


class SeqmixError(Exception):
    """Base class for all package errors."""


class DimensionError(SeqmixError, ValueError):
    """Tensor shapes do not satisfy the operation's contract."""


class ContractError(SeqmixError, ValueError):
    """A precondition of an operation was violated."""


class ParameterError(SeqmixError, ValueError):
    """A numeric or configuration parameter is out of range."""


class ParseError(SeqmixError, ValueError):
    """An input file does not match the expected format."""


class ConfigError(SeqmixError, ValueError):
    """A run configuration is invalid (unknown key, bad type, missing value)."""


class TrainingAbort(SeqmixError, RuntimeError):
    """Training hit a non-recoverable numeric failure."""
