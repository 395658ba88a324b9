"""Exception types shared across the package.

The CLI maps these onto exit codes: usage problems exit 1, data and
configuration problems exit 2, runtime failures (divergence, failed
gradient checks) exit 3.
"""


class SpillnetError(Exception):
    """Base class for all package errors."""


class ContractError(SpillnetError):
    """A caller violated an operation's precondition."""


class DimensionError(SpillnetError):
    """Array shapes are incompatible for the requested operation."""


class DataError(SpillnetError):
    """A dataset file is malformed, inconsistent, or incomplete."""


class ConfigError(SpillnetError):
    """A configuration file or synthetic-data spec is invalid."""


class WindowError(SpillnetError):
    """Not enough history to build a lookback window for the requested day."""


class MetricUndefinedError(SpillnetError):
    """A metric has no defined value on the given inputs."""


class TrainingDivergedError(SpillnetError):
    """Training produced a non-finite loss."""
