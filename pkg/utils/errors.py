"""Exception taxonomy shared by every package.

Each error also derives from the closest builtin so callers that only know
about ``ValueError`` or ``IndexError`` still catch it.
"""


class LabError(Exception):
    """Base class for all sdd-lab errors."""


class ConfigError(LabError, ValueError):
    """Invalid configuration value or unknown configuration key."""


class DimensionError(LabError, ValueError):
    """Tensor extents do not agree."""


class ContractError(LabError, RuntimeError):
    """An API precondition was violated by the caller."""


class NonFiniteError(LabError, FloatingPointError):
    """An operation produced NaN or Inf from finite inputs."""


class FormatError(LabError, ValueError):
    """A binary or text input file does not match its format."""

    def __init__(self, message: str, offset: int | None = None):
        super().__init__(message if offset is None else f"{message} (byte offset {offset})")
        self.offset = offset


class LabelIndexError(LabError, IndexError):
    """A class label lies outside [0, K)."""


class TerminalPruneError(LabError, RuntimeError):
    """Pruning was requested but no prunable weight survives."""


class CheckpointError(LabError, RuntimeError):
    """A checkpoint file is missing, truncated or fails its checksum."""

    def __init__(self, path, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


class RunStateError(LabError, RuntimeError):
    """A run directory is missing required state or is inconsistent."""
