"""Exception hierarchy shared across the package."""


class GridplanError(Exception):
    """Base class for all errors raised by gridplan."""


class NetworkError(GridplanError):
    """Malformed network description or parameter data."""


class ScenarioError(GridplanError):
    """Time-series parsing or scenario construction failure."""


class DispatchError(GridplanError):
    """Dispatch problem could not be assembled or solved."""


class SensitivityError(GridplanError):
    """Implicit differentiation failed (singular system, bad solution)."""


class CheckpointError(GridplanError):
    """Checkpoint file is corrupt, incompatible, or unreadable."""


class FingerprintError(GridplanError):
    """Checkpoint does not match the study it is applied to."""
