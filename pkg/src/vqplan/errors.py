"""Exception types shared across the package."""


class VqplanError(Exception):
    """Base class for all package errors."""


class ContractError(VqplanError):
    """A caller violated a documented precondition."""


class ShapeError(ContractError):
    """Array dimensions do not match what an operation requires."""


class NonFiniteError(VqplanError):
    """A NaN or Inf appeared where only finite values are allowed."""


class ConfigError(VqplanError):
    """An experiment configuration is malformed or inconsistent."""

    exit_code = 2


class ArtifactMismatchError(VqplanError):
    """A stored artifact does not match the configuration consuming it."""

    exit_code = 3
