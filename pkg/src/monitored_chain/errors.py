"""Exception types shared across backends and drivers."""


class MonitoredChainError(Exception):
    """Base class for all package errors."""


class ConfigError(MonitoredChainError):
    """Invalid simulation parameters or plan file."""


class UnsupportedModelError(MonitoredChainError):
    """Backend asked to simulate dynamics outside its exact manifold."""


class DegenerateProjectionError(MonitoredChainError):
    """Projection onto an outcome whose Born probability is numerically zero."""


class TruncationFailureError(MonitoredChainError):
    """Bond dimension cap reached while discarding more weight than allowed."""


class BackendInconsistencyError(MonitoredChainError):
    """Replay produced Born probabilities incompatible with the logged record."""


class InvalidStateError(MonitoredChainError):
    """State violates a structural invariant (norm, spectrum range, trace)."""
