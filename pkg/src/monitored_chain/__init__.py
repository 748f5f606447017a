"""Quantum-trajectory simulator for monitored fermionic chains.

Three interchangeable backends (exact statevector, free-fermion
correlation matrix, MPS/TEBD) drive the same measurement protocol and are
cross-validated against each other; diagnostics cover entanglement
profiles, natural-orbital spectra, non-Gaussianity and the occupation gap.
"""

__version__ = "0.1.0"

from .errors import (
    BackendInconsistencyError,
    ConfigError,
    DegenerateProjectionError,
    InvalidStateError,
    MonitoredChainError,
    TruncationFailureError,
    UnsupportedModelError,
)
from .model import ChainSpec

__all__ = [
    "ChainSpec",
    "MonitoredChainError",
    "ConfigError",
    "UnsupportedModelError",
    "DegenerateProjectionError",
    "TruncationFailureError",
    "BackendInconsistencyError",
    "InvalidStateError",
    "__version__",
]
