"""Small numerical helpers shared by the backends."""

from __future__ import annotations

import numpy as np

from .errors import InvalidStateError


def clean_probabilities(probs: np.ndarray, atol: float = 1e-12) -> np.ndarray:
    """Real parts of Born probabilities with tiny negative values clamped to 0.

    Values below -atol indicate a genuinely broken state and raise.
    """
    p = np.real(np.asarray(probs, dtype=complex)).astype(float)
    if np.any(p < -atol):
        raise InvalidStateError(f"negative Born probability {p.min():.3e}")
    p[p < 0.0] = 0.0
    return p


def born_select(probs: np.ndarray, draw: float) -> int:
    """Pick an outcome index by cumulative Born probabilities.

    ``draw`` is uniform in [0, 1).  Falls back to the last outcome with
    non-zero probability when rounding pushes the cumulative sum below 1.
    """
    cum = 0.0
    for k, p in enumerate(probs):
        cum += p
        if draw < cum:
            return k
    nonzero = np.nonzero(probs)[0]
    if len(nonzero) == 0:
        raise InvalidStateError("all outcome probabilities vanish")
    return int(nonzero[-1])


def entropy_from_squared_schmidt(weights: np.ndarray, floor: float = 1e-12) -> float:
    """Von Neumann entropy -sum w log w (natural log) with a 0 log 0 branch.

    Weights within ``floor`` of 0 or 1 contribute exactly zero, so pinned
    product states report an entropy of exactly 0.0.
    """
    w = np.asarray(weights, dtype=float)
    w = w[(w > floor) & (w < 1.0 - floor)]
    if w.size == 0:
        return 0.0
    return float(-np.dot(w, np.log(w)))


def binary_entropy(nu: np.ndarray, floor: float = 1e-12) -> np.ndarray:
    """H2(nu) = -nu log nu - (1-nu) log(1-nu), elementwise, natural log.

    Occupations within ``floor`` of 0 or 1 contribute exactly zero, which
    absorbs eigenvalue noise at the edges of the spectrum.
    """
    nu = np.clip(np.asarray(nu, dtype=float), 0.0, 1.0)
    out = np.zeros_like(nu)
    inner = (nu > floor) & (nu < 1.0 - floor)
    x = nu[inner]
    out[inner] = -x * np.log(x) - (1.0 - x) * np.log(1.0 - x)
    return out
