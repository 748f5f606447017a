"""Correlation-matrix backend for the free chain with occupation measurements.

Occupation measurements are quadratic, so a U=0 trajectory never leaves the
manifold of fermionic Gaussian pure states and is fully described by the
L x L matrix C_kl = <c+_k c_l>.  Current measurements are rejected: the
degenerate J=0 eigenspace projects superpositions of Slater determinants
out of the Gaussian manifold.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, InvalidStateError, UnsupportedModelError
from .util import born_select, clean_probabilities


@dataclass(frozen=True)
class GaussianPureState:
    """Pure Gaussian state stored as its one-body correlation matrix."""

    C: np.ndarray

    def __post_init__(self):
        if self.C.ndim != 2 or self.C.shape[0] != self.C.shape[1]:
            raise InvalidStateError("correlation matrix must be square")
        if np.max(np.abs(self.C - self.C.conj().T)) > 1e-10:
            raise InvalidStateError("correlation matrix is not Hermitian")

    @property
    def L(self) -> int:
        return self.C.shape[0]

    def particle_number(self) -> float:
        return float(np.real(np.trace(self.C)))


def product_state(pattern) -> GaussianPureState:
    """Slater determinant with definite site occupations."""
    return GaussianPureState(C=np.diag(np.asarray(pattern, dtype=float)).astype(complex))


def neel_state(L: int) -> GaussianPureState:
    pattern = np.zeros(L)
    pattern[0::2] = 1.0
    return product_state(pattern)


def single_particle_hamiltonian(L: int) -> np.ndarray:
    """Hopping matrix h_kl = -1/2 (delta_{k,l+1} + delta_{k+1,l}) of the open chain."""
    h = np.zeros((L, L))
    for k in range(L - 1):
        h[k, k + 1] = -0.5
        h[k + 1, k] = -0.5
    return h


def propagate(state: GaussianPureState, t: float, U: float = 0.0) -> GaussianPureState:
    """Evolve C under the free chain for time t: C -> e^{iht} C e^{-iht}.

    The sign convention is pinned by requiring site occupations to match the
    exact statevector evolution (C_00(t) = cos^2(t/2) for L=2 from (1,0)).
    """
    if U != 0.0:
        raise UnsupportedModelError("Gaussian backend requires U = 0")
    h = single_particle_hamiltonian(state.L)
    eigvals, V = np.linalg.eigh(h)
    phases = np.exp(1j * eigvals * t)
    W = (V * phases) @ V.conj().T
    return GaussianPureState(C=W @ state.C @ W.conj().T)


def bond_rotation_matrix(tau: float) -> np.ndarray:
    """Single-particle action of the two-site hopping gate exp(-i h_bond tau).

    C transforms as C -> W C W+ with W = exp(+i h_block tau); for the real
    symmetric hopping block this is cos(tau/2) I - i sin(tau/2) sigma_x.
    """
    c, s = np.cos(tau / 2.0), np.sin(tau / 2.0)
    return np.array([[c, -1j * s], [-1j * s, c]], dtype=complex)


def apply_bond_rotation(state: GaussianPureState, bond: int, tau: float) -> GaussianPureState:
    """Conjugate C by the 2x2 hopping rotation embedded at (bond, bond+1).

    Mirrors one Trotter gate of the statevector backend exactly, so shared
    measurement records replay across backends without Trotter mismatch.
    """
    if not 0 <= bond < state.L - 1:
        raise ConfigError(f"bond {bond} out of range for L={state.L}")
    C = state.C.copy()
    idx = [bond, bond + 1]
    R = bond_rotation_matrix(tau)
    C[idx, :] = R @ C[idx, :]
    C[:, idx] = C[:, idx] @ R.conj().T
    return GaussianPureState(C=C)


def occupation_probabilities(state: GaussianPureState, j: int) -> np.ndarray:
    """Probabilities (p_empty, p_occupied) of measuring n_j."""
    p1 = float(np.real(state.C[j, j]))
    if p1 < -1e-10 or p1 > 1.0 + 1e-10:
        raise InvalidStateError(f"diagonal occupation {p1} outside [0,1]")
    p1 = min(max(p1, 0.0), 1.0)
    return clean_probabilities(np.array([1.0 - p1, p1]))


def _project_occupation(C: np.ndarray, j: int, outcome: int) -> np.ndarray:
    denom = np.real(C[j, j]) if outcome == 1 else 1.0 - np.real(C[j, j])
    col = C[:, j].copy()
    row = C[j, :].copy()
    if outcome == 1:
        Cp = C - np.outer(col, row) / denom
    else:
        Cp = C + np.outer(col, row) / denom
    Cp[j, :] = 0.0
    Cp[:, j] = 0.0
    Cp[j, j] = float(outcome)
    return Cp


def measure_occupation(
    state: GaussianPureState, j: int, random_draw: float
) -> tuple[int, GaussianPureState]:
    """Measure n_j, collapse C, and return (outcome, new state).

    If the sampled outcome has probability below 1e-12 the complementary
    outcome is taken deterministically instead of dividing by ~0.
    """
    probs = occupation_probabilities(state, j)
    outcome = born_select(probs, random_draw)
    if probs[outcome] < 1e-12:
        outcome = 1 - outcome
    return outcome, GaussianPureState(C=_project_occupation(state.C, j, outcome))


def apply_occupation_outcome(
    state: GaussianPureState, j: int, outcome: int
) -> tuple[GaussianPureState, float]:
    """Project onto a known outcome (replay path); returns (state', probability)."""
    probs = occupation_probabilities(state, j)
    prob = float(probs[outcome])
    if prob < 1e-12:
        raise InvalidStateError(
            f"replayed occupation outcome {outcome} at site {j} has probability {prob:.3e}"
        )
    return GaussianPureState(C=_project_occupation(state.C, j, outcome)), prob


def purity_check(state: GaussianPureState) -> float:
    """Max deviation of C from idempotency; ~0 along pure Gaussian trajectories."""
    C = state.C
    return float(np.max(np.abs(C @ C - C)))
