"""Exact statevector backend and dense Lindblad integrator.

This backend is the ground-truth oracle for the Gaussian and MPS engines.
Basis convention: the amplitude index is the occupation bitstring with
site 0 as the most significant bit, so ``psi.reshape([2]*L)`` exposes one
axis per site in chain order.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import ConfigError, DegenerateProjectionError, InvalidStateError
from .model import (
    OBSERVABLE_OCCUPATION,
    ChainSpec,
    LocalOperator,
    ProjectorSet,
    hamiltonian_bond_matrix,
    projector_set_for,
)
from .util import born_select, clean_probabilities

MAX_DENSE_SITES = 12
MAX_LINDBLAD_SITES = 8


@dataclass(frozen=True)
class DenseState:
    """Normalized many-body amplitude vector."""

    amplitudes: np.ndarray
    L: int

    def __post_init__(self):
        if self.amplitudes.shape != (2**self.L,):
            raise InvalidStateError(
                f"amplitude vector of length {self.amplitudes.shape} does not match L={self.L}"
            )
        norm = np.linalg.norm(self.amplitudes)
        if abs(norm - 1.0) > 1e-10:
            raise InvalidStateError(f"state norm {norm} deviates from 1")

    def tensor(self) -> np.ndarray:
        return self.amplitudes.reshape([2] * self.L)


@dataclass(frozen=True)
class DensityMatrix:
    """Density matrix on the full chain Hilbert space."""

    rho: np.ndarray
    L: int

    def __post_init__(self):
        dim = 2**self.L
        if self.rho.shape != (dim, dim):
            raise InvalidStateError("density matrix shape does not match L")
        if abs(np.trace(self.rho) - 1.0) > 1e-10:
            raise InvalidStateError(f"trace {np.trace(self.rho)} deviates from 1")
        if np.max(np.abs(self.rho - self.rho.conj().T)) > 1e-8:
            raise InvalidStateError("density matrix is not Hermitian")

    def validate_positive(self, tol: float = 1e-9) -> None:
        smallest = np.linalg.eigvalsh(self.rho)[0]
        if smallest < -tol:
            raise InvalidStateError(f"negative eigenvalue {smallest:.3e}")

    def purity(self) -> float:
        return float(np.real(np.trace(self.rho @ self.rho)))


def product_state(pattern) -> DenseState:
    """Computational basis state with the given occupation pattern."""
    pattern = np.asarray(pattern, dtype=int)
    L = len(pattern)
    index = 0
    for n in pattern:
        index = (index << 1) | int(n)
    amp = np.zeros(2**L, dtype=complex)
    amp[index] = 1.0
    return DenseState(amplitudes=amp, L=L)


def neel_state(L: int) -> DenseState:
    pattern = np.zeros(L, dtype=int)
    pattern[0::2] = 1
    return product_state(pattern)


def _apply_one_site(amp: np.ndarray, L: int, site: int, op: np.ndarray) -> np.ndarray:
    block = amp.reshape(2**site, 2, 2 ** (L - site - 1))
    return np.einsum("st,atb->asb", op, block).reshape(-1)


def _apply_two_site(amp: np.ndarray, L: int, bond: int, op: np.ndarray) -> np.ndarray:
    block = amp.reshape(2**bond, 4, 2 ** (L - bond - 2))
    return np.einsum("st,atb->asb", op, block).reshape(-1)


def apply_two_site_unitary(state: DenseState, bond: int, gate: LocalOperator) -> DenseState:
    """Apply a unitary two-site gate at (bond, bond+1)."""
    if not 0 <= bond < state.L - 1:
        raise ConfigError(f"bond {bond} out of range for L={state.L}")
    if not gate.is_unitary:
        raise ConfigError("gate is not unitary")
    amp = _apply_two_site(state.amplitudes, state.L, bond, gate.matrix)
    return DenseState(amplitudes=amp, L=state.L)


def _projected_vectors(state: DenseState, location: int, pset: ProjectorSet):
    amp = state.amplitudes
    out = []
    for proj in pset.projectors:
        if pset.support_size == 1:
            out.append(_apply_one_site(amp, state.L, location, proj))
        else:
            out.append(_apply_two_site(amp, state.L, location, proj))
    return out


def measurement_probabilities(state: DenseState, location: int, pset: ProjectorSet) -> np.ndarray:
    """Born probabilities of each outcome, clamped against roundoff."""
    vecs = _projected_vectors(state, location, pset)
    return clean_probabilities(np.array([np.vdot(v, v) for v in vecs]))


def projective_measure(
    state: DenseState, location: int, pset: ProjectorSet, random_draw: float
) -> tuple[str, DenseState, float]:
    """Sample an outcome by Born's rule and collapse the state.

    Returns (outcome label, post-measurement state, outcome probability).
    """
    vecs = _projected_vectors(state, location, pset)
    probs = clean_probabilities(np.array([np.vdot(v, v) for v in vecs]))
    k = born_select(probs, random_draw)
    return _collapse(state, vecs[k], probs[k], pset.labels[k])


def apply_measurement_outcome(
    state: DenseState, location: int, pset: ProjectorSet, label: str
) -> tuple[DenseState, float]:
    """Project onto a known outcome (replay path); returns (state', probability)."""
    vecs = _projected_vectors(state, location, pset)
    k = pset.index_of(label)
    prob = float(np.real(np.vdot(vecs[k], vecs[k])))
    _, new_state, prob = _collapse(state, vecs[k], prob, label)
    return new_state, prob


def _collapse(state, vec, prob, label):
    if prob < 1e-14:
        raise DegenerateProjectionError(
            f"outcome {label!r} has probability {prob:.3e}; draw and state are inconsistent"
        )
    new_amp = vec / np.sqrt(prob)
    return label, DenseState(amplitudes=new_amp, L=state.L), float(prob)


def reduced_density_matrix(state: DenseState, ell: int) -> DensityMatrix:
    """Partial trace over sites ell..L-1, keeping the leading block {0..ell-1}."""
    if not 1 <= ell < state.L:
        raise ConfigError(f"subsystem size {ell} invalid for L={state.L}")
    block = state.amplitudes.reshape(2**ell, 2 ** (state.L - ell))
    rho = block @ block.conj().T
    return DensityMatrix(rho=rho, L=ell)


def occupations(state: DenseState) -> np.ndarray:
    """Expectation values <n_j> for every site."""
    probs = np.abs(state.amplitudes) ** 2
    result = np.zeros(state.L)
    for j in range(state.L):
        block = probs.reshape(2**j, 2, 2 ** (state.L - j - 1))
        result[j] = block[:, 1, :].sum()
    return result


def total_number(state: DenseState) -> float:
    return float(occupations(state).sum())


_SIGMA_PLUS = np.array([[0.0, 1.0], [0.0, 0.0]], dtype=complex)
_SIGMA_MINUS = np.array([[0.0, 0.0], [1.0, 0.0]], dtype=complex)
_SIGMA_Z = np.diag([1.0, -1.0]).astype(complex)


def correlation_matrix(state: DenseState) -> np.ndarray:
    """One-body matrix C_ij = <c+_i c_j> with the full Jordan-Wigner string."""
    L = state.L
    amp = state.amplitudes
    C = np.zeros((L, L), dtype=complex)
    C[np.diag_indices(L)] = occupations(state)
    for i in range(L):
        for j in range(i + 1, L):
            phi = _apply_one_site(amp, L, j, _SIGMA_PLUS)
            for k in range(i + 1, j):
                phi = _apply_one_site(phi, L, k, _SIGMA_Z)
            phi = _apply_one_site(phi, L, i, _SIGMA_MINUS)
            C[i, j] = np.vdot(amp, phi)
            C[j, i] = np.conj(C[i, j])
    return C


@lru_cache(maxsize=None)
def _site_operator_full(L: int, site: int, which: str) -> np.ndarray:
    op = {"plus": _SIGMA_PLUS, "minus": _SIGMA_MINUS, "z": _SIGMA_Z}[which]
    left = np.eye(2**site)
    right = np.eye(2 ** (L - site - 1))
    return np.kron(np.kron(left, op), right)


@lru_cache(maxsize=None)
def jw_two_point_operator(L: int, i: int, j: int) -> np.ndarray:
    """Dense matrix of c+_i c_j on an L-site chain (Jordan-Wigner form)."""
    if i == j:
        n_full = _site_operator_full(L, i, "minus") @ _site_operator_full(L, i, "plus")
        return n_full
    if i > j:
        return jw_two_point_operator(L, j, i).conj().T
    op = _site_operator_full(L, j, "plus").copy()
    for k in range(i + 1, j):
        op = _site_operator_full(L, k, "z") @ op
    return _site_operator_full(L, i, "minus") @ op


@lru_cache(maxsize=None)
def jw_pair_annihilation_operator(L: int, i: int, j: int) -> np.ndarray:
    """Dense matrix of c_i c_j for i < j, used to detect anomalous correlations."""
    if not i < j:
        raise ConfigError("pair annihilation operator requires i < j")
    op = _site_operator_full(L, j, "plus").copy()
    for k in range(i + 1, j):
        op = _site_operator_full(L, k, "z") @ op
    return -_site_operator_full(L, i, "plus") @ op


def correlation_matrix_of_density(rho: DensityMatrix) -> np.ndarray:
    """C_ij = tr(rho c+_i c_j) for a dense density matrix."""
    L = rho.L
    C = np.zeros((L, L), dtype=complex)
    for i in range(L):
        for j in range(i, L):
            C[i, j] = np.trace(rho.rho @ jw_two_point_operator(L, i, j))
            C[j, i] = np.conj(C[i, j])
    return C


def anomalous_matrix_of_density(rho: DensityMatrix) -> np.ndarray:
    """F_ij = tr(rho c_i c_j); non-zero entries flag pairing correlations."""
    L = rho.L
    F = np.zeros((L, L), dtype=complex)
    for i in range(L):
        for j in range(i + 1, L):
            F[i, j] = np.trace(rho.rho @ jw_pair_annihilation_operator(L, i, j))
            F[j, i] = -F[i, j]
    return F


def full_hamiltonian(spec: ChainSpec) -> np.ndarray:
    """Dense many-body Hamiltonian assembled from bond terms."""
    dim = 2**spec.L
    H = np.zeros((dim, dim), dtype=complex)
    for b in range(spec.n_bonds):
        h = hamiltonian_bond_matrix(spec, b).matrix
        left = np.eye(2**b)
        right = np.eye(2 ** (spec.L - b - 2))
        H += np.kron(np.kron(left, h), right)
    return H


def _hamming_matrix(L: int) -> np.ndarray:
    idx = np.arange(2**L)
    xor = idx[:, None] ^ idx[None, :]
    dist = np.zeros_like(xor)
    for b in range(L):
        dist += (xor >> b) & 1
    return dist.astype(float)


def lindblad_evolve(
    rho0: DensityMatrix, spec: ChainSpec, T: float, substeps: int = 4
) -> DensityMatrix:
    """Integrate drho/dt = -i[H,rho] + gamma sum_jq (Pi rho Pi - {Pi,rho}/2).

    Fixed-step RK4 with a step no larger than spec.dt / substeps (the
    default dt/4 keeps purity drift at gamma=0 below 1e-10 per unit time).
    This is the unconditional (record-averaged) evolution against which
    trajectory ensembles are cross-checked; it is unital, so rho ~ identity
    is a fixed point.
    """
    if spec.L > MAX_LINDBLAD_SITES:
        raise ConfigError(f"dense Lindblad integration limited to L<={MAX_LINDBLAD_SITES}")
    if rho0.L != spec.L:
        raise ConfigError("density matrix size does not match spec")
    H = full_hamiltonian(spec)
    gamma = spec.gamma

    if spec.observable == OBSERVABLE_OCCUPATION:
        damping = gamma * _hamming_matrix(spec.L)

        def dissipator(r):
            return -damping * r

    else:
        pset = projector_set_for(spec)
        full_projectors = []
        for b in range(spec.n_bonds):
            left = np.eye(2**b)
            right = np.eye(2 ** (spec.L - b - 2))
            for proj in pset.projectors:
                full_projectors.append(np.kron(np.kron(left, proj), right))
        n_loc = spec.n_bonds

        def dissipator(r):
            acc = -n_loc * r
            for P in full_projectors:
                acc = acc + P @ r @ P
            return gamma * acc

    def rhs(r):
        return -1j * (H @ r - r @ H) + dissipator(r)

    if T < 0:
        raise ConfigError("negative evolution time")
    if T == 0:
        return rho0
    n_steps = max(1, int(np.ceil(T / spec.dt))) * max(1, substeps)
    h = T / n_steps
    r = rho0.rho.copy()
    for _ in range(n_steps):
        k1 = rhs(r)
        k2 = rhs(r + 0.5 * h * k1)
        k3 = rhs(r + 0.5 * h * k2)
        k4 = rhs(r + h * k3)
        r = r + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    drift = abs(np.trace(r) - 1.0)
    if drift > 1e-6:
        raise InvalidStateError(f"trace drift {drift:.3e}; integration step too large")
    herm = np.max(np.abs(r - r.conj().T))
    if herm > 1e-8:
        raise InvalidStateError(f"Hermiticity violation {herm:.3e} after integration")
    return DensityMatrix(rho=r, L=spec.L)
