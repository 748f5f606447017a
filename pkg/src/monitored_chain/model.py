"""Chain definition, local operators, Trotter gates and measurement projectors.

Single-site basis is the occupation basis {|n=0>, |n=1>}, with |n=0>
identified with spin-up under the Jordan-Wigner dictionary.  Two-site
matrices are written in the basis {|00>, |01>, |10>, |11>} where the first
label is the left site; all other modules consume the matrices built here,
so the fermion/spin convention is fixed once in this file.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import expm

from .errors import ConfigError

OBSERVABLE_OCCUPATION = "occupation"
OBSERVABLE_CURRENT = "current"
OBSERVABLES = (OBSERVABLE_OCCUPATION, OBSERVABLE_CURRENT)

INITIAL_NEEL = "neel"

# Pauli matrices in the occupation basis (index 0 = empty = spin-up).
SIGMA_X = np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex)
SIGMA_Y = np.array([[0.0, -1.0j], [1.0j, 0.0]], dtype=complex)
SIGMA_Z = np.array([[1.0, 0.0], [0.0, -1.0]], dtype=complex)
IDENTITY_2 = np.eye(2, dtype=complex)

# n = (1 - sigma_z)/2: occupation counts spin-down.
NUMBER_OP = np.diag([0.0, 1.0]).astype(complex)


@dataclass(frozen=True)
class ChainSpec:
    """Physical and protocol parameters of a monitored chain.

    Units: energies in units of the hopping amplitude, times in inverse
    hopping.  ``gamma`` is the measurement rate per site (occupation) or
    per bond (current), so ``gamma * dt`` is a per-step trigger probability
    and must not exceed 1.
    """

    L: int
    U: float = 0.0
    gamma: float = 0.0
    observable: str = OBSERVABLE_OCCUPATION
    dt: float = 0.05
    n_steps: int = 100
    initial_state: str = INITIAL_NEEL

    def __post_init__(self):
        if int(self.L) != self.L or self.L < 2:
            raise ConfigError(f"L must be an integer >= 2, got {self.L}")
        if self.dt <= 0:
            raise ConfigError(f"dt must be positive, got {self.dt}")
        if self.gamma < 0:
            raise ConfigError(f"gamma must be non-negative, got {self.gamma}")
        if self.gamma * self.dt > 1.0 + 1e-12:
            raise ConfigError(
                f"gamma*dt = {self.gamma * self.dt:g} exceeds 1; "
                "the per-step trigger probability must be a probability"
            )
        if self.observable not in OBSERVABLES:
            raise ConfigError(f"unknown observable {self.observable!r}")
        if self.initial_state != INITIAL_NEEL:
            raise ConfigError(f"unknown initial state {self.initial_state!r}")
        if int(self.n_steps) != self.n_steps or self.n_steps < 0:
            raise ConfigError(f"n_steps must be a non-negative integer, got {self.n_steps}")

    @property
    def n_bonds(self) -> int:
        return self.L - 1

    @property
    def measurement_locations(self) -> int:
        """Number of independently triggered measurement locations per step."""
        if self.observable == OBSERVABLE_OCCUPATION:
            return self.L
        return self.n_bonds

    def neel_pattern(self) -> np.ndarray:
        """Occupations (1,0,1,0,...) of the initial product state."""
        pattern = np.zeros(self.L, dtype=int)
        pattern[0::2] = 1
        return pattern

    def to_dict(self) -> dict:
        return {
            "L": self.L,
            "U": self.U,
            "gamma": self.gamma,
            "observable": self.observable,
            "dt": self.dt,
            "n_steps": self.n_steps,
            "initial_state": self.initial_state,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ChainSpec":
        return cls(**data)


@dataclass(frozen=True)
class LocalOperator:
    """A 2x2 or 4x4 matrix acting on one site or two adjacent sites."""

    support: tuple[int, ...]
    matrix: np.ndarray

    def __post_init__(self):
        dim = 2 ** len(self.support)
        if self.matrix.shape != (dim, dim):
            raise ConfigError(
                f"operator on {len(self.support)} site(s) needs a {dim}x{dim} matrix"
            )

    @property
    def is_hermitian(self) -> bool:
        return np.max(np.abs(self.matrix - self.matrix.conj().T)) < 1e-12

    @property
    def is_unitary(self) -> bool:
        m = self.matrix
        return np.max(np.abs(m.conj().T @ m - np.eye(m.shape[0]))) < 1e-12


@dataclass(frozen=True)
class ProjectorSet:
    """Complete set of orthogonal eigenprojectors of a measured observable."""

    outcomes: tuple[tuple[str, float, np.ndarray], ...]
    support_size: int = field(default=1)

    @property
    def labels(self) -> tuple[str, ...]:
        return tuple(label for label, _, _ in self.outcomes)

    @property
    def eigenvalues(self) -> tuple[float, ...]:
        return tuple(val for _, val, _ in self.outcomes)

    @property
    def projectors(self) -> tuple[np.ndarray, ...]:
        return tuple(proj for _, _, proj in self.outcomes)

    def index_of(self, label: str) -> int:
        for k, (lab, _, _) in enumerate(self.outcomes):
            if lab == label:
                return k
        raise KeyError(f"unknown outcome label {label!r}")


def hamiltonian_bond_matrix(spec: ChainSpec, bond: int) -> LocalOperator:
    """Two-site bond term: hopping -1/2 (c+_j c_j+1 + h.c.) plus U n_j n_j+1.

    ``bond`` indexes the pair (bond, bond+1), 0-based, 0 <= bond <= L-2.
    """
    if not 0 <= bond < spec.n_bonds:
        raise ConfigError(f"bond {bond} out of range for L={spec.L}")
    h = np.zeros((4, 4), dtype=complex)
    # Hopping exchanges |01> and |10>; Jordan-Wigner strings cancel on a bond.
    h[1, 2] = -0.5
    h[2, 1] = -0.5
    h[3, 3] = spec.U
    return LocalOperator(support=(bond, bond + 1), matrix=h)


def bond_gate(spec: ChainSpec, bond: int, tau: float) -> LocalOperator:
    """Unitary exp(-i h_bond tau) for one bond."""
    h = hamiltonian_bond_matrix(spec, bond).matrix
    return LocalOperator(support=(bond, bond + 1), matrix=expm(-1j * tau * h))


def trotter_gates(spec: ChainSpec) -> tuple[list[LocalOperator], list[LocalOperator]]:
    """Second-order symmetric even-odd gate layers for one time step.

    Returns (even_layer, odd_layer).  The odd layer (bonds 0, 2, 4, ... in
    0-based indexing, i.e. bonds starting on odd sites when counting from 1)
    carries half-step gates exp(-i h dt/2) and is applied before and after
    the full-step even layer, giving an O(dt^3) local splitting error.
    """
    odd = [bond_gate(spec, b, spec.dt / 2.0) for b in range(0, spec.n_bonds, 2)]
    even = [bond_gate(spec, b, spec.dt) for b in range(1, spec.n_bonds, 2)]
    return even, odd


def occupation_projectors() -> ProjectorSet:
    """Single-site projectors {Pi(n=0), Pi(n=1)} = {(1 +/- sigma_z)/2}."""
    p0 = np.diag([1.0, 0.0]).astype(complex)
    p1 = np.diag([0.0, 1.0]).astype(complex)
    return ProjectorSet(
        outcomes=(("n=0", 0.0, p0), ("n=1", 1.0, p1)),
        support_size=1,
    )


def current_eigenstates() -> tuple[np.ndarray, np.ndarray]:
    """Normalized current eigenvectors (psi_plus, psi_minus) on a bond.

    psi_+/- = (|01> -/+ i |10>)/sqrt(2) carry current +/- 1/2.
    """
    psi_plus = np.zeros(4, dtype=complex)
    psi_plus[1] = 1.0 / np.sqrt(2.0)
    psi_plus[2] = -1.0j / np.sqrt(2.0)
    psi_minus = np.zeros(4, dtype=complex)
    psi_minus[1] = 1.0 / np.sqrt(2.0)
    psi_minus[2] = 1.0j / np.sqrt(2.0)
    return psi_plus, psi_minus


def current_operator_matrix() -> np.ndarray:
    """Bond current J = -i/2 (c+_j c_j+1 - c+_j+1 c_j) as a 4x4 matrix."""
    j = np.zeros((4, 4), dtype=complex)
    j[2, 1] = -0.5j
    j[1, 2] = 0.5j
    return j


def current_projectors() -> ProjectorSet:
    """Bond projectors onto the current eigenspaces J = 0, +1/2, -1/2.

    The J=0 eigenspace is the rank-2 span of |00> and |11>; the J=+/-1/2
    outcomes project onto single entangled bond states, which is where the
    dynamics leaves the Gaussian manifold.
    """
    p_zero = np.diag([1.0, 0.0, 0.0, 1.0]).astype(complex)
    psi_plus, psi_minus = current_eigenstates()
    p_plus = np.outer(psi_plus, psi_plus.conj())
    p_minus = np.outer(psi_minus, psi_minus.conj())
    return ProjectorSet(
        outcomes=(
            ("J=0", 0.0, p_zero),
            ("J=+1/2", 0.5, p_plus),
            ("J=-1/2", -0.5, p_minus),
        ),
        support_size=2,
    )


def projector_set_for(spec: ChainSpec) -> ProjectorSet:
    if spec.observable == OBSERVABLE_OCCUPATION:
        return occupation_projectors()
    return current_projectors()


def two_site_number_operator() -> np.ndarray:
    """n_j + n_j+1 on a bond; every gate and projector commutes with it."""
    return np.kron(NUMBER_OP, IDENTITY_2) + np.kron(IDENTITY_2, NUMBER_OP)
