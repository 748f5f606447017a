import numpy as np
import pytest

from monitored_chain.errors import ConfigError
from monitored_chain.model import (
    ChainSpec,
    LocalOperator,
    bond_gate,
    current_eigenstates,
    current_operator_matrix,
    current_projectors,
    hamiltonian_bond_matrix,
    occupation_projectors,
    trotter_gates,
    two_site_number_operator,
)

# Pauli matrices for independent reconstructions (occupation basis, 0 = empty).
SX = np.array([[0, 1], [1, 0]], dtype=complex)
SY = np.array([[0, -1j], [1j, 0]], dtype=complex)
SZ = np.diag([1.0, -1.0]).astype(complex)
I2 = np.eye(2, dtype=complex)


class TestChainSpec:
    def test_valid_roundtrip(self):
        spec = ChainSpec(L=8, U=1.0, gamma=0.3, observable="current", dt=0.05, n_steps=10)
        assert ChainSpec.from_dict(spec.to_dict()) == spec

    def test_neel_pattern(self):
        assert ChainSpec(L=5).neel_pattern().tolist() == [1, 0, 1, 0, 1]

    @pytest.mark.parametrize(
        "kwargs",
        [
            {"L": 1},
            {"L": 4, "dt": 0.0},
            {"L": 4, "dt": -0.1},
            {"L": 4, "gamma": -0.2},
            {"L": 4, "gamma": 30.0, "dt": 0.05},  # gamma*dt > 1
            {"L": 4, "observable": "parity"},
            {"L": 4, "initial_state": "domain_wall"},
            {"L": 4, "n_steps": -1},
        ],
    )
    def test_invalid_specs_rejected(self, kwargs):
        with pytest.raises(ConfigError):
            ChainSpec(**kwargs)

    def test_measurement_locations(self):
        assert ChainSpec(L=6, observable="occupation").measurement_locations == 6
        assert ChainSpec(L=6, observable="current").measurement_locations == 5


class TestBondHamiltonian:
    def test_hopping_elements_u0(self):
        h = hamiltonian_bond_matrix(ChainSpec(L=4, U=0.0), 0).matrix
        expected = np.zeros((4, 4), dtype=complex)
        expected[1, 2] = expected[2, 1] = -0.5
        assert np.array_equal(h, expected)

    def test_interaction_diagonal(self):
        h = hamiltonian_bond_matrix(ChainSpec(L=4, U=1.0), 1).matrix
        assert h[3, 3] == 1.0
        assert h[1, 2] == -0.5

    def test_u0_eigenvalues(self):
        # Oracle: direct 4x4 diagonalization.
        h = hamiltonian_bond_matrix(ChainSpec(L=4, U=0.0), 0).matrix
        assert np.allclose(np.linalg.eigvalsh(h), [-0.5, 0.0, 0.0, 0.5], atol=1e-14)

    def test_hermitian(self):
        op = hamiltonian_bond_matrix(ChainSpec(L=4, U=0.7), 2)
        assert op.is_hermitian

    def test_spin_form_cross_check(self):
        # Independent reconstruction from the Pauli representation:
        # -1/4 (sx sx + sy sy) + U/4 (1 - sz_j - sz_j+1 + sz sz).
        U = 1.3
        spin = -0.25 * (np.kron(SX, SX) + np.kron(SY, SY)) + (U / 4.0) * (
            np.eye(4) - np.kron(SZ, I2) - np.kron(I2, SZ) + np.kron(SZ, SZ)
        )
        h = hamiltonian_bond_matrix(ChainSpec(L=4, U=U), 0).matrix
        assert np.max(np.abs(h - spin)) < 1e-14

    def test_bond_out_of_range(self):
        with pytest.raises(ConfigError):
            hamiltonian_bond_matrix(ChainSpec(L=4), 3)
        with pytest.raises(ConfigError):
            hamiltonian_bond_matrix(ChainSpec(L=4), -1)


class TestTrotterGates:
    def test_u0_hopping_block(self):
        # Oracle: analytic 2x2 exponential of the hopping block.
        tau = 0.37
        gate = bond_gate(ChainSpec(L=4, U=0.0), 0, tau).matrix
        block = gate[np.ix_([1, 2], [1, 2])]
        c, s = np.cos(tau / 2), np.sin(tau / 2)
        assert np.max(np.abs(block - np.array([[c, 1j * s], [1j * s, c]]))) < 1e-14
        assert gate[0, 0] == 1.0  # vacuum untouched at U=0

    def test_tau_zero_identity(self):
        gate = bond_gate(ChainSpec(L=4, U=2.0), 0, 0.0).matrix
        assert np.max(np.abs(gate - np.eye(4))) < 1e-14

    def test_unitarity(self):
        even, odd = trotter_gates(ChainSpec(L=7, U=1.5, dt=0.08))
        for g in even + odd:
            assert g.is_unitary

    def test_layer_structure(self):
        even, odd = trotter_gates(ChainSpec(L=7, dt=0.1))
        assert [g.support for g in odd] == [(0, 1), (2, 3), (4, 5)]
        assert [g.support for g in even] == [(1, 2), (3, 4), (5, 6)]
        # odd layer carries half steps: composing twice gives the full step
        full = bond_gate(ChainSpec(L=7, dt=0.1), 0, 0.1).matrix
        assert np.max(np.abs(odd[0].matrix @ odd[0].matrix - full)) < 1e-13

    def test_gates_conserve_particle_number(self):
        N2 = two_site_number_operator()
        even, odd = trotter_gates(ChainSpec(L=6, U=0.9, dt=0.05))
        for g in even + odd:
            assert np.max(np.abs(g.matrix @ N2 - N2 @ g.matrix)) < 1e-12


class TestProjectorSets:
    @pytest.mark.parametrize("pset", [occupation_projectors(), current_projectors()])
    def test_completeness_orthogonality_idempotence(self, pset):
        dim = 2**pset.support_size
        assert np.max(np.abs(sum(pset.projectors) - np.eye(dim))) < 1e-12
        for a, Pa in enumerate(pset.projectors):
            assert np.max(np.abs(Pa - Pa.conj().T)) < 1e-12
            for b, Pb in enumerate(pset.projectors):
                expected = Pa if a == b else 0.0
                assert np.max(np.abs(Pa @ Pb - expected)) < 1e-12

    def test_occupation_action(self):
        pset = occupation_projectors()
        p0, p1 = pset.projectors
        ket0, ket1 = np.array([1.0, 0]), np.array([0, 1.0])
        assert np.array_equal(p1 @ ket1, ket1)
        assert np.array_equal(p1 @ ket0, np.zeros(2))
        assert np.array_equal(p0 + p1, np.eye(2))

    def test_current_ranks(self):
        pset = current_projectors()
        ranks = [np.linalg.matrix_rank(P) for P in pset.projectors]
        assert ranks == [2, 1, 1]

    def test_current_eigenstates(self):
        # psi_+ = (|01> - i|10>)/sqrt(2) is the +1/2 eigenstate.
        psi_p, psi_m = current_eigenstates()
        J = current_operator_matrix()
        assert np.max(np.abs(J @ psi_p - 0.5 * psi_p)) < 1e-14
        assert np.max(np.abs(J @ psi_m + 0.5 * psi_m)) < 1e-14
        pset = current_projectors()
        assert np.max(np.abs(pset.projectors[1] @ psi_p - psi_p)) < 1e-14
        assert np.max(np.abs(pset.projectors[2] @ psi_p)) < 1e-14

    def test_current_projectors_spin_form(self):
        # Independent reconstruction from the two-site Pauli formulas.
        pset = current_projectors()
        p_zero = 0.5 * (np.eye(4) + np.kron(SZ, SZ))
        p_plus = 0.25 * (
            np.eye(4) - np.kron(SZ, SZ) - np.kron(SY, SX) + np.kron(SX, SY)
        )
        p_minus = 0.25 * (
            np.eye(4) - np.kron(SZ, SZ) + np.kron(SY, SX) - np.kron(SX, SY)
        )
        assert np.max(np.abs(pset.projectors[0] - p_zero)) < 1e-14
        assert np.max(np.abs(pset.projectors[1] - p_plus)) < 1e-14
        assert np.max(np.abs(pset.projectors[2] - p_minus)) < 1e-14

    def test_projectors_commute_with_number(self):
        N2 = two_site_number_operator()
        for P in current_projectors().projectors:
            assert np.max(np.abs(P @ N2 - N2 @ P)) < 1e-14

    def test_eigenvalue_labels(self):
        pset = current_projectors()
        assert pset.eigenvalues == (0.0, 0.5, -0.5)
        assert pset.index_of("J=-1/2") == 2
        with pytest.raises(KeyError):
            pset.index_of("J=2")


class TestLocalOperator:
    def test_shape_validation(self):
        with pytest.raises(ConfigError):
            LocalOperator(support=(0,), matrix=np.eye(4))

    def test_unitary_flag(self):
        assert LocalOperator(support=(0,), matrix=np.eye(2, dtype=complex)).is_unitary
        assert not LocalOperator(support=(0,), matrix=2 * np.eye(2, dtype=complex)).is_unitary
