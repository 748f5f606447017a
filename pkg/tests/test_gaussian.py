import numpy as np
import pytest
from scipy.linalg import expm

from monitored_chain import dense, gaussian, observables
from monitored_chain.errors import ConfigError, InvalidStateError, UnsupportedModelError
from monitored_chain.model import ChainSpec
from monitored_chain.trajectory import make_backend, replay, run_trajectory


def dense_oracle_correlation(amplitudes, L):
    return dense.correlation_matrix(dense.DenseState(amplitudes=amplitudes, L=L))


class TestConstruction:
    def test_particle_number_exact(self):
        st = gaussian.neel_state(7)
        assert st.particle_number() == 4.0

    def test_hermiticity_enforced(self):
        C = np.array([[0.5, 0.2], [0.3, 0.5]], dtype=complex)
        with pytest.raises(InvalidStateError):
            gaussian.GaussianPureState(C=C)


class TestPropagation:
    def test_t_zero(self):
        st = gaussian.neel_state(4)
        out = gaussian.propagate(st, 0.0)
        assert np.max(np.abs(out.C - st.C)) < 1e-14

    def test_spectrum_invariant(self):
        st = gaussian.neel_state(6)
        out = gaussian.propagate(st, 2.3)
        before = np.sort(np.linalg.eigvalsh(st.C))
        after = np.sort(np.linalg.eigvalsh(out.C))
        assert np.max(np.abs(before - after)) < 1e-12

    def test_two_site_occupation(self):
        # Matches the statevector evolution of |10>.
        t = 1.21
        out = gaussian.propagate(gaussian.product_state([1, 0]), t)
        assert out.C[0, 0].real == pytest.approx(np.cos(t / 2) ** 2, abs=1e-12)

    def test_full_matrix_against_dense(self):
        # Oracle: exact many-body evolution contracted to <c+_i c_j>.
        L, t = 5, 1.7
        spec = ChainSpec(L=L, U=0.0)
        H = dense.full_hamiltonian(spec)
        psi = dense.neel_state(L)
        evolved = expm(-1j * H * t) @ psi.amplitudes
        C_oracle = dense_oracle_correlation(evolved, L)
        out = gaussian.propagate(gaussian.neel_state(L), t)
        assert np.max(np.abs(out.C - C_oracle)) < 1e-10

    def test_interacting_rejected(self):
        with pytest.raises(UnsupportedModelError):
            gaussian.propagate(gaussian.neel_state(4), 1.0, U=0.5)

    def test_bond_rotation_mirrors_trotter_gate(self):
        # Oracle: one dense Trotter gate on a generic superposition state.
        from monitored_chain.model import bond_gate

        L, tau = 4, 0.31
        rng = np.random.default_rng(2)
        amp = np.zeros(2**L, dtype=complex)
        for idx in range(2**L):
            if bin(idx).count("1") == 2:
                amp[idx] = rng.normal() + 1j * rng.normal()
        amp /= np.linalg.norm(amp)
        st = dense.DenseState(amplitudes=amp, L=L)
        out_dense = dense.apply_two_site_unitary(st, 1, bond_gate(ChainSpec(L=L), 1, tau))
        C_oracle = dense_oracle_correlation(out_dense.amplitudes, L)
        g_state = gaussian.GaussianPureState(C=dense_oracle_correlation(amp, L))
        g_out = gaussian.apply_bond_rotation(g_state, 1, tau)
        assert np.max(np.abs(g_out.C - C_oracle)) < 1e-12


class TestMeasurement:
    def setup_method(self):
        # (|10> + |01>)/sqrt(2): C = [[1/2, 1/2], [1/2, 1/2]]
        self.C_plus = np.full((2, 2), 0.5, dtype=complex)

    def test_outcome_one_update(self):
        st = gaussian.GaussianPureState(C=self.C_plus)
        outcome, out = gaussian.measure_occupation(st, 0, 0.75)
        assert outcome == 1
        assert np.max(np.abs(out.C - np.diag([1.0, 0.0]))) < 1e-14

    def test_outcome_zero_update(self):
        st = gaussian.GaussianPureState(C=self.C_plus)
        outcome, out = gaussian.measure_occupation(st, 0, 0.25)
        assert outcome == 0
        assert np.max(np.abs(out.C - np.diag([0.0, 1.0]))) < 1e-14

    def test_updates_match_dense_oracle(self):
        # Oracle: project the statevector and recompute C, for both outcomes.
        amp = np.zeros(4, dtype=complex)
        amp[2] = amp[1] = 1 / np.sqrt(2)
        for outcome in (0, 1):
            proj = np.zeros(4, dtype=complex)
            if outcome == 1:
                proj[2] = amp[2]  # |10>: site 0 occupied
            else:
                proj[1] = amp[1]
            proj /= np.linalg.norm(proj)
            C_oracle = dense_oracle_correlation(proj, 2)
            st = gaussian.GaussianPureState(C=self.C_plus)
            out, _ = gaussian.apply_occupation_outcome(st, 0, outcome)
            assert np.max(np.abs(out.C - C_oracle)) < 1e-14

    def test_definite_site_unchanged(self):
        st = gaussian.neel_state(4)
        outcome, out = gaussian.measure_occupation(st, 0, 0.999999)
        assert outcome == 1
        assert np.max(np.abs(out.C - st.C)) < 1e-14

    def test_degenerate_draw_flips(self):
        # site 1 of the Neel state is empty: outcome 1 has probability 0 and
        # the complementary outcome is taken deterministically
        st = gaussian.neel_state(4)
        outcome, out = gaussian.measure_occupation(st, 1, 0.5)
        assert outcome == 0

    def test_trace_conserved(self):
        rng = np.random.default_rng(4)
        st = gaussian.propagate(gaussian.neel_state(6), 1.3)
        n0 = st.particle_number()
        for j in (2, 0, 5):
            _, st = gaussian.measure_occupation(st, j, rng.random())
            assert st.particle_number() == pytest.approx(n0, abs=1e-12)


class TestPurity:
    def test_neel_pure(self):
        assert gaussian.purity_check(gaussian.neel_state(6)) == 0.0

    def test_half_identity(self):
        st = gaussian.GaussianPureState(C=0.5 * np.eye(4, dtype=complex))
        assert gaussian.purity_check(st) == pytest.approx(0.25, abs=1e-15)

    def test_purity_along_trajectory(self):
        spec = ChainSpec(L=8, U=0.0, gamma=0.6, observable="occupation", dt=0.05, n_steps=80)
        backend = make_backend("gaussian", spec)
        run_trajectory(backend, spec, seed=13)
        assert gaussian.purity_check(backend.current_state()) < 1e-8


class TestTrajectoryEquivalence:
    def test_replay_on_dense(self):
        spec = ChainSpec(L=6, U=0.0, gamma=0.5, observable="occupation", dt=0.05, n_steps=50)
        bg = make_backend("gaussian", spec)
        record = run_trajectory(bg, spec, seed=21, sampling=0.5)
        bd = make_backend("dense", spec)
        replayed = replay(record, bd)
        for a, b in zip(record.samples, replayed.samples):
            assert np.max(np.abs(a.correlation - b.correlation)) < 1e-8

    def test_ng_identically_zero(self):
        spec = ChainSpec(L=8, U=0.0, gamma=0.4, observable="occupation", dt=0.05, n_steps=60)
        backend = make_backend("gaussian", spec)
        record = run_trajectory(backend, spec, seed=2)
        for snap in record.samples:
            ng = observables.total_ng(observables.orbital_spectrum(snap.correlation))
            assert ng < 1e-8

    def test_current_rejected(self):
        spec = ChainSpec(L=4, U=0.0, gamma=0.1, observable="current", dt=0.05, n_steps=5)
        with pytest.raises(ConfigError):
            make_backend("gaussian", spec)

    def test_interaction_rejected(self):
        spec = ChainSpec(L=4, U=1.0, gamma=0.1, observable="occupation", dt=0.05, n_steps=5)
        with pytest.raises(ConfigError):
            make_backend("gaussian", spec)
