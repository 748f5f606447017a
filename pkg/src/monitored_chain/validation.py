"""Built-in oracle cross-check suite behind the `validate` CLI command.

Each check exercises one equivalence that the backends must satisfy by
construction: exact projector algebra, statevector/MPS/correlation-matrix
agreement on shared records, Lindblad unitality and Zeno pinning.
"""

from __future__ import annotations

import numpy as np

from . import dense as dense_mod
from . import gaussian as gauss_mod
from . import observables
from .dense import DensityMatrix, lindblad_evolve, neel_state
from .model import (
    ChainSpec,
    current_projectors,
    occupation_projectors,
    trotter_gates,
    two_site_number_operator,
)
from .mps import TruncationPolicy
from .trajectory import make_backend, replay, run_trajectory


def _check_projector_algebra() -> str:
    for pset in (occupation_projectors(), current_projectors()):
        dim = 2**pset.support_size
        total = sum(pset.projectors)
        assert np.max(np.abs(total - np.eye(dim))) < 1e-12, "completeness"
        for a, Pa in enumerate(pset.projectors):
            assert np.max(np.abs(Pa - Pa.conj().T)) < 1e-12, "hermiticity"
            for b, Pb in enumerate(pset.projectors):
                target = Pa if a == b else np.zeros_like(Pa)
                assert np.max(np.abs(Pa @ Pb - target)) < 1e-12, "orthogonality"
        if pset.support_size == 2:
            N2 = two_site_number_operator()
            for P in pset.projectors:
                assert np.max(np.abs(P @ N2 - N2 @ P)) < 1e-12, "number symmetry"
    return "projector sets complete, orthogonal, number-conserving"


def _check_gates() -> str:
    spec = ChainSpec(L=6, U=1.3, dt=0.07)
    even, odd = trotter_gates(spec)
    N2 = two_site_number_operator()
    for g in even + odd:
        m = g.matrix
        assert np.max(np.abs(m.conj().T @ m - np.eye(4))) < 1e-12, "unitarity"
        assert np.max(np.abs(m @ N2 - N2 @ m)) < 1e-12, "number symmetry"
    return "Trotter gates unitary and number-conserving"


def _check_dense_vs_mps() -> str:
    spec = ChainSpec(L=6, U=1.0, gamma=0.5, observable="current", dt=0.05, n_steps=30)
    bd = make_backend("dense", spec)
    bm = make_backend("mps", spec, TruncationPolicy(chi_max=64, svd_cutoff=1e-24))
    rd = run_trajectory(bd, spec, seed=11, sampling=0.5)
    rm = run_trajectory(bm, spec, seed=11, sampling=0.5)
    assert [(e.step, e.location, e.outcome) for e in rd.events] == [
        (e.step, e.location, e.outcome) for e in rm.events
    ], "measurement records diverged"
    for a, b in zip(rd.samples, rm.samples):
        assert np.max(np.abs(a.entropy - b.entropy)) < 1e-7, "entropy mismatch"
        assert np.max(np.abs(a.correlation - b.correlation)) < 1e-7, "correlation mismatch"
    return f"dense and MPS agree on {len(rd.events)} shared events"


def _check_gaussian_vs_dense() -> str:
    spec = ChainSpec(L=6, U=0.0, gamma=0.5, observable="occupation", dt=0.05, n_steps=40)
    bg = make_backend("gaussian", spec)
    bd = make_backend("dense", spec)
    rg = run_trajectory(bg, spec, seed=5, sampling=0.5)
    rd = run_trajectory(bd, spec, seed=5, sampling=0.5)
    for a, b in zip(rg.samples, rd.samples):
        assert np.max(np.abs(a.correlation - b.correlation)) < 1e-8, "correlation mismatch"
        ng = observables.total_ng(observables.orbital_spectrum(a.correlation))
        assert ng < 1e-8, f"Gaussianity broken: NG={ng}"
    assert gauss_mod.purity_check(bg.current_state()) < 1e-8, "purity lost"
    return "Gaussian backend tracks the exact solution and stays Gaussian"


def _check_replay() -> str:
    spec = ChainSpec(L=6, U=1.0, gamma=0.5, observable="occupation", dt=0.05, n_steps=30)
    bd = make_backend("dense", spec)
    record = run_trajectory(bd, spec, seed=23, sampling=0.5)
    bm = make_backend("mps", spec, TruncationPolicy(chi_max=64, svd_cutoff=1e-24))
    replayed = replay(record, bm)
    for a, b in zip(record.samples, replayed.samples):
        assert np.max(np.abs(a.correlation - b.correlation)) < 1e-7, "replay diverged"
    return "dense record replays on the MPS backend"


def _check_lindblad() -> str:
    spec = ChainSpec(L=4, U=0.5, gamma=0.7, observable="occupation", dt=0.05)
    dim = 2**spec.L
    rho_id = DensityMatrix(rho=np.eye(dim, dtype=complex) / dim, L=spec.L)
    evolved = lindblad_evolve(rho_id, spec, T=1.0)
    assert np.max(np.abs(evolved.rho - rho_id.rho)) < 1e-10, "identity not stationary"
    spec0 = ChainSpec(L=4, U=0.5, gamma=0.0, observable="occupation", dt=0.05)
    psi = neel_state(4)
    rho_pure = DensityMatrix(rho=np.outer(psi.amplitudes, psi.amplitudes.conj()), L=4)
    out = lindblad_evolve(rho_pure, spec0, T=1.0)
    assert abs(out.purity() - 1.0) < 1e-8, "purity lost under unitary evolution"
    return "Lindblad integrator is unital and purity-preserving at gamma=0"


def _check_zeno() -> str:
    dt = 0.05
    spec = ChainSpec(L=6, U=1.0, gamma=1.0 / dt, observable="occupation", dt=dt, n_steps=10)
    bd = make_backend("dense", spec)
    record = run_trajectory(bd, spec, seed=3, sampling=dt)
    for snap in record.samples[1:]:
        assert np.max(np.abs(snap.entropy)) == 0.0, "entropy not pinned to zero"
        nu = observables.orbital_spectrum(snap.correlation)
        assert observables.gap(nu).delta_nu == 1.0, "spectrum not a step function"
    return "complete measurement pins product states (Zeno limit)"


CHECKS = [
    ("projector-algebra", _check_projector_algebra),
    ("trotter-gates", _check_gates),
    ("dense-vs-mps", _check_dense_vs_mps),
    ("gaussian-vs-dense", _check_gaussian_vs_dense),
    ("record-replay", _check_replay),
    ("lindblad-unitality", _check_lindblad),
    ("zeno-pinning", _check_zeno),
]


def run_all(printer=print) -> int:
    """Run every cross-check; returns the number of failures."""
    failures = 0
    for name, check in CHECKS:
        try:
            detail = check()
            printer(f"PASS {name}: {detail}")
        except Exception as exc:  # noqa: BLE001 - report every failure kind
            failures += 1
            printer(f"FAIL {name}: {exc}")
    return failures
