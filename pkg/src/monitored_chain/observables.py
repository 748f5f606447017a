"""Diagnostics: entanglement profiles, natural-orbital spectra,
non-Gaussianity, the occupation gap and the chord-length entropy fit.

All entropies use the natural logarithm.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import dense as dense_mod
from . import gaussian as gauss_mod
from . import mps as mps_mod
from .errors import ConfigError, InvalidStateError, UnsupportedModelError
from .util import binary_entropy, entropy_from_squared_schmidt

EIGENVALUE_HARD_LIMIT = 1e-6


@dataclass(frozen=True)
class OrbitalSpectrum:
    """Natural-orbital occupations nu_alpha, sorted descending."""

    nu: np.ndarray
    N: int

    @property
    def L(self) -> int:
        return len(self.nu)


@dataclass(frozen=True)
class EntropyProfile:
    """Entanglement entropies of the left bipartitions {0..ell-1}, ell = 1..L-1."""

    S: np.ndarray
    L: int

    def __post_init__(self):
        if len(self.S) != self.L - 1:
            raise InvalidStateError("entropy profile must have L-1 entries")
        if np.any(self.S < -1e-9):
            raise InvalidStateError("negative entanglement entropy")
        ells = np.arange(1, self.L)
        bound = np.minimum(ells, self.L - ells) * np.log(2.0)
        if np.any(self.S > bound + 1e-6):
            raise InvalidStateError("entropy exceeds the bipartition bound")


@dataclass(frozen=True)
class CftFit:
    """Least-squares fit S(ell) = alpha * log x(ell) + s0 on the chord length."""

    alpha: float
    s0: float
    residual: float


@dataclass(frozen=True)
class GapStats:
    """Occupation gap at the Fermi index and its size-rescaled slope."""

    delta_nu: float
    slope: float


def entropy_profile(state) -> EntropyProfile:
    """Bipartite entanglement entropies for any backend state."""
    if isinstance(state, dense_mod.DenseState):
        L = state.L
        S = np.empty(L - 1)
        for ell in range(1, L):
            block = state.amplitudes.reshape(2**ell, 2 ** (L - ell))
            sv = np.linalg.svd(block, compute_uv=False)
            S[ell - 1] = entropy_from_squared_schmidt(sv**2)
        return EntropyProfile(S=S, L=L)
    if isinstance(state, gauss_mod.GaussianPureState):
        L = state.L
        S = np.empty(L - 1)
        for ell in range(1, L):
            zeta = np.linalg.eigvalsh(state.C[:ell, :ell])
            S[ell - 1] = float(np.sum(binary_entropy(zeta)))
        return EntropyProfile(S=S, L=L)
    if isinstance(state, mps_mod.MpsState):
        mps_mod.ensure_canonical(state)
        S = np.array(
            [entropy_from_squared_schmidt(state.lams[ell] ** 2) for ell in range(1, state.L)]
        )
        return EntropyProfile(S=S, L=state.L)
    raise ConfigError(f"unsupported state type {type(state).__name__}")


def one_body_matrix(state) -> np.ndarray:
    """Hermitian C_ij = <c+_i c_j> for any backend state."""
    if isinstance(state, dense_mod.DenseState):
        return dense_mod.correlation_matrix(state)
    if isinstance(state, gauss_mod.GaussianPureState):
        return state.C.copy()
    if isinstance(state, mps_mod.MpsState):
        return mps_mod.correlation_matrix(state)
    raise ConfigError(f"unsupported state type {type(state).__name__}")


def orbital_spectrum(C: np.ndarray) -> OrbitalSpectrum:
    """Eigenvalues of the one-body matrix, clipped to [0,1] and sorted descending."""
    C = np.asarray(C)
    if np.max(np.abs(C - C.conj().T)) > 1e-10:
        raise InvalidStateError("one-body matrix is not Hermitian")
    nu = np.linalg.eigvalsh(C)
    if nu[0] < -EIGENVALUE_HARD_LIMIT or nu[-1] > 1.0 + EIGENVALUE_HARD_LIMIT:
        raise InvalidStateError(
            f"occupation eigenvalues [{nu[0]:.3e}, {nu[-1]:.3e}] outside [0,1]"
        )
    nu = np.clip(nu, 0.0, 1.0)[::-1].copy()
    # Edge hygiene: occupations within 1e-12 of 0/1 snap to the boundary, so
    # pinned states report exact step spectra.
    nu[nu < 1e-12] = 0.0
    nu[nu > 1.0 - 1e-12] = 1.0
    return OrbitalSpectrum(nu=nu, N=int(round(float(nu.sum()))))


def total_ng(spectrum) -> float:
    """Total non-Gaussianity sum_alpha H2(nu_alpha) of a pure state.

    Vanishes exactly on Slater determinants (nu in {0,1}) and is bounded by
    2 N log 2, attained by the flat half-filled spectrum.
    """
    nu = spectrum.nu if isinstance(spectrum, OrbitalSpectrum) else np.asarray(spectrum)
    return float(np.sum(binary_entropy(nu)))


def ng_mixed(rho: dense_mod.DensityMatrix) -> float:
    """Relative entropy to the closest Gaussian state, S(rho_G) - S(rho).

    Only number-conserving density matrices are handled; pairing
    correlations <c c> are detected and rejected.
    """
    F = dense_mod.anomalous_matrix_of_density(rho)
    if F.size and np.max(np.abs(F)) > 1e-8:
        raise UnsupportedModelError(
            "density matrix carries anomalous correlations; "
            "the number-conserving Gaussian reference does not apply"
        )
    C = dense_mod.correlation_matrix_of_density(rho)
    spectrum = orbital_spectrum(C)
    s_gauss = total_ng(spectrum)
    p = np.linalg.eigvalsh(rho.rho)
    p = np.clip(p, 0.0, None)
    s_rho = entropy_from_squared_schmidt(p)
    ng = s_gauss - s_rho
    if ng < -1e-9:
        raise InvalidStateError(f"negative non-Gaussianity {ng:.3e}")
    return float(ng)


def gap(spectrum: OrbitalSpectrum) -> GapStats:
    """Jump between the N-th and (N+1)-th occupations of the sorted spectrum."""
    N, L = spectrum.N, spectrum.L
    if not 1 <= N < L:
        raise ConfigError(f"particle number {N} must satisfy 1 <= N < L={L}")
    delta = float(spectrum.nu[N - 1] - spectrum.nu[N])
    return GapStats(delta_nu=delta, slope=delta * L)


def chord_length(ell, L: int):
    """Finite-size conformal distance x(ell) = (2L/pi) sin(pi ell / L)."""
    return (2.0 * L / np.pi) * np.sin(np.pi * np.asarray(ell, dtype=float) / L)


def cft_fit(profile: EntropyProfile, L: int | None = None, ell_range=None) -> CftFit:
    """Fit S(ell) = alpha log x(ell) + s0 by ordinary least squares.

    ``ell_range`` selects the bipartitions used (default 2 <= ell <= L-2 to
    stay clear of the boundaries); fewer than 3 points is an error.
    """
    L = L if L is not None else profile.L
    if ell_range is None:
        ell_range = range(2, L - 1)
    ells = np.array([ell for ell in ell_range if 1 <= ell <= L - 1], dtype=int)
    if len(ells) < 3:
        raise ConfigError("chord-length fit needs at least 3 bipartitions")
    y = profile.S[ells - 1]
    x = np.log(chord_length(ells, L))
    design = np.column_stack([x, np.ones_like(x)])
    coeffs, _, _, _ = np.linalg.lstsq(design, y, rcond=None)
    alpha, s0 = float(coeffs[0]), float(coeffs[1])
    resid = y - design @ coeffs
    return CftFit(alpha=alpha, s0=s0, residual=float(np.sqrt(np.mean(resid**2))))
