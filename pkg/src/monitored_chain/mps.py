"""Matrix-product-state engine: TEBD sweeps, projective measurements,
Schmidt spectra and Jordan-Wigner string correlators.

The state is kept in a bond-canonical form: ``Bs[i]`` are right-canonical
site tensors (left-bond, physical, right-bond) and ``lams[i]`` holds the
Schmidt values of the cut left of site i (``lams[0]`` and ``lams[L]`` are
trivial).  Two-site updates use the inverse-free scheme: the updated left
tensor is obtained by contracting the gated two-site wavefunction with the
new right tensor, so no singular value is ever divided out.

Non-unitary local operations (projectors) change the Schmidt data at every
bond, so they mark the state dirty; Schmidt-dependent queries recanonicalize
on demand with a full QR + SVD sweep.  Site tensors are treated as
immutable after assignment: updates replace arrays, never mutate them, so
``copy`` is cheap and snapshots are safe.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    ConfigError,
    DegenerateProjectionError,
    InvalidStateError,
    TruncationFailureError,
)
from .dense import DenseState
from .util import clean_probabilities

_FORMAT_VERSION = 1
_TIE_RTOL = 1e-12


@dataclass
class TruncationPolicy:
    """SVD truncation control: bond cap, discard threshold, error budget.

    ``svd_cutoff`` applies to squared Schmidt values; ``track_error``
    accumulates the total discarded weight of every truncation performed
    under this policy.
    """

    chi_max: int = 256
    svd_cutoff: float = 1e-10
    hard_limit: float = 1e-4
    track_error: float = 0.0

    def __post_init__(self):
        if self.chi_max < 1:
            raise ConfigError("chi_max must be >= 1")
        if not 0.0 <= self.svd_cutoff < 1.0:
            raise ConfigError("svd_cutoff must lie in [0, 1)")


def _truncate(S: np.ndarray, policy: TruncationPolicy | None) -> tuple[int, float, bool]:
    """Number of values to keep, discarded weight, and whether chi_max capped.

    Ties at the truncation boundary are kept together (up to chi_max) so the
    cut never splits a degenerate group; this keeps truncation deterministic
    and preserves particle-number structure within degenerate subspaces.
    """
    w = S**2
    total = w.sum()
    if total <= 0.0:
        raise InvalidStateError("two-site wavefunction has zero norm")
    if policy is None:
        k = max(1, int(np.count_nonzero(w / total > 1e-28)))
        return k, float(w[k:].sum() / total), False
    k_cutoff = int(np.count_nonzero(w / total >= policy.svd_cutoff))
    k_cutoff = max(k_cutoff, 1)
    capped = k_cutoff > policy.chi_max
    k = min(k_cutoff, policy.chi_max)
    while k < len(S) and k < policy.chi_max and S[k] >= S[k - 1] * (1.0 - _TIE_RTOL):
        k += 1
    discarded = float(w[k:].sum() / total)
    return k, discarded, capped


@dataclass
class MpsState:
    """Finite MPS with per-bond Schmidt values."""

    Bs: list
    lams: list
    canonical: bool = True
    policy: TruncationPolicy = field(default_factory=TruncationPolicy)

    @property
    def L(self) -> int:
        return len(self.Bs)

    @property
    def bond_dimensions(self) -> list[int]:
        return [B.shape[0] for B in self.Bs] + [self.Bs[-1].shape[2]]

    def copy(self) -> "MpsState":
        return MpsState(
            Bs=list(self.Bs),
            lams=list(self.lams),
            canonical=self.canonical,
            policy=TruncationPolicy(
                chi_max=self.policy.chi_max,
                svd_cutoff=self.policy.svd_cutoff,
                hard_limit=self.policy.hard_limit,
                track_error=self.policy.track_error,
            ),
        )

    def norm(self) -> float:
        E = np.ones((1, 1), dtype=complex)
        for B in self.Bs:
            E = np.einsum("aA,asb,AsB->bB", E, B, B.conj(), optimize=True)
        return float(np.sqrt(np.real(E[0, 0])))


def from_product_state(pattern, policy: TruncationPolicy | None = None) -> MpsState:
    """Bond-dimension-1 MPS with definite site occupations."""
    pattern = np.asarray(pattern, dtype=int)
    Bs = []
    for n in pattern:
        B = np.zeros((1, 2, 1), dtype=complex)
        B[0, int(n), 0] = 1.0
        Bs.append(B)
    lams = [np.ones(1) for _ in range(len(pattern) + 1)]
    return MpsState(Bs=Bs, lams=lams, canonical=True, policy=policy or TruncationPolicy())


def neel_mps(L: int, policy: TruncationPolicy | None = None) -> MpsState:
    pattern = np.zeros(L, dtype=int)
    pattern[0::2] = 1
    return from_product_state(pattern, policy)


def _two_site_block(mps: MpsState, bond: int) -> np.ndarray:
    """Contraction of the two site tensors at (bond, bond+1): (l, s, t, r)."""
    return np.tensordot(mps.Bs[bond], mps.Bs[bond + 1], axes=(2, 0))


def _split_and_assign(
    mps: MpsState,
    bond: int,
    block: np.ndarray,
    policy: TruncationPolicy | None,
) -> tuple[float, bool]:
    """SVD-resplit a gated/projected two-site block and update the chain.

    ``block`` is the two-site tensor without the left Schmidt weight; the
    weighted version defines the true Schmidt values of the bond.
    """
    lam_left = mps.lams[bond]
    chi_l, _, _, chi_r = block.shape
    theta = lam_left[:, None, None, None] * block
    theta_mat = theta.reshape(chi_l * 2, 2 * chi_r)
    U, S, Vh = np.linalg.svd(theta_mat, full_matrices=False)
    k, discarded, capped = _truncate(S, policy)
    keep_norm = np.linalg.norm(S[:k])
    lam_new = S[:k] / keep_norm
    B_right = Vh[:k, :].reshape(k, 2, chi_r)
    # Inverse-free left update: fold the new right tensor back into the block.
    B_left = np.tensordot(block, B_right.conj(), axes=([2, 3], [1, 2])) / keep_norm
    mps.Bs[bond] = B_left
    mps.Bs[bond + 1] = B_right
    mps.lams[bond + 1] = lam_new
    if policy is not None:
        policy.track_error += discarded
    return discarded, capped


def apply_two_site_gate(
    mps: MpsState, bond: int, gate, policy: TruncationPolicy | None = None
) -> float:
    """TEBD update: apply a unitary 4x4 gate at (bond, bond+1) in place.

    Returns the discarded squared-Schmidt weight.  Raises
    TruncationFailureError when the bond cap forces a discard above the
    policy's hard limit.
    """
    policy = policy if policy is not None else mps.policy
    gate_mat = gate.matrix if hasattr(gate, "matrix") else np.asarray(gate)
    if np.max(np.abs(gate_mat.conj().T @ gate_mat - np.eye(4))) > 1e-12:
        raise ConfigError("two-site gate is not unitary")
    if not 0 <= bond < mps.L - 1:
        raise ConfigError(f"bond {bond} out of range for L={mps.L}")
    block = _two_site_block(mps, bond)
    gate4 = gate_mat.reshape(2, 2, 2, 2)
    block = np.einsum("stuv,luvr->lstr", gate4, block, optimize=True)
    discarded, capped = _split_and_assign(mps, bond, block, policy)
    if capped and discarded > policy.hard_limit:
        raise TruncationFailureError(
            f"discarded weight {discarded:.3e} at bond {bond} with chi_max={policy.chi_max}"
        )
    return discarded


def canonicalize(mps: MpsState, policy: TruncationPolicy | None = None) -> None:
    """Restore right-canonical form and valid Schmidt data on every bond.

    One QR sweep left-to-right followed by an SVD sweep right-to-left; also
    renormalizes the state.  Passing a policy re-applies truncation, which
    lets the bond dimension shrink after projective measurements.
    """
    L = mps.L
    # Left-to-right QR sweep: left-orthonormal tensors A_i.
    As = []
    carry = np.ones((1, 1), dtype=complex)
    for i in range(L):
        M = np.tensordot(carry, mps.Bs[i], axes=(1, 0))
        chi_l, _, chi_r = M.shape
        Q, R = np.linalg.qr(M.reshape(chi_l * 2, chi_r))
        As.append(Q.reshape(chi_l, 2, Q.shape[1]))
        carry = R
    # Right-to-left SVD sweep: Schmidt values and right-canonical tensors.
    carry = carry / np.linalg.norm(carry)
    for i in range(L - 1, 0, -1):
        M = np.tensordot(As[i], carry, axes=(2, 0))
        chi_l, _, chi_r = M.shape
        U, S, Vh = np.linalg.svd(M.reshape(chi_l, 2 * chi_r), full_matrices=False)
        k, discarded, _ = _truncate(S, policy)
        if policy is not None and discarded > 0.0:
            policy.track_error += discarded
        lam = S[:k] / np.linalg.norm(S[:k])
        mps.Bs[i] = Vh[:k, :].reshape(k, 2, chi_r)
        mps.lams[i] = lam
        carry = U[:, :k] * lam[None, :]
    mps.Bs[0] = np.tensordot(As[0], carry, axes=(2, 0))
    mps.lams[0] = np.ones(1)
    mps.lams[L] = np.ones(1)
    mps.canonical = True


def ensure_canonical(mps: MpsState, policy: TruncationPolicy | None = None) -> None:
    if not mps.canonical:
        canonicalize(mps, policy)


def apply_projector(
    mps: MpsState, location: int, projector, policy: TruncationPolicy | None = None
) -> float:
    """Project at a site (2x2) or bond (4x4), renormalize, return <Pi>.

    The state must be canonical so that the local contraction is the Born
    probability; callers that batch projections should measure through
    probe/apply paths which recanonicalize automatically.
    """
    policy = policy if policy is not None else mps.policy
    proj = projector.matrix if hasattr(projector, "matrix") else np.asarray(projector)
    ensure_canonical(mps, policy)
    if proj.shape == (2, 2):
        M = mps.lams[location][:, None, None] * mps.Bs[location]
        Mp = np.einsum("st,atb->asb", proj, M, optimize=True)
        prob = float(np.real(np.sum(np.abs(Mp) ** 2)))
        if prob < 1e-14:
            raise DegenerateProjectionError(
                f"projector at site {location} has probability {prob:.3e}"
            )
        new_B = np.einsum("st,atb->asb", proj, mps.Bs[location]) / np.sqrt(prob)
        mps.Bs[location] = new_B
        mps.canonical = False
        return prob
    if proj.shape == (4, 4):
        block = _two_site_block(mps, location)
        proj4 = proj.reshape(2, 2, 2, 2)
        block = np.einsum("stuv,luvr->lstr", proj4, block, optimize=True)
        lam_left = mps.lams[location]
        theta = lam_left[:, None, None, None] * block
        prob = float(np.real(np.sum(np.abs(theta) ** 2)))
        if prob < 1e-14:
            raise DegenerateProjectionError(
                f"projector at bond {location} has probability {prob:.3e}"
            )
        block = block / np.sqrt(prob)
        _split_and_assign(mps, location, block, policy)
        mps.canonical = False
        return prob
    raise ConfigError(f"projector shape {proj.shape} unsupported")


def measurement_probabilities(mps: MpsState, location: int, projectors) -> np.ndarray:
    """Born probabilities <Pi_q> for a full projector set at one location."""
    ensure_canonical(mps)
    probs = []
    for proj in projectors:
        proj = proj.matrix if hasattr(proj, "matrix") else np.asarray(proj)
        if proj.shape == (2, 2):
            M = mps.lams[location][:, None, None] * mps.Bs[location]
            Mp = np.einsum("st,atb->asb", proj, M, optimize=True)
        else:
            block = _two_site_block(mps, location)
            theta = mps.lams[location][:, None, None, None] * block
            Mp = np.einsum("stuv,luvr->lstr", proj.reshape(2, 2, 2, 2), theta, optimize=True)
        probs.append(np.sum(np.abs(Mp) ** 2))
    return clean_probabilities(np.array(probs))


def schmidt_spectrum(mps: MpsState, bond: int) -> np.ndarray:
    """Schmidt values across (bond, bond+1), descending, unit 2-norm."""
    if not 0 <= bond < mps.L - 1:
        raise ConfigError(f"bond {bond} out of range for L={mps.L}")
    ensure_canonical(mps)
    return mps.lams[bond + 1].copy()


_SIGMA_PLUS = np.array([[0.0, 1.0], [0.0, 0.0]], dtype=complex)
_SIGMA_MINUS = np.array([[0.0, 0.0], [1.0, 0.0]], dtype=complex)
_SIGMA_Z = np.diag([1.0, -1.0]).astype(complex)
_NUMBER = np.diag([0.0, 1.0]).astype(complex)


def _transfer(E: np.ndarray, B: np.ndarray, op: np.ndarray) -> np.ndarray:
    """Extend a mixed environment through one site with operator ``op``."""
    return np.einsum("aA,asb,ts,AtB->bB", E, B, op, B.conj(), optimize=True)


def _close(E: np.ndarray, B: np.ndarray, op: np.ndarray) -> complex:
    """Close the environment with ``op`` at the final site of the support."""
    return complex(np.einsum("aA,asb,ts,AtB,bB->", E, B, op, B.conj(), np.eye(B.shape[2])))


def _left_boundary(mps: MpsState, site: int) -> np.ndarray:
    lam = mps.lams[site]
    return np.diag(lam.astype(complex) ** 2)


def expectation_one_site(mps: MpsState, site: int, op: np.ndarray) -> complex:
    ensure_canonical(mps)
    E = _left_boundary(mps, site)
    return _close(E, mps.Bs[site], op)


def string_correlator(mps: MpsState, i: int, j: int) -> complex:
    """<c+_i c_j> including the full Jordan-Wigner string between i and j."""
    if i == j:
        return expectation_one_site(mps, i, _NUMBER)
    if i > j:
        return np.conj(string_correlator(mps, j, i))
    ensure_canonical(mps)
    E = _left_boundary(mps, i)
    E = _transfer(E, mps.Bs[i], _SIGMA_MINUS)
    for k in range(i + 1, j):
        E = _transfer(E, mps.Bs[k], _SIGMA_Z)
    return _close(E, mps.Bs[j], _SIGMA_PLUS)


def correlation_matrix(mps: MpsState) -> np.ndarray:
    """Assemble the full one-body matrix with shared string environments."""
    ensure_canonical(mps)
    L = mps.L
    C = np.zeros((L, L), dtype=complex)
    for i in range(L):
        C[i, i] = np.real(expectation_one_site(mps, i, _NUMBER))
        E = _transfer(_left_boundary(mps, i), mps.Bs[i], _SIGMA_MINUS)
        for j in range(i + 1, L):
            C[i, j] = _close(E, mps.Bs[j], _SIGMA_PLUS)
            C[j, i] = np.conj(C[i, j])
            if j < L - 1:
                E = _transfer(E, mps.Bs[j], _SIGMA_Z)
    return C


def occupations(mps: MpsState) -> np.ndarray:
    ensure_canonical(mps)
    return np.array(
        [np.real(expectation_one_site(mps, j, _NUMBER)) for j in range(mps.L)]
    )


def to_dense(mps: MpsState) -> DenseState:
    """Exact contraction into an amplitude vector (guarded to L <= 12)."""
    if mps.L > 12:
        raise ConfigError("dense contraction limited to L <= 12")
    M = mps.Bs[0].reshape(2, -1)
    for i in range(1, mps.L):
        chi = mps.Bs[i].shape[0]
        M = M.reshape(-1, chi) @ mps.Bs[i].reshape(chi, -1)
    amp = M.reshape(-1)
    amp = amp / np.linalg.norm(amp)
    return DenseState(amplitudes=amp, L=mps.L)


def save_mps(mps: MpsState, path) -> None:
    """Binary checkpoint: version byte, L, physical dim, per-bond chi, tensors."""
    chis = mps.bond_dimensions
    with open(path, "wb") as fh:
        fh.write(struct.pack("<B", _FORMAT_VERSION))
        fh.write(struct.pack("<II", mps.L, 2))
        fh.write(struct.pack(f"<{len(chis)}I", *chis))
        for B in mps.Bs:
            fh.write(np.ascontiguousarray(B, dtype=np.complex128).tobytes())


def load_mps(path, policy: TruncationPolicy | None = None) -> MpsState:
    """Read a checkpoint; Schmidt data is rebuilt by recanonicalization."""
    with open(path, "rb") as fh:
        (version,) = struct.unpack("<B", fh.read(1))
        if version != _FORMAT_VERSION:
            raise ConfigError(f"unsupported snapshot version {version}")
        L, phys = struct.unpack("<II", fh.read(8))
        if phys != 2:
            raise ConfigError(f"unsupported physical dimension {phys}")
        chis = struct.unpack(f"<{L + 1}I", fh.read(4 * (L + 1)))
        Bs = []
        for i in range(L):
            count = chis[i] * phys * chis[i + 1]
            raw = fh.read(16 * count)
            B = np.frombuffer(raw, dtype=np.complex128).reshape(chis[i], phys, chis[i + 1])
            Bs.append(B.copy())
    lams = [np.ones(1) for _ in range(L + 1)]
    state = MpsState(Bs=Bs, lams=lams, canonical=False, policy=policy or TruncationPolicy())
    canonicalize(state)
    return state
