"""Spin correlations, static structure factors and cavity-photon observables.

Spin operators are ``s_j^a = (1/2) C_j^dag sigma_a C_j`` (hbar = 1).  Every
correlator matrix is a Gram matrix of the real vectors ``w_l = s_l^a psi``
(for ``a = y`` the vector is ``(1/2)(c^dag_up c_dn - c^dag_dn c_up) psi``,
i.e. ``s^y`` with the factor ``-i`` stripped, which leaves ``<s^y s^y>``
unchanged), so one pass of L operator applications yields all L^2 entries.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .model import CavityParams, FockBasis, ModelParams, apply_staggered_spinflip

AXES = ("x", "y", "z")
DEFAULT_K_POINTS = 1025
PHOTON_FLOOR = 1e-14


@dataclass(frozen=True)
class SpinCorrelations:
    alpha: str
    values: np.ndarray
    norm_mode: str = "per_pair"


@dataclass(frozen=True)
class StructureFactor:
    alpha: str
    k_grid: np.ndarray
    values: np.ndarray

    def at(self, k: float) -> float:
        """Value at the grid point nearest to ``k``."""
        return float(self.values[np.argmin(np.abs(self.k_grid - k))])


@dataclass(frozen=True)
class PhotonObservables:
    photon_number: float
    mean_amplitude: complex
    photon_number_from_sx: float
    fluctuation_ratio: float | None = field(default=None)

    @property
    def coherent_fraction(self) -> float:
        return abs(self.mean_amplitude) ** 2


def k_grid(n_points: int = DEFAULT_K_POINTS) -> np.ndarray:
    """Uniform grid on [-pi, pi] with both endpoints; odd sizes contain k = 0."""
    if n_points < 3:
        raise ValueError("k-grid needs at least 3 points")
    return np.linspace(-np.pi, np.pi, n_points)


def _check_axis(alpha: str) -> None:
    if alpha not in AXES:
        raise ValueError(f"axis must be one of {AXES}, got {alpha!r}")


def site_spin_vectors(psi: np.ndarray, basis: FockBasis, alpha: str) -> np.ndarray:
    """Rows ``w_l`` (shape ``(L, dim)``) with ``<s_l s_j> = w_l . w_j``."""
    _check_axis(alpha)
    if psi.shape[0] != basis.dim:
        raise ValueError("psi does not match the basis")
    L = basis.L
    W = np.zeros((L, basis.dim))
    if alpha == "z":
        n_up, n_dn = basis.site_occupations
        W[:] = 0.5 * (n_up - n_dn).T * psi
        return W
    # up<-dn and dn<-up; x adds them, y subtracts
    rel = 1.0 if alpha == "x" else -1.0
    for j in range(L):
        up, dn = 2 * j, 2 * j + 1
        src, dst, sign = basis.hop_table(up, dn)
        W[j, dst] += 0.5 * sign * psi[src]
        src, dst, sign = basis.hop_table(dn, up)
        W[j, dst] += 0.5 * rel * sign * psi[src]
    return W


def correlator_matrix(psi: np.ndarray, basis: FockBasis, alpha: str) -> np.ndarray:
    """``corr_mat[l, j] = <s_l^alpha s_j^alpha>`` (0-based sites), symmetric PSD."""
    W = site_spin_vectors(psi, basis, alpha)
    corr_mat = W @ W.T
    return 0.5 * (corr_mat + corr_mat.T)


def spin_correlator(psi: np.ndarray, basis: FockBasis, alpha: str, l: int, j: int) -> float:
    """``<s_l^alpha s_j^alpha>`` with 1-based site labels."""
    if not (1 <= l <= basis.L and 1 <= j <= basis.L):
        raise IndexError(f"sites must lie in 1..{basis.L}")
    W = site_spin_vectors(psi, basis, alpha)
    return float(W[l - 1] @ W[j - 1])


def correlation_from_matrix(corr_mat: np.ndarray, alpha: str, norm_mode: str = "per_pair") -> SpinCorrelations:
    L = corr_mat.shape[0]
    if norm_mode not in ("per_pair", "per_site"):
        raise ValueError(f"unknown norm_mode {norm_mode!r}")
    values = np.empty(L)
    for r in range(L):
        total = np.trace(corr_mat, offset=r)
        values[r] = total / (L - r if norm_mode == "per_pair" else L)
    return SpinCorrelations(alpha=alpha, values=values, norm_mode=norm_mode)


def correlation_function(psi, basis, alpha, norm_mode="per_pair") -> SpinCorrelations:
    """``C(r)`` from the open-chain pairs ``(l, l+r)``, ``l = 1..L-r``.

    ``per_site`` divides by ``L`` for every ``r``; ``per_pair`` divides by the
    number of pairs ``L - r``.
    """
    return correlation_from_matrix(correlator_matrix(psi, basis, alpha), alpha, norm_mode)


def structure_from_matrix(corr_mat: np.ndarray, alpha: str, ks: np.ndarray) -> StructureFactor:
    L = corr_mat.shape[0]
    sites = np.arange(L)
    phase = np.exp(1j * np.outer(ks, sites))  # (nk, L)
    # (1/L) sum_{l,j} e^{ik(l-j)} corr_mat[l,j] = (1/L) Re(phase corr_mat phase^dag) for symmetric corr_mat
    values = np.einsum("kl,lj,kj->k", phase, corr_mat, phase.conj()).real / L
    return StructureFactor(alpha=alpha, k_grid=np.asarray(ks, dtype=float), values=values)


def structure_factor(psi, basis, alpha, ks=None) -> StructureFactor:
    ks = k_grid() if ks is None else np.asarray(ks, dtype=float)
    return structure_from_matrix(correlator_matrix(psi, basis, alpha), alpha, ks)


def photon_observables(
    psi: np.ndarray, basis: FockBasis, cavity: CavityParams, model: ModelParams
) -> PhotonObservables:
    """Steady-state cavity observables with ``a = G/(i kappa + delta) * B``.

    ``<a^dag a>`` is evaluated twice: from ``|B psi|^2`` and from the
    staggered x structure factor, ``4 (U_l/delta) S_x(pi)``.
    """
    cavity.check_consistent(model)
    Bpsi = apply_staggered_spinflip(basis, psi)
    scale = cavity.G**2 / (cavity.kappa**2 + cavity.delta_tilde**2)
    photon_number = scale * float(Bpsi @ Bpsi)
    mean_amplitude = cavity.amplitude_factor * float(psi @ Bpsi)

    Mx = correlator_matrix(psi, basis, "x")
    sx_pi = structure_from_matrix(Mx, "x", np.array([np.pi])).values[0]
    from_sx = 4.0 * model.U_l / cavity.delta_tilde * sx_pi if model.U_l != 0 else 0.0

    if photon_number > PHOTON_FLOOR:
        ratio = 1.0 - abs(mean_amplitude) ** 2 / photon_number
    else:
        ratio = None
    return PhotonObservables(
        photon_number=photon_number,
        mean_amplitude=mean_amplitude,
        photon_number_from_sx=float(from_sx),
        fluctuation_ratio=ratio,
    )


@dataclass(frozen=True)
class ObservableSet:
    """Everything computed from one ground state."""

    correlations: dict[str, SpinCorrelations]
    structure: dict[str, StructureFactor]
    onsite_square: dict[str, float]
    photons: PhotonObservables | None = None
    lattice_sums: dict[str, float] | None = None  # sum of S over the L lattice momenta

    @property
    def sum_rule_gap(self) -> float:
        """Largest ``|sum_m S(2 pi m / L) - sum_l <(s_l)^2>|`` over the computed axes."""
        return max(abs(self.lattice_sums[a] - self.onsite_square[a]) for a in self.onsite_square)


def compute_observables(
    psi: np.ndarray,
    basis: FockBasis,
    model: ModelParams | None = None,
    cavity: CavityParams | None = None,
    axes=AXES,
    n_k: int = DEFAULT_K_POINTS,
    norm_mode: str = "per_pair",
) -> ObservableSet:
    ks = k_grid(n_k)
    corr, sf, onsite, sums = {}, {}, {}, {}
    for a in axes:
        corr_mat = correlator_matrix(psi, basis, a)
        corr[a] = correlation_from_matrix(corr_mat, a, norm_mode)
        sf[a] = structure_from_matrix(corr_mat, a, ks)
        onsite[a] = float(np.trace(corr_mat))
        sums[a] = float(np.sum(structure_from_matrix(corr_mat, a, lattice_momenta(basis.L)).values))
    photons = None
    if cavity is not None and model is not None:
        photons = photon_observables(psi, basis, cavity, model)
    return ObservableSet(correlations=corr, structure=sf, onsite_square=onsite, photons=photons, lattice_sums=sums)


def lattice_momenta(L: int) -> np.ndarray:
    return 2 * math.pi * np.arange(L) / L
