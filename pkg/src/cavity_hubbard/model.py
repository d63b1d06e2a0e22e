"""Fock basis and matrix-free operators for the cavity-extended Hubbard chain.

Modes are ordered site-major: mode ``2*(j-1)`` is site ``j`` spin-up and mode
``2*(j-1)+1`` is site ``j`` spin-down (sites are 1-based in formulas, 0-based
in code).  A basis state is the integer whose bit ``m`` is the occupation of
mode ``m``.  The fermionic sign of ``c^dag_a c_b`` is the parity of the
occupied modes strictly between ``a`` and ``b``.

The Hamiltonian is::

    H = -t sum_{j,s} (c^dag_{j s} c_{j+1 s} + h.c.)
        + (U_s / 2) sum_j n_{j up} n_{j dn}
        + (U_l / L) B^2,

    B = sum_j (-1)^(j+1) (c^dag_{j up} c_{j dn} + c^dag_{j dn} c_{j up}),

with open boundaries.  ``B^2`` is only ever applied as ``B @ (B @ v)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import LinearOperator

MAX_SITES = 14
DEFAULT_MAX_DIM = 10_000_000
CONSISTENCY_RTOL = 1e-12


class CapacityError(ValueError):
    """Requested Hilbert space exceeds the configured dimension ceiling."""


class DimensionError(ValueError):
    """Vector length does not match the basis dimension."""


@dataclass(frozen=True)
class ModelParams:
    L: int
    N: int
    t: float
    U_s: float
    U_l: float
    boundary: str = "open"

    def __post_init__(self):
        if not isinstance(self.L, (int, np.integer)) or self.L < 2 or self.L % 2:
            raise ValueError(f"L must be an even integer >= 2, got {self.L!r}")
        if self.L > MAX_SITES:
            raise ValueError(f"L={self.L} exceeds the desk-scale cap {MAX_SITES}")
        if not 0 <= self.N <= 2 * self.L:
            raise ValueError(f"N={self.N} outside [0, 2L]")
        for name in ("t", "U_s", "U_l"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")
        if self.boundary != "open":
            raise ValueError("only open boundary conditions are supported")

    @classmethod
    def half_filled(cls, L: int, t: float, U_s: float, U_l: float) -> "ModelParams":
        return cls(L=L, N=L, t=t, U_s=U_s, U_l=U_l)

    @property
    def long_range_coeff(self) -> float:
        return self.U_l / self.L


@dataclass(frozen=True)
class CavityParams:
    """Effective cavity constants: coupling ``G``, decay ``kappa``, detuning ``delta_tilde``."""

    G: float
    kappa: float
    delta_tilde: float

    def __post_init__(self):
        if self.kappa < 0:
            raise ValueError("kappa must be non-negative")
        if self.delta_tilde == 0 and self.G != 0:
            raise ValueError("delta_tilde = 0 with nonzero G is not a dispersive cavity")
        for name in ("G", "kappa", "delta_tilde"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")

    def implied_U_l(self, L: int) -> float:
        """``U_l = L * G^2 * delta / (delta^2 + kappa^2)``."""
        return L * self.G**2 * self.delta_tilde / (self.delta_tilde**2 + self.kappa**2)

    @property
    def amplitude_factor(self) -> complex:
        """``G / (i kappa + delta_tilde)``: maps ``<B>`` to ``<a>``."""
        return self.G / complex(self.delta_tilde, self.kappa)

    def check_consistent(self, model: ModelParams) -> None:
        implied = self.implied_U_l(model.L)
        scale = max(abs(implied), abs(model.U_l))
        if abs(implied - model.U_l) > CONSISTENCY_RTOL * scale:
            raise ValueError(
                f"cavity parameters imply U_l={implied!r} but model has U_l={model.U_l!r}"
            )
        if model.U_l != 0 and np.sign(model.U_l) != np.sign(self.delta_tilde):
            raise ValueError("sign(U_l) must equal sign(delta_tilde)")

    @classmethod
    def from_U_l(cls, U_l: float, L: int, delta_abs: float, kappa: float) -> "CavityParams":
        """Cavity constants reproducing ``U_l`` with ``|delta_tilde| = delta_abs``.

        The detuning takes the sign of ``U_l`` (positive when ``U_l == 0``).
        """
        if delta_abs <= 0:
            raise ValueError("delta_abs must be positive")
        delta = math.copysign(delta_abs, U_l) if U_l != 0 else delta_abs
        coupling = math.sqrt(abs(U_l) * (delta**2 + kappa**2) / (L * delta_abs))
        return cls(G=coupling, kappa=kappa, delta_tilde=delta)


def _combinations_sorted(n_bits: int, n_ones: int) -> np.ndarray:
    """All ``n_bits``-bit integers with ``n_ones`` set bits, ascending."""
    # table[k]: sorted masks over the bits seen so far with k ones; adding bit b
    # on top of table[k-1] yields values >= 2**b, so concatenation stays sorted.
    table = [np.zeros(1, dtype=np.int64)] + [np.zeros(0, dtype=np.int64)] * n_ones
    for b in range(n_bits):
        bit = np.int64(1) << b
        for k in range(min(b + 1, n_ones), 0, -1):
            table[k] = np.concatenate([table[k], table[k - 1] | bit])
    return table[n_ones]


def popcount(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.uint64)
    return np.bitwise_count(x).astype(np.int64)


@dataclass(frozen=True, eq=False)
class FockBasis:
    L: int
    N: int
    states: np.ndarray

    @property
    def dim(self) -> int:
        return int(self.states.shape[0])

    @property
    def n_modes(self) -> int:
        return 2 * self.L

    def index(self, mask: int) -> int:
        i = int(np.searchsorted(self.states, mask))
        if i >= self.dim or self.states[i] != mask:
            raise KeyError(f"state {mask:#b} not in basis (L={self.L}, N={self.N})")
        return i

    def lookup(self, masks: np.ndarray) -> np.ndarray:
        idx = np.searchsorted(self.states, masks)
        idx_c = np.minimum(idx, self.dim - 1)
        if masks.size and not np.array_equal(self.states[idx_c], masks):
            raise KeyError("operator left the fixed-N sector")
        return idx

    def product_state(self, occupations: str) -> np.ndarray:
        """Unit vector for a site string such as ``"udud"`` or ``"2020"``.

        Characters: ``u`` up, ``d`` down, ``2`` doubly occupied, ``0`` empty.
        """
        if len(occupations) != self.L:
            raise ValueError("one character per site required")
        mask = 0
        for j, ch in enumerate(occupations):
            if ch in "u2":
                mask |= 1 << (2 * j)
            if ch in "d2":
                mask |= 1 << (2 * j + 1)
        v = np.zeros(self.dim)
        v[self.index(mask)] = 1.0
        return v

    def hop_table(self, a: int, b: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Action of ``c^dag_a c_b`` as ``(src, dst, sign)`` index arrays."""
        s = self.states
        bit_a = np.int64(1) << a
        bit_b = np.int64(1) << b
        src = np.flatnonzero(((s & bit_b) != 0) & ((s & bit_a) == 0))
        moved = s[src] ^ bit_a ^ bit_b
        lo, hi = min(a, b), max(a, b)
        between = ((np.int64(1) << hi) - 1) ^ ((np.int64(1) << (lo + 1)) - 1)
        sign = 1.0 - 2.0 * (popcount(s[src] & between) & 1)
        return src, self.lookup(moved), sign

    def _term_matrix(self, terms) -> sp.csr_matrix:
        rows, cols, vals = [], [], []
        for a, b, coeff in terms:
            src, dst, sign = self.hop_table(a, b)
            rows.append(dst)
            cols.append(src)
            vals.append(coeff * sign)
        if not rows:
            return sp.csr_matrix((self.dim, self.dim))
        m = sp.coo_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
            shape=(self.dim, self.dim),
        )
        return m.tocsr()

    @cached_property
    def hopping_matrix(self) -> sp.csr_matrix:
        """``-sum (c^dag_{j s} c_{j+1 s} + h.c.)`` (unit hopping, sign included)."""
        terms = []
        for j in range(self.L - 1):
            for s in (0, 1):
                a, b = 2 * j + s, 2 * (j + 1) + s
                terms += [(a, b, -1.0), (b, a, -1.0)]
        return self._term_matrix(terms)

    @cached_property
    def spinflip_matrix(self) -> sp.csr_matrix:
        """Staggered spin-flip operator ``B``."""
        terms = []
        for j in range(self.L):
            stagger = 1.0 if j % 2 == 0 else -1.0
            up, dn = 2 * j, 2 * j + 1
            terms += [(up, dn, stagger), (dn, up, stagger)]
        return self._term_matrix(terms)

    @cached_property
    def site_occupations(self) -> tuple[np.ndarray, np.ndarray]:
        """``(n_up, n_dn)`` per state and site, each of shape ``(dim, L)``."""
        shifts = np.arange(self.L, dtype=np.int64)
        n_up = (self.states[:, None] >> (2 * shifts)) & 1
        n_dn = (self.states[:, None] >> (2 * shifts + 1)) & 1
        return n_up.astype(np.int8), n_dn.astype(np.int8)

    @cached_property
    def double_occupancy(self) -> np.ndarray:
        even = np.int64(int("01" * self.L, 2))
        return popcount(self.states & (self.states >> 1) & even).astype(float)

    @cached_property
    def single_occupancy(self) -> np.ndarray:
        even = np.int64(int("01" * self.L, 2))
        return popcount((self.states ^ (self.states >> 1)) & even).astype(float)

    @cached_property
    def down_parity(self) -> np.ndarray:
        """Diagonal of ``(-1)^{N_dn}``, the unitary ``c_{j dn} -> -c_{j dn}``."""
        odd = np.int64(int("10" * self.L, 2))
        return 1.0 - 2.0 * (popcount(self.states & odd) & 1)


def build_basis(L: int, N: int, max_dim: int = DEFAULT_MAX_DIM) -> FockBasis:
    if L > MAX_SITES:
        raise CapacityError(f"L={L} exceeds the desk-scale cap {MAX_SITES}")
    if not 0 <= N <= 2 * L:
        raise ValueError(f"N={N} outside [0, 2L]")
    dim = math.comb(2 * L, N)
    if dim > max_dim:
        raise CapacityError(f"dim C({2 * L},{N}) = {dim} exceeds max_dim={max_dim}")
    states = _combinations_sorted(2 * L, N)
    assert states.shape[0] == dim
    states.setflags(write=False)
    return FockBasis(L=L, N=N, states=states)


def _check_vector(basis: FockBasis, v: np.ndarray) -> np.ndarray:
    v = np.asarray(v)
    if v.shape[0] != basis.dim:
        raise DimensionError(f"vector has length {v.shape[0]}, basis dim is {basis.dim}")
    return v


def _check_basis(params: ModelParams, basis: FockBasis) -> None:
    if (params.L, params.N) != (basis.L, basis.N):
        raise DimensionError(
            f"params (L={params.L}, N={params.N}) do not match basis (L={basis.L}, N={basis.N})"
        )


def apply_staggered_spinflip(basis: FockBasis, v: np.ndarray) -> np.ndarray:
    return basis.spinflip_matrix @ _check_vector(basis, v)


def apply_total_sx(basis: FockBasis, v: np.ndarray) -> np.ndarray:
    """``S_x = (1/2) sum_j (c^dag_{j up} c_{j dn} + h.c.)``."""
    v = _check_vector(basis, v)
    out = np.zeros(v.shape, dtype=np.result_type(v, float))
    for j in range(basis.L):
        up, dn = 2 * j, 2 * j + 1
        for a, b in ((up, dn), (dn, up)):
            src, dst, sign = basis.hop_table(a, b)
            out[dst] += 0.5 * _scale(sign, v[src])
    return out


def _scale(sign: np.ndarray, block: np.ndarray) -> np.ndarray:
    return sign.reshape((-1,) + (1,) * (block.ndim - 1)) * block


def diagonal_energies(params: ModelParams, basis: FockBasis) -> np.ndarray:
    """Diagonal of ``H``: on-site term plus ``(U_l/L) * diag(B^2)``.

    ``diag(B^2)`` counts the singly occupied sites, since each such site
    contributes exactly one off-diagonal ``B`` element of magnitude one.
    """
    _check_basis(params, basis)
    return 0.5 * params.U_s * basis.double_occupancy + params.long_range_coeff * basis.single_occupancy


def apply_hamiltonian(params: ModelParams, basis: FockBasis, v: np.ndarray) -> np.ndarray:
    """``H @ v`` for a vector or a ``(dim, k)`` block of vectors."""
    _check_basis(params, basis)
    v = _check_vector(basis, v)
    onsite = 0.5 * params.U_s * basis.double_occupancy
    if v.ndim > 1:
        onsite = onsite[:, None]
    out = onsite * v
    if params.t != 0:
        out += params.t * (basis.hopping_matrix @ v)
    if params.U_l != 0:
        flip = basis.spinflip_matrix
        out += params.long_range_coeff * (flip @ (flip @ v))
    return out


def hamiltonian_operator(params: ModelParams, basis: FockBasis) -> LinearOperator:
    _check_basis(params, basis)

    def mv(v):
        return apply_hamiltonian(params, basis, v)

    return LinearOperator(
        (basis.dim, basis.dim), matvec=mv, matmat=mv, rmatvec=mv, dtype=float
    )
