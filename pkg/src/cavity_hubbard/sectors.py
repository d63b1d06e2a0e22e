"""Hamiltonian in the x-quantized spin frame, block-diagonal in total S_x.

Rotating every site's spin so that the quantization axis points along x
leaves hopping and the on-site term unchanged (both are spin-rotation
invariant) and turns the staggered spin flip into

    B = sum_j (-1)^(j+1) (n_{j+} - n_{j-}),

which is diagonal.  The rotated Hamiltonian therefore conserves the number
of +x and -x fermions separately, and each sector with ``n_plus`` fermions
along +x is a fixed-(N_up, N_dn) Hubbard problem with a diagonal
long-range term.  Sector bases reuse :class:`FockBasis` with the ``up`` bit
meaning +x and the ``down`` bit meaning -x.

The frame change is a product of site-local gates that keep each site's
occupation, so it maps the fixed-N basis onto itself:

    |+> -> (|up> + |dn>)/sqrt2,   |-> -> (|up> - |dn>)/sqrt2,   |+-> -> -|up dn>.

It is an involution; :func:`to_z_frame` and :func:`to_x_frame` are the same map.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .model import DimensionError, FockBasis, ModelParams, popcount

SQRT_HALF = math.sqrt(0.5)


def _even_mask(L: int) -> int:
    return sum(1 << (2 * j) for j in range(L))


@dataclass(frozen=True, eq=False)
class SectorBasis:
    """Fixed-N states with ``n_plus`` fermions along +x, plus their position in the full basis."""

    parent: FockBasis
    n_plus: int
    positions: np.ndarray  # indices into parent.states

    @cached_property
    def basis(self) -> FockBasis:
        states = self.parent.states[self.positions]
        states.setflags(write=False)
        return FockBasis(L=self.parent.L, N=self.parent.N, states=states)

    @property
    def dim(self) -> int:
        return int(self.positions.size)

    @property
    def n_minus(self) -> int:
        return self.parent.N - self.n_plus

    @property
    def sx(self) -> float:
        """Total S_x carried by every state in the sector."""
        return 0.5 * (self.n_plus - self.n_minus)

    @cached_property
    def staggered_moment(self) -> np.ndarray:
        """Diagonal of ``B`` in the x frame."""
        up, dn = self.basis.site_occupations
        stagger = np.where(np.arange(self.parent.L) % 2 == 0, 1, -1)
        return ((up.astype(np.int64) - dn) * stagger).sum(axis=1)

    def embed(self, v: np.ndarray) -> np.ndarray:
        out = np.zeros((self.parent.dim,) + v.shape[1:], dtype=v.dtype)
        out[self.positions] = v
        return out

    def restrict(self, v: np.ndarray) -> np.ndarray:
        return v[self.positions]


def sector_bases(basis: FockBasis) -> list[SectorBasis]:
    """Every non-empty +x population sector of ``basis``, by increasing ``n_plus``."""
    plus = popcount(basis.states & _even_mask(basis.L))
    out = []
    for n_plus in range(max(0, basis.N - basis.L), min(basis.N, basis.L) + 1):
        pos = np.flatnonzero(plus == n_plus)
        if pos.size:
            out.append(SectorBasis(parent=basis, n_plus=n_plus, positions=pos))
    return out


def x_frame_diagonal(params: ModelParams, sector: SectorBasis) -> np.ndarray:
    return 0.5 * params.U_s * sector.basis.double_occupancy + params.long_range_coeff * (
        sector.staggered_moment.astype(float) ** 2
    )


def apply_x_frame_hamiltonian(params: ModelParams, sector: SectorBasis, v: np.ndarray, diag=None) -> np.ndarray:
    """Rotated ``H @ v`` inside one sector (vector or ``(dim, k)`` block)."""
    if v.shape[0] != sector.dim:
        raise DimensionError(f"vector has length {v.shape[0]}, sector dim is {sector.dim}")
    if diag is None:
        diag = x_frame_diagonal(params, sector)
    out = (diag[:, None] if v.ndim > 1 else diag) * v
    if params.t != 0:
        out += params.t * (sector.basis.hopping_matrix @ v)
    return out


@dataclass(frozen=True, eq=False)
class FrameMap:
    """Site-gate tables for the frame change on one fixed-N basis."""

    basis: FockBasis

    @cached_property
    def _tables(self):
        s = self.basis.states
        tables = []
        for j in range(self.basis.L):
            up = np.int64(1) << (2 * j)
            dn = np.int64(1) << (2 * j + 1)
            has_up, has_dn = (s & up) != 0, (s & dn) != 0
            single_up = np.flatnonzero(has_up & ~has_dn)
            partner = self.basis.lookup(s[single_up] ^ up ^ dn)
            double = np.flatnonzero(has_up & has_dn)
            tables.append((single_up, partner, double))
        return tables

    def apply(self, v: np.ndarray) -> np.ndarray:
        """Apply every site gate; ``v`` indexed by the full fixed-N basis."""
        out = np.array(v, dtype=float, copy=True)
        for single_up, partner, double in self._tables:
            a, b = out[single_up], out[partner]
            out[single_up] = SQRT_HALF * (a + b)
            out[partner] = SQRT_HALF * (a - b)
            out[double] *= -1.0
        return out


def to_z_frame(frame: FrameMap, sector: SectorBasis, v: np.ndarray) -> np.ndarray:
    """Sector vector(s) in the x frame -> vector(s) in the original fixed-N basis."""
    return frame.apply(sector.embed(v))


def to_x_frame(frame: FrameMap, v: np.ndarray) -> np.ndarray:
    return frame.apply(v)


@dataclass(frozen=True, eq=False)
class MirrorMap:
    """Exchange of +x and -x on every site: maps sector ``n_plus`` onto ``N - n_plus``."""

    source: SectorBasis
    target: SectorBasis

    @cached_property
    def _perm(self):
        s = self.source.basis.states
        even = np.int64(_even_mask(self.source.parent.L))
        swapped = ((s & even) << 1) | ((s >> 1) & even)
        idx = self.target.basis.lookup(swapped)
        # c+^dag c-^dag -> c-^dag c+^dag on each doubly occupied site
        sign = 1.0 - 2.0 * (self.source.basis.double_occupancy.astype(np.int64) & 1)
        return idx, sign

    def apply(self, v: np.ndarray) -> np.ndarray:
        idx, sign = self._perm
        out = np.empty((self.target.dim,) + v.shape[1:], dtype=v.dtype)
        out[idx] = (sign[:, None] if v.ndim > 1 else sign) * v
        return out
