"""Lowest eigenpairs of the Hamiltonian by block Lanczos with full reorthogonalization.

The Krylov basis is grown one vector at a time from a start block of ``b``
vectors (band Lanczos): the candidate for basis slot ``p`` is ``H v_{p-b}``,
Gram-Schmidt-orthogonalized twice against every stored vector.  When the
basis is full, the lowest Ritz vectors are kept and the residual block is
appended (thick / Krylov-Schur restart).  A block start is what lets the
solver return every member of a degenerate multiplet up to size ``b``; a
single start vector only ever sees one direction of each eigenspace.
"""

from __future__ import annotations

import logging
import weakref
from dataclasses import dataclass, field

import numpy as np

from .model import FockBasis, ModelParams, apply_hamiltonian, apply_total_sx
from .sectors import FrameMap, MirrorMap, apply_x_frame_hamiltonian, sector_bases, to_x_frame, to_z_frame, x_frame_diagonal

log = logging.getLogger(__name__)

RESIDUAL_TOL = 1e-10
ACCEPT_TOL = 1e-9
MAX_ITER = 2000
DEGENERACY_TOL = 1e-10
DENSE_MAX_DIM = 5000
DEFAULT_NCV = 100
WARM_NOISE = 1e-3


class ConvergenceError(RuntimeError):
    def __init__(self, message, best_residual=None, solution=None):
        super().__init__(message)
        self.best_residual = best_residual
        self.solution = solution


@dataclass
class GroundStateSolution:
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray  # shape (dim, k), columns orthonormal
    iterations: int
    residual_norms: np.ndarray
    restarts: int = 0
    ground_vector: np.ndarray | None = field(default=None, repr=False)
    ground_sx: float | None = None
    sector_sx: np.ndarray | None = None  # S_x of each returned eigenvector, when known
    warm_start: object = field(default=None, repr=False)

    @property
    def gap(self) -> float:
        if len(self.eigenvalues) < 2:
            return float("nan")
        return float(self.eigenvalues[1] - self.eigenvalues[0])

    @property
    def degenerate_flag(self) -> bool:
        if len(self.eigenvalues) < 2:
            return False
        return bool(self.gap < DEGENERACY_TOL * max(1.0, abs(self.eigenvalues[0])))

    @property
    def psi(self) -> np.ndarray:
        return self.eigenvectors[:, 0] if self.ground_vector is None else self.ground_vector


def _orthogonalize(V: np.ndarray, n_cur: int, w: np.ndarray) -> tuple[np.ndarray, float, float]:
    """Classical Gram-Schmidt of ``w`` against ``V[:n_cur]``, in place.

    Repeats (at most three passes) while a pass removes more than ~30% of the
    norm (DGKS criterion).  Returns ``(coefficients, norm_after, norm_before)``.
    """
    coeffs = np.zeros(n_cur)
    before = float(np.linalg.norm(w))
    prev = before
    for _ in range(3):
        if n_cur == 0:
            break
        c = V[:n_cur] @ w
        w -= c @ V[:n_cur]
        coeffs += c
        nrm = float(np.linalg.norm(w))
        if nrm > 0.7 * prev:
            break
        prev = nrm
    return coeffs, float(np.linalg.norm(w)), before


def _fresh_direction(V: np.ndarray, n_cur: int, rng) -> np.ndarray | None:
    """Random unit vector orthogonal to ``V[:n_cur]``; ``None`` if the space is exhausted."""
    n = V.shape[1]
    if n_cur >= n:
        return None
    for _ in range(5):
        w = rng.standard_normal(n)
        _, nrm, before = _orthogonalize(V, n_cur, w)
        if nrm > 1e-6 * before:
            return w / nrm
    return None


def _append(V: np.ndarray, n_cur: int, w: np.ndarray, rng) -> tuple[int, np.ndarray, float]:
    """Orthonormalize ``w`` into slot ``n_cur``.

    Returns ``(new_count, coefficients, coupling)``; a numerically dependent
    ``w`` is replaced by a fresh random direction with zero coupling.
    """
    coeffs, nrm, before = _orthogonalize(V, n_cur, w)
    if nrm > 1e-10 * before and nrm > 0:
        V[n_cur] = w / nrm
        return n_cur + 1, coeffs, nrm
    fresh = _fresh_direction(V, n_cur, rng)
    if fresh is None:
        return n_cur, coeffs, 0.0
    V[n_cur] = fresh
    return n_cur + 1, coeffs, 0.0


def _orthogonalize_block(V: np.ndarray, n_cur: int, W: np.ndarray, lo: int = 0) -> np.ndarray:
    """Block classical Gram-Schmidt of the rows of ``W`` against ``V[:n_cur]``, in place.

    A first pass against ``V[lo:n_cur]`` (the vectors the Lanczos recurrence
    couples to) removes the large components; a full pass then cleans up the
    rounding-level remainder, and is repeated only if a row still loses more
    than ~30% of its norm.  Each pass reads the stored basis once for the
    whole block.  Returns the accumulated coefficients ``(n_cur, b)``.
    """
    C = np.zeros((n_cur, W.shape[0]))
    if n_cur == 0:
        return C
    c = W @ V[lo:n_cur].T
    W -= c @ V[lo:n_cur]
    C[lo:] += c.T
    prev = np.linalg.norm(W, axis=1)
    for _ in range(2):
        c = W @ V[:n_cur].T
        W -= c @ V[:n_cur]
        C += c.T
        nrm = np.linalg.norm(W, axis=1)
        if np.all(nrm > 0.7 * prev):
            break
        prev = nrm
    return C


def _append_block(V: np.ndarray, n_cur: int, W: np.ndarray, rng, lo: int = 0) -> tuple[int, np.ndarray, np.ndarray]:
    """Orthonormalize the rows of ``W`` into ``V[n_cur:]``.

    Returns ``(new_count, C, R)`` with ``W_i = sum_r C[r, i] V_r + sum_l R[l, i] V_{n_cur + l}``
    for the original rows.  Numerically dependent rows are replaced by fresh
    random directions with zero coupling.
    """
    before = np.linalg.norm(W, axis=1)
    C = _orthogonalize_block(V, n_cur, W, lo)
    b = W.shape[0]
    R = np.zeros((b, b))
    start = n_cur
    for i in range(b):
        w = W[i]
        # cheap pass against the rows appended from this block, full pass only on heavy cancellation
        c, nrm, pre = _orthogonalize(V[start:], n_cur - start, w)
        R[: n_cur - start, i] += c
        if nrm < 0.7 * pre:
            c_all, nrm, _ = _orthogonalize(V, n_cur, w)
            C[:, i] += c_all[:start]
            R[: n_cur - start, i] += c_all[start:]
        if nrm > 1e-10 * before[i] and nrm > 0:
            V[n_cur] = w / nrm
            R[n_cur - start, i] = nrm
            n_cur += 1
        else:
            fresh = _fresh_direction(V, n_cur, rng)
            if fresh is not None:
                V[n_cur] = fresh
                n_cur += 1
    return n_cur, C, R


def block_lanczos(
    matvec,
    n: int,
    k: int,
    *,
    block: int | None = None,
    ncv: int | None = None,
    tol: float = RESIDUAL_TOL,
    max_iter: int = MAX_ITER,
    seed: int = 0,
    v0: np.ndarray | None = None,
):
    """Lowest ``k`` eigenpairs of the symmetric operator ``matvec`` on R^n.

    ``matvec`` must accept an ``(n, b)`` block.  Returns
    ``(values, vectors, matvecs, restarts, ritz_residuals)``.  ``max_iter``
    bounds the number of restart cycles; each cycle refills the Krylov basis
    to ``ncv`` vectors.  Raises :class:`ConvergenceError` (carrying the best
    Ritz residual and the current Ritz pairs) when it runs out.  ``v0`` may
    hold up to ``block`` start columns.
    """
    if k < 1 or k > n:
        raise ValueError(f"need 1 <= k <= dim, got k={k}, dim={n}")
    rng = np.random.default_rng(seed)
    b = min(block or k, n)
    m = min(n, max(ncv or DEFAULT_NCV, k + 2 * b))
    if m < n:
        m -= (m - b) % b
    keep_target = max(k, min(m - 2 * b, (m + k) // 2))
    # keep + j*b must land on m exactly
    keep_target -= (keep_target - m) % b
    if keep_target < k:
        keep_target += b

    V = np.zeros((m, n))
    T = np.zeros((m, m))
    start = rng.standard_normal((b, n))
    if v0 is not None:
        v0 = np.asarray(v0, dtype=float).reshape(n, -1)
        n_given = min(b, v0.shape[1])
        start[:n_given] = v0[:, :n_given].T
    n_cur, _, _ = _append_block(V, 0, start, rng)

    matvecs = restarts = 0
    best = np.inf
    j = 0  # first basis vector not yet multiplied by H
    kept = 0  # Ritz vectors carried over by the last restart; the first block after it couples to all of them
    while True:
        # grow H V = V T + W^T E_tail
        tail_rows, tail_vecs = [], []
        while j < n_cur:
            rows = np.arange(j, min(j + b, n_cur))
            W = np.ascontiguousarray(matvec(np.ascontiguousarray(V[rows].T)).T)
            matvecs += len(rows)
            lo = 0 if j < kept + b else j - b
            if n_cur + len(rows) <= m:
                slot = n_cur
                n_cur, C, R = _append_block(V, n_cur, W, rng, lo)
                T[:slot, rows] = C
                T[rows, :slot] = C.T
                T[slot:n_cur, rows] = R[: n_cur - slot]
                T[rows, slot:n_cur] = R[: n_cur - slot].T
            else:
                C = _orthogonalize_block(V, n_cur, W, lo)
                T[:n_cur, rows] = C
                T[rows, :n_cur] = C.T
                tail_rows.extend(rows)
                tail_vecs.extend(W)
            j = rows[-1] + 1

        theta, Y = np.linalg.eigh(0.5 * (T[:n_cur, :n_cur] + T[:n_cur, :n_cur].T))
        kk = min(k, n_cur)
        W = np.array(tail_vecs) if tail_vecs else np.zeros((0, n))
        rows = np.array(tail_rows, dtype=int)
        res = np.linalg.norm(W.T @ Y[rows, :kk], axis=0) if len(rows) else np.zeros(kk)
        scale = np.maximum(1.0, np.abs(theta[:kk]))
        best = min(best, float(np.max(res / scale)))
        if kk == k and np.all(res <= tol * scale):
            return theta[:k], V[:n_cur].T @ Y[:, :k], matvecs, restarts, res
        if restarts >= max_iter or n_cur < m:
            raise ConvergenceError(
                f"Lanczos did not converge in {restarts} restarts / {matvecs} operator applications "
                f"(best scaled Ritz residual {best:.3e})",
                best_residual=best,
                solution=(theta[:kk], V[:n_cur].T @ Y[:, :kk], matvecs, restarts, res),
            )

        # thick restart: keep the lowest Ritz vectors, re-append the residual block
        restarts += 1
        keep = keep_target
        Y_tail = Y[rows, :keep]
        V[:keep] = Y[:, :keep].T @ V[:n_cur]
        V[keep:] = 0.0
        T[:] = 0.0
        T[np.arange(keep), np.arange(keep)] = theta[:keep]
        n_cur, _, _ = _append_block(V, keep, W.copy(), rng)
        # H V_keep = V_keep diag(theta) + W^T Y_tail, projected on the new block
        C = (V[keep:n_cur] @ W.T) @ Y_tail
        T[keep:n_cur, :keep] = C
        T[:keep, keep:n_cur] = C.T
        j = kept = keep


def select_ground_vector(basis: FockBasis, values: np.ndarray, vectors: np.ndarray):
    """S_x eigenvector inside the degenerate ground manifold.

    H commutes with total S_x, so a degenerate ground multiplet can be
    rotated into S_x eigenstates; the member with the smallest ``|S_x|``
    (ties: positive) is returned along with its S_x value.
    """
    tol = DEGENERACY_TOL * max(1.0, abs(values[0]))
    deg = int(np.sum(values - values[0] < tol))
    if deg == 1:
        psi = vectors[:, 0]
        sx = float(psi @ apply_total_sx(basis, psi))
        return psi, sx
    P = vectors[:, :deg]
    Sx = P.T @ apply_total_sx(basis, P)
    mw, mv = np.linalg.eigh(0.5 * (Sx + Sx.T))
    order = np.lexsort((-mw, np.round(np.abs(mw), 8)))
    psi = P @ mv[:, order[0]]
    psi /= np.linalg.norm(psi)
    return psi, float(mw[order[0]])


SYMMETRIES = ("sx", "none")
SECTOR_DENSE_DIM = 200  # sectors at most this large are diagonalized directly

_frames: "weakref.WeakKeyDictionary[FockBasis, tuple]" = weakref.WeakKeyDictionary()


def _frame_data(basis: FockBasis):
    """Sector list, mirror maps and frame map for ``basis``, built once per basis object."""
    if basis not in _frames:
        sectors = sector_bases(basis)
        by_plus = {s.n_plus: s for s in sectors}
        mirrors = {s.n_plus: MirrorMap(s, by_plus[basis.N - s.n_plus]) for s in sectors}
        _frames[basis] = (sectors, mirrors, FrameMap(basis))
    return _frames[basis]


def lanczos_lowest(
    params: ModelParams,
    basis: FockBasis,
    k: int = 3,
    seed: int = 0,
    *,
    tol: float = RESIDUAL_TOL,
    max_iter: int = MAX_ITER,
    ncv: int | None = None,
    block: int | None = None,
    v0=None,
    symmetry: str = "sx",
) -> GroundStateSolution:
    """Lowest ``k`` eigenpairs of H with true residuals checked after the Lanczos run.

    With ``symmetry="sx"`` (default) Lanczos runs separately in every total
    S_x sector of the x-frame Hamiltonian (see :mod:`.sectors`); sectors with
    S_x < 0 are mirror images of S_x > 0 and are not solved twice.  The
    returned eigenvectors live in the original basis and are S_x eigenstates.
    ``symmetry="none"`` runs one block Lanczos on the full fixed-N space.

    ``iterations`` counts applications of H (or a sector block of H) to a
    vector; ``max_iter`` bounds restart cycles per Lanczos run.  ``v0`` is
    the ``warm_start`` attribute of an earlier solution at nearby couplings,
    optionally passed through :func:`perturbed_start`.
    """
    if k < 1 or basis.dim < k:
        raise ValueError(f"need 1 <= k <= dim ({basis.dim}), got {k}")
    if symmetry not in SYMMETRIES:
        raise ValueError(f"symmetry must be one of {SYMMETRIES}, got {symmetry!r}")
    opts = dict(tol=tol, max_iter=max_iter, ncv=ncv, block=block, seed=seed)
    if symmetry == "sx":
        sol = _sector_lowest(params, basis, k, v0=v0, **opts)
    else:
        sol = _full_space_lowest(params, basis, k, v0=v0, **opts)
    scale = np.maximum(1.0, np.abs(sol.eigenvalues))
    if np.any(sol.residual_norms > ACCEPT_TOL * scale):
        raise ConvergenceError(
            f"true residual {np.max(sol.residual_norms / scale):.3e} above acceptance {ACCEPT_TOL}",
            best_residual=float(np.max(sol.residual_norms / scale)),
            solution=sol,
        )
    if symmetry == "none":
        sol.ground_vector, sol.ground_sx = select_ground_vector(basis, sol.eigenvalues, sol.eigenvectors)
    log.debug(
        "lanczos: L=%d dim=%d H-applications=%d restarts=%d", basis.L, basis.dim, sol.iterations, sol.restarts
    )
    return sol


def _full_space_lowest(params, basis, k, *, v0, seed, **opts) -> GroundStateSolution:
    def mv(v):
        return apply_hamiltonian(params, basis, v)

    try:
        _, vecs, steps, restarts, _ = block_lanczos(mv, basis.dim, k, seed=seed, v0=v0, **opts)
    except ConvergenceError as err:
        values, vecs, steps, restarts, res = err.solution
        err.solution = GroundStateSolution(
            eigenvalues=values, eigenvectors=vecs, iterations=steps, residual_norms=res, restarts=restarts
        )
        raise
    values, vecs, resid = _rayleigh_ritz(mv, vecs)
    return GroundStateSolution(
        eigenvalues=values,
        eigenvectors=vecs,
        iterations=steps,
        residual_norms=resid,
        restarts=restarts,
        warm_start=vecs,
    )


def _solve_sector(params, sector, k_s, *, v0, seed, **opts):
    diag = x_frame_diagonal(params, sector)

    def mv(v):
        return apply_x_frame_hamiltonian(params, sector, v, diag)

    if sector.dim <= SECTOR_DENSE_DIM:
        w, u = np.linalg.eigh(mv(np.eye(sector.dim)))
        vecs, steps, restarts = u[:, :k_s], sector.dim, 0
    else:
        _, vecs, steps, restarts, _ = block_lanczos(
            mv, sector.dim, k_s, seed=[seed, sector.n_plus], v0=v0, **opts
        )
    values, vecs, resid = _rayleigh_ritz(mv, vecs)
    return values, vecs, resid, steps, restarts


def _sector_lowest(params, basis, k, *, v0, seed, **opts) -> GroundStateSolution:
    sectors, mirrors, frame = _frame_data(basis)
    if v0 is None:
        v0 = {}
    elif not isinstance(v0, dict):  # full-space start block: split it by sector
        x = to_x_frame(frame, np.asarray(v0, dtype=float).reshape(basis.dim, -1))
        v0 = {s.n_plus: s.restrict(x) for s in sectors}
    candidates = []  # (value, -sx, residual, sector, x-frame vector)
    steps = restarts = 0
    warm = {}
    for s in sectors:
        if s.sx < 0:
            continue
        paired = s.sx > 0
        # a mirrored sector repeats every level, so ceil(k/2) of them suffice
        k_s = min(s.dim, -(-k // 2) if paired else k)
        try:
            values, vecs, resid, n_mv, n_rs = _solve_sector(params, s, k_s, v0=v0.get(s.n_plus), seed=seed, **opts)
        except ConvergenceError as err:
            err.args = (f"S_x = {s.sx:g} sector: {err}",)
            raise
        steps += n_mv
        restarts += n_rs
        warm[s.n_plus] = vecs
        for i in range(k_s):
            candidates.append((values[i], -s.sx, resid[i], s, vecs[:, i]))
            if paired:
                m = mirrors[s.n_plus]
                candidates.append((values[i], s.sx, resid[i], m.target, m.apply(vecs[:, i])))
    candidates.sort(key=lambda c: (c[0], c[1]))
    chosen = candidates[:k]
    values = np.array([c[0] for c in chosen])
    vectors = np.column_stack([to_z_frame(frame, c[3], c[4]) for c in chosen])
    sx = np.array([-c[1] for c in chosen])
    # ground vector: smallest |S_x| (ties: positive) inside the degenerate ground level
    tol = DEGENERACY_TOL * max(1.0, abs(values[0]))
    ground = [i for i in range(len(chosen)) if values[i] - values[0] < tol]
    g = min(ground, key=lambda i: (abs(sx[i]), -sx[i]))
    return GroundStateSolution(
        eigenvalues=values,
        eigenvectors=vectors,
        iterations=steps,
        residual_norms=np.array([c[2] for c in chosen]),
        restarts=restarts,
        ground_vector=vectors[:, g],
        ground_sx=float(sx[g]),
        sector_sx=sx,
        warm_start=warm,
    )


def perturbed_start(vectors, rng, noise: float = WARM_NOISE):
    """Warm-start block: previous Ritz vectors plus ``noise`` times unit random columns.

    The admixture keeps every eigenvector of the operator represented in the
    start block, so a level that drops below the previous lowest ones is
    still found.  Accepts an array or a per-sector dict of arrays.
    """
    if isinstance(vectors, dict):
        return {key: perturbed_start(v, rng, noise) for key, v in sorted(vectors.items())}
    vectors = np.asarray(vectors)
    kick = rng.standard_normal(vectors.shape)
    kick /= np.linalg.norm(kick, axis=0)
    return vectors + noise * kick


def _rayleigh_ritz(mv, vecs):
    """Re-orthonormalize, diagonalize H in the span, return true residual norms."""
    q, _ = np.linalg.qr(vecs)
    Hq = mv(q)
    small = q.T @ Hq
    w, u = np.linalg.eigh(0.5 * (small + small.T))
    vecs = q @ u
    resid = np.linalg.norm(Hq @ u - vecs * w, axis=0)
    return w, vecs, resid


def dense_hamiltonian(params: ModelParams, basis: FockBasis) -> np.ndarray:
    """Dense H assembled column by column from unit vectors."""
    if basis.dim > DENSE_MAX_DIM:
        raise ValueError(f"dense oracle limited to dim <= {DENSE_MAX_DIM}, got {basis.dim}")
    ham = apply_hamiltonian(params, basis, np.eye(basis.dim))
    return 0.5 * (ham + ham.T)


def dense_spectrum_oracle(params: ModelParams, basis: FockBasis, vectors: bool = False):
    ham = dense_hamiltonian(params, basis)
    if vectors:
        return np.linalg.eigh(ham)
    return np.linalg.eigvalsh(ham)
