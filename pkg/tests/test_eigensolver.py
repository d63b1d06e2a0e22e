import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cavity_hubbard.eigensolver import (
    ConvergenceError,
    block_lanczos,
    dense_hamiltonian,
    dense_spectrum_oracle,
    lanczos_lowest,
    perturbed_start,
)
from cavity_hubbard.model import ModelParams, apply_hamiltonian, apply_total_sx, build_basis, diagonal_energies
from cavity_hubbard.sectors import (
    FrameMap,
    MirrorMap,
    apply_x_frame_hamiltonian,
    sector_bases,
    to_x_frame,
    to_z_frame,
)

from oracles import dense_hamiltonian as kron_hamiltonian
from oracles import dense_operators, two_site_ground_energy


def _draws(n, seed):
    rng = np.random.default_rng(seed)
    for _ in range(n):
        yield rng.uniform(-1.5, 1.5), rng.uniform(0.0, 4.0), rng.uniform(-20.0, 20.0)


@pytest.fixture(scope="module")
def kron4():
    return dense_operators(4, 4)


@pytest.mark.parametrize("symmetry", ["sx", "none"])
@pytest.mark.parametrize("L", [2, 4])
def test_lowest_three_match_independent_dense_spectrum(L, symmetry, kron4):
    ops = kron4 if L == 4 else dense_operators(2, 2)
    basis = build_basis(L, L)
    for t, U_s, U_l in _draws(20, seed=L):
        ref = np.linalg.eigvalsh(kron_hamiltonian(ops, L, t, U_s, U_l))[:3]
        sol = lanczos_lowest(ModelParams(L, L, t, U_s, U_l), basis, 3, symmetry=symmetry)
        np.testing.assert_allclose(sol.eigenvalues, ref, atol=1e-9)


def test_two_site_ground_energy():
    sol = lanczos_lowest(ModelParams(2, 2, 1.0, 4.0, 0.0), build_basis(2, 2), 3)
    assert sol.eigenvalues[0] == pytest.approx(1 - math.sqrt(5), abs=1e-10)
    assert two_site_ground_energy(1.0, 4.0) == pytest.approx(1 - math.sqrt(5), abs=1e-12)


def test_atomic_limit_has_zero_ground_energy_and_half_unit_gap():
    p, b = ModelParams(4, 4, 0.0, 1.0, 0.0), build_basis(4, 4)
    sol = lanczos_lowest(p, b, 3)
    np.testing.assert_allclose(sol.eigenvalues, 0.0, atol=1e-10)
    spectrum = dense_spectrum_oracle(p, b)
    assert spectrum[spectrum > 1e-12].min() == pytest.approx(0.5)
    assert sol.degenerate_flag


@pytest.mark.parametrize("U_l", [-5.0, 5.0, 20.0])
def test_returned_pairs_satisfy_residual_and_orthogonality_bounds(U_l):
    p, b = ModelParams(6, 6, 0.1, 1.0, U_l), build_basis(6, 6)
    sol = lanczos_lowest(p, b, 3)
    V = sol.eigenvectors
    R = apply_hamiltonian(p, b, V) - V * sol.eigenvalues
    assert np.all(np.linalg.norm(R, axis=0) <= 1e-9 * np.maximum(1, np.abs(sol.eigenvalues)))
    np.testing.assert_allclose(V.T @ V, np.eye(3), atol=1e-9)
    assert np.all(np.diff(sol.eigenvalues) >= -1e-12)
    np.testing.assert_allclose(sol.eigenvalues, dense_spectrum_oracle(p, b)[:3], atol=1e-9)


def test_both_symmetry_modes_agree_at_six_sites():
    b = build_basis(6, 6)
    for t, U_s, U_l in _draws(3, seed=11):
        p = ModelParams(6, 6, t, U_s, U_l)
        a = lanczos_lowest(p, b, 3)
        f = lanczos_lowest(p, b, 3, symmetry="none")
        np.testing.assert_allclose(a.eigenvalues, f.eigenvalues, atol=1e-9)


def test_eigenvalues_do_not_depend_on_seed():
    p, b = ModelParams(6, 6, 0.3, 1.0, 7.0), build_basis(6, 6)
    ref = lanczos_lowest(p, b, 3, seed=0).eigenvalues
    for seed in (1, 2, 12345):
        for symmetry in ("sx", "none"):
            np.testing.assert_allclose(lanczos_lowest(p, b, 3, seed=seed, symmetry=symmetry).eigenvalues, ref, atol=1e-9)


def test_same_seed_is_bitwise_reproducible():
    p, b = ModelParams(6, 6, 0.1, 1.0, 5.0), build_basis(6, 6)
    a, c = lanczos_lowest(p, b, 3, seed=3), lanczos_lowest(p, b, 3, seed=3)
    assert np.array_equal(a.eigenvalues, c.eigenvalues)
    assert np.array_equal(a.eigenvectors, c.eigenvectors)


@pytest.mark.parametrize("L", [4, 6])
def test_ground_energy_without_cavity_equals_plain_hubbard(L):
    b = build_basis(L, L)
    for t, U_s, _ in _draws(3, seed=L + 100):
        lam = lanczos_lowest(ModelParams(L, L, t, U_s, 0.0), b, 3).eigenvalues[0]
        ref = dense_spectrum_oracle(ModelParams(L, L, t, U_s, 0.0), b)[0]
        assert lam == pytest.approx(ref, abs=1e-9)


def test_ground_vector_is_sx_eigenstate_with_smallest_magnitude():
    p, b = ModelParams(6, 6, 0.1, 1.0, 5.0), build_basis(6, 6)
    sol = lanczos_lowest(p, b, 3)
    psi = sol.psi
    np.testing.assert_allclose(apply_total_sx(b, psi), sol.ground_sx * psi, atol=1e-9)
    deg = sol.eigenvalues - sol.eigenvalues[0] < 1e-8
    assert abs(sol.ground_sx) == min(abs(sol.sector_sx[deg]))
    assert sol.ground_sx >= 0


def test_full_space_mode_also_resolves_sx():
    p, b = ModelParams(6, 6, 0.1, 1.0, 5.0), build_basis(6, 6)
    sol = lanczos_lowest(p, b, 3, symmetry="none")
    np.testing.assert_allclose(apply_total_sx(b, sol.psi), sol.ground_sx * sol.psi, atol=1e-8)


def test_warm_start_from_nearby_point_gives_same_values():
    b = build_basis(6, 6)
    first = lanczos_lowest(ModelParams(6, 6, 0.1, 1.0, 4.0), b, 3)
    p = ModelParams(6, 6, 0.1, 1.0, 5.0)
    cold = lanczos_lowest(p, b, 3)
    rng = np.random.default_rng(0)
    warm = lanczos_lowest(p, b, 3, v0=perturbed_start(first.warm_start, rng))
    full = lanczos_lowest(p, b, 3, v0=first.eigenvectors)
    np.testing.assert_allclose(warm.eigenvalues, cold.eigenvalues, atol=1e-10)
    np.testing.assert_allclose(full.eigenvalues, cold.eigenvalues, atol=1e-10)


def test_perturbed_start_keeps_structure():
    rng = np.random.default_rng(1)
    v = np.linalg.qr(rng.standard_normal((50, 3)))[0]
    w = perturbed_start(v, np.random.default_rng(2), noise=1e-3)
    assert w.shape == v.shape
    assert np.allclose(np.linalg.norm(w - v, axis=0), 1e-3)
    d = perturbed_start({1: v, 0: v[:, :2]}, np.random.default_rng(2))
    assert sorted(d) == [0, 1] and d[0].shape == (50, 2)


def test_non_convergence_reports_best_residual():
    p, b = ModelParams(6, 6, 0.1, 1.0, 20.0), build_basis(6, 6)
    with pytest.raises(ConvergenceError) as info:
        lanczos_lowest(p, b, 3, max_iter=1, ncv=12)
    assert info.value.best_residual is not None and info.value.best_residual > 1e-10
    with pytest.raises(ConvergenceError) as info:
        lanczos_lowest(p, b, 3, max_iter=1, ncv=12, symmetry="none")
    assert info.value.solution.residual_norms.shape == (3,)


def test_block_lanczos_on_diagonal_operator():
    d = np.linspace(0.0, 10.0, 400) ** 2

    def mv(V):
        return d[:, None] * V

    values, vecs, n_mv, _, _ = block_lanczos(mv, d.size, 4, ncv=40)
    np.testing.assert_allclose(values, d[:4], atol=1e-9)
    assert n_mv > 0
    np.testing.assert_allclose(np.abs(vecs[:4, :4]), np.eye(4), atol=1e-6)


def test_block_lanczos_rejects_bad_k():
    with pytest.raises(ValueError):
        block_lanczos(lambda V: V, 5, 6)
    with pytest.raises(ValueError):
        lanczos_lowest(ModelParams(2, 2, 1.0, 1.0, 0.0), build_basis(2, 2), 7)
    with pytest.raises(ValueError):
        lanczos_lowest(ModelParams(2, 2, 1.0, 1.0, 0.0), build_basis(2, 2), 1, symmetry="spin")


def test_gap_and_degeneracy_flag():
    sol = lanczos_lowest(ModelParams(4, 4, 1.0, 4.0, 0.0), build_basis(4, 4), 3)
    assert sol.gap == pytest.approx(sol.eigenvalues[1] - sol.eigenvalues[0])
    assert not sol.degenerate_flag
    # odd sites per sublattice: B = 0 needs S_x = +-1, so the ground level is a doublet
    doublet = lanczos_lowest(ModelParams(6, 6, 0.1, 1.0, 5.0), build_basis(6, 6), 3)
    assert doublet.degenerate_flag
    assert sorted(doublet.sector_sx[:2]) == [-1.0, 1.0]


# dense oracle


def test_dense_oracle_atomic_two_site():
    vals = dense_spectrum_oracle(ModelParams(2, 2, 0.0, 1.0, 0.0), build_basis(2, 2))
    np.testing.assert_allclose(vals, [0, 0, 0, 0, 0.5, 0.5], atol=1e-14)


def test_dense_oracle_free_dimer_spectrum_is_symmetric():
    vals = dense_spectrum_oracle(ModelParams(2, 2, 1.0, 0.0, 0.0), build_basis(2, 2))
    np.testing.assert_allclose(np.sort(vals), np.sort(-vals), atol=1e-12)


def test_dense_oracle_trace_identity():
    b = build_basis(4, 4)
    for t, U_s, U_l in _draws(5, seed=9):
        p = ModelParams(4, 4, t, U_s, U_l)
        assert dense_spectrum_oracle(p, b).sum() == pytest.approx(diagonal_energies(p, b).sum(), abs=1e-9)


def test_dense_oracle_vectors_and_size_limit():
    p, b = ModelParams(4, 4, 0.5, 1.0, 2.0), build_basis(4, 4)
    w, V = dense_spectrum_oracle(p, b, vectors=True)
    np.testing.assert_allclose(dense_hamiltonian(p, b) @ V, V * w, atol=1e-10)
    with pytest.raises(ValueError, match="dense oracle"):
        dense_spectrum_oracle(ModelParams(8, 8, 0.1, 1.0, 0.0), build_basis(8, 8))


# x-frame sectors


@settings(max_examples=25, deadline=None)
@given(
    t=st.floats(-2, 2),
    U_s=st.floats(-3, 3),
    U_l=st.floats(-10, 10),
    N=st.integers(1, 7),
)
def test_sector_spectra_reassemble_full_spectrum(t, U_s, U_l, N):
    p, b = ModelParams(4, N, t, U_s, U_l), build_basis(4, N)
    parts = []
    for s in sector_bases(b):
        Hs = apply_x_frame_hamiltonian(p, s, np.eye(s.dim))
        np.testing.assert_allclose(Hs, Hs.T, atol=1e-12)
        parts.append(np.linalg.eigvalsh(Hs))
    np.testing.assert_allclose(np.sort(np.concatenate(parts)), dense_spectrum_oracle(p, b), atol=1e-10)


def test_frame_map_is_orthogonal_involution_and_diagonalizes_flip():
    b = build_basis(4, 4)
    fm = FrameMap(b)
    M = fm.apply(np.eye(b.dim))
    np.testing.assert_allclose(M @ M, np.eye(b.dim), atol=1e-12)
    np.testing.assert_allclose(M.T @ M, np.eye(b.dim), atol=1e-12)
    for s in sector_bases(b):
        z = to_z_frame(fm, s, np.eye(s.dim))
        np.testing.assert_allclose(s.restrict(to_x_frame(fm, z)), np.eye(s.dim), atol=1e-12)
        np.testing.assert_allclose(apply_total_sx(b, z), s.sx * z, atol=1e-12)


def test_mirror_maps_sector_eigenvectors():
    p, b = ModelParams(4, 4, 0.4, 1.0, 3.0), build_basis(4, 4)
    by_plus = {s.n_plus: s for s in sector_bases(b)}
    src, dst = by_plus[3], by_plus[1]
    w, V = np.linalg.eigh(apply_x_frame_hamiltonian(p, src, np.eye(src.dim)))
    W = MirrorMap(src, dst).apply(V)
    np.testing.assert_allclose(apply_x_frame_hamiltonian(p, dst, W), W * w, atol=1e-12)
