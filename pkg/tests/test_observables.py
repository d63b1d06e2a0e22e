import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cavity_hubbard.eigensolver import dense_spectrum_oracle, lanczos_lowest
from cavity_hubbard.model import CavityParams, ModelParams, build_basis
from cavity_hubbard.observables import (
    compute_observables,
    correlation_function,
    correlator_matrix,
    k_grid,
    lattice_momenta,
    photon_observables,
    spin_correlator,
    structure_factor,
    structure_from_matrix,
)

from oracles import dense_operators


def ground_state(L, t, U_s, U_l, seed=0):
    basis = build_basis(L, L)
    params = ModelParams(L, L, t, U_s, U_l)
    return lanczos_lowest(params, basis, 3, seed=seed).psi, basis, params


@pytest.fixture(scope="module")
def neel4():
    b = build_basis(4, 4)
    return b.product_state("udud"), b


@pytest.fixture(scope="module")
def hubbard4():
    return ground_state(4, 0.1, 1.0, 0.0)


@pytest.fixture(scope="module")
def cavity6():
    return ground_state(6, 0.1, 1.0, 5.0)


def test_neel_z_correlator(neel4):
    psi, b = neel4
    for l in range(1, 5):
        for j in range(1, 5):
            assert spin_correlator(psi, b, "z", l, j) == pytest.approx(0.25 * (-1) ** (l - j))


def test_neel_x_correlator(neel4):
    psi, b = neel4
    assert spin_correlator(psi, b, "x", 2, 2) == pytest.approx(0.25)
    assert spin_correlator(psi, b, "x", 1, 3) == pytest.approx(0.0, abs=1e-15)


def test_correlator_site_range(neel4):
    psi, b = neel4
    with pytest.raises(IndexError):
        spin_correlator(psi, b, "z", 0, 1)
    with pytest.raises(IndexError):
        spin_correlator(psi, b, "z", 1, 5)


def test_unknown_axis(neel4):
    with pytest.raises(ValueError):
        correlator_matrix(*neel4, "w")


def test_neel_correlation_function(neel4):
    psi, b = neel4
    pair = correlation_function(psi, b, "z")
    site = correlation_function(psi, b, "z", norm_mode="per_site")
    r = np.arange(4)
    assert np.allclose(pair.values, 0.25 * (-1.0) ** r)
    assert np.allclose(site.values, (4 - r) / 4 * 0.25 * (-1.0) ** r)


def test_neel_structure_factors(neel4):
    psi, b = neel4
    sz = structure_factor(psi, b, "z")
    sx = structure_factor(psi, b, "x")
    assert sz.at(np.pi) == pytest.approx(1.0)
    assert sz.at(0.0) == pytest.approx(0.0, abs=1e-14)
    assert np.allclose(sx.values, 0.25)


def test_k_grid_shape():
    ks = k_grid()
    assert len(ks) == 1025 and ks[0] == -np.pi and ks[-1] == np.pi and ks[512] == 0.0
    with pytest.raises(ValueError):
        k_grid(2)


@pytest.mark.parametrize("axis", ["x", "y", "z"])
def test_correlators_match_dense_oracle(axis, hubbard4):
    psi, b, _ = hubbard4
    ops = dense_operators(4, 4)
    key = {"x": "sx", "y": "sy", "z": "sz"}[axis]
    M = correlator_matrix(psi, b, axis)
    for l in range(4):
        for j in range(4):
            ref = psi @ (ops[key][l] @ ops[key][j] @ psi)
            assert M[l, j] == pytest.approx(ref.real, abs=1e-12)
            assert abs(ref.imag) < 1e-12


def test_su2_isotropy_without_cavity(hubbard4):
    psi, b, _ = hubbard4
    Ms = [correlator_matrix(psi, b, a) for a in "xyz"]
    assert np.allclose(Ms[0], Ms[2], atol=1e-9)
    assert np.allclose(Ms[1], Ms[2], atol=1e-9)


def test_hubbard_correlations_alternate(hubbard4):
    psi, b, _ = hubbard4
    C = correlation_function(psi, b, "z").values
    assert all(np.sign(C[r]) == (-1) ** r for r in range(1, 4))


def test_transverse_isotropy_with_cavity(cavity6):
    psi, b, _ = cavity6
    sy = structure_factor(psi, b, "y").values
    sz = structure_factor(psi, b, "z").values
    sx = structure_factor(psi, b, "x").values
    assert np.max(np.abs(sy - sz)) < 1e-8
    assert np.max(np.abs(sx - sz)) > 1e-3


def test_sum_rule(cavity6):
    psi, b, _ = cavity6
    for a in "xyz":
        M = correlator_matrix(psi, b, a)
        S = structure_from_matrix(M, a, lattice_momenta(6))
        assert S.values.sum() == pytest.approx(np.trace(M), abs=1e-10)


def test_structure_factor_symmetric_and_nonnegative(cavity6):
    psi, b, _ = cavity6
    for a in "xyz":
        S = structure_factor(psi, b, a).values
        assert np.max(np.abs(S - S[::-1])) < 1e-10
        assert S.min() > -1e-10


def test_uniform_component_direct(cavity6):
    psi, b, _ = cavity6
    M = correlator_matrix(psi, b, "x")
    S = structure_factor(psi, b, "x")
    assert S.at(0.0) == pytest.approx(M.sum() / 6, abs=1e-12)


def test_cauchy_schwarz_on_averages(cavity6):
    psi, b, _ = cavity6
    for a in "xyz":
        C = correlation_function(psi, b, a).values
        assert C[0] >= 0
        assert np.all(np.abs(C) <= C[0] + 1e-12)


def test_photons_vanish_without_coupling(hubbard4):
    psi, b, model = hubbard4
    ph = photon_observables(psi, b, CavityParams(G=0.0, kappa=1.0, delta_tilde=1.0), model)
    assert ph.photon_number == 0.0
    assert ph.fluctuation_ratio is None


def test_neel_photon_number(neel4):
    psi, b = neel4
    model = ModelParams(4, 4, 0.1, 1.0, 3.0)
    cavity = CavityParams.from_U_l(3.0, 4, delta_abs=1.5, kappa=0.7)
    ph = photon_observables(psi, b, cavity, model)
    assert ph.photon_number == pytest.approx(3.0 / 1.5, rel=1e-12)
    assert ph.photon_number_from_sx == pytest.approx(ph.photon_number, rel=1e-12)


@pytest.mark.parametrize("U_l", [-5.0, 5.0, 20.0])
def test_photon_number_two_routes(U_l):
    psi, b, model = ground_state(6, 0.1, 1.0, U_l)
    cavity = CavityParams.from_U_l(U_l, 6, delta_abs=1.0, kappa=0.3)
    ph = photon_observables(psi, b, cavity, model)
    assert ph.photon_number_from_sx == pytest.approx(ph.photon_number, rel=1e-10)
    assert ph.photon_number >= abs(ph.mean_amplitude) ** 2
    if U_l > 0:
        assert abs(ph.mean_amplitude) < 1e-10
        assert ph.fluctuation_ratio == pytest.approx(1.0, abs=1e-10)
    else:
        # +-B pair split below solver precision; any mixture is a valid ground vector
        assert 0 <= ph.fluctuation_ratio <= 1 + 1e-12


def test_photons_reject_inconsistent_cavity(neel4):
    psi, b = neel4
    with pytest.raises(ValueError):
        photon_observables(psi, b, CavityParams(1.0, 0.0, 1.0), ModelParams(4, 4, 0.1, 1.0, 3.0))


def test_compute_observables_bundle(cavity6):
    psi, b, model = cavity6
    cavity = CavityParams.from_U_l(5.0, 6, 1.0, 0.0)
    obs = compute_observables(psi, b, model, cavity, n_k=257)
    assert set(obs.structure) == {"x", "y", "z"}
    assert len(obs.structure["x"].k_grid) == 257
    assert obs.onsite_square["z"] == pytest.approx(np.trace(correlator_matrix(psi, b, "z")))
    assert obs.photons.photon_number > 0


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), axis=st.sampled_from("xyz"))
def test_sum_rule_random_states(seed, axis):
    b = build_basis(4, 4)
    psi = np.random.default_rng(seed).standard_normal(b.dim)
    psi /= np.linalg.norm(psi)
    M = correlator_matrix(psi, b, axis)
    S = structure_from_matrix(M, axis, lattice_momenta(4))
    assert S.values.sum() == pytest.approx(np.trace(M), abs=1e-10)
    assert np.all(np.linalg.eigvalsh(M) > -1e-12)


def test_dense_ground_state_agrees(hubbard4):
    psi, b, model = hubbard4
    w, V = dense_spectrum_oracle(model, b, vectors=True)
    # the singlet ground state is unique, so the two vectors agree up to sign
    assert abs(abs(V[:, 0] @ psi) - 1) < 1e-9
