import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.stats import poisson

from fockframes.fock import (
    coherent_product,
    coherent_state,
    fock_basis,
    fock_state,
    partial_trace,
    poisson_mixture,
    random_density_matrix,
)
from fockframes.optics import apply_network, network_matrix, split_fock
from fockframes.theorem import random_network
from fockframes.twirl import (
    TwirlKind,
    collective_twirl,
    collective_twirl_pure,
    fit_collective_twirl,
    su2_twirl_spin_half,
    u1_twirl,
    u1_twirl_quadrature,
)


@pytest.mark.parametrize("alpha", [0.5, 1, 2j, 1 + 1j])
def test_single_mode_twirl_of_coherent_state_is_poissonian(alpha):
    rho = coherent_state(alpha, 40).to_density()
    assert np.max(np.abs(u1_twirl(rho, 0).matrix - poisson_mixture(abs(alpha) ** 2, 40).matrix)) < 1e-12


def test_number_state_is_fixed():
    rho = fock_state((3,), 6).to_density()
    assert np.array_equal(u1_twirl(rho, 0).matrix, rho.matrix)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), modes=st.integers(1, 3))
def test_twirls_are_trace_preserving_idempotent_projections(seed, modes):
    rho = random_density_matrix(modes, 3, np.random.default_rng(seed))
    for twirl in (lambda r: u1_twirl(r, modes - 1), collective_twirl):
        once = twirl(rho)
        assert np.max(np.abs(twirl(once).matrix - once.matrix)) < 1e-14
        assert np.trace(once.matrix).real == pytest.approx(1.0, abs=1e-12)
        assert np.linalg.eigvalsh(once.matrix).min() > -1e-12


@settings(max_examples=10, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_projection_matches_angle_quadrature(seed):
    rho = random_density_matrix(2, 4, np.random.default_rng(seed))
    assert np.allclose(u1_twirl(rho, 1).matrix, u1_twirl_quadrature(rho, 1).matrix, atol=1e-13)
    assert np.allclose(collective_twirl(rho).matrix, u1_twirl_quadrature(rho, None).matrix, atol=1e-13)


def test_collective_twirl_keeps_sector_coherences():
    psi = split_fock(4, 0.3, 0.9, 6)
    rho = psi.to_density()
    assert np.allclose(collective_twirl(rho).matrix, rho.matrix)


@settings(max_examples=10, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), depth=st.integers(1, 4))
def test_collective_twirl_commutes_with_passive_networks(seed, depth):
    rng = np.random.default_rng(seed)
    rho = random_density_matrix(3, 3, rng)
    net = random_network(3, depth, seed)
    lhs = collective_twirl(apply_network(rho, net)).matrix
    rhs = apply_network(collective_twirl(rho), net).matrix
    assert np.max(np.abs(lhs - rhs)) < 1e-12


def test_invariant_observables_are_unaffected():
    rng = np.random.default_rng(7)
    rho = random_density_matrix(2, 4, rng)
    basis = fock_basis(2, 4)
    hop = (basis.creation(0) @ basis.annihilation(1)).toarray()
    obs = hop + hop.conj().T
    # random block-diagonal Hermitian observable
    h = rng.normal(size=(basis.dim, basis.dim)) + 1j * rng.normal(size=(basis.dim, basis.dim))
    h = h + h.conj().T
    h[basis.totals[:, None] != basis.totals[None, :]] = 0
    for O in (obs, h):
        assert np.trace(collective_twirl(rho).matrix @ O) == pytest.approx(np.trace(rho.matrix @ O), abs=1e-12)


def test_sector_mixture_matches_dense_twirl():
    psi = coherent_product([0.8, 1 - 0.5j], 20)
    mix = collective_twirl_pure(psi)
    assert np.allclose(mix.to_density().matrix, collective_twirl(psi.to_density()).matrix, atol=1e-14)
    op = fock_basis(2, 20).creation(0) @ fock_basis(2, 20).annihilation(1)
    assert mix.expectation(op) == pytest.approx(np.trace(collective_twirl(psi.to_density()).matrix @ op.toarray()))


def test_reduced_state_of_twirled_product_is_poissonian():
    rho = collective_twirl(coherent_product([1.0, 1.5], 24).to_density())
    red = partial_trace(rho, [0]).matrix
    assert np.allclose(red, np.diag(poisson.pmf(np.arange(25), 1.0)), atol=1e-10)


@pytest.mark.parametrize("alpha,beta", [(1, 2), (1, 4), (0.5, 3), (1j, 2)])
def test_collective_twirl_is_a_split_fock_mixture(alpha, beta):
    fit = fit_collective_twirl(alpha, beta)
    assert fit.max_abs_diff < 1e-10
    # T is the fraction of each sector's photons found in the signal mode
    assert fit.T == pytest.approx(abs(alpha) ** 2 / (abs(alpha) ** 2 + abs(beta) ** 2), abs=1e-9)
    assert fit.matching_relation == "T/(1-T)"


def test_spin_half_average():
    rng = np.random.default_rng(3)
    for _ in range(50):
        v = rng.normal(size=2) + 1j * rng.normal(size=2)
        v /= np.linalg.norm(v)
        assert np.array_equal(su2_twirl_spin_half(np.outer(v, v.conj())), np.eye(2) / 2)
    assert np.array_equal(su2_twirl_spin_half(np.eye(2) / 2), np.eye(2) / 2)
    with pytest.raises(ValueError):
        su2_twirl_spin_half(np.eye(3) / 3)
    with pytest.raises(ValueError):
        su2_twirl_spin_half(np.diag([1.5, -0.5]))


def test_twirl_kind_dispatch():
    rho = coherent_product([0.5, 0.5], 14).to_density()
    assert np.array_equal(TwirlKind("collective").apply(rho).matrix, collective_twirl(rho).matrix)
    assert np.array_equal(TwirlKind("single_mode", 1).apply(rho).matrix, u1_twirl(rho, 1).matrix)
    with pytest.raises(ValueError):
        TwirlKind("single_mode")
    with pytest.raises(ValueError):
        TwirlKind("so3")
