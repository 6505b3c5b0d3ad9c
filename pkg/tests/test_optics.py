import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fockframes.fock import TruncationError, fock_basis, fock_state, random_density_matrix
from fockframes.optics import (
    BeamSplitter,
    LinearNetwork,
    PhaseShifter,
    apply_element,
    apply_network,
    canonical_json,
    element_matrix,
    is_number_conserving,
    matrix_exponential_oracle,
    network_from_dict,
    network_matrix,
    split_amplitudes,
    split_fock,
    two_mode_blocks,
    unitarity_error,
)


@pytest.mark.parametrize("T", [0.0, 0.1, 0.5, 0.9, 1.0])
@pytest.mark.parametrize("modes,cutoff,pair", [(2, 8, (0, 1)), (3, 5, (2, 0))])
def test_splitter_matches_matrix_exponential(T, modes, cutoff, pair):
    basis = fock_basis(modes, cutoff)
    el = BeamSplitter(pair, T)
    assert np.max(np.abs(element_matrix(el, basis).toarray() - matrix_exponential_oracle(el, basis))) < 1e-12


def test_phase_shifter_matches_matrix_exponential():
    basis = fock_basis(2, 6)
    el = PhaseShifter(1, 2.1)
    assert np.allclose(element_matrix(el, basis).toarray(), matrix_exponential_oracle(el, basis), atol=1e-13)


def test_spectral_blocks_stay_unitary_at_high_photon_number():
    blocks = two_mode_blocks(0.37, 200)
    B = blocks[200]
    assert np.max(np.abs(B.T @ B - np.eye(201))) < 1e-10


def test_fifty_fifty_on_single_photon():
    out = apply_element(fock_state((1, 0), 1), BeamSplitter((0, 1), 0.5))
    assert out.amplitude((1, 0)) == pytest.approx(1 / np.sqrt(2))
    assert out.amplitude((0, 1)) == pytest.approx(1 / np.sqrt(2))


def test_two_photon_interference_suppresses_coincidences():
    out = apply_element(fock_state((1, 1), 2), BeamSplitter((0, 1), 0.5))
    assert abs(out.amplitude((1, 1))) < 1e-14
    assert abs(out.amplitude((2, 0))) ** 2 == pytest.approx(0.5)


def test_heisenberg_action_on_low_sectors():
    # U^dag a U = sqrt(T) a - sqrt(1-T) b, exact on states well inside the cutoff
    T = 0.3
    basis = fock_basis(2, 6)
    U = element_matrix(BeamSplitter((0, 1), T), basis).toarray()
    a, b = basis.annihilation(0).toarray(), basis.annihilation(1).toarray()
    lhs = U.conj().T @ a @ U
    rhs = np.sqrt(T) * a - np.sqrt(1 - T) * b
    low = basis.totals <= 5
    assert np.allclose(lhs[:, low], rhs[:, low], atol=1e-12)


@pytest.mark.parametrize("n", range(11))
@pytest.mark.parametrize("T", [0.1, 0.5, 0.9])
def test_split_fock_is_splitter_then_phase(n, T):
    phi = 0.83
    net = LinearNetwork(2, (BeamSplitter((0, 1), T), PhaseShifter(0, -phi)))
    via_network = apply_network(fock_state((n, 0), 10), net)
    assert np.allclose(split_fock(n, T, phi, 10).amplitudes, via_network.amplitudes, atol=1e-12)


def test_split_amplitudes_are_normalised():
    for n in range(30):
        assert np.sum(split_amplitudes(n, 0.27) ** 2) == pytest.approx(1.0, abs=1e-13)


def test_split_fock_errors():
    with pytest.raises(TruncationError):
        split_fock(5, 0.5, 0.0, 4)
    with pytest.raises(ValueError):
        split_fock(2, 1.5, 0.0, 4)


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), depth=st.integers(1, 5))
def test_random_networks_are_unitary_and_number_conserving(seed, depth):
    rng = np.random.default_rng(seed)
    elements = []
    for _ in range(depth):
        i, j = rng.choice(3, size=2, replace=False)
        elements += [BeamSplitter((i, j), rng.uniform()), PhaseShifter(int(rng.integers(3)), rng.uniform(0, 6.3))]
    net = LinearNetwork(3, tuple(elements))
    basis = fock_basis(3, 4)
    U = network_matrix(net, 4)
    assert unitarity_error(U) < 1e-12
    assert is_number_conserving(U, basis)
    rho = random_density_matrix(3, 4, rng)
    out = apply_network(rho, net)
    assert np.allclose(out.matrix, U @ rho.matrix @ U.conj().T.toarray(), atol=1e-12)


def test_element_validation():
    with pytest.raises(ValueError):
        BeamSplitter((1, 1), 0.5)
    with pytest.raises(ValueError):
        BeamSplitter((0, 1), 1.2)
    with pytest.raises(ValueError):
        LinearNetwork(2, (BeamSplitter((0, 2), 0.5),))
    with pytest.raises(ValueError):
        network_from_dict([{"type": "mirror", "modes": [0]}])
    with pytest.raises(ValueError):
        network_from_dict([{"type": "bs", "modes": [0]}])
    with pytest.raises(ValueError):
        apply_network(fock_state((1,), 2), LinearNetwork(2, ()))


def test_network_json_round_trip():
    data = {"num_modes": 3, "elements": [{"type": "bs", "modes": [0, 2], "T": 0.25},
                                         {"type": "ps", "modes": [1], "phi": 7.0}]}
    net = network_from_dict(data)
    assert net.elements[1].phi == pytest.approx(7.0 - 2 * np.pi)
    again = network_from_dict(json.loads(canonical_json(net)))
    assert again == net
    assert network_from_dict(data["elements"]).num_modes == 3
