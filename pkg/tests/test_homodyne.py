import numpy as np
import pytest

from fockframes.fock import coherent_product, fock_basis, expectation, partial_trace
from fockframes.homodyne import (
    PRE_REGISTERED_SLOPE,
    HomodyneSetup,
    convergence_study,
    factist_closed_form,
    factist_mean,
    factist_observable,
    fictionist_mean,
    fictionist_observable,
    fictionist_state,
    fictionist_visibility,
    homodyne_scan,
    mean_grid_deviation,
    moment_compare,
)
from fockframes.optics import split_fock
from fockframes.twirl import collective_twirl_pure


def test_factist_observable_substitutions():
    basis = fock_basis(1, 6)
    a, ad = basis.annihilation(0), basis.creation(0)
    assert np.allclose(factist_observable(1, 6).toarray(), (a + ad).toarray())
    assert np.allclose(factist_observable(1j, 6).toarray(), (1j * ad - 1j * a).toarray())
    O = factist_observable(0.3 - 2j, 6).toarray()
    assert np.max(np.abs(O - O.conj().T)) < 1e-14


def test_fictionist_observable_commutes_with_total_number():
    O = fictionist_observable(8)
    N = fock_basis(2, 8).total_number()
    assert abs(O - O.conj().T).max() < 1e-14
    assert abs(O @ N - N @ O).max() < 1e-12


@pytest.mark.parametrize("alpha,beta,phi,expected", [(1, 1, 0, 2.0), (1, 1, np.pi / 2, 0.0)])
def test_factist_mean_arithmetic(alpha, beta, phi, expected):
    assert factist_mean(HomodyneSetup(alpha, beta, phi)) == pytest.approx(expected, abs=1e-12)


def test_factist_mean_against_closed_form():
    setup = HomodyneSetup(1 + 1j, 2, 0.7)
    assert abs(factist_mean(setup) - factist_closed_form(setup)) < 1e-9


def test_fictionist_equals_factist_single_point():
    setup = HomodyneSetup(1, 2, 0.3)
    assert abs(fictionist_mean(setup) - factist_mean(setup)) < 1e-8


def test_mean_equality_over_grid():
    assert mean_grid_deviation() < 1e-8


@pytest.mark.parametrize("phi", [0.0, 1.1, 4.0])
def test_vacuum_signal_or_oscillator_gives_zero(phi):
    assert abs(fictionist_mean(HomodyneSetup(0, 2, phi))) < 1e-14
    assert abs(fictionist_mean(HomodyneSetup(1, 0, phi))) < 1e-14


def test_number_product_states_have_no_mean():
    basis = fock_basis(2, 6)
    v = np.zeros(basis.dim)
    v[basis.index((2, 3))] = 1
    assert abs(v @ fictionist_observable(6) @ v) < 1e-15


def test_split_state_fringe_is_sinusoidal():
    n, T = 5, 0.3
    phis = np.linspace(0, 2 * np.pi, 40, endpoint=False)
    O = fictionist_observable(n)
    vals = np.array([expectation(split_fock(n, T, p, n), O).real for p in phis])
    design = np.column_stack([np.cos(phis), np.sin(phis)])
    coef, *_ = np.linalg.lstsq(design, vals, rcond=None)
    assert np.max(np.abs(design @ coef - vals)) < 1e-12
    # amplitude 2 n sqrt(T(1-T)); under this convention the offset makes it a cosine
    assert np.hypot(*coef) == pytest.approx(2 * n * np.sqrt(T * (1 - T)), abs=1e-12)
    assert coef[0] == pytest.approx(2 * n * np.sqrt(T * (1 - T)), abs=1e-12)


def test_phase_on_oscillator_is_equivalent():
    alpha, beta, phi = 0.8, 1.5, 1.3
    setup = HomodyneSetup(alpha, beta, phi)
    moved = collective_twirl_pure(coherent_product([alpha, beta * np.exp(1j * phi)], setup.cutoff))
    assert moved.expectation(fictionist_observable(setup.cutoff)).real == pytest.approx(fictionist_mean(setup), abs=1e-12)


def test_twirl_does_not_change_invariant_statistics():
    setup = HomodyneSetup(1 - 0.5j, 1.5, 0.4)
    product = coherent_product([setup.shifted_alpha, setup.beta], setup.cutoff)
    O = fictionist_observable(setup.cutoff)
    for k in (1, 2, 3):
        Ok = np.linalg.matrix_power(O.toarray(), k)
        assert fictionist_state(setup).expectation(Ok).real == pytest.approx(expectation(product, Ok).real, abs=1e-9)


def test_interference_without_coherence():
    alpha, beta = 1.0, 2.0
    assert fictionist_visibility(alpha, beta) > 0.99
    rho = fictionist_state(HomodyneSetup(alpha, beta)).to_density()
    red = partial_trace(rho, [0]).matrix
    assert np.max(np.abs(red - np.diag(np.diag(red)))) < 1e-14


def test_first_moments_agree():
    mc = moment_compare(HomodyneSetup(1, 3, 0.2), 1)
    assert abs(mc.difference) < 1e-8


@pytest.mark.parametrize("alpha,beta,phi", [(1, 2, 0.0), (0.5 + 0.5j, 3, 1.0), (0, 2, 0.0)])
def test_second_moments_against_closed_forms(alpha, beta, phi):
    # <(b* g + b g*)^2> + |b|^2 and the same plus |g|^2 for the internal oscillator
    setup = HomodyneSetup(alpha, beta, phi)
    mean = factist_closed_form(setup)
    mc = moment_compare(setup, 2)
    assert mc.factist_moment == pytest.approx((mean**2 + abs(beta) ** 2) / abs(beta) ** 2, abs=1e-9)
    assert mc.fictionist_moment == pytest.approx((mean**2 + abs(alpha) ** 2 + abs(beta) ** 2) / abs(beta) ** 2, abs=1e-9)


def test_convergence_study_confirms_pre_registered_slope():
    diffs, slope = convergence_study()
    assert all(abs(x) > abs(y) for x, y in zip(diffs, diffs[1:]))
    assert slope == pytest.approx(PRE_REGISTERED_SLOPE, abs=1e-6)


def test_setup_validation():
    with pytest.raises(ValueError):
        HomodyneSetup(1, 3, cutoff=5)
    with pytest.raises(ValueError):
        moment_compare(HomodyneSetup(1, 2), 5)
    with pytest.raises(ValueError):
        moment_compare(HomodyneSetup(1, 0), 2)


def test_scan_columns_and_order():
    rows = homodyne_scan(1, 2, 8, moments=2)
    assert [r["phi"] for r in rows] == sorted(r["phi"] for r in rows)
    assert set(rows[0]) == {"phi", "factist_mean", "fictionist_mean", "abs_diff", "factist_m1",
                            "fictionist_m1", "diff_m1", "factist_m2", "fictionist_m2", "diff_m2"}
