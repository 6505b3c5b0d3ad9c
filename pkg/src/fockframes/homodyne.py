"""Balanced homodyne detection described two ways.

Factist: the local oscillator is a classical amplitude ``beta`` and only the
signal mode is quantum; the measured intensity difference is
``beta^* a + beta a^dag``.

Fictionist: the local oscillator is a quantum mode ``b`` prepared in ``|beta>``,
the joint state is averaged over collective phase rotations, and the measured
intensity difference is ``a^dag b + b^dag a``.

In both descriptions the signal is phase shifted to ``|alpha e^{-i phi}>``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .fock import TAIL_THRESHOLD, coherent_product, coherent_state, cutoff_for, expectation, fock_basis
from .twirl import SectorMixture, collective_twirl_pure

MAX_MOMENT = 4
# Normalised second-moment difference is |alpha|^2/|beta|^2 (see moment_compare),
# so the log-log slope against |beta| is -2.  Confirmed by convergence_study().
PRE_REGISTERED_SLOPE = -2.0
# Parameter grid over which the two mean predictions are required to agree.
MEAN_GRID = {
    "alpha": (0.5, 1.0, 1 + 1j),
    "beta": (2.0, 4.0),
    "phi": tuple(np.pi / 4 * np.arange(9)),
}


@dataclass(frozen=True)
class HomodyneSetup:
    alpha: complex
    beta: complex
    phi: float = 0.0
    cutoff: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "alpha", complex(self.alpha))
        object.__setattr__(self, "beta", complex(self.beta))
        object.__setattr__(self, "phi", float(self.phi))
        need = self.required_cutoff()
        if self.cutoff is None:
            object.__setattr__(self, "cutoff", need)
        elif self.cutoff < need:
            raise ValueError(f"cutoff {self.cutoff} too small: signal and oscillator tails "
                             f"need at least {need}")

    def required_cutoff(self) -> int:
        """Joint cutoff keeping the product tail below threshold, plus room for moments."""
        nbar = abs(self.alpha) ** 2 + abs(self.beta) ** 2
        return cutoff_for(nbar, TAIL_THRESHOLD) + MAX_MOMENT

    @property
    def shifted_alpha(self) -> complex:
        return self.alpha * np.exp(-1j * self.phi)


def factist_observable(beta: complex, cutoff: int) -> sp.csr_matrix:
    """``beta^* a + beta a^dag`` on a single mode."""
    basis = fock_basis(1, cutoff)
    a = basis.annihilation(0)
    return (np.conj(beta) * a + beta * basis.creation(0)).tocsr()


def fictionist_observable(cutoff: int) -> sp.csr_matrix:
    """``a^dag b + b^dag a`` on two modes ``(a, b)``."""
    basis = fock_basis(2, cutoff)
    hop = basis.creation(0) @ basis.annihilation(1)
    return (hop + hop.conj().T).tocsr()


def factist_signal(setup: HomodyneSetup):
    # the signal alone only needs its own tail; keep the joint cutoff for a fair comparison
    return coherent_state(setup.shifted_alpha, setup.cutoff)


def factist_mean(setup: HomodyneSetup) -> float:
    """Mean intensity difference, evaluated on the truncated coherent state."""
    psi = factist_signal(setup)
    return expectation(psi, factist_observable(setup.beta, setup.cutoff)).real


def fictionist_state(setup: HomodyneSetup) -> SectorMixture:
    """Collectively twirled ``|alpha e^{-i phi}> (x) |beta>``."""
    product = coherent_product([setup.shifted_alpha, setup.beta], setup.cutoff)
    return collective_twirl_pure(product)


def fictionist_mean(setup: HomodyneSetup) -> float:
    return fictionist_state(setup).expectation(fictionist_observable(setup.cutoff)).real


def factist_closed_form(setup: HomodyneSetup) -> float:
    a, b, phi = setup.alpha, setup.beta, setup.phi
    return (np.conj(b) * np.exp(-1j * phi) * a + b * np.exp(1j * phi) * np.conj(a)).real


@dataclass(frozen=True)
class MomentComparison:
    order: int
    factist_moment: float
    fictionist_moment: float

    @property
    def difference(self) -> float:
        return self.fictionist_moment - self.factist_moment


def _power_expectation(op: sp.csr_matrix, k: int, evaluate) -> float:
    power = sp.identity(op.shape[0], dtype=complex, format="csr")
    for _ in range(k):
        power = (power @ op).tocsr()
    return evaluate(power).real


def moment_compare(setup: HomodyneSetup, k: int) -> MomentComparison:
    """k-th moments of the intensity difference in units of the oscillator amplitude.

    Both observables are divided by ``|beta|`` (a quadrature measured against the
    oscillator).  Without the rescaling the second moments differ by exactly
    ``|alpha|^2`` for every ``beta``; with it the difference is ``|alpha|^2/|beta|^2``.
    """
    if not 1 <= k <= MAX_MOMENT:
        raise ValueError(f"moment order must be in 1..{MAX_MOMENT}")
    if setup.beta == 0:
        raise ValueError("moments are normalised by |beta|, which must be non-zero")
    scale = abs(setup.beta) ** k
    psi = factist_signal(setup)
    fact = _power_expectation(factist_observable(setup.beta, setup.cutoff), k,
                              lambda O: expectation(psi, O)) / scale
    rho = fictionist_state(setup)
    fict = _power_expectation(fictionist_observable(setup.cutoff), k, rho.expectation) / scale
    return MomentComparison(k, fact, fict)


def phi_grid(steps: int) -> np.ndarray:
    if steps < 1:
        raise ValueError("phi_steps must be positive")
    return 2 * np.pi * np.arange(steps) / steps


def homodyne_scan(alpha: complex, beta: complex, phi_steps: int, cutoff: int | None = None,
                  moments: int = 0) -> list[dict]:
    """Rows of factist and fictionist predictions over an equally spaced phase grid."""
    rows = []
    for phi in phi_grid(phi_steps):
        setup = HomodyneSetup(alpha, beta, phi, cutoff)
        fm = factist_mean(setup)
        gm = fictionist_mean(setup)
        row = {"phi": float(phi), "factist_mean": fm, "fictionist_mean": gm, "abs_diff": abs(fm - gm)}
        for k in range(1, moments + 1):
            mc = moment_compare(setup, k)
            row[f"factist_m{k}"] = mc.factist_moment
            row[f"fictionist_m{k}"] = mc.fictionist_moment
            row[f"diff_m{k}"] = mc.difference
        rows.append(row)
    return rows


def fictionist_visibility(alpha: complex, beta: complex, phi_steps: int = 64) -> float:
    """Peak-to-peak fictionist mean over a phase sweep, relative to its largest possible value.

    Returns ``(max - min) / (4 |alpha| |beta|)``, which is 1 for a perfect fringe.
    """
    means = [fictionist_mean(HomodyneSetup(alpha, beta, phi)) for phi in phi_grid(phi_steps)]
    bound = 2 * abs(alpha) * abs(beta)
    return (max(means) - min(means)) / (2 * bound) if bound else 0.0


def loglog_slope(betas, diffs) -> float:
    x = np.log(np.abs(np.asarray(betas, dtype=complex)))
    y = np.log(np.abs(np.asarray(diffs, dtype=float)))
    return float(np.polyfit(x, y, 1)[0])


def convergence_study(alpha: complex = 1.0, betas=(1.5, 2, 3, 4, 6, 8), phi: float = 0.0,
                      k: int = 2) -> tuple[list[float], float]:
    """Second-moment differences and their fitted log-log slope against ``|beta|``."""
    diffs = [moment_compare(HomodyneSetup(alpha, b, phi), k).difference for b in betas]
    return diffs, loglog_slope(betas, diffs)


def mean_grid_deviation(grid: dict = MEAN_GRID) -> float:
    """Largest factist/fictionist mean disagreement over a parameter grid."""
    worst = 0.0
    for a in grid["alpha"]:
        for b in grid["beta"]:
            for phi in grid["phi"]:
                setup = HomodyneSetup(a, b, phi)
                worst = max(worst, abs(factist_mean(setup) - fictionist_mean(setup)))
    return worst
