"""Sequential photodetection behind a 50/50 beam splitter.

Two modes ``a`` and ``b`` are mixed and detected at output ports
``c = (a - b)/sqrt(2)`` and ``d = (a + b)/sqrt(2)``.  Each click applies the
corresponding annihilation operator to the state and renormalises.  Starting
from ``|n>|n>`` the relative phase of the two modes becomes progressively
better defined as clicks accumulate.

Two phase distributions are tracked.  The record posterior treats one source as
a coherent state of unknown phase ``theta`` relative to the other, so each click
updates a Bayesian posterior with likelihood ``(1 -/+ cos theta)/2``.  The state
distribution is the overlap of the conditioned state with relative-phase states
of the photons still present; it also reflects how many photons remain.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
import scipy.sparse as sp
from scipy.special import xlogy
from scipy.stats import ks_2samp

from .fock import DensityMatrix, FockVector, State, fock_state

PHASE_GRID = 256
# Mean visibility after 30 clicks from |20>|20> over 500 seeds is 0.627; real jump
# operators leave theta and -theta mixed, capping it at E|cos theta| = 2/pi.
VISIBILITY_THRESHOLD = 0.6
OUTCOMES = ("c", "d")


def output_ports(basis) -> dict[str, sp.csr_matrix]:
    """Jump operators for the two output ports, acting on modes 0 and 1."""
    key = ("ports",)
    if key not in basis._ops:
        a = basis.annihilation(0)
        b = basis.annihilation(1)
        s = 1 / np.sqrt(2)
        basis._ops[key] = {"c": (s * (a - b)).tocsr(), "d": (s * (a + b)).tocsr()}
    return basis._ops[key]


@dataclass
class Detection:
    outcome: str
    post_state: State
    probabilities: dict


def outcome_probabilities(state: State) -> dict[str, float]:
    ports = output_ports(state.basis)
    if isinstance(state, FockVector):
        rates = {k: float(np.linalg.norm(J @ state.amplitudes) ** 2) for k, J in ports.items()}
    else:
        rates = {k: float((J.conj().T @ J).multiply(state.matrix.T).sum().real) for k, J in ports.items()}
    total = sum(rates.values())
    if total <= 1e-14:
        raise ValueError("no photons to detect")
    return {k: r / total for k, r in rates.items()}


def _jump(state: State, J) -> State:
    if isinstance(state, FockVector):
        return FockVector(state.num_modes, state.cutoff, J @ state.amplitudes,
                          tail_mass=state.tail_mass, normalize=True)
    mat = J @ (J @ state.matrix).conj().T
    mat = 0.5 * (mat + mat.conj().T)
    return DensityMatrix(state.num_modes, state.cutoff, mat, tail_mass=state.tail_mass,
                         normalize=True, check_positive=False)


def detect_one(state: State, rng: np.random.Generator) -> Detection:
    """Sample which port clicks first and return the conditioned state."""
    if state.num_modes < 2:
        raise ValueError("detection needs two modes")
    probs = outcome_probabilities(state)
    outcome = "c" if rng.random() < probs["c"] else "d"
    post = _jump(state, output_ports(state.basis)[outcome])
    return Detection(outcome, post, probs)


def detection_channel(state: State) -> DensityMatrix:
    """Outcome-averaged state after one click: ``(c rho c^dag + d rho d^dag) / <N>``."""
    rho = state.to_density()
    ports = output_ports(rho.basis)
    mat = sum(J @ (J @ rho.matrix).conj().T for J in ports.values())
    mat = 0.5 * (mat + mat.conj().T)
    return DensityMatrix(rho.num_modes, rho.cutoff, mat, normalize=True, check_positive=False)


@dataclass
class PhasePosterior:
    """Distribution of the relative phase of modes 0 and 1 on an equally spaced grid."""

    grid: np.ndarray
    weights: np.ndarray

    def entropy(self) -> float:
        w = self.weights[self.weights > 0]
        return float(-np.sum(w * np.log(w)))

    def peak(self) -> float:
        return float(self.grid[int(np.argmax(self.weights))])


def phase_grid(points: int = PHASE_GRID) -> np.ndarray:
    return 2 * np.pi * np.arange(points) / points


@lru_cache(maxsize=512)
def _phase_bras(M: int, points: int) -> np.ndarray:
    # rows are <theta| over the sector basis ordered by photons in mode 0
    m = np.arange(M + 1)
    return np.exp(-1j * np.outer(phase_grid(points), m)) / np.sqrt(M + 1)


def state_phase_distribution(state: State, points: int = PHASE_GRID) -> PhasePosterior:
    """Overlap of the state with relative-phase states of each photon-number sector.

    In the ``M``-photon sector the phase states are
    ``|theta> = (M+1)^{-1/2} sum_m e^{i m theta} |m, M-m>``; the weight at
    ``theta`` sums ``<theta|rho|theta>`` over sectors.
    """
    grid = phase_grid(points)
    basis = state.basis
    if basis.num_modes != 2:
        raise ValueError("phase posterior is defined for two-mode states")
    weights = np.zeros(points)
    for M in range(basis.cutoff + 1):
        idx = basis.sector(M)
        if isinstance(state, FockVector):
            v = state.amplitudes[idx]
            if not np.any(v):
                continue
            weights += np.abs(_phase_bras(M, points) @ v) ** 2
        else:
            block = state.matrix[np.ix_(idx, idx)]
            if not np.any(block):
                continue
            bras = _phase_bras(M, points)
            weights += np.einsum("ti,ij,tj->t", bras, block, bras.conj()).real
    weights = np.clip(weights, 0, None)
    return PhasePosterior(grid, weights / weights.sum())


def click_likelihood(outcome: str, grid: np.ndarray, contrast: float = 1.0) -> np.ndarray:
    """Probability of ``outcome`` given relative phase ``theta`` between coherent sources."""
    sign = {"c": -1.0, "d": 1.0}[outcome]
    return 0.5 * (1 + sign * contrast * np.cos(grid))


def record_posterior(outcomes, points: int = PHASE_GRID, contrast: float = 1.0) -> PhasePosterior:
    """Posterior over ``theta`` from a uniform prior after the given click record.

    ``contrast`` is ``2 sqrt(n_a n_b)/(n_a + n_b)`` for the mean source intensities;
    it is 1 for equal sources.
    """
    grid = phase_grid(points)
    n_c = sum(1 for o in outcomes if o == "c")
    n_d = len(outcomes) - n_c
    with np.errstate(divide="ignore"):
        logw = xlogy(n_c, click_likelihood("c", grid, contrast)) \
            + xlogy(n_d, click_likelihood("d", grid, contrast))
    w = np.exp(logw - logw.max())
    return PhasePosterior(grid, w / w.sum())


def visibility(state: State, modes: tuple[int, int] = (0, 1)) -> float:
    """Fringe visibility of the click rate at one output port as a test phase is swept.

    With ``I(phi) = <N>/2 + Re(e^{i phi} <a^dag b>)`` the extrema are exact, giving
    ``2 |<a^dag b>| / <N_a + N_b>``.
    """
    i, j = modes
    basis = state.basis
    key = ("visibility", i, j)
    if key not in basis._ops:
        basis._ops[key] = ((basis.creation(i) @ basis.annihilation(j)).tocsr(),
                           (basis.number(i) + basis.number(j)).tocsr())
    hop, num = basis._ops[key]
    if isinstance(state, FockVector):
        psi = state.amplitudes
        coh = np.vdot(psi, hop @ psi)
        total = np.vdot(psi, num @ psi).real
    else:
        coh = hop.multiply(state.matrix.T).sum()
        total = num.multiply(state.matrix.T).sum().real
    if total <= 1e-14:
        raise ValueError("visibility undefined for a state with no photons in these modes")
    return float(min(1.0, 2 * abs(coh) / total))


@dataclass
class Trajectory:
    initial: tuple[int, int]
    seed: int
    outcomes: list = field(default_factory=list)
    states: list = field(default_factory=list)


@dataclass
class LocalizationRun:
    trajectory: Trajectory
    posteriors: list
    state_distributions: list
    visibilities: list

    @property
    def entropies(self) -> list[float]:
        return [p.entropy() for p in self.posteriors]

    @property
    def state_entropies(self) -> list[float]:
        return [p.entropy() for p in self.state_distributions]


def run_localization(n: int, k: int, seed: int, points: int = PHASE_GRID) -> LocalizationRun:
    """``k`` sequential clicks starting from ``|n>|n>``.

    ``posteriors[s]``, ``state_distributions[s]`` and ``visibilities[s]`` describe
    the situation after ``s`` clicks (index 0 is the initial state, whose
    visibility is 0 and whose distributions are uniform).
    """
    if n < 1:
        raise ValueError("n must be positive")
    if not 0 <= k <= 2 * n - 1:
        raise ValueError(f"k must lie in 0..{2 * n - 1} so that photons remain")
    rng = np.random.default_rng(seed)
    state = fock_state((n, n), 2 * n)
    traj = Trajectory((n, n), seed, [], [state])
    posteriors = [record_posterior([], points)]
    dists = [state_phase_distribution(state, points)]
    vis = [visibility(state)]
    for _ in range(k):
        det = detect_one(state, rng)
        state = det.post_state
        traj.outcomes.append(det.outcome)
        traj.states.append(state)
        posteriors.append(record_posterior(traj.outcomes, points))
        dists.append(state_phase_distribution(state, points))
        vis.append(visibility(state))
    return LocalizationRun(traj, posteriors, dists, vis)


def fold_phase(theta: float) -> float:
    """Map to ``[0, pi]``; real jump operators leave ``theta`` and ``-theta`` indistinguishable."""
    theta = theta % (2 * np.pi)
    return min(theta, 2 * np.pi - theta)


@dataclass
class LocalizationSummary:
    n: int
    k: int
    seeds: list
    first_outcomes: list
    mean_visibility: np.ndarray
    mean_entropy: np.ndarray
    mean_state_entropy: np.ndarray
    peak_phases: list


def localization_ensemble(n: int, k: int, seeds, points: int = PHASE_GRID) -> LocalizationSummary:
    """Run one trajectory per seed and average per-step statistics in seed order."""
    seeds = list(seeds)
    first, vis, ent, sent, peaks = [], [], [], [], []
    for s in seeds:
        run = run_localization(n, k, s, points)
        first.append(run.trajectory.outcomes[0] if k else None)
        vis.append(run.visibilities)
        ent.append(run.entropies)
        sent.append(run.state_entropies)
        peaks.append(fold_phase(run.posteriors[-1].peak()))
    return LocalizationSummary(n, k, seeds, first, np.mean(vis, axis=0), np.mean(ent, axis=0),
                               np.mean(sent, axis=0), peaks)


def seed_sequence(base_seed: int, count: int) -> list[int]:
    """Deterministic per-trajectory seeds derived from one base seed."""
    children = np.random.SeedSequence(base_seed).spawn(count)
    return [int(c.generate_state(1)[0]) for c in children]


def uniform_phase_peaks(k: int, count: int, seed: int, points: int = PHASE_GRID) -> list[float]:
    """Folded posterior peaks when the sources really are coherent with a uniform random phase.

    This is the reference sample for checking that localized phases carry no
    preferred value: the peak estimator is discrete near 0 and pi, so the
    comparison is against the same estimator rather than against a flat density.
    """
    rng = np.random.default_rng(seed)
    peaks = []
    for _ in range(count):
        theta = rng.uniform(0, 2 * np.pi)
        p_d = 0.5 * (1 + np.cos(theta))
        outcomes = ["d" if rng.random() < p_d else "c" for _ in range(k)]
        peaks.append(fold_phase(record_posterior(outcomes, points).peak()))
    return peaks


def peak_uniformity_pvalue(peaks, k: int, seed: int, reference_size: int = 5000,
                           points: int = PHASE_GRID) -> float:
    """Two-sample Kolmogorov-Smirnov p-value against :func:`uniform_phase_peaks`."""
    ref = uniform_phase_peaks(k, reference_size, seed, points)
    return float(ks_2samp(peaks, ref).pvalue)
