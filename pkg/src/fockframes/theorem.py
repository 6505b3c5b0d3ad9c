"""Photon-counting statistics of linear interferometers with number-diagonal probes.

Mode 0 carries the signal; modes ``1..N-1`` carry probe states.  Losses are
extra ancilla modes coupled in by splitters and never detected.  Detectors are
stochastic matrices applied to the true counts.  When every probe is diagonal in
the number basis the count statistics cannot depend on the signal's off-diagonal
number-basis elements; :func:`offdiag_sensitivity` checks this numerically.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import reduce

import numpy as np
from scipy.stats import binom

from .fock import DensityMatrix, coherent_state, fock_basis, random_density_matrix
from .optics import BeamSplitter, LinearNetwork, PhaseShifter, element_matrix, network_from_dict

DIAGONAL_TOL = 1e-14
STOCHASTIC_TOL = 1e-12
THEOREM_TOL = 1e-10


def binomial_detector(eta: float, max_count: int) -> np.ndarray:
    """Confusion matrix of a detector with efficiency ``eta``: row ``k`` is Binomial(k, eta)."""
    if not 0.0 <= eta <= 1.0:
        raise ValueError(f"efficiency {eta} outside [0, 1]")
    k = np.arange(max_count + 1)
    return binom.pmf(k[None, :], k[:, None], eta)


@dataclass(frozen=True)
class Loss:
    mode: int
    probability: float
    position: str = "after"

    def __post_init__(self):
        if not 0.0 <= self.probability <= 1.0:
            raise ValueError(f"loss probability {self.probability} outside [0, 1]")
        if self.position not in ("before", "after"):
            raise ValueError("loss position must be 'before' or 'after' the network")


@dataclass
class ExperimentSpec:
    """A signal on mode 0, probes on the remaining modes, a network, losses and detectors.

    ``probes[i]`` describes mode ``i+1``: either a vector of photon-number
    probabilities or, when ``allow_coherent`` is set, a full density matrix.
    ``detectors[m]`` is a confusion matrix for mode ``m`` or ``None`` for an ideal
    counter; it must cover counts up to the joint cutoff.
    """

    network: LinearNetwork
    probes: list = field(default_factory=list)
    losses: list = field(default_factory=list)
    detectors: list | None = None
    signal_cutoff: int = 2
    allow_coherent: bool = False

    def __post_init__(self):
        self.probes = [np.asarray(p, dtype=complex if np.ndim(p) == 2 else float) for p in self.probes]
        if len(self.probes) != self.num_modes - 1:
            raise ValueError(f"{self.num_modes}-mode network needs {self.num_modes - 1} probes, "
                             f"got {len(self.probes)}")
        for i, p in enumerate(self.probes):
            if p.ndim == 1:
                if np.any(p < -DIAGONAL_TOL) or abs(p.sum() - 1) > STOCHASTIC_TOL:
                    raise ValueError(f"probe {i} is not a probability vector")
            elif p.ndim == 2 and p.shape[0] == p.shape[1]:
                off = p - np.diag(np.diag(p))
                if not self.allow_coherent and np.max(np.abs(off), initial=0.0) > DIAGONAL_TOL:
                    raise ValueError(f"probe {i} has number-basis coherences; "
                                     "set allow_coherent to use it anyway")
            else:
                raise ValueError(f"probe {i} must be a vector or a square matrix")
        self.losses = [l if isinstance(l, Loss) else Loss(**l) for l in self.losses]
        for l in self.losses:
            if not 0 <= l.mode < self.num_modes:
                raise ValueError(f"loss on mode {l.mode} outside the network")
        if self.signal_cutoff < 0:
            raise ValueError("signal_cutoff must be non-negative")
        cut = self.joint_cutoff
        if self.detectors is None:
            self.detectors = [None] * self.num_modes
        if len(self.detectors) != self.num_modes:
            raise ValueError("one detector entry per mode is required")
        dets = []
        for m, d in enumerate(self.detectors):
            if d is None:
                dets.append(None)
                continue
            d = np.asarray(d, dtype=float)
            if d.ndim != 2 or d.shape[0] != cut + 1:
                raise ValueError(f"detector {m} needs {cut + 1} rows for counts 0..{cut}")
            if np.any(d < 0) or np.max(np.abs(d.sum(axis=1) - 1)) > STOCHASTIC_TOL:
                raise ValueError(f"detector {m} rows are not probability distributions")
            dets.append(d)
        self.detectors = dets

    @property
    def num_modes(self) -> int:
        return self.network.num_modes

    @property
    def probe_cutoffs(self) -> list[int]:
        return [len(p) - 1 for p in self.probes]

    @property
    def joint_cutoff(self) -> int:
        return self.signal_cutoff + sum(self.probe_cutoffs)

    def to_dict(self) -> dict:
        out = self.network.to_dict()
        out["signal_cutoff"] = self.signal_cutoff
        out["probes"] = [p.tolist() if p.ndim == 1 else {"re": p.real.tolist(), "im": p.imag.tolist()}
                         for p in self.probes]
        out["losses"] = [{"mode": l.mode, "probability": l.probability, "position": l.position}
                         for l in self.losses]
        out["detectors"] = [None if d is None else d.tolist() for d in self.detectors]
        out["allow_coherent"] = self.allow_coherent
        return out


def spec_from_dict(data: dict) -> ExperimentSpec:
    """Network JSON extended with ``probes``, ``losses``, ``detectors`` and ``signal_cutoff``.

    A detector entry may be ``null``, a matrix, or ``{"efficiency": eta}``.
    """
    network = network_from_dict(data)
    signal_cutoff = int(data.get("signal_cutoff", 2))
    probes = []
    for p in data.get("probes", []):
        if isinstance(p, dict):
            probes.append(np.asarray(p["re"]) + 1j * np.asarray(p.get("im", 0)))
        else:
            probes.append(np.asarray(p, dtype=float))
    cut = signal_cutoff + sum(np.shape(p)[0] - 1 for p in probes)
    detectors = data.get("detectors")
    if detectors is not None:
        detectors = [binomial_detector(float(d["efficiency"]), cut) if isinstance(d, dict) else d
                     for d in detectors]
    return ExperimentSpec(network, probes, data.get("losses", []), detectors, signal_cutoff,
                          bool(data.get("allow_coherent", False)))


def load_spec(path) -> ExperimentSpec:
    with open(path) as fh:
        return spec_from_dict(json.load(fh))


@dataclass
class CountStatistics:
    """Joint distribution of reported counts; ``probabilities[k_0, ..., k_{N-1}]``."""

    probabilities: np.ndarray

    def __post_init__(self):
        total = self.probabilities.sum()
        if abs(total - 1) > THEOREM_TOL:
            raise ValueError(f"count probabilities sum to {total}")

    def as_dict(self, threshold: float = 0.0) -> dict[tuple, float]:
        return {tuple(int(i) for i in idx): float(p)
                for idx, p in np.ndenumerate(self.probabilities) if p > threshold}

    def distance(self, other: "CountStatistics") -> float:
        """Largest absolute difference over all outcomes."""
        if self.probabilities.shape != other.probabilities.shape:
            raise ValueError("count statistics over different outcome ranges")
        return float(np.max(np.abs(self.probabilities - other.probabilities)))

    def total_count_distribution(self) -> np.ndarray:
        idx = np.indices(self.probabilities.shape).sum(axis=0)
        return np.bincount(idx.ravel(), weights=self.probabilities.ravel())


def _eigen_components(rho: np.ndarray):
    if rho.ndim == 1:
        return [(w, np.eye(len(rho))[k]) for k, w in enumerate(rho) if w > 0]
    vals, vecs = np.linalg.eigh(0.5 * (rho + rho.conj().T))
    return [(v, vecs[:, k]) for k, v in enumerate(vals) if v > 1e-15]


def _loss_elements(spec: ExperimentSpec, position: str):
    return [BeamSplitter((l.mode, spec.num_modes + i), 1.0 - l.probability)
            for i, l in enumerate(spec.losses) if l.position == position]


def run_experiment(spec: ExperimentSpec, signal) -> CountStatistics:
    """Exact count distribution for a single-mode signal state.

    Each input is split into weighted pure components, which are propagated
    through the loss splitters and network on the joint truncated space, so the
    full density matrix is never formed.
    """
    signal = signal.to_density()
    if signal.num_modes != 1:
        raise ValueError("the signal must be a single-mode state")
    if signal.cutoff != spec.signal_cutoff:
        raise ValueError(f"signal cutoff {signal.cutoff} does not match spec signal_cutoff "
                         f"{spec.signal_cutoff}")
    N = spec.num_modes
    total_modes = N + len(spec.losses)
    cut = spec.joint_cutoff
    basis = fock_basis(total_modes, cut)

    local = [_eigen_components(signal.matrix)] + [_eigen_components(p) for p in spec.probes]
    dims = [signal.cutoff + 1] + [len(p) for p in spec.probes]
    occ = np.indices(dims).reshape(N, -1).T
    occ = np.hstack([occ, np.zeros((occ.shape[0], total_modes - N), dtype=int)])
    rows = basis.ranks(occ)

    weights, columns = [], []
    for combo in np.ndindex(*[len(c) for c in local]):
        w = 1.0
        vec = np.ones(1, dtype=complex)
        for mode, j in enumerate(combo):
            wj, vj = local[mode][j]
            w *= wj
            vec = np.kron(vec, vj)
        weights.append(w)
        columns.append(vec)
    psi = np.zeros((basis.dim, len(columns)), dtype=complex)
    psi[rows, :] = np.array(columns).T

    elements = _loss_elements(spec, "before") + list(spec.network.elements) + _loss_elements(spec, "after")
    for el in elements:
        psi = element_matrix(el, basis) @ psi

    probs = (np.abs(psi) ** 2) @ np.asarray(weights)
    counts = np.zeros((cut + 1,) * N)
    np.add.at(counts, tuple(basis.states[:, :N].T), probs)
    counts /= counts.sum()
    for m, d in enumerate(spec.detectors):
        if d is not None:
            counts = np.moveaxis(np.tensordot(counts, d, axes=([m], [0])), -1, m)
    return CountStatistics(counts)


def random_network(num_modes: int, depth: int, seed: int) -> LinearNetwork:
    """``depth`` layers, each a phase shift on every mode then a splitter on a random pair."""
    if depth < 1:
        raise ValueError("depth must be at least 1")
    if num_modes < 1:
        raise ValueError("num_modes must be positive")
    rng = np.random.default_rng(seed)
    elements = []
    for _ in range(depth):
        for m in range(num_modes):
            elements.append(PhaseShifter(m, rng.uniform(0, 2 * np.pi)))
        if num_modes > 1:
            i, j = (int(x) for x in rng.choice(num_modes, size=2, replace=False))
            elements.append(BeamSplitter((i, j), rng.uniform(0, 1)))
    return LinearNetwork(num_modes, tuple(elements))


def random_spec(seed: int, max_modes: int = 4, max_depth: int = 6, max_loss: float = 0.5,
                min_eta: float = 0.5, max_total_cutoff: int = 6) -> ExperimentSpec:
    """Random valid spec: diagonal probes, up to two loss channels, binomial detectors."""
    rng = np.random.default_rng(seed)
    N = int(rng.integers(2, max_modes + 1))
    depth = int(rng.integers(1, max_depth + 1))
    network = random_network(N, depth, int(rng.integers(2**31)))
    signal_cutoff = int(rng.integers(1, 4))
    budget = max_total_cutoff - signal_cutoff
    probes = []
    for _ in range(N - 1):
        c = int(rng.integers(0, min(2, budget) + 1))
        budget -= c
        probes.append(rng.dirichlet(np.ones(c + 1)))
    losses = [Loss(int(rng.integers(N)), float(rng.uniform(0, max_loss)),
                   str(rng.choice(["before", "after"])))
              for _ in range(int(rng.integers(0, 3)))]
    cut = signal_cutoff + sum(len(p) - 1 for p in probes)
    detectors = [binomial_detector(float(rng.uniform(min_eta, 1.0)), cut) for _ in range(N)]
    return ExperimentSpec(network, probes, losses, detectors, signal_cutoff)


def offdiag_sensitivity(spec: ExperimentSpec, trials: int, seed: int) -> float:
    """Largest L-infinity gap between statistics of random signals and their number-diagonal parts."""
    if trials < 1:
        raise ValueError("trials must be at least 1")
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(trials):
        rho = random_density_matrix(1, spec.signal_cutoff, rng)
        worst = max(worst, run_experiment(spec, rho).distance(run_experiment(spec, rho.diagonal())))
    return worst


def theorem_check(num_modes: int, depth: int, trials: int, seed: int) -> dict:
    """Sensitivity over ``trials`` random specs with ``num_modes`` modes and up to ``depth`` layers."""
    if trials < 1:
        raise ValueError("trials must be at least 1")
    seeds = np.random.SeedSequence(seed).spawn(trials)
    rows = []
    for t, ss in enumerate(seeds):
        s = int(ss.generate_state(1)[0])
        spec = random_spec(s, max_modes=num_modes, max_depth=depth)
        rows.append({"trial": t, "modes": spec.num_modes, "elements": len(spec.network),
                     "losses": len(spec.losses), "deviation": offdiag_sensitivity(spec, 1, s)})
    return {"rows": rows, "max_deviation": max(r["deviation"] for r in rows)}


def coherent_probe_counterexample(alpha: complex = 1.0, signal_cutoff: int = 1,
                                  probe_cutoff: int = 16) -> float:
    """Replace the number-diagonal probe by a coherent state and measure the gap.

    A 50/50 splitter mixes the signal ``(|0> + |1>)/sqrt(2)`` with ``|alpha>``;
    the counts now respond to the signal's coherence.
    """
    probe = coherent_state(alpha, probe_cutoff).to_density().matrix
    network = LinearNetwork(2, (BeamSplitter((0, 1), 0.5),))
    spec = ExperimentSpec(network, [probe], signal_cutoff=signal_cutoff, allow_coherent=True)
    v = np.zeros(signal_cutoff + 1, dtype=complex)
    v[:2] = 1 / np.sqrt(2)
    rho = DensityMatrix(1, signal_cutoff, np.outer(v, v.conj()))
    return run_experiment(spec, rho).distance(run_experiment(spec, rho.diagonal()))
