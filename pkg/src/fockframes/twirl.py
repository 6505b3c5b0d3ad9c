"""Group averages over phase rotations (and over SO(3) for a spin-1/2).

The U(1) averages are evaluated exactly: averaging ``e^{i theta N} rho e^{-i theta N}``
over a full period removes every matrix element between different eigenvalues
of ``N`` and leaves the rest untouched.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.optimize import least_squares

from .fock import (
    DensityMatrix,
    FockVector,
    TAIL_THRESHOLD,
    coherent_product,
    cutoff_for,
    fock_basis,
)
from .optics import split_amplitudes

QUADRATURE_POINTS = 64


@dataclass(frozen=True)
class TwirlKind:
    """Which symmetry group is averaged over: ``single_mode``, ``collective`` or ``su2_spin_half``."""

    kind: str
    mode: int | None = None

    def __post_init__(self):
        if self.kind not in ("single_mode", "collective", "su2_spin_half"):
            raise ValueError(f"unknown twirl kind {self.kind!r}")
        if (self.kind == "single_mode") != (self.mode is not None):
            raise ValueError("a mode index is required exactly for single_mode twirls")

    def apply(self, rho):
        if self.kind == "single_mode":
            return u1_twirl(rho, self.mode)
        if self.kind == "collective":
            return collective_twirl(rho)
        return su2_twirl_spin_half(rho)


def _project(rho: DensityMatrix, labels: np.ndarray) -> DensityMatrix:
    keep = labels[:, None] == labels[None, :]
    return DensityMatrix(rho.num_modes, rho.cutoff, np.where(keep, rho.matrix, 0),
                         tail_mass=rho.tail_mass, check_positive=False)


def u1_twirl(rho, mode: int) -> DensityMatrix:
    """Average over phase rotations of a single mode."""
    rho = rho.to_density()
    rho.basis.check_mode(mode)
    return _project(rho, rho.basis.states[:, mode])


def collective_twirl(rho) -> DensityMatrix:
    """Average over a common phase rotation of all modes.

    Only coherences between different total photon numbers are removed.
    """
    rho = rho.to_density()
    return _project(rho, rho.basis.totals)


def u1_twirl_quadrature(rho, mode: int | None = None, points: int = QUADRATURE_POINTS) -> DensityMatrix:
    """Equally spaced angle average; exact only for number differences below ``points``.

    Kept as an independent check on the projections above.  ``mode=None`` rotates
    all modes together.
    """
    rho = rho.to_density()
    n = rho.basis.totals if mode is None else rho.basis.states[:, mode]
    acc = np.zeros_like(rho.matrix)
    for theta in 2 * np.pi * np.arange(points) / points:
        u = np.exp(1j * theta * n)
        acc += u[:, None] * rho.matrix * u.conj()[None, :]
    acc /= points
    acc = 0.5 * (acc + acc.conj().T)
    return DensityMatrix(rho.num_modes, rho.cutoff, acc, tail_mass=rho.tail_mass,
                         check_positive=False)


def su2_twirl_spin_half(rho) -> np.ndarray:
    """Average of ``R rho R^dag`` over all rotations of a spin-1/2.

    The spin-1/2 representation is irreducible, so the average of any unit-trace
    state is ``I/2``.
    """
    rho = np.asarray(rho, dtype=complex)
    if rho.shape != (2, 2):
        raise ValueError("expected a 2x2 density matrix")
    if np.max(np.abs(rho - rho.conj().T)) > 1e-12 or abs(np.trace(rho) - 1) > 1e-10:
        raise ValueError("not a valid qubit density matrix")
    if np.linalg.eigvalsh(rho).min() < -1e-10:
        raise ValueError("not a valid qubit density matrix")
    return np.eye(2, dtype=complex) / 2


@dataclass
class SectorMixture:
    """``sum_n weights[n] |v_n><v_n|`` with each ``v_n`` inside the ``n``-photon sector.

    This is the collectively twirled form of a pure state, stored without the
    dense matrix so that large local-oscillator amplitudes stay tractable.
    """

    num_modes: int
    cutoff: int
    weights: np.ndarray
    vectors: dict = field(repr=False)
    tail_mass: float = 0.0

    @property
    def basis(self):
        return fock_basis(self.num_modes, self.cutoff)

    def to_density(self) -> DensityMatrix:
        d = self.basis.dim
        mat = np.zeros((d, d), dtype=complex)
        for n, v in self.vectors.items():
            idx = self.basis.sector(n)
            mat[np.ix_(idx, idx)] += self.weights[n] * np.outer(v, v.conj())
        return DensityMatrix(self.num_modes, self.cutoff, mat, tail_mass=self.tail_mass,
                             check_positive=False)

    def _stacked(self) -> sp.csr_matrix:
        """Columns are ``sqrt(w_n) v_n`` embedded in the full basis."""
        rows, cols, vals = [], [], []
        for col, (n, v) in enumerate(sorted(self.vectors.items())):
            rows.append(self.basis.sector(n))
            cols.append(np.full(v.shape[0], col))
            vals.append(np.sqrt(self.weights[n]) * v)
        return sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                             shape=(self.basis.dim, len(self.vectors)))

    def expectation(self, observable) -> complex:
        """``Tr(rho O)`` summed sector by sector."""
        d = self.basis.dim
        if observable.shape != (d, d):
            raise ValueError(f"observable shape {observable.shape} does not match dimension {d}")
        V = self._stacked()
        OV = observable @ V
        if sp.issparse(OV):
            return complex(V.conj().multiply(OV).sum())
        return complex(np.sum(V.conj().toarray() * OV))


def collective_twirl_pure(psi: FockVector) -> SectorMixture:
    """Collective twirl of a pure state as a mixture of its sector projections."""
    weights = np.zeros(psi.cutoff + 1)
    vectors = {}
    for n in range(psi.cutoff + 1):
        v = psi.amplitudes[psi.basis.sector(n)]
        w = float(np.vdot(v, v).real)
        if w > 0:
            weights[n] = w
            vectors[n] = v / np.sqrt(w)
    return SectorMixture(psi.num_modes, psi.cutoff, weights, vectors, psi.tail_mass)


def split_fock_mixture(weights, T: float, phi: float, cutoff: int) -> DensityMatrix:
    """``sum_n p_n |psi_{n,phi}><psi_{n,phi}|`` on two modes.

    Sector blocks are written directly from the normalised split amplitudes.
    """
    basis = fock_basis(2, cutoff)
    mat = np.zeros((basis.dim, basis.dim), dtype=complex)
    for n, p in enumerate(weights):
        if p == 0:
            continue
        m = np.arange(n + 1)
        v = split_amplitudes(n, T) * np.exp(-1j * phi * m)
        idx = basis.ranks(np.column_stack([m, n - m]))
        mat[np.ix_(idx, idx)] += p * np.outer(v, v.conj())
    mat /= np.trace(mat).real
    return DensityMatrix(2, cutoff, mat, check_positive=False)


# Candidate relations between the fitted transmission and |alpha|^2/|beta|^2.
CANDIDATE_RELATIONS = {
    "(1-T^2)/T^2": lambda T: (1 - T**2) / T**2,
    "(1-T)/T": lambda T: (1 - T) / T,
    "T/(1-T)": lambda T: T / (1 - T),
}


@dataclass
class TwirlFit:
    alpha: complex
    beta: complex
    cutoff: int
    T: float
    phi: float
    nbar: float
    max_abs_diff: float
    ratio: float
    relation_residuals: dict
    tail_mass: float

    @property
    def matching_relation(self) -> str:
        return min(self.relation_residuals, key=self.relation_residuals.get)


def fit_collective_twirl(alpha: complex, beta: complex, cutoff: int | None = None) -> TwirlFit:
    """Fit ``T`` and ``phi`` so that the twirled ``|alpha>|beta>`` matches a split-Fock mixture.

    The mixture weights are Poisson with mean ``|alpha|^2 + |beta|^2``.  Returns the
    best fit, the elementwise residual and how well each candidate
    ``|alpha|^2/|beta|^2`` relation is satisfied by the fitted ``T``.
    """
    alpha, beta = complex(alpha), complex(beta)
    if beta == 0:
        raise ValueError("beta must be non-zero")
    nbar = abs(alpha) ** 2 + abs(beta) ** 2
    if cutoff is None:
        cutoff = cutoff_for(nbar, TAIL_THRESHOLD)
    product = coherent_product([alpha, beta], cutoff)
    target = collective_twirl(product.to_density()).matrix
    n = np.arange(cutoff + 1)
    weights = np.exp(n * np.log(nbar) - nbar - np.array([math.lgamma(k + 1) for k in n]))
    weights /= weights.sum()

    def residual(x):
        T, phi = x
        diff = split_fock_mixture(weights, T, phi, cutoff).matrix - target
        return np.concatenate([diff.real.ravel(), diff.imag.ravel()])

    # start from the twirled state's own mode-a share and single-photon coherence
    basis = product.basis
    n_a = basis.states[:, 0]
    diag = np.diag(target).real
    T0 = float(np.clip(diag @ n_a / (diag @ basis.totals), 1e-6, 1 - 1e-6))
    phi0 = -float(np.angle(target[basis.index((1, 0)), basis.index((0, 1))]))
    fit = least_squares(residual, x0=[T0, phi0], bounds=([0.0, -np.inf], [1.0, np.inf]),
                        xtol=1e-15, ftol=1e-15, gtol=1e-15, method="trf")
    T, phi = float(fit.x[0]), float(fit.x[1]) % (2 * np.pi)
    max_diff = float(np.max(np.abs(split_fock_mixture(weights, T, phi, cutoff).matrix - target)))
    ratio = abs(alpha) ** 2 / abs(beta) ** 2
    residuals = {}
    for name, rel in CANDIDATE_RELATIONS.items():
        try:
            residuals[name] = abs(rel(T) - ratio)
        except ZeroDivisionError:
            residuals[name] = math.inf
    return TwirlFit(alpha, beta, cutoff, T, phi, nbar, max_diff, ratio, residuals,
                    product.tail_mass)
