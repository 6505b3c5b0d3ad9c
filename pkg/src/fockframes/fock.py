"""Truncated multimode Fock space.

Basis states are occupation tuples ``(n_1, ..., n_m)`` with ``sum(n) <= cutoff``,
ordered lexicographically.  States carry the probability mass that was
discarded by truncation (``tail_mass``) so that approximation error can be
audited downstream.
"""
from __future__ import annotations

import json
import math
from functools import lru_cache
from typing import Iterable, Sequence, Union

import numpy as np
import scipy.sparse as sp
from scipy.special import gammaln
from scipy.stats import poisson

TOL_CONSTRUCTION = 1e-12
TOL_DERIVED = 1e-10
TAIL_THRESHOLD = 1e-12
# eigenvalue check is O(dim^3); skipped above this size
POSITIVITY_CHECK_MAX_DIM = 600
JSON_SCHEMA_VERSION = 1


class TruncationError(ValueError):
    """Raised when a state does not fit in the requested cutoff."""


def _compositions(num_modes: int, budget: int):
    if num_modes == 1:
        for n in range(budget + 1):
            yield (n,)
        return
    for n in range(budget + 1):
        for rest in _compositions(num_modes - 1, budget - n):
            yield (n,) + rest


class FockBasis:
    """Lexicographically ordered occupation tuples with total photon cutoff.

    Use :func:`fock_basis` to obtain cached instances.
    """

    def __init__(self, num_modes: int, cutoff: int):
        if num_modes < 1:
            raise ValueError("num_modes must be positive")
        if cutoff < 0:
            raise ValueError("cutoff must be non-negative")
        self.num_modes = num_modes
        self.cutoff = cutoff
        self.dim = math.comb(cutoff + num_modes, num_modes)
        states = np.fromiter(
            (n for tup in _compositions(num_modes, cutoff) for n in tup),
            dtype=np.int64,
            count=self.dim * num_modes,
        ).reshape(self.dim, num_modes)
        states.flags.writeable = False
        self.states = states
        self.totals = states.sum(axis=1)
        self.totals.flags.writeable = False
        top = cutoff + num_modes + 1
        self._binom = np.array(
            [[math.comb(y, k) for y in range(top + 1)] for k in range(num_modes + 1)],
            dtype=np.int64,
        )
        self._ops: dict = {}

    def __repr__(self) -> str:
        return f"FockBasis(num_modes={self.num_modes}, cutoff={self.cutoff}, dim={self.dim})"

    def ranks(self, occupations) -> np.ndarray:
        """Vectorised index lookup for an ``(k, num_modes)`` array of tuples.

        Tuples must satisfy the cutoff; no check is made here.
        """
        occ = np.asarray(occupations, dtype=np.int64)
        if occ.ndim == 1:
            occ = occ[None, :]
        m = self.num_modes
        rank = np.zeros(occ.shape[0], dtype=np.int64)
        budget = np.full(occ.shape[0], self.cutoff, dtype=np.int64)
        for p in range(m - 1):
            r = m - p - 1
            n_p = occ[:, p]
            rank += self._binom[r + 1, budget + r + 1] - self._binom[r + 1, budget - n_p + r + 1]
            budget = budget - n_p
        rank += occ[:, m - 1]
        return rank

    def index(self, occupation: Sequence[int]) -> int:
        occ = tuple(int(n) for n in occupation)
        if len(occ) != self.num_modes:
            raise ValueError(f"expected {self.num_modes} occupations, got {len(occ)}")
        if min(occ) < 0:
            raise ValueError("occupations must be non-negative")
        if sum(occ) > self.cutoff:
            raise TruncationError(f"occupations {occ} exceed cutoff {self.cutoff}")
        return int(self.ranks(occ)[0])

    def sector(self, total: int) -> np.ndarray:
        """Indices of basis states with exactly ``total`` photons."""
        return np.flatnonzero(self.totals == total)

    def check_mode(self, mode: int) -> int:
        if not 0 <= mode < self.num_modes:
            raise ValueError(f"mode {mode} out of range for {self.num_modes} modes")
        return int(mode)

    def annihilation(self, mode: int) -> sp.csr_matrix:
        """Sparse ``a_mode``; ``a|n> = sqrt(n)|n-1>``."""
        key = ("a", self.check_mode(mode))
        if key not in self._ops:
            src = np.flatnonzero(self.states[:, mode] > 0)
            target_occ = self.states[src].copy()
            target_occ[:, mode] -= 1
            rows = self.ranks(target_occ)
            vals = np.sqrt(self.states[src, mode].astype(float))
            op = sp.csr_matrix((vals.astype(complex), (rows, src)), shape=(self.dim, self.dim))
            self._ops[key] = op
        return self._ops[key]

    def creation(self, mode: int) -> sp.csr_matrix:
        """Adjoint of :meth:`annihilation`; truncates at the cutoff."""
        key = ("adag", self.check_mode(mode))
        if key not in self._ops:
            self._ops[key] = self.annihilation(mode).conj().T.tocsr()
        return self._ops[key]

    def number(self, mode: int) -> sp.csr_matrix:
        key = ("n", self.check_mode(mode))
        if key not in self._ops:
            self._ops[key] = sp.diags(self.states[:, mode].astype(complex), format="csr")
        return self._ops[key]

    def total_number(self) -> sp.csr_matrix:
        return sp.diags(self.totals.astype(complex), format="csr")

    def mode_operator(self, mode: int, kind: str) -> sp.csr_matrix:
        """Operator on ``mode``; ``kind`` is one of ``"a"``, ``"adag"``, ``"n"``."""
        if kind == "a":
            return self.annihilation(mode)
        if kind == "adag":
            return self.creation(mode)
        if kind == "n":
            return self.number(mode)
        raise ValueError(f"unknown operator kind {kind!r}")


@lru_cache(maxsize=64)
def fock_basis(num_modes: int, cutoff: int) -> FockBasis:
    return FockBasis(num_modes, cutoff)


def _freeze(arr: np.ndarray) -> np.ndarray:
    arr = np.array(arr, dtype=complex, copy=True)
    arr.flags.writeable = False
    return arr


class FockVector:
    """Normalised pure state on a truncated multimode Fock space."""

    kind = "vector"

    def __init__(self, num_modes: int, cutoff: int, amplitudes, tail_mass: float = 0.0,
                 normalize: bool = False):
        self.basis = fock_basis(num_modes, cutoff)
        amps = np.asarray(amplitudes, dtype=complex).reshape(-1)
        if amps.shape[0] != self.basis.dim:
            raise ValueError(f"expected {self.basis.dim} amplitudes, got {amps.shape[0]}")
        norm = np.linalg.norm(amps)
        if normalize:
            if norm == 0:
                raise ValueError("cannot normalise the zero vector")
            amps = amps / norm
        elif abs(norm**2 - 1) > TOL_CONSTRUCTION:
            raise ValueError(f"state not normalised: |psi|^2 = {norm**2!r}")
        self.amplitudes = _freeze(amps)
        self.tail_mass = float(tail_mass)

    @property
    def num_modes(self) -> int:
        return self.basis.num_modes

    @property
    def cutoff(self) -> int:
        return self.basis.cutoff

    def __repr__(self) -> str:
        return f"FockVector(num_modes={self.num_modes}, cutoff={self.cutoff}, tail_mass={self.tail_mass:.3g})"

    def amplitude(self, occupation: Sequence[int]) -> complex:
        return complex(self.amplitudes[self.basis.index(occupation)])

    def to_density(self) -> "DensityMatrix":
        psi = self.amplitudes
        return DensityMatrix(self.num_modes, self.cutoff, np.outer(psi, psi.conj()),
                             tail_mass=self.tail_mass, check_positive=False)

    def number_distribution(self) -> np.ndarray:
        """Probability of each total photon number ``0..cutoff``."""
        return np.bincount(self.basis.totals, weights=np.abs(self.amplitudes) ** 2,
                           minlength=self.cutoff + 1)


class DensityMatrix:
    """Hermitian, unit-trace, positive semidefinite matrix on a truncated space."""

    kind = "density"

    def __init__(self, num_modes: int, cutoff: int, matrix, tail_mass: float = 0.0,
                 normalize: bool = False, check_positive: bool | None = None):
        self.basis = fock_basis(num_modes, cutoff)
        mat = np.asarray(matrix, dtype=complex)
        d = self.basis.dim
        if mat.shape != (d, d):
            raise ValueError(f"expected a {d}x{d} matrix, got {mat.shape}")
        if normalize:
            tr = np.trace(mat).real
            if tr <= 0:
                raise ValueError("matrix has non-positive trace")
            mat = mat / tr
        herm_err = np.max(np.abs(mat - mat.conj().T)) if d else 0.0
        if herm_err > TOL_CONSTRUCTION:
            raise ValueError(f"matrix not Hermitian (max deviation {herm_err:.3g})")
        tr = np.trace(mat)
        if abs(tr - 1) > TOL_DERIVED:
            raise ValueError(f"trace {tr} differs from 1")
        if check_positive is None:
            check_positive = d <= POSITIVITY_CHECK_MAX_DIM
        if check_positive:
            lowest = np.linalg.eigvalsh(mat).min()
            if lowest < -TOL_DERIVED:
                raise ValueError(f"matrix not positive semidefinite (min eigenvalue {lowest:.3g})")
        self.matrix = _freeze(mat)
        self.tail_mass = float(tail_mass)

    @property
    def num_modes(self) -> int:
        return self.basis.num_modes

    @property
    def cutoff(self) -> int:
        return self.basis.cutoff

    def __repr__(self) -> str:
        return f"DensityMatrix(num_modes={self.num_modes}, cutoff={self.cutoff}, tail_mass={self.tail_mass:.3g})"

    def element(self, row: Sequence[int], col: Sequence[int]) -> complex:
        return complex(self.matrix[self.basis.index(row), self.basis.index(col)])

    def diagonal(self) -> "DensityMatrix":
        """The number-basis dephased state ``diag(rho)``."""
        return DensityMatrix(self.num_modes, self.cutoff, np.diag(np.diag(self.matrix)),
                             tail_mass=self.tail_mass, check_positive=False)

    def to_density(self) -> "DensityMatrix":
        return self

    def purity(self) -> float:
        return float(np.vdot(self.matrix, self.matrix).real)


State = Union[FockVector, DensityMatrix]


def poisson_tail(nbar: float, cutoff: int) -> float:
    """Probability that a Poisson variable of mean ``nbar`` exceeds ``cutoff``."""
    return float(poisson.sf(cutoff, nbar)) if nbar > 0 else 0.0


def cutoff_for(nbar: float, tol: float = TAIL_THRESHOLD) -> int:
    """Smallest cutoff whose Poisson tail mass is below ``tol``."""
    if nbar < 0:
        raise ValueError("nbar must be non-negative")
    c = int(nbar)
    while poisson_tail(nbar, c) >= tol:
        c += 1
    return c


def fock_state(occupations: Sequence[int], cutoff: int) -> FockVector:
    """Number state ``|n_1, ..., n_m>``."""
    occ = tuple(int(n) for n in occupations)
    if not occ:
        raise ValueError("at least one mode required")
    if sum(occ) > cutoff:
        raise TruncationError(f"occupations {occ} exceed cutoff {cutoff}")
    basis = fock_basis(len(occ), cutoff)
    amps = np.zeros(basis.dim, dtype=complex)
    amps[basis.index(occ)] = 1.0
    return FockVector(len(occ), cutoff, amps)


def _coherent_log_amplitudes(alpha: complex, n: np.ndarray) -> np.ndarray:
    r = abs(alpha)
    if r == 0:
        return np.where(n == 0, 1.0 + 0j, 0j)
    mag = np.exp(n * np.log(r) - 0.5 * gammaln(n + 1) - 0.5 * r * r)
    return mag * np.exp(1j * np.angle(alpha) * n)


def coherent_product(alphas: Sequence[complex], cutoff: int,
                     tol: float = TAIL_THRESHOLD) -> FockVector:
    """Product of coherent states ``|alpha_1> ... |alpha_m>`` in one truncated space.

    The discarded mass is the Poisson tail of total mean ``sum |alpha_i|^2``.
    Raises :class:`TruncationError` when it is not below ``tol``.
    """
    alphas = [complex(a) for a in alphas]
    nbar = sum(abs(a) ** 2 for a in alphas)
    tail = poisson_tail(nbar, cutoff)
    if tail >= tol:
        raise TruncationError(
            f"coherent tail mass {tail:.3g} beyond cutoff {cutoff} exceeds {tol:g}; "
            f"use cutoff >= {cutoff_for(nbar, tol)}")
    basis = fock_basis(len(alphas), cutoff)
    amps = np.ones(basis.dim, dtype=complex)
    for mode, alpha in enumerate(alphas):
        amps *= _coherent_log_amplitudes(alpha, basis.states[:, mode])
    return FockVector(len(alphas), cutoff, amps, tail_mass=tail, normalize=True)


def coherent_state(alpha: complex, cutoff: int, tol: float = TAIL_THRESHOLD) -> FockVector:
    """Single-mode coherent state ``|alpha>`` truncated at ``cutoff`` and renormalised.

    ``tail_mass`` holds the pre-normalisation probability beyond the cutoff.
    """
    return coherent_product([alpha], cutoff, tol)


def poisson_mixture(nbar: float, cutoff: int, tol: float = TAIL_THRESHOLD) -> DensityMatrix:
    """Number-diagonal state with Poisson populations of mean ``nbar``."""
    if nbar < 0:
        raise ValueError("nbar must be non-negative")
    tail = poisson_tail(nbar, cutoff)
    if tail >= tol:
        raise TruncationError(f"Poisson tail {tail:.3g} beyond cutoff {cutoff} exceeds {tol:g}")
    n = np.arange(cutoff + 1)
    p = np.abs(_coherent_log_amplitudes(np.sqrt(nbar), n)) ** 2
    return DensityMatrix(1, cutoff, np.diag(p / p.sum()), tail_mass=tail, check_positive=False)


def _split_indices(joint: FockBasis, first: FockBasis, second: FockBasis):
    """Joint indices whose parts fit both factor cutoffs, with factor indices."""
    m1 = first.num_modes
    s1 = joint.states[:, :m1]
    s2 = joint.states[:, m1:]
    keep = np.flatnonzero((s1.sum(axis=1) <= first.cutoff) & (s2.sum(axis=1) <= second.cutoff))
    return keep, first.ranks(s1[keep]), second.ranks(s2[keep])


def tensor(a: State, b: State, cutoff: int | None = None) -> State:
    """Product state of ``a`` (first modes) and ``b`` (last modes).

    The joint cutoff defaults to ``a.cutoff + b.cutoff`` (nothing discarded).  With
    a smaller cutoff the product is re-truncated, renormalised and the discarded
    probability folded into ``tail_mass``.
    """
    if type(a) is not type(b):
        raise TypeError("tensor requires two states of the same kind")
    if cutoff is None:
        cutoff = a.cutoff + b.cutoff
    joint = fock_basis(a.num_modes + b.num_modes, cutoff)
    keep, ia, ib = _split_indices(joint, a.basis, b.basis)
    if isinstance(a, FockVector):
        amps = np.zeros(joint.dim, dtype=complex)
        amps[keep] = a.amplitudes[ia] * b.amplitudes[ib]
        kept = float(np.vdot(amps, amps).real)
        tail = 1 - (1 - a.tail_mass) * (1 - b.tail_mass) * kept
        return FockVector(joint.num_modes, cutoff, amps / np.sqrt(kept), tail_mass=max(tail, 0.0))
    mat = np.zeros((joint.dim, joint.dim), dtype=complex)
    mat[np.ix_(keep, keep)] = a.matrix[np.ix_(ia, ia)] * b.matrix[np.ix_(ib, ib)]
    kept = float(np.trace(mat).real)
    tail = 1 - (1 - a.tail_mass) * (1 - b.tail_mass) * kept
    return DensityMatrix(joint.num_modes, cutoff, mat / kept, tail_mass=max(tail, 0.0),
                         check_positive=False)


def partial_trace(rho: State, keep: Iterable[int]) -> DensityMatrix:
    """Reduced state on the modes in ``keep`` (returned in ascending mode order)."""
    keep = sorted(set(int(k) for k in keep))
    if not keep:
        raise ValueError("keep must name at least one mode")
    for k in keep:
        rho.basis.check_mode(k)
    traced = [m for m in range(rho.num_modes) if m not in keep]
    if not traced:
        return rho.to_density()
    basis = rho.basis
    kept_basis = fock_basis(len(keep), rho.cutoff)
    kept_idx = kept_basis.ranks(basis.states[:, keep])
    env_basis = fock_basis(len(traced), rho.cutoff)
    env_idx = env_basis.ranks(basis.states[:, traced])
    out = np.zeros((kept_basis.dim, kept_basis.dim), dtype=complex)
    order = np.argsort(env_idx, kind="stable")
    bounds = np.flatnonzero(np.diff(env_idx[order])) + 1
    if isinstance(rho, FockVector):
        psi = rho.amplitudes
        for group in np.split(order, bounds):
            v = np.zeros(kept_basis.dim, dtype=complex)
            v[kept_idx[group]] = psi[group]
            out += np.outer(v, v.conj())
    else:
        mat = rho.matrix
        for group in np.split(order, bounds):
            k = kept_idx[group]
            out[np.ix_(k, k)] += mat[np.ix_(group, group)]
    return DensityMatrix(len(keep), rho.cutoff, out, tail_mass=rho.tail_mass)


def expectation(state: State, observable) -> complex:
    """``Tr(rho O)`` or ``<psi|O|psi>`` for dense or sparse ``O``."""
    d = state.basis.dim
    if observable.shape != (d, d):
        raise ValueError(f"observable shape {observable.shape} does not match dimension {d}")
    if isinstance(state, FockVector):
        psi = state.amplitudes
        return complex(np.vdot(psi, observable @ psi))
    if sp.issparse(observable):
        return complex(observable.multiply(state.matrix.T).sum())
    return complex(np.einsum("ij,ji->", state.matrix, observable))


def random_density_matrix(num_modes: int, cutoff: int, rng: np.random.Generator,
                          rank: int | None = None) -> DensityMatrix:
    """Ginibre-ensemble random state, used by property tests and the theorem checks."""
    d = fock_basis(num_modes, cutoff).dim
    rank = d if rank is None else rank
    g = rng.normal(size=(d, rank)) + 1j * rng.normal(size=(d, rank))
    mat = g @ g.conj().T
    mat = 0.5 * (mat + mat.conj().T)
    return DensityMatrix(num_modes, cutoff, mat / np.trace(mat).real)


def random_fock_vector(num_modes: int, cutoff: int, rng: np.random.Generator) -> FockVector:
    d = fock_basis(num_modes, cutoff).dim
    v = rng.normal(size=d) + 1j * rng.normal(size=d)
    return FockVector(num_modes, cutoff, v, normalize=True)


# --- serialisation -------------------------------------------------------

def state_to_dict(state: State, threshold: float = 1e-15) -> dict:
    """Versioned JSON-ready form; entries with modulus below ``threshold`` are omitted.

    Vector entries carry ``occupations``; density entries carry ``occupations``
    as a ``[row, column]`` pair of tuples.
    """
    states = state.basis.states
    entries = []
    if isinstance(state, FockVector):
        for i in np.flatnonzero(np.abs(state.amplitudes) >= threshold):
            z = state.amplitudes[i]
            entries.append({"occupations": states[i].tolist(), "re": float(z.real), "im": float(z.imag)})
    else:
        rows, cols = np.nonzero(np.abs(state.matrix) >= threshold)
        for i, j in zip(rows, cols):
            z = state.matrix[i, j]
            entries.append({"occupations": [states[i].tolist(), states[j].tolist()],
                            "re": float(z.real), "im": float(z.imag)})
    return {
        "version": JSON_SCHEMA_VERSION,
        "num_modes": state.num_modes,
        "cutoff": state.cutoff,
        "kind": state.kind,
        "tail_mass": state.tail_mass,
        "entries": entries,
    }


def state_from_dict(data: dict) -> State:
    if data.get("version") != JSON_SCHEMA_VERSION:
        raise ValueError(f"unsupported state schema version {data.get('version')!r}")
    basis = fock_basis(int(data["num_modes"]), int(data["cutoff"]))
    tail = float(data.get("tail_mass", 0.0))
    if data["kind"] == "vector":
        amps = np.zeros(basis.dim, dtype=complex)
        for e in data["entries"]:
            amps[basis.index(e["occupations"])] = complex(e["re"], e["im"])
        return FockVector(basis.num_modes, basis.cutoff, amps, tail_mass=tail, normalize=True)
    if data["kind"] == "density":
        mat = np.zeros((basis.dim, basis.dim), dtype=complex)
        for e in data["entries"]:
            row, col = e["occupations"]
            mat[basis.index(row), basis.index(col)] = complex(e["re"], e["im"])
        return DensityMatrix(basis.num_modes, basis.cutoff, mat, tail_mass=tail)
    raise ValueError(f"unknown state kind {data['kind']!r}")


def dumps(state: State) -> str:
    return json.dumps(state_to_dict(state), sort_keys=True)


def loads(text: str) -> State:
    return state_from_dict(json.loads(text))
