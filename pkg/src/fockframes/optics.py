"""Beam splitters, phase shifters and networks acting on truncated Fock space.

Sign convention (used everywhere in the package): a splitter with transmission
``T`` on modes ``(i, j)`` is ``exp(theta (a_j^dag a_i - a_i^dag a_j))`` with
``cos(theta) = sqrt(T)``.  In the Heisenberg picture it sends
``a_i -> sqrt(T) a_i - sqrt(1-T) a_j`` and ``a_j -> sqrt(T) a_j + sqrt(1-T) a_i``,
so for ``T = 1/2`` the output ports are ``c = (a - b)/sqrt(2)`` (on mode ``i``)
and ``d = (a + b)/sqrt(2)`` (on mode ``j``).  On states it sends
``|n, 0> -> sum_m sqrt(binom(n, m) T^m (1-T)^(n-m)) |m, n-m>``.

A phase shifter with angle ``phi`` on mode ``i`` is ``exp(i phi N_i)``.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Union

import numpy as np
import scipy.linalg
import scipy.sparse as sp
from scipy.stats import binom

from .fock import DensityMatrix, FockBasis, FockVector, State, TruncationError, fock_basis

TWO_PI = 2 * math.pi


@dataclass(frozen=True)
class BeamSplitter:
    modes: tuple[int, int]
    T: float

    def __post_init__(self):
        i, j = (int(m) for m in self.modes)
        if i == j:
            raise ValueError("beam splitter needs two distinct modes")
        if not 0.0 <= self.T <= 1.0:
            raise ValueError(f"transmission {self.T} outside [0, 1]")
        object.__setattr__(self, "modes", (i, j))
        object.__setattr__(self, "T", float(self.T))

    def to_dict(self) -> dict:
        return {"type": "bs", "modes": list(self.modes), "T": self.T}


@dataclass(frozen=True)
class PhaseShifter:
    mode: int
    phi: float

    def __post_init__(self):
        object.__setattr__(self, "mode", int(self.mode))
        object.__setattr__(self, "phi", float(self.phi) % TWO_PI)

    @property
    def modes(self) -> tuple[int]:
        return (self.mode,)

    def to_dict(self) -> dict:
        return {"type": "ps", "modes": [self.mode], "phi": self.phi}


Element = Union[BeamSplitter, PhaseShifter]


@dataclass(frozen=True)
class LinearNetwork:
    num_modes: int
    elements: tuple = ()

    def __post_init__(self):
        if self.num_modes < 1:
            raise ValueError("num_modes must be positive")
        elements = tuple(self.elements)
        for el in elements:
            if not isinstance(el, (BeamSplitter, PhaseShifter)):
                raise TypeError(f"not an optical element: {el!r}")
            for m in el.modes:
                if not 0 <= m < self.num_modes:
                    raise ValueError(f"element {el} addresses mode {m} of a {self.num_modes}-mode network")
        object.__setattr__(self, "elements", elements)

    def __len__(self) -> int:
        return len(self.elements)

    def to_dict(self) -> dict:
        return {"num_modes": self.num_modes, "elements": [el.to_dict() for el in self.elements]}


def element_from_dict(data: dict) -> Element:
    kind = data.get("type")
    modes = data.get("modes")
    if kind == "bs":
        if not isinstance(modes, (list, tuple)) or len(modes) != 2:
            raise ValueError("a 'bs' element needs two modes")
        if "T" not in data:
            raise ValueError("a 'bs' element needs a transmission 'T'")
        return BeamSplitter(tuple(modes), float(data["T"]))
    if kind == "ps":
        if isinstance(modes, int):
            modes = [modes]
        if not isinstance(modes, (list, tuple)) or len(modes) != 1:
            raise ValueError("a 'ps' element needs exactly one mode")
        if "phi" not in data:
            raise ValueError("a 'ps' element needs an angle 'phi'")
        return PhaseShifter(int(modes[0]), float(data["phi"]))
    raise ValueError(f"unknown element type {kind!r}")


def network_from_dict(data) -> LinearNetwork:
    """Accept either a bare element list or ``{"num_modes": .., "elements": [..]}``."""
    if isinstance(data, list):
        elements = [element_from_dict(e) for e in data]
        num_modes = 1 + max((m for el in elements for m in el.modes), default=0)
        return LinearNetwork(num_modes, tuple(elements))
    if not isinstance(data, dict) or "elements" not in data:
        raise ValueError("network description must be a list or contain 'elements'")
    elements = [element_from_dict(e) for e in data["elements"]]
    num_modes = data.get("num_modes")
    if num_modes is None:
        num_modes = 1 + max((m for el in elements for m in el.modes), default=0)
    return LinearNetwork(int(num_modes), tuple(elements))


def load_network(path) -> LinearNetwork:
    with open(path) as fh:
        return network_from_dict(json.load(fh))


def canonical_json(network: LinearNetwork) -> str:
    return json.dumps(network.to_dict(), sort_keys=True, indent=2)


# --- Fock-space matrices ---------------------------------------------------

@lru_cache(maxsize=256)
def two_mode_blocks(T: float, max_photons: int) -> tuple[np.ndarray, ...]:
    """Splitter action within each fixed-photon-number sector of two modes.

    ``blocks[n][k, p]`` is the amplitude of ``|k, n-k>`` in the image of
    ``|p, n-p>``.  Each sector generator is a tridiagonal matrix with spectrum
    ``{-n, -n+2, ..., n}``, so the block is assembled from its eigenvectors.
    """
    theta = math.acos(math.sqrt(T))
    blocks = [np.ones((1, 1))]
    for n in range(1, max_photons + 1):
        k = np.arange(n)
        off = -np.sqrt((k + 1.0) * (n - k))
        _, vecs = scipy.linalg.eigh_tridiagonal(np.zeros(n + 1), off)
        lam = np.arange(-n, n + 1, 2)
        # generator i*J is D S D^dag with D = diag(i^k) and S the real matrix above
        phase = 1j ** np.arange(n + 1)
        core = (vecs * np.exp(-1j * theta * lam)) @ vecs.T
        block = (phase[:, None] * core * phase.conj()[None, :]).real
        blocks.append(block)
    return tuple(blocks)


def _beam_splitter_matrix(basis: FockBasis, el: BeamSplitter) -> sp.csr_matrix:
    i, j = el.modes
    states = basis.states
    pair = states[:, i] + states[:, j]
    blocks = two_mode_blocks(el.T, basis.cutoff)
    rows, cols, vals = [], [], []
    for k in range(basis.cutoff + 1):
        src = np.flatnonzero(pair >= k)
        if src.size == 0:
            continue
        tgt = states[src].copy()
        tgt[:, i] = k
        tgt[:, j] = pair[src] - k
        w = np.array([blocks[n][k, p] for n, p in zip(pair[src], states[src, i])])
        nz = w != 0
        rows.append(basis.ranks(tgt[nz]))
        cols.append(src[nz])
        vals.append(w[nz])
    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    vals = np.concatenate(vals).astype(complex)
    return sp.csr_matrix((vals, (rows, cols)), shape=(basis.dim, basis.dim))


@lru_cache(maxsize=512)
def _element_matrix_cached(num_modes: int, cutoff: int, el: Element) -> sp.csr_matrix:
    basis = fock_basis(num_modes, cutoff)
    for m in el.modes:
        basis.check_mode(m)
    if isinstance(el, PhaseShifter):
        return sp.diags(np.exp(1j * el.phi * basis.states[:, el.mode]), format="csr")
    return _beam_splitter_matrix(basis, el)


def element_matrix(el: Element, basis: FockBasis) -> sp.csr_matrix:
    """Sparse unitary of ``el`` on ``basis`` (combinatorial construction)."""
    return _element_matrix_cached(basis.num_modes, basis.cutoff, el)


def generator(el: Element, basis: FockBasis) -> sp.csr_matrix:
    """Anti-Hermitian quadratic generator ``G`` with ``U = exp(G)``."""
    if isinstance(el, PhaseShifter):
        return (1j * el.phi * basis.number(el.mode)).tocsr()
    i, j = el.modes
    theta = math.acos(math.sqrt(el.T))
    hop = basis.creation(j) @ basis.annihilation(i)
    return (theta * (hop - hop.conj().T)).tocsr()


def matrix_exponential_oracle(el: Element, basis: FockBasis) -> np.ndarray:
    """Dense ``exp(G)`` by scaling and squaring; independent check on :func:`element_matrix`."""
    for m in el.modes:
        basis.check_mode(m)
    return scipy.linalg.expm(generator(el, basis).toarray())


def _apply_matrix(state: State, U) -> State:
    if isinstance(state, FockVector):
        return FockVector(state.num_modes, state.cutoff, U @ state.amplitudes,
                          tail_mass=state.tail_mass, normalize=True)
    mat = U @ (U @ state.matrix).conj().T
    mat = 0.5 * (mat + mat.conj().T)
    return DensityMatrix(state.num_modes, state.cutoff, mat, tail_mass=state.tail_mass,
                         check_positive=False)


def apply_element(state: State, el: Element) -> State:
    """Unitary image of ``state`` under one element."""
    return _apply_matrix(state, element_matrix(el, state.basis))


def apply_network(state: State, network: LinearNetwork) -> State:
    """Apply elements in order; the composite unitary is never materialised."""
    if network.num_modes != state.num_modes:
        raise ValueError(f"network has {network.num_modes} modes, state has {state.num_modes}")
    for el in network.elements:
        state = apply_element(state, el)
    return state


def network_matrix(network: LinearNetwork, cutoff: int) -> sp.csr_matrix:
    """Composite sparse unitary; intended for checks on small spaces."""
    basis = fock_basis(network.num_modes, cutoff)
    U = sp.identity(basis.dim, dtype=complex, format="csr")
    for el in network.elements:
        U = (element_matrix(el, basis) @ U).tocsr()
    return U


def split_fock(n: int, T: float, phi: float, cutoff: int) -> FockVector:
    """``sum_m c_m e^{-i phi m} |m>|n-m>`` with ``c_m = sqrt(binom(n,m) T^m (1-T)^(n-m))``.

    This is the image of ``|n>|0>`` under a splitter of transmission ``T``
    followed by a phase shift of ``-phi`` on the first mode.
    """
    if n < 0:
        raise ValueError("n must be non-negative")
    if n > cutoff:
        raise TruncationError(f"n = {n} exceeds cutoff {cutoff}")
    if not 0.0 <= T <= 1.0:
        raise ValueError(f"transmission {T} outside [0, 1]")
    basis = fock_basis(2, cutoff)
    m = np.arange(n + 1)
    amps = np.zeros(basis.dim, dtype=complex)
    idx = basis.ranks(np.column_stack([m, n - m]))
    amps[idx] = np.sqrt(binom.pmf(m, n, T)) * np.exp(-1j * phi * m)
    return FockVector(2, cutoff, amps, normalize=True)


def split_amplitudes(n: int, T: float) -> np.ndarray:
    """The normalised coefficients ``c_m`` for ``m = 0..n``."""
    return np.sqrt(binom.pmf(np.arange(n + 1), n, T))


def is_number_conserving(U, basis: FockBasis, tol: float = 1e-10) -> bool:
    N = basis.total_number()
    comm = U @ N - N @ U
    comm = comm.toarray() if sp.issparse(comm) else comm
    return bool(np.max(np.abs(comm), initial=0.0) < tol)


def unitarity_error(U) -> float:
    U = U.toarray() if sp.issparse(U) else np.asarray(U)
    return float(np.max(np.abs(U.conj().T @ U - np.eye(U.shape[0])), initial=0.0))


def shifted(state: State, mode: int, phi: float) -> State:
    """Convenience: apply ``exp(i phi N_mode)``."""
    return apply_element(state, PhaseShifter(mode, phi))


def identity_network(num_modes: int) -> LinearNetwork:
    return LinearNetwork(num_modes, ())
