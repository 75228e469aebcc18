"""Internal-state Markov chain: validation, equilibrium and class structure.

States are indexed from 0 throughout the Python API.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.sparse.csgraph import connected_components

from .errors import (
    InvalidDistribution,
    InvalidMatrix,
    NoReachableBlock,
    NotIrreducible,
)

STOCHASTIC_TOL = 1e-12
REACHABLE_TOL = 1e-12


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class TransitionMatrix:
    """Row-stochastic matrix; ``entries[i, j]`` is the probability of i -> j."""

    entries: np.ndarray

    def __post_init__(self):
        m = np.array(self.entries, dtype=float)
        if m.ndim != 2 or m.shape[0] != m.shape[1] or m.shape[0] < 1:
            raise InvalidMatrix(f"transition matrix must be square and non-empty, got shape {m.shape}")
        if not np.all(np.isfinite(m)):
            raise InvalidMatrix("transition matrix has non-finite entries")
        if np.any(m < 0):
            raise InvalidMatrix("transition matrix has negative entries")
        sums = m.sum(axis=1)
        bad = np.flatnonzero(np.abs(sums - 1.0) > STOCHASTIC_TOL)
        if bad.size:
            i = int(bad[0])
            raise InvalidMatrix(f"row sum of row {i} is {sums[i]!r}, expected 1")
        m = m / sums[:, None]
        object.__setattr__(self, "entries", _frozen(m))

    @property
    def n_states(self) -> int:
        return self.entries.shape[0]

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.entries, dtype=dtype)

    @property
    def is_irreducible(self) -> bool:
        n_comp, _ = connected_components(self.entries > 0, directed=True, connection="strong")
        return n_comp == 1


@dataclass(frozen=True)
class StateDistribution:
    """Probability vector over internal states."""

    weights: np.ndarray

    def __post_init__(self):
        w = np.array(self.weights, dtype=float)
        if w.ndim != 1 or w.size < 1:
            raise InvalidDistribution("state distribution must be a non-empty vector")
        if not np.all(np.isfinite(w)) or np.any(w < 0):
            raise InvalidDistribution("state distribution has negative or non-finite weights")
        total = w.sum()
        if abs(total - 1.0) > STOCHASTIC_TOL:
            raise InvalidDistribution(f"state distribution sums to {total!r}, expected 1")
        object.__setattr__(self, "weights", _frozen(w / total))

    @property
    def n_states(self) -> int:
        return self.weights.size

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.weights, dtype=dtype)


def as_matrix(m) -> TransitionMatrix:
    return m if isinstance(m, TransitionMatrix) else TransitionMatrix(m)


def as_distribution(p) -> StateDistribution:
    return p if isinstance(p, StateDistribution) else StateDistribution(p)


def _stationary(p: np.ndarray) -> np.ndarray:
    # (P^T - I) pi = 0 with sum(pi) = 1 appended; least squares handles the extra row.
    n = p.shape[0]
    a = np.vstack([p.T - np.eye(n), np.ones((1, n))])
    b = np.zeros(n + 1)
    b[-1] = 1.0
    pi, *_ = np.linalg.lstsq(a, b, rcond=None)
    pi = np.clip(pi, 0.0, None)
    return pi / pi.sum()


def equilibrium(m) -> StateDistribution:
    """Stationary distribution of an irreducible chain.

    Solved as a linear system rather than by power iteration, so periodic
    chains such as ``[[0, 1], [1, 0]]`` are handled.
    """
    m = as_matrix(m)
    if not m.is_irreducible:
        raise NotIrreducible("equilibrium requires an irreducible transition matrix")
    return StateDistribution(_stationary(m.entries))


@dataclass(frozen=True)
class ChainStructure:
    """Closed communicating classes of a chain plus reachability from an initial law.

    ``blocks`` lists the closed classes (sorted state indices); states that
    belong to no closed class are listed in ``transient``.  ``effective_init``
    is ``init @ M**(N-1)``, which decides reachability, while ``block_mass``
    holds the exact long-run absorption probability of each block.
    """

    blocks: tuple[tuple[int, ...], ...]
    transient: tuple[int, ...]
    effective_init: np.ndarray
    block_mass: np.ndarray
    reachable: tuple[bool, ...]
    per_block_equilibrium: tuple[np.ndarray, ...] = field(repr=False)

    @property
    def reachable_blocks(self) -> tuple[tuple[int, ...], ...]:
        return tuple(b for b, r in zip(self.blocks, self.reachable) if r)

    @property
    def is_irreducible(self) -> bool:
        return len(self.blocks) == 1 and not self.transient

    @property
    def is_block_diagonal(self) -> bool:
        return not self.transient


def closed_classes(m) -> tuple[list[tuple[int, ...]], list[int]]:
    """Split states into closed strongly connected classes and transient states."""
    p = as_matrix(m).entries
    adj = p > 0
    n_comp, labels = connected_components(adj, directed=True, connection="strong")
    blocks, transient = [], []
    for c in range(n_comp):
        members = np.flatnonzero(labels == c)
        leaks = adj[np.ix_(members, np.flatnonzero(labels != c))].any()
        if leaks:
            transient.extend(int(i) for i in members)
        else:
            blocks.append(tuple(int(i) for i in members))
    blocks.sort()
    transient.sort()
    return blocks, transient


def _absorbed_mass(p: np.ndarray, tr: np.ndarray, blocks, w0: np.ndarray) -> np.ndarray:
    """Mass that transient states with weights ``w0`` deliver to each closed class.

    Transient states are eliminated one at a time with subtraction-free updates
    (Grassmann-Taksar-Heyman style), so nearly closed transient cycles whose
    leak is far below machine precision are still resolved.  The last row is a
    virtual start state carrying ``w0``.
    """
    nt = tr.size
    w = np.zeros((nt + 1, nt + len(blocks)))
    w[:nt, :nt] = p[np.ix_(tr, tr)]
    for j, b in enumerate(blocks):
        w[:nt, nt + j] = p[np.ix_(tr, list(b))].sum(axis=1)
    w[nt, :nt] = w0
    for k in range(nt):
        out = w[k, k + 1:].sum()
        if out == 0.0:
            continue
        rows = np.flatnonzero(w[:, k] > 0)
        rows = rows[rows > k]
        w[np.ix_(rows, np.arange(k + 1, w.shape[1]))] += np.outer(w[rows, k], w[k, k + 1:] / out)
        w[rows, k] = 0.0
    got = w[nt, nt:]
    total = got.sum()
    return got * (w0.sum() / total) if total > 0 else got


def decompose(m, init) -> ChainStructure:
    m = as_matrix(m)
    init = as_distribution(init)
    if init.n_states != m.n_states:
        raise InvalidDistribution(
            f"initial distribution has {init.n_states} states, matrix has {m.n_states}")
    p = m.entries
    n = m.n_states
    blocks, transient = closed_classes(m)

    eff = init.weights @ np.linalg.matrix_power(p, n - 1)
    reachable = tuple(bool(eff[list(b)].sum() > REACHABLE_TOL) for b in blocks)

    mass = np.array([init.weights[list(b)].sum() for b in blocks])
    if transient:
        tr = np.array(transient)
        mass += _absorbed_mass(p, tr, blocks, init.weights[tr])

    eqs = tuple(_stationary(p[np.ix_(b, b)]) for b in blocks)
    return ChainStructure(
        blocks=tuple(blocks),
        transient=tuple(transient),
        effective_init=_frozen(eff),
        block_mass=_frozen(mass),
        reachable=reachable,
        per_block_equilibrium=tuple(_frozen(e) for e in eqs),
    )


def msd_exponent(structure: ChainStructure, alphas: Sequence[float]) -> float:
    """Leading MSD exponent: max over reachable blocks of the block's smallest alpha."""
    alphas = np.asarray(alphas, dtype=float)
    n = sum(len(b) for b in structure.blocks) + len(structure.transient)
    if alphas.shape != (n,):
        raise ValueError(f"expected {n} exponents, got shape {alphas.shape}")
    if np.any((alphas <= 0) | (alphas >= 1)):
        raise ValueError("exponents must lie in (0, 1)")
    mins = [alphas[list(b)].min() for b in structure.reachable_blocks]
    if not mins:
        raise NoReachableBlock("initial distribution reaches no closed class")
    return float(max(mins))
