"""Trajectory generation and ensemble estimators.

Event order within a renewal: the particle waits in its current state, then
jumps, then the internal state transitions.  Paths are piecewise constant,
so the position at time ``t`` is the position after the last event whose
clock is ``<= t``.

Every path ``i`` of an ensemble draws from its own counter-based stream,
``Philox(key=(master_seed, i))``; ensemble outputs are therefore identical
for any worker count, and path ``i`` of an ensemble is exactly
``simulate_path(spec, t, master_seed, index=i)``.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numba as nb
import numpy as np

from .chain import StateDistribution, TransitionMatrix, as_distribution, as_matrix
from .distributions import JumpLaw, WaitingTimeLaw, draw_wait
from .errors import InvalidBarrier, InvalidDistribution

_U64 = 1 << 64


@dataclass(frozen=True)
class ProcessSpec:
    """Full model: chain, initial law, per-state waiting laws, shared jump law."""

    matrix: TransitionMatrix
    init: StateDistribution
    waiting: tuple[WaitingTimeLaw, ...]
    jump: JumpLaw

    def __post_init__(self):
        object.__setattr__(self, "matrix", as_matrix(self.matrix))
        object.__setattr__(self, "init", as_distribution(self.init))
        object.__setattr__(self, "waiting", tuple(self.waiting))
        n = self.matrix.n_states
        if self.init.n_states != n:
            raise InvalidDistribution(f"init has {self.init.n_states} states, matrix has {n}")
        if len(self.waiting) != n:
            raise ValueError(f"need {n} waiting-time laws, got {len(self.waiting)}")

    @classmethod
    def build(cls, matrix, init, alphas: Sequence[float], B_alpha=1.0, sigma: float = 1.0,
              kind: str = "stable") -> "ProcessSpec":
        """Convenience constructor with one law family for all states."""
        alphas = list(alphas)
        bs = np.broadcast_to(np.asarray(B_alpha, dtype=float), (len(alphas),))
        if kind == "stable":
            laws = [WaitingTimeLaw.stable(a, b) for a, b in zip(alphas, bs)]
        elif kind == "pareto":
            # B_alpha fixes tau0 through B = Gamma(1-alpha) tau0**alpha.
            laws = [WaitingTimeLaw.pareto(a, (b / math.gamma(1 - a)) ** (1 / a))
                    for a, b in zip(alphas, bs)]
        else:
            raise ValueError(f"unknown waiting-time kind {kind!r}")
        return cls(TransitionMatrix(matrix), StateDistribution(init), tuple(laws), JumpLaw(sigma))

    @property
    def n_states(self) -> int:
        return self.matrix.n_states

    @property
    def alphas(self) -> np.ndarray:
        return np.array([w.alpha for w in self.waiting])

    @property
    def B_alphas(self) -> np.ndarray:
        return np.array([w.B_alpha for w in self.waiting])

    def _kernel_args(self):
        kinds = np.array([w.code for w in self.waiting], dtype=np.int64)
        scales = np.array([w.scale for w in self.waiting])
        return (kinds, self.alphas, scales, _cdf_rows(self.matrix.entries),
                _cdf_rows(self.init.weights[None, :])[0], self.jump.std)


def _cdf_rows(p: np.ndarray) -> np.ndarray:
    cdf = np.cumsum(p, axis=1)
    for r in range(p.shape[0]):
        last = np.flatnonzero(p[r] > 0)[-1]
        cdf[r, last:] = 1.0
    return np.ascontiguousarray(cdf)


def path_rng(master_seed: int, index: int = 0) -> np.random.Generator:
    """Independent stream for path ``index``: Philox keyed by ``(master_seed, index)``."""
    if not 0 <= master_seed < _U64 or not 0 <= index < _U64:
        raise ValueError("seed and path index must be unsigned 64-bit integers")
    return np.random.Generator(np.random.Philox(key=(int(master_seed) << 64) | int(index)))


@dataclass(frozen=True)
class Trajectory:
    """Renewal events of one path.

    Event ``n`` is a holding interval of length ``waits[n]`` in state
    ``states[n]`` ending with a jump ``jumps[n]`` at ``clock[n]``.  The last
    event is the first one whose clock exceeds the simulated horizon.
    """

    states: np.ndarray
    waits: np.ndarray
    jumps: np.ndarray
    clock: np.ndarray = field(init=False, repr=False)
    position: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "clock", np.cumsum(self.waits))
        object.__setattr__(self, "position", np.cumsum(self.jumps))

    def __len__(self) -> int:
        return self.waits.size

    def n_jumps(self, t):
        return np.searchsorted(self.clock, t, side="right")

    def position_at(self, t):
        n = self.n_jumps(t)
        pos = np.concatenate([[0.0], self.position])
        return pos[n]

    def state_at(self, t):
        return self.states[np.minimum(self.n_jumps(t), len(self) - 1)]


@dataclass(frozen=True)
class EnsembleStats:
    t_grid: np.ndarray
    values: np.ndarray
    stderr: np.ndarray
    n_samples: int


@dataclass(frozen=True)
class FirstPassageResult:
    """Raw first-passage samples; censored paths hold ``inf``."""

    times: np.ndarray
    t_max: float
    barrier: float
    x0: float

    @property
    def n_paths(self) -> int:
        return self.times.size

    @property
    def n_censored(self) -> int:
        return int(np.count_nonzero(~np.isfinite(self.times)))

    def survival(self, t_grid) -> EnsembleStats:
        """Empirical ``Pr{t_f > t}``; valid for ``t <= t_max``."""
        t_grid = np.asarray(t_grid, dtype=float)
        if np.any(t_grid > self.t_max):
            raise ValueError("survival is only observed up to t_max")
        srt = np.sort(self.times)
        p = 1.0 - np.searchsorted(srt, t_grid, side="right") / self.n_paths
        se = np.sqrt(p * (1.0 - p) / self.n_paths)
        return EnsembleStats(t_grid, p, se, self.n_paths)

    def density(self, edges) -> EnsembleStats:
        """Histogram density of crossing times, normalized by all paths.

        Returns values at the geometric bin centres.
        """
        edges = np.asarray(edges, dtype=float)
        if edges[-1] > self.t_max:
            raise ValueError("density bins must end at or before t_max")
        counts, _ = np.histogram(self.times[np.isfinite(self.times)], bins=edges)
        width = np.diff(edges)
        norm = self.n_paths * width
        return EnsembleStats(np.sqrt(edges[:-1] * edges[1:]), counts / norm,
                             np.sqrt(counts) / norm, self.n_paths)


def log_grid(t_min: float, t_max: float, per_decade: int = 40) -> np.ndarray:
    n = int(round(per_decade * math.log10(t_max / t_min))) + 1
    return np.logspace(math.log10(t_min), math.log10(t_max), max(n, 2))


# --- kernels -----------------------------------------------------------------
# All kernels consume a path's stream in the same order: initial state, then
# per renewal (wait, jump, next state), so their outputs agree path by path.

@nb.njit(nogil=True, cache=True)
def _pick(u, cdf):
    for j in range(cdf.size):
        if u < cdf[j]:
            return j
    return cdf.size - 1


@nb.njit(nogil=True, cache=True)
def _events_kernel(rng, kinds, alphas, scales, cdf, init_cdf, jump_std, t_max):
    cap = 64
    states = np.empty(cap, np.int64)
    waits = np.empty(cap)
    jumps = np.empty(cap)
    n = 0
    clock = 0.0
    state = _pick(rng.random(), init_cdf)
    while True:
        if n == cap:
            cap *= 2
            s2 = np.empty(cap, np.int64)
            w2 = np.empty(cap)
            j2 = np.empty(cap)
            s2[:n] = states[:n]
            w2[:n] = waits[:n]
            j2[:n] = jumps[:n]
            states, waits, jumps = s2, w2, j2
        tau = draw_wait(rng, kinds[state], alphas[state], scales[state])
        xi = rng.normal(0.0, jump_std)
        states[n] = state
        waits[n] = tau
        jumps[n] = xi
        n += 1
        clock += tau
        if clock > t_max:
            break
        state = _pick(rng.random(), cdf[state])
    return states[:n].copy(), waits[:n].copy(), jumps[:n].copy()


@nb.njit(nogil=True, cache=True)
def _positions_kernel(rng, kinds, alphas, scales, cdf, init_cdf, jump_std, t_grid, out):
    g = t_grid.size
    j = 0
    x = 0.0
    clock = 0.0
    state = _pick(rng.random(), init_cdf)
    while j < g:
        tau = draw_wait(rng, kinds[state], alphas[state], scales[state])
        xi = rng.normal(0.0, jump_std)
        clock += tau
        while j < g and t_grid[j] < clock:
            out[j] = x
            j += 1
        x += xi
        state = _pick(rng.random(), cdf[state])


@nb.njit(nogil=True, cache=True)
def _fpt_kernel(rng, kinds, alphas, scales, cdf, init_cdf, jump_std, x0, barrier, t_max):
    x = x0
    clock = 0.0
    state = _pick(rng.random(), init_cdf)
    while True:
        tau = draw_wait(rng, kinds[state], alphas[state], scales[state])
        xi = rng.normal(0.0, jump_std)
        clock += tau
        if clock > t_max:
            return np.inf
        x += xi
        if x >= barrier:
            return clock
        state = _pick(rng.random(), cdf[state])


@nb.njit(nogil=True, cache=True)
def _occupation_kernel(rng, kinds, alphas, scales, cdf, init_cdf, jump_std, t, out):
    out[:] = 0.0
    clock = 0.0
    state = _pick(rng.random(), init_cdf)
    while True:
        tau = draw_wait(rng, kinds[state], alphas[state], scales[state])
        rng.normal(0.0, jump_std)
        if clock + tau >= t:
            out[state] += t - clock
            break
        out[state] += tau
        clock += tau
        state = _pick(rng.random(), cdf[state])


@nb.njit(nogil=True, cache=True)
def _states_kernel(rng, kinds, alphas, scales, cdf, init_cdf, jump_std, out):
    state = _pick(rng.random(), init_cdf)
    out[0] = state
    for n in range(1, out.size):
        draw_wait(rng, kinds[state], alphas[state], scales[state])
        rng.normal(0.0, jump_std)
        state = _pick(rng.random(), cdf[state])
        out[n] = state


def default_workers() -> int:
    return os.cpu_count() or 1


def _run_paths(n_paths: int, master_seed: int, workers: int | None,
               body: Callable[[np.random.Generator, int], None]) -> None:
    """Call ``body(rng_i, i)`` for every path; results are written by index."""
    if n_paths < 1:
        raise ValueError("n_paths must be at least 1")
    workers = default_workers() if workers is None else int(workers)
    if workers < 1:
        raise ValueError("workers must be at least 1")

    def run(lo: int, hi: int) -> None:
        for i in range(lo, hi):
            body(path_rng(master_seed, i), i)

    if workers == 1:
        run(0, n_paths)
        return
    bounds = np.linspace(0, n_paths, workers + 1).astype(int)
    with ThreadPoolExecutor(max_workers=workers) as pool:
        futures = [pool.submit(run, lo, hi) for lo, hi in zip(bounds[:-1], bounds[1:]) if hi > lo]
        for f in futures:
            f.result()


# --- public operations ---------------------------------------------------------

def simulate_path(spec: ProcessSpec, t_max: float, seed: int, index: int = 0) -> Trajectory:
    if not t_max > 0:
        raise ValueError("t_max must be positive")
    states, waits, jumps = _events_kernel(path_rng(seed, index), *spec._kernel_args(), float(t_max))
    return Trajectory(states, waits, jumps)


def positions_at(spec: ProcessSpec, t_grid, n_paths: int, master_seed: int,
                 workers: int | None = None) -> np.ndarray:
    """Positions of ``n_paths`` paths at each grid time, shape ``(n_paths, len(t_grid))``."""
    t_grid = np.ascontiguousarray(t_grid, dtype=float)
    if t_grid.ndim != 1 or np.any(np.diff(t_grid) <= 0) or np.any(t_grid <= 0):
        raise ValueError("t_grid must be strictly increasing and positive")
    out = np.empty((n_paths, t_grid.size))
    args = spec._kernel_args()
    _run_paths(n_paths, master_seed, workers,
               lambda rng, i: _positions_kernel(rng, *args, t_grid, out[i]))
    return out


def msd_ensemble(spec: ProcessSpec, t_grid, n_paths: int, master_seed: int,
                 workers: int | None = None) -> EnsembleStats:
    x2 = positions_at(spec, t_grid, n_paths, master_seed, workers) ** 2
    se = x2.std(axis=0, ddof=1) / math.sqrt(n_paths) if n_paths > 1 else np.zeros(x2.shape[1])
    return EnsembleStats(np.asarray(t_grid, dtype=float), x2.mean(axis=0), se, n_paths)


def first_passage_ensemble(spec: ProcessSpec, barrier: float, n_paths: int, t_max: float,
                           master_seed: int, x0: float = 0.0,
                           workers: int | None = None) -> FirstPassageResult:
    """First crossing times of ``x >= barrier`` for paths started at ``x0``."""
    if not x0 < barrier:
        raise InvalidBarrier(f"start position {x0} must lie below the barrier {barrier}")
    out = np.empty(n_paths)
    args = spec._kernel_args()

    def body(rng, i):
        out[i] = _fpt_kernel(rng, *args, float(x0), float(barrier), float(t_max))

    _run_paths(n_paths, master_seed, workers, body)
    return FirstPassageResult(out, float(t_max), float(barrier), float(x0))


def occupation_fractions(spec: ProcessSpec, t: float, n_paths: int, master_seed: int,
                         workers: int | None = None) -> np.ndarray:
    """Fraction of ``[0, t]`` spent in each state, shape ``(n_paths, N)``."""
    if not t > 0:
        raise ValueError("t must be positive")
    out = np.empty((n_paths, spec.n_states))
    args = spec._kernel_args()
    _run_paths(n_paths, master_seed, workers,
               lambda rng, i: _occupation_kernel(rng, *args, float(t), out[i]))
    return out / t


def occupation_fraction_ensemble(spec: ProcessSpec, target_state: int, t: float, n_paths: int,
                                 master_seed: int, workers: int | None = None) -> np.ndarray:
    """Samples of ``t_i / t`` for the 0-based ``target_state``."""
    if not 0 <= target_state < spec.n_states:
        raise ValueError(f"target_state must be in [0, {spec.n_states - 1}]")
    return occupation_fractions(spec, t, n_paths, master_seed, workers)[:, target_state]


def renewal_states(spec: ProcessSpec, n_renewals: int, n_paths: int, master_seed: int,
                   workers: int | None = None) -> np.ndarray:
    """States occupied during the first ``n_renewals + 1`` holding intervals."""
    out = np.empty((n_paths, n_renewals + 1), dtype=np.int64)
    args = spec._kernel_args()
    _run_paths(n_paths, master_seed, workers,
               lambda rng, i: _states_kernel(rng, *args, out[i]))
    return out


def path_functional(spec: ProcessSpec, U: Callable[[float], float], t: float, seed: int,
                    index: int = 0) -> float:
    """``A = int_0^t U(x(tau)) dtau`` along one simulated path."""
    traj = simulate_path(spec, t, seed, index)
    return trajectory_functional(traj, U, t)


def trajectory_functional(traj: Trajectory, U: Callable[[float], float], t: float) -> float:
    # Holding interval n sits at the position reached before jump n.
    starts = np.concatenate([[0.0], traj.clock[:-1]])
    overlap = np.clip(np.minimum(traj.clock, t) - starts, 0.0, None)
    pre_jump = np.concatenate([[0.0], traj.position[:-1]])
    keep = overlap > 0
    return float(sum(U(x) * w for x, w in zip(pre_jump[keep], overlap[keep])))


def state_functional(traj: Trajectory, U: Callable[[int], float], t: float) -> float:
    """``A_s = int_0^t U(i(tau)) dtau`` over the internal-state path."""
    starts = np.concatenate([[0.0], traj.clock[:-1]])
    overlap = np.clip(np.minimum(traj.clock, t) - starts, 0.0, None)
    keep = overlap > 0
    return float(sum(U(int(i)) * w for i, w in zip(traj.states[keep], overlap[keep])))
