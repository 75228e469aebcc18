"""Built-in verification suites run by ``fcpsim selftest``."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import block_diag

from .chain import decompose, equilibrium, msd_exponent
from .transforms import LaplaceField, invert_laplace

THREE_BLOCKS = (
    [[1 / 2, 1 / 2], [1 / 2, 1 / 2]],
    [[1 / 3, 2 / 3], [2 / 3, 1 / 3]],
    [[1 / 4, 3 / 4], [1 / 2, 1 / 2]],
)
THREE_BLOCK_ALPHAS = (0.2, 0.3, 0.4, 0.5, 0.6, 0.8)


@dataclass(frozen=True)
class Check:
    name: str
    passed: bool
    detail: str


def levy_smirnov_pdf(t):
    t = np.asarray(t, dtype=float)
    return t ** -1.5 * np.exp(-1.0 / (4.0 * t)) / (2.0 * math.sqrt(math.pi))


KNOWN_PAIRS = (
    ("1/s -> 1", lambda s: 1.0 / s, lambda t: np.ones_like(t)),
    ("1/s^2 -> t", lambda s: 1.0 / s ** 2, lambda t: t),
    ("exp(-sqrt(s)) -> Levy-Smirnov", lambda s: np.exp(-np.sqrt(s)), levy_smirnov_pdf),
)


def talbot_suite(node_counts=(24, 32, 48, 64), rtol=1e-6) -> list[Check]:
    t = np.logspace(-1, 2, 31)
    checks = []
    for name, F, f in KNOWN_PAIRS:
        for n in node_counts:
            got = invert_laplace(LaplaceField(F, vectorized=True), t, n)
            err = float(np.max(np.abs(got / f(t) - 1.0)))
            checks.append(Check(f"talbot {name} N={n}", err < rtol, f"max rel err {err:.2e}"))
    return checks


def chain_suite(seed: int = 0) -> list[Check]:
    checks = []
    rng = np.random.default_rng(seed)
    mats = [np.array([[0.0, 1.0], [1.0, 0.0]]), *map(np.array, THREE_BLOCKS)]
    for _ in range(20):
        n = int(rng.integers(2, 8))
        m = rng.random((n, n)) * (rng.random((n, n)) < 0.6) + np.eye(n, k=1) + np.eye(n, k=1 - n)
        mats.append(m / m.sum(axis=1, keepdims=True))
    worst = 0.0
    for m in mats:
        pi = equilibrium(m).weights
        worst = max(worst, float(np.max(np.abs(pi @ m - pi))))
    checks.append(Check("equilibrium residual", worst < 1e-10, f"max residual {worst:.2e}"))

    big = block_diag(*THREE_BLOCKS)
    ok = True
    for _ in range(10):
        perm = rng.permutation(6)
        init = rng.dirichlet(np.ones(6))
        base = decompose(big, init)
        p = decompose(big[np.ix_(perm, perm)], init[perm])
        mapped = sorted(tuple(sorted(int(perm[i]) for i in b)) for b in p.blocks)
        ok &= mapped == sorted(base.blocks)
    checks.append(Check("decompose permutation equivariance", ok, "10 random permutations"))

    a_star = [msd_exponent(decompose(big, init), THREE_BLOCK_ALPHAS)
              for init in (np.full(6, 1 / 6), [0.25, 0.25, 0.25, 0.25, 0.0, 0.0])]
    checks.append(Check("alpha* for the three-block chain", a_star == [0.6, 0.4], f"got {a_star}"))
    return checks


def run_all() -> list[Check]:
    return talbot_suite() + chain_suite()
