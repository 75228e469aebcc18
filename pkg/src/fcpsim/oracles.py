"""Closed-form and asymptotic predictions used to cross-check simulations.

* Fourier-Laplace PDF for irreducible chains and for chains made of several
  closed classes (only reachable classes contribute).
* Leading-order MSD laws.
* First-passage survival/density transforms for the alternating two-state
  chain with unit coefficients, plus the power-law tail.
* Lamperti density of the occupation fraction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .chain import ChainStructure, decompose, equilibrium
from .engine import ProcessSpec
from .errors import BranchError, ContourFailure, DomainError, ExponentOrder, UnsupportedStructure
from .transforms import LaplaceField, invert_laplace, talbot_nodes

_TIE_TOL = 1e-12


def _block_terms(spec: ProcessSpec, s: np.ndarray, structure: ChainStructure):
    """Yield ``(mass, X_b(s))`` per reachable block, ``X_b = <Sigma|Psi_b(s)|eq_b>``."""
    alphas, bs = spec.alphas, spec.B_alphas
    for block, reach, eq, mass in zip(structure.blocks, structure.reachable,
                                      structure.per_block_equilibrium, structure.block_mass):
        if not reach:
            continue
        idx = list(block)
        x = sum(e * b * s ** a for e, b, a in zip(eq, bs[idx], alphas[idx]))
        yield mass, x


def pdf_fourier_laplace(spec: ProcessSpec, k: float, s):
    """Small-s Fourier-Laplace PDF, summed over reachable closed classes.

    Each block contributes ``m_b X_b / (s (X_b + sigma^2 k^2))`` with
    ``X_b = sum_r eps_r B_r s**alpha_r`` and block equilibria normalized to 1.
    """
    structure = decompose(spec.matrix, spec.init)
    if not structure.is_block_diagonal:
        raise UnsupportedStructure(
            "chain has transient states; push them forward to an effective init first")
    s_arr = np.asarray(s, dtype=complex)
    sk2 = (spec.jump.sigma * k) ** 2
    g = sum(m * x / (x + sk2) for m, x in _block_terms(spec, s_arr, structure)) / s_arr
    return complex(g) if np.ndim(s) == 0 else g


def msd_laplace_asymptotic(spec: ProcessSpec, s):
    """``sum_b 2 sigma^2 m_b / (s X_b(s))`` over reachable blocks."""
    structure = decompose(spec.matrix, spec.init)
    s_arr = np.asarray(s, dtype=complex)
    two_sig2 = 2.0 * spec.jump.sigma ** 2
    val = sum(two_sig2 * m / (s_arr * x) for m, x in _block_terms(spec, s_arr, structure))
    return complex(val) if np.ndim(s) == 0 else val


def msd_asymptotic(spec: ProcessSpec, t, n_nodes: int = 32):
    """Leading-order MSD.

    Irreducible chain: ``2 sigma^2 t^a / (Gamma(1+a) sum_tied eps_i B_i)`` with
    ``a`` the smallest exponent.  Otherwise the per-block Laplace expression is
    inverted numerically; it is dominated by ``t**alpha_star``.
    """
    t = np.asarray(t, dtype=float)
    if spec.matrix.is_irreducible:
        eps = equilibrium(spec.matrix).weights
        a = spec.alphas.min()
        tied = np.abs(spec.alphas - a) <= _TIE_TOL
        weight = float(np.sum(eps[tied] * spec.B_alphas[tied]))
        out = 2.0 * spec.jump.sigma ** 2 / (weight * math.gamma(1.0 + a)) * t ** a
        return float(out) if out.ndim == 0 else out
    field = LaplaceField(lambda s: msd_laplace_asymptotic(spec, s), vectorized=True)
    return invert_laplace(field, t, n_nodes)


# --- first passage -----------------------------------------------------------------

@dataclass(frozen=True)
class FptTransformParams:
    """Alternating two-state chain with ``K = B_alpha = 1`` and barrier ``barrier``."""

    alpha1: float
    alpha2: float
    barrier: float

    def __post_init__(self):
        for a in (self.alpha1, self.alpha2):
            if not 0.0 < a < 1.0:
                raise ValueError(f"exponents must lie in (0, 1), got {a}")
        if not self.barrier > 0:
            raise ValueError("barrier must be positive")


def _principal_sqrt(z: np.ndarray, what: str) -> np.ndarray:
    z = np.asarray(z)
    if np.any((z.real < 0) & (np.abs(z.imag) <= 1e-14 * np.abs(z))):
        raise BranchError(f"{what} lies on the negative real axis")
    return np.sqrt(z)


def _continued_sqrt(z: np.ndarray) -> np.ndarray:
    """Square root continued along the ordered path ``z[0], z[1], ...``."""
    r = np.sqrt(z)
    for i in range(1, r.size):
        if abs(r[i] - r[i - 1]) > abs(r[i] + r[i - 1]):
            r[i] = -r[i]
    return r


def _half_sum(u, v, b0):
    # (a0 + b0)(b0 - a0) = 4 (u + v - u v); take whichever factor avoids cancellation.
    a0 = -2.0 + u + v
    direct = a0 + b0
    other = b0 - a0
    with np.errstate(divide="ignore", invalid="ignore"):
        alt = 4.0 * (u + v - u * v) / other
    return 0.5 * np.where(np.abs(direct) >= np.abs(other), direct, alt)


def fpt_rate(p: FptTransformParams, s):
    """``sqrt((a0 + b0) / 2)``, ``a0 = -2 + s^a1 + s^a2``, principal branches.

    ``b0 = sqrt(4 + s^(2 a1) + s^(2 a2) - 2 s^(a1 + a2))``.
    """
    s_arr = np.asarray(s, dtype=complex)
    u, v = s_arr ** p.alpha1, s_arr ** p.alpha2
    b0 = _principal_sqrt(4.0 + (u - v) ** 2, "b0 radicand")
    root = _principal_sqrt(_half_sum(u, v, b0), "(a0 + b0) / 2")
    return complex(root) if np.ndim(s) == 0 else root


def _contour_rate(p: FptTransformParams, s_path: np.ndarray) -> np.ndarray:
    """``fpt_rate`` continued analytically along an ordered path leaving the positive axis."""
    u, v = s_path ** p.alpha1, s_path ** p.alpha2
    b0 = _continued_sqrt(4.0 + (u - v) ** 2)
    return _continued_sqrt(_half_sum(u, v, b0))


def _newton(f, s, iters=60):
    for _ in range(iters):
        val, der = f(s)
        if der == 0 or not np.isfinite(der):
            return None
        step = val / der
        s = s - step
        if not (np.isfinite(s) and s.imag > 0):
            return None
        if abs(step) < 1e-13 * abs(s):
            return s
    return None


def branch_radius(p: FptTransformParams) -> float:
    """Modulus of the nearest off-axis singularity of the first-passage transform.

    Zeros of ``4 + (u - v)^2`` (branch points of ``b0``) and of ``u v - u - v``
    (where one of the two roots ``(a0 +- b0)/2`` vanishes) are located on the
    principal sheet by a polar grid search refined with Newton's method.
    """
    a1, a2 = p.alpha1, p.alpha2

    def rad(s):
        u, v = s ** a1, s ** a2
        return (u - v) ** 2 + 4.0, 2.0 * (u - v) * (a1 * u - a2 * v) / s

    def prod(s):
        u, v = s ** a1, s ** a2
        return u * v - u - v, ((a1 + a2) * u * v - a1 * u - a2 * v) / s

    def lambda_plus_vanishes(root):
        # Continue (a0 + b0)/2 from the positive axis out to |root|, then round the arc.
        path = np.concatenate([abs(root) * np.linspace(1e-3, 1.0, 400),
                               abs(root) * np.exp(1j * np.linspace(0.0, np.angle(root), 800))])
        u, v = path ** a1, path ** a2
        lam = _half_sum(u, v, _continued_sqrt(4.0 + (u - v) ** 2))
        return abs(lam[-1]) < 1e-6 * (1.0 + abs(u[-1]) + abs(v[-1]))

    r = np.logspace(-3, 4, 141)
    phi = np.linspace(0.02, np.pi - 0.02, 80)
    grid = r[:, None] * np.exp(1j * phi[None, :])
    best = np.inf
    for f in (rad, prod):
        vals = np.abs(f(grid)[0])
        scale = 1.0 + np.abs(grid ** a1) ** 2 + np.abs(grid ** a2) ** 2
        for i, j in zip(*np.nonzero(vals / scale < 0.2)):
            root = _newton(f, complex(grid[i, j]))
            if root is None or abs(root) < 1e-8 or abs(root) >= best:
                continue
            if abs(f(root)[0]) > 1e-9 * (1.0 + abs(root ** a1) ** 2 + abs(root ** a2) ** 2):
                continue
            if np.angle(root) < 1e-6:
                continue    # the positive axis is covered by the principal branch
            if f is prod and not lambda_plus_vanishes(root):
                continue
            best = abs(root)
    return float(best)


def valid_inversion_time(p: FptTransformParams, n_nodes: int = 32, margin: float = 0.8) -> float:
    """Smallest ``t`` whose inversion contour stays within ``margin`` of the branch radius.

    Below it the contour passes near singularities of the transform and the
    inversion is not meaningful.
    """
    rho = branch_radius(p)
    if not np.isfinite(rho):
        return 0.0
    s, _ = talbot_nodes(1.0, n_nodes)
    return float(np.abs(s).max() / (margin * rho))


def _invert_on_contour(p: FptTransformParams, t, n_nodes: int, survival: bool):
    t_arr = np.atleast_1d(np.asarray(t, dtype=float))
    t_min = valid_inversion_time(p, n_nodes)
    if np.any(t_arr < t_min):
        raise BranchError(
            f"inversion contour reaches the transform's off-axis branch points for t < {t_min:.4g}")
    out = np.empty(t_arr.size)
    for i, ti in enumerate(t_arr):
        s, w = talbot_nodes(ti, n_nodes)
        dens = np.exp(-_contour_rate(p, s) * p.barrier)
        vals = (1.0 - dens) / s if survival else dens
        if not np.all(np.isfinite(vals)):
            raise ContourFailure(f"non-finite transform values on the contour at t={ti}")
        out[i] = np.sum((w * vals).imag)
    return float(out[0]) if np.ndim(t) == 0 else out.reshape(np.shape(t))


def fpt_density_laplace(p: FptTransformParams, s):
    """``exp(-sqrt((a0+b0)/2) B)``, transform of the first-passage density."""
    return np.exp(-fpt_rate(p, s) * p.barrier)


def fpt_survival_laplace(p: FptTransformParams, s):
    """``(1/s) [1 - exp(-sqrt((a0+b0)/2) B)]``, transform of ``Pr{t_f > t}``."""
    s_c = np.asarray(s, dtype=complex)
    return -np.expm1(-fpt_rate(p, s) * p.barrier) / s_c


def fpt_pdf_numeric(p: FptTransformParams, t, n_nodes: int = 32):
    return _invert_on_contour(p, t, n_nodes, survival=False)


def fpt_survival_numeric(p: FptTransformParams, t, n_nodes: int = 32):
    return _invert_on_contour(p, t, n_nodes, survival=True)


def fpt_tail(p: FptTransformParams, t):
    """``B t^(-a2/2 - 1) / (sqrt(2) |Gamma(-a2/2)|)``, valid for ``a1 > a2``."""
    if not p.alpha1 > p.alpha2:
        raise ExponentOrder("tail law needs alpha1 > alpha2")
    a = p.alpha2 / 2.0
    return p.barrier * np.asarray(t, dtype=float) ** (-a - 1.0) / (math.sqrt(2.0) * abs(math.gamma(-a)))


# --- occupation time -------------------------------------------------------------------

@dataclass(frozen=True)
class LampertiParams:
    alpha: float
    eps1: float
    eps_rest: float

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise ValueError("alpha must lie in (0, 1)")
        if not (self.eps1 > 0 and self.eps_rest > 0):
            raise ValueError("equilibrium weights must be positive")


def lamperti_pdf(p: LampertiParams, x):
    """Limit density of the occupation fraction of the target state."""
    x = np.asarray(x, dtype=float)
    if np.any((x <= 0) | (x >= 1)):
        raise DomainError("Lamperti density is defined on the open interval (0, 1)")
    a, e1, er = p.alpha, p.eps1, p.eps_rest
    xa, ya = x ** a, (1 - x) ** a
    num = e1 * er * (1 - x) ** (a - 1) * x ** (a - 1)
    den = er ** 2 * xa ** 2 + e1 ** 2 * ya ** 2 + 2 * e1 * er * math.cos(math.pi * a) * xa * ya
    out = math.sin(math.pi * a) / math.pi * num / den
    return float(out) if out.ndim == 0 else out


def lamperti_cdf(p: LampertiParams, x):
    """Closed-form CDF of :func:`lamperti_pdf`."""
    x = np.asarray(x, dtype=float)
    a = p.alpha
    with np.errstate(divide="ignore"):
        u = p.eps_rest / p.eps1 * (x / (1 - x)) ** a
    # Under u = (eps_rest/eps1) (x/(1-x))^a the density becomes
    # sin(pi a) / (pi a (u^2 + 2 u cos(pi a) + 1)) du.
    val = (np.arctan((u + math.cos(math.pi * a)) / math.sin(math.pi * a)) / (math.pi * a)
           - (0.5 - a) / a)
    return np.clip(val, 0.0, 1.0)


def occupation_limit(spec: ProcessSpec, target_state: int = 0):
    """Limit law of the occupation fraction of ``target_state`` (irreducible chains).

    Returns ``1.0`` or ``0.0`` for the degenerate point masses, otherwise the
    :class:`LampertiParams` of the non-degenerate law.  Weights are
    ``eps_i B_i`` (visit frequency times tail amplitude), which reduce to the
    equilibrium weights when all ``B_i`` are equal.
    """
    if not spec.matrix.is_irreducible:
        raise UnsupportedStructure("occupation limit laws are implemented for irreducible chains")
    alphas = spec.alphas
    a_min = alphas.min()
    if alphas[target_state] - a_min > _TIE_TOL:
        return 0.0
    tied = np.flatnonzero(np.abs(alphas - a_min) <= _TIE_TOL)
    if tied.size == 1:
        return 1.0
    eps = equilibrium(spec.matrix).weights * spec.B_alphas
    eps = eps / eps.sum()
    rest = sum(eps[i] for i in tied if i != target_state)
    return LampertiParams(float(a_min), float(eps[target_state]), float(rest))
