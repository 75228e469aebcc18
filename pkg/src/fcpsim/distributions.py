"""Waiting-time and jump-length laws.

Each waiting-time law carries one parameterization shared by its sampler and
its Laplace transform, ``1 - B_alpha * s**alpha + o(s**alpha)`` near ``s = 0``.
The jump law is a centred Gaussian whose characteristic function is
``exp(-sigma**2 k**2)``, i.e. variance ``2 sigma**2``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Literal

import mpmath
import numba as nb
import numpy as np
from scipy import special

from .errors import DomainError, InvalidLaw

STABLE = 0
PARETO = 1
_KIND_CODES = {"stable": STABLE, "pareto": PARETO}


@dataclass(frozen=True)
class WaitingTimeLaw:
    """Heavy-tailed waiting-time law with exponent ``alpha`` in (0, 1).

    ``kind="stable"``: one-sided alpha-stable, Laplace transform exactly
    ``exp(-B_alpha s**alpha)``.  ``kind="pareto"``: density
    ``alpha tau0**alpha / tau**(1+alpha)`` on ``tau >= tau0``, for which
    ``B_alpha = Gamma(1-alpha) tau0**alpha``.
    """

    kind: Literal["stable", "pareto"]
    alpha: float
    B_alpha: float
    tau0: float = 1.0

    def __post_init__(self):
        if self.kind not in _KIND_CODES:
            raise InvalidLaw(f"unknown waiting-time kind {self.kind!r}")
        if not 0.0 < self.alpha < 1.0:
            raise InvalidLaw(f"alpha must lie in (0, 1), got {self.alpha}")
        if not self.B_alpha > 0.0:
            raise InvalidLaw(f"B_alpha must be positive, got {self.B_alpha}")
        if not self.tau0 > 0.0:
            raise InvalidLaw(f"tau0 must be positive, got {self.tau0}")
        if self.kind == "pareto":
            expected = math.gamma(1.0 - self.alpha) * self.tau0 ** self.alpha
            if not math.isclose(self.B_alpha, expected, rel_tol=1e-12):
                raise InvalidLaw("Pareto B_alpha must equal Gamma(1-alpha) * tau0**alpha")

    @classmethod
    def stable(cls, alpha: float, B_alpha: float = 1.0) -> "WaitingTimeLaw":
        return cls("stable", float(alpha), float(B_alpha))

    @classmethod
    def pareto(cls, alpha: float, tau0: float = 1.0) -> "WaitingTimeLaw":
        alpha, tau0 = float(alpha), float(tau0)
        if not (tau0 > 0.0 and 0.0 < alpha < 1.0):
            raise InvalidLaw(f"Pareto law needs tau0 > 0 and alpha in (0, 1), got {tau0}, {alpha}")
        return cls("pareto", alpha, math.gamma(1.0 - alpha) * tau0 ** alpha, tau0)

    @property
    def code(self) -> int:
        return _KIND_CODES[self.kind]

    @property
    def scale(self) -> float:
        """Multiplier applied to the unit-scale variate."""
        if self.kind == "stable":
            return self.B_alpha ** (1.0 / self.alpha)
        return self.tau0


@dataclass(frozen=True)
class JumpLaw:
    sigma: float

    def __post_init__(self):
        if not self.sigma > 0.0:
            raise InvalidLaw(f"sigma must be positive, got {self.sigma}")

    @property
    def std(self) -> float:
        return math.sqrt(2.0) * self.sigma


def diffusion_coefficient(law: WaitingTimeLaw, jump: JumpLaw) -> float:
    """Generalized diffusion coefficient ``K_alpha = sigma**2 / B_alpha``."""
    return jump.sigma ** 2 / law.B_alpha


@nb.njit(nogil=True, cache=True)
def draw_wait(rng, kind, alpha, scale):
    if kind == STABLE:
        # Kanter's representation of the one-sided stable law with
        # Laplace transform exp(-s**alpha).
        u = math.pi * (1.0 - rng.random())
        e = rng.standard_exponential()
        x = (math.sin(alpha * u) / math.sin(u) ** (1.0 / alpha)
             * (math.sin((1.0 - alpha) * u) / e) ** ((1.0 - alpha) / alpha))
        return scale * x
    return scale * (1.0 - rng.random()) ** (-1.0 / alpha)


@nb.njit(nogil=True, cache=True)
def _fill_waits(rng, kind, alpha, scale, out):
    for i in range(out.size):
        out[i] = draw_wait(rng, kind, alpha, scale)


def sample_waiting(law: WaitingTimeLaw, rng: np.random.Generator, size=None):
    """Draw waiting times from ``law`` using the caller's generator."""
    n = 1 if size is None else int(np.prod(size))
    out = np.empty(n)
    _fill_waits(rng, law.code, law.alpha, law.scale, out)
    return float(out[0]) if size is None else out.reshape(size)


def sample_jump(law: JumpLaw, rng: np.random.Generator, size=None):
    return rng.normal(0.0, law.std, size)


def _pareto_laplace_real(alpha: float, z: np.ndarray) -> np.ndarray:
    out = np.ones_like(z)
    pos = z > 0
    zp = z[pos]
    out[pos] = np.exp(-zp) - zp ** alpha * special.gamma(1 - alpha) * special.gammaincc(1 - alpha, zp)
    return out


def _pareto_laplace_complex(alpha: float, z: complex) -> complex:
    if z == 0:
        return 1.0 + 0j
    zm = mpmath.mpc(z)
    val = mpmath.exp(-zm) - zm ** alpha * mpmath.gammainc(1 - alpha, zm)
    return complex(val)


def laplace_wtd(law: WaitingTimeLaw, s, continued: bool = False):
    """Laplace transform of the waiting-time density at ``s``.

    Requires ``Re(s) >= 0`` unless ``continued`` is set, in which case the
    principal-branch analytic continuation is returned (needed on inversion
    contours that enter the left half-plane).
    """
    s_arr = np.asarray(s, dtype=complex)
    if not continued and np.any(s_arr.real < 0):
        raise DomainError("Laplace transform of a waiting-time density needs Re(s) >= 0")
    if law.kind == "stable":
        out = np.exp(-law.B_alpha * s_arr ** law.alpha)
    else:
        z = law.tau0 * s_arr
        if np.all(z.imag == 0) and np.all(z.real >= 0):
            out = _pareto_laplace_real(law.alpha, z.real).astype(complex)
        else:
            out = np.array([_pareto_laplace_complex(law.alpha, complex(v)) for v in z.ravel()])
            out = out.reshape(z.shape)
    return complex(out) if np.ndim(s) == 0 else out


def fourier_jump(law: JumpLaw, k):
    """Characteristic function ``exp(-sigma**2 k**2)`` of the jump law."""
    return np.exp(-(law.sigma * np.asarray(k, dtype=float)) ** 2)
