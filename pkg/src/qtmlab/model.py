"""Physical parameters and the elementary special functions.

Everything downstream (contours, integral equations, Q-functions) is built
from four complex functions: coth, the bare energy e(lambda), the kernel
K(lambda) and its twist-deformed variant K_alpha(lambda).  All of them are
i*pi-periodic and have simple poles on the lattice i*pi*Z shifted by 0 or
-+eta; the contour machinery guarantees quadrature nodes never get near a
pole, and direct evaluations are guarded by a typed error.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import AlphaSingular, PoleProximity

#: points closer than this to a coth pole raise PoleProximity
POLE_FLOOR = 1e-12

#: |q^alpha - q^(-alpha)| below this raises AlphaSingular
ALPHA_FLOOR = 1e-8


@dataclass(frozen=True)
class ModelParams:
    """Parameters of the critical chain and derived constants.

    eta is purely imaginary, eta = i*gamma with 0 < gamma < pi/2.  The twist
    kappa may be supplied directly or derived from the magnetic field h via
    kappa*eta = h/(2T); both h and kappa are stored so thermodynamic formulas
    (using h) and contour formulas (using kappa) stay consistent.
    """

    gamma: float
    J: float
    T: float
    h: float = 0.0
    kappa: complex = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        if not (0.0 < self.gamma < np.pi / 2):
            raise ValueError(f"gamma must lie in (0, pi/2), got {self.gamma}")
        if not (self.T > 0.0):
            raise ValueError(f"temperature must be positive, got {self.T}")
        if self.kappa is None:
            object.__setattr__(self, "kappa", self.h / (2.0 * self.T * self.eta))

    @property
    def eta(self) -> complex:
        return 1j * self.gamma

    @property
    def q(self) -> complex:
        return np.exp(self.eta)

    @property
    def beta(self) -> complex:
        """Trotter coupling 2*J*sinh(eta)/T (purely imaginary for real J)."""
        return 2.0 * self.J * np.sinh(self.eta) / self.T

    @property
    def delta(self) -> float:
        """Anisotropy cosh(eta) = cos(gamma); informational only."""
        return float(np.cos(self.gamma))

    def q_pow(self, x) -> complex:
        """q^x = exp(x*eta) on the branch fixed by eta itself."""
        return np.exp(np.asarray(x) * self.eta)

    def with_field(self, h: float) -> "ModelParams":
        """Same chain at a different magnetic field (kappa re-derived)."""
        return ModelParams(gamma=self.gamma, J=self.J, T=self.T, h=h)

    def with_twist(self, kappa: complex) -> "ModelParams":
        """Same chain with an explicitly supplied twist."""
        return ModelParams(gamma=self.gamma, J=self.J, T=self.T, h=self.h, kappa=kappa)


@dataclass(frozen=True)
class DisorderParam:
    """Twist deformation parameter entering K_alpha and the deformed measure."""

    alpha: complex

    def gap(self, p: ModelParams) -> complex:
        """q^alpha - q^(-alpha); raises if it underflows the configured floor.

        Operations dividing by the gap (closed-form dressed charge, one-point
        identity) degrade as alpha -> 0, so the floor errors out early.
        """
        g = p.q_pow(self.alpha) - p.q_pow(-self.alpha)
        if abs(g) < ALPHA_FLOOR:
            raise AlphaSingular(
                f"|q^a - q^-a| = {abs(g):.3e} below floor {ALPHA_FLOOR:.1e}"
            )
        return g


def _pole_distance(lam):
    """Distance to the nearest pole of coth (the lattice i*pi*k)."""
    lam = np.asarray(lam, dtype=complex)
    k = np.round(np.imag(lam) / np.pi)
    return np.abs(lam - 1j * np.pi * k)


def coth_safe(lam):
    """cosh/sinh, stable for large |Re lam| and guarded near the poles i*pi*k.

    Accepts scalars or arrays.  For |Re lam| > 20 the expansion
    coth = sgn * (1 + 2*w + 2*w^2 + ...) with w = exp(-2*|Re|-adjusted
    argument) avoids overflow of cosh/sinh.
    """
    lam = np.asarray(lam, dtype=complex)
    if np.any(_pole_distance(lam) < POLE_FLOOR):
        raise PoleProximity("coth evaluated within 1e-12 of a pole i*pi*k")
    out = np.empty(lam.shape, dtype=complex)
    big = np.abs(lam.real) > 20.0
    if np.any(~big):
        z = lam[~big]
        out[~big] = np.cosh(z) / np.sinh(z)
    if np.any(big):
        z = lam[big]
        s = np.sign(z.real)
        w = np.exp(-2.0 * s * z)  # |w| <= exp(-40)
        out[big] = s * (1.0 + 2.0 * w / (1.0 - w))
    if out.shape == ():
        return complex(out)
    return out


def bare_energy(lam, p: ModelParams):
    """coth(lam) - coth(lam + eta); simple pole at 0, decays as Re lam -> +-inf."""
    return coth_safe(lam) - coth_safe(np.asarray(lam, dtype=complex) + p.eta)


def kernel_K(lam, p: ModelParams):
    """coth(lam - eta) - coth(lam + eta); even, i*pi-periodic, regular at 0."""
    lam = np.asarray(lam, dtype=complex)
    return coth_safe(lam - p.eta) - coth_safe(lam + p.eta)


def kernel_K_alpha(lam, alpha: DisorderParam, p: ModelParams):
    """q^(-alpha)*coth(lam - eta) - q^alpha*coth(lam + eta).

    Reduces to kernel_K at alpha = 0, and K_alpha(-lam) = K_(-alpha)(lam);
    the deformed kernel is genuinely non-symmetric, so equations using it
    in transposed argument order must keep the order explicit.
    """
    lam = np.asarray(lam, dtype=complex)
    qa = p.q_pow(alpha.alpha)
    return coth_safe(lam - p.eta) / qa - qa * coth_safe(lam + p.eta)
