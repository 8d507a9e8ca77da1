"""Nystrom solver for the linear integral equations on the contour.

A measure assigns each node the weight w_k = W_k / (2*pi*i * rho_k * (1 + a_k))
(rho = 1 in the plain variant used by the undeformed equations).  Every
equation here is of the second kind with an analytic kernel, so a dense
solve with the contour quadrature is spectrally accurate.

Kernel argument order is part of each equation and never normalized away:
the magnetization-density type equations convolve K_alpha(lam - mu), the
deformed dressed charge uses the transposed order K_alpha(mu - lam).  The
transposed systems are solved through the weighted unknown s = w * sigma,
which makes the two discrete matrices exact transposes of each other and
the dressed-function trick an identity of the discretization.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .contour import QuadratureGrid
from .errors import (
    MeasureMismatch,
    MeasureSingular,
    NuTooCloseToContour,
    SingularMatrix,
)
from .model import DisorderParam, ModelParams, bare_energy, coth_safe, kernel_K, kernel_K_alpha
from .nlie import AuxSolution

TWO_PI_I = 2j * np.pi

COND_WARN = 1e10


@dataclass(frozen=True)
class MeasureWeights:
    """Per-node weights of dm(lam) = d_lam / (2*pi*i * rho * (1 + a))."""

    grid: QuadratureGrid
    params: ModelParams
    weights: np.ndarray
    variant: str  # "plain" | "deformed"
    rho_backend: str  # "unit" | "finite_N" | "trotter_limit"
    aux: AuxSolution
    rho_values: np.ndarray | None = None

    def total(self, values) -> complex:
        """oint dm(lam) f(lam) for sampled values."""
        return complex(np.sum(self.weights * np.asarray(values)))

    def proximity_floor(self, z: complex) -> float:
        return 3.0 * self.grid.spacing_near(z)


def build_measure(
    grid: QuadratureGrid,
    aux: AuxSolution,
    rho_values=None,
    variant: str = "plain",
    rho_backend: str = "unit",
) -> MeasureWeights:
    """Node weights for either measure variant.

    rho_values must be supplied (sampled on the grid nodes) for the deformed
    variant; MeasureSingular fires if 1 + a comes within 1e-6 of zero at a
    node, which means a Bethe root sits too close to the contour.
    """
    if aux.grid is not grid:
        raise MeasureMismatch("auxiliary solution lives on a different grid")
    one_plus_a = np.exp(aux.log_one_plus_a)
    if np.min(np.abs(one_plus_a)) < 1e-6:
        raise MeasureSingular("|1 + a| < 1e-6 at a node; contour too close to a root")
    if variant == "plain":
        rho = np.ones(grid.size, dtype=complex)
        rho_backend = "unit"
    elif variant == "deformed":
        if rho_values is None:
            raise ValueError("deformed measure needs rho values on the nodes")
        rho = np.asarray(rho_values, dtype=complex)
    else:
        raise ValueError(f"unknown measure variant {variant!r}")
    w = grid.weights / (TWO_PI_I * rho * one_plus_a)
    return MeasureWeights(
        grid=grid,
        params=aux.params,
        weights=w,
        variant=variant,
        rho_backend=rho_backend,
        aux=aux,
        rho_values=None if variant == "plain" else rho,
    )


@dataclass
class NystromOperator:
    """Dense discretization of x(lam) = p(lam) + oint dm(mu) kernel(lam, mu) x(mu).

    matrix[k, l] = kernel(node_k, node_l) * w_l.  The LU factorization is
    cached and shared across right-hand sides; solve_transposed handles the
    equations with reversed kernel argument order through the weighted
    unknown, so its system matrix is exactly matrix.T.
    """

    measure: MeasureWeights
    matrix: np.ndarray
    _lu: tuple = field(repr=False, default=None)
    _lu_t: tuple = field(repr=False, default=None)
    cond_estimate: float = np.nan
    ill_conditioned: bool = False

    @classmethod
    def build(cls, measure: MeasureWeights, kernel) -> "NystromOperator":
        nodes = measure.grid.nodes
        M = kernel(nodes[:, None], nodes[None, :])
        A = M * measure.weights[None, :]
        system = np.eye(A.shape[0], dtype=complex) - A
        anorm = float(np.max(np.sum(np.abs(system), axis=0)))
        try:
            lu = sla.lu_factor(system)
        except (sla.LinAlgError, ValueError) as exc:
            raise SingularMatrix(str(exc)) from exc
        if not np.all(np.isfinite(lu[0])):
            raise SingularMatrix("LU factorization produced non-finite entries")
        rcond, info = sla.lapack.zgecon(lu[0], anorm)
        cond = np.inf if rcond == 0 else 1.0 / float(rcond)
        op = cls(measure=measure, matrix=A, _lu=lu, cond_estimate=cond)
        if cond > COND_WARN:
            op.ill_conditioned = True
            warnings.warn(
                f"Nystrom system condition estimate {cond:.2e} above {COND_WARN:.0e}",
                stacklevel=2,
            )
        return op

    def solve(self, driving) -> np.ndarray:
        """x = driving + A x."""
        x = sla.lu_solve(self._lu, np.asarray(driving, dtype=complex))
        if not np.all(np.isfinite(x)):
            raise SingularMatrix("solution contains non-finite entries")
        return x

    def solve_transposed(self, driving) -> np.ndarray:
        """x = driving + oint dm(mu) x(mu) kernel(mu, lam): the adjoint layout.

        Solved as (I - A^T) s = w * driving with s = w * x; the system matrix
        is the exact transpose of `matrix`'s system.
        """
        if self._lu_t is None:
            system_t = np.eye(self.matrix.shape[0], dtype=complex) - self.matrix.T
            self._lu_t = sla.lu_factor(system_t)
        w = self.measure.weights
        s = sla.lu_solve(self._lu_t, w * np.asarray(driving, dtype=complex))
        return s / w

    def residual(self, x, driving, transposed: bool = False) -> float:
        if transposed:
            a_x = (self.measure.weights * x) @ self.matrix / self.measure.weights
        else:
            a_x = self.matrix @ x
        return float(np.max(np.abs(x - np.asarray(driving) - a_x)))


def nystrom_solve(m: MeasureWeights, kernel, driving, transposed: bool = False):
    """One-shot dense solve; returns (values, operator) so callers can reuse the LU."""
    op = NystromOperator.build(m, kernel)
    driving = np.asarray(driving, dtype=complex)
    x = op.solve_transposed(driving) if transposed else op.solve(driving)
    return x, op


@dataclass(frozen=True)
class DressedCharge:
    """Solution of a dressed-charge equation with its natural evaluator."""

    measure: MeasureWeights
    values: np.ndarray
    alpha: DisorderParam | None
    variant: str

    def __call__(self, lam):
        m, p = self.measure, self.measure.params
        lam = np.asarray(lam, dtype=complex)
        if self.variant == "deformed":
            ker = kernel_K_alpha(m.grid.nodes - lam[..., None], self.alpha, p)
        else:
            ker = kernel_K(lam[..., None] - m.grid.nodes, p)
        out = 1.0 + ker @ (m.weights * self.values)
        return complex(out) if out.shape == () else out

    def residual(self) -> float:
        return float(np.max(np.abs(self(self.measure.grid.nodes) - self.values)))


@dataclass(frozen=True)
class GSolution:
    """Solution of a magnetization-density equation with its natural evaluator."""

    measure: MeasureWeights
    values: np.ndarray
    alpha: DisorderParam | None
    variant: str  # "deformed" | "plain"
    nu: complex | None = None
    rho_nu: complex | None = None
    driving: object = field(default=None, repr=False)

    def __call__(self, lam):
        m, p = self.measure, self.measure.params
        lam = np.asarray(lam, dtype=complex)
        if self.variant == "deformed":
            ker = kernel_K_alpha(lam[..., None] - m.grid.nodes, self.alpha, p)
        else:
            ker = kernel_K(lam[..., None] - m.grid.nodes, p)
        out = self.driving(lam) + ker @ (m.weights * self.values)
        return complex(out) if out.shape == () else out

    def residual(self) -> float:
        return float(np.max(np.abs(self(self.measure.grid.nodes) - self.values)))


def deformed_operator(m: MeasureWeights, alpha: DisorderParam) -> NystromOperator:
    """Shared discretization of the K_alpha(lam - mu) convolution; its
    transpose drives the dressed-charge equation."""
    if m.variant != "deformed":
        raise MeasureMismatch("deformed operator needs the deformed measure")
    p = m.params
    return NystromOperator.build(m, lambda zr, zc: kernel_K_alpha(zr - zc, alpha, p))


def plain_operator(m: MeasureWeights) -> NystromOperator:
    if m.variant != "plain":
        raise MeasureMismatch("plain operator needs the plain measure")
    p = m.params
    return NystromOperator.build(m, lambda zr, zc: kernel_K(zr - zc, p))


def solve_sigma_alpha(
    m: MeasureWeights, alpha: DisorderParam, op: NystromOperator | None = None
) -> DressedCharge:
    """sigma(lam) = 1 + oint dm(mu) sigma(mu) K_alpha(mu - lam): note the
    transposed kernel order."""
    op = op or deformed_operator(m, alpha)
    ones = np.ones(m.grid.size, dtype=complex)
    return DressedCharge(measure=m, values=op.solve_transposed(ones), alpha=alpha, variant="deformed")


def solve_sigma_plain(m: MeasureWeights, op: NystromOperator | None = None) -> DressedCharge:
    """sigma(lam) = 1 + oint dmu/(2 pi i) K(lam - mu) sigma(mu)/(1 + a(mu))."""
    op = op or plain_operator(m)
    ones = np.ones(m.grid.size, dtype=complex)
    return DressedCharge(measure=m, values=op.solve(ones), alpha=None, variant="plain")


def _check_nu(m: MeasureWeights, nu: complex):
    c = m.grid.contour
    if not c.contains(nu):
        raise NuTooCloseToContour(f"nu = {nu} is not strictly inside the work contour")
    if m.grid.min_distance(nu) < m.proximity_floor(nu):
        raise NuTooCloseToContour(
            f"nu = {nu} within 3 node spacings of the contour; refine the grid locally"
        )


def g_driving(m: MeasureWeights, nu: complex, alpha: DisorderParam, rho_nu: complex):
    p = m.params
    qa = p.q_pow(alpha.alpha)

    def drive(lam):
        lam = np.asarray(lam, dtype=complex)
        return coth_safe(lam - nu - p.eta) / qa - rho_nu * coth_safe(lam - nu)

    return drive


def solve_G(
    m: MeasureWeights,
    nu: complex,
    alpha: DisorderParam,
    rho_nu: complex,
    op: NystromOperator | None = None,
) -> GSolution:
    """G(lam, nu) = q^(-a) coth(lam-nu-eta) - rho(nu) coth(lam-nu)
                    + oint dm(mu) K_alpha(lam-mu) G(mu, nu),   nu inside."""
    _check_nu(m, nu)
    op = op or deformed_operator(m, alpha)
    drive = g_driving(m, nu, alpha, rho_nu)
    values = op.solve(drive(m.grid.nodes))
    return GSolution(
        measure=m, values=values, alpha=alpha, variant="deformed", nu=nu, rho_nu=rho_nu, driving=drive
    )


def solve_G_plain(m: MeasureWeights, op: NystromOperator | None = None) -> GSolution:
    """G(lam) = e(-lam) + oint dmu/(2 pi i) K(lam - mu) G(mu)/(1 + a(mu))."""
    op = op or plain_operator(m)
    p = m.params

    def drive(lam):
        return bare_energy(-np.asarray(lam, dtype=complex), p)

    values = op.solve(drive(m.grid.nodes))
    return GSolution(measure=m, values=values, alpha=None, variant="plain", driving=drive)


def dressed_trick_check(sigma: DressedCharge, G: GSolution, m: MeasureWeights) -> float:
    """Transpose-duality between the two weighted integrals.

    Plain variant:    | oint dm e(-lam) sigma(lam) - oint dm G(lam) |
    Deformed variant: | oint dm G(lam, nu) - oint dm sigma(lam) (q^(-a) coth(lam-nu-eta)
                                                                - rho(nu) coth(lam-nu)) |
    """
    if sigma.measure is not m or G.measure is not m:
        raise MeasureMismatch("sigma and G must be solved on the same measure")
    if sigma.variant != G.variant:
        raise MeasureMismatch("mixed plain/deformed dressed-trick check")
    if G.variant == "plain":
        lhs = m.total(bare_energy(-m.grid.nodes, m.params) * sigma.values)
        rhs = m.total(G.values)
    else:
        lhs = m.total(G.values)
        rhs = m.total(sigma.values * G.driving(m.grid.nodes))
    return float(abs(lhs - rhs))
