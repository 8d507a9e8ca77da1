"""Two-parameter weighted integrals of the magnetization density and their
analytic continuations.

Psi(nu1, nu2) pairs the solved density G(., nu2) with a coth weight carrying
nu1.  When a spectral parameter leaves the work contour, the defining
integral picks up an explicit residue correction: the density re-solve uses
an augmented driving (the kernel term over 1 + a at the exited point), and
the weighted integral subtracts the exited coth-weight pole.  The inside and
outside expressions continue one another analytically across the contour.

rho and the auxiliary function at arbitrary points come from the
finite-Trotter closed forms, which are exact everywhere; the Trotter-limit
integral backend is deliberately not used here (its validity strip away
from the contour is not established, the closed forms need no strip).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .bethe import QFunctionBundle, aux_from_bethe, rho_finite
from .contour import build_grid
from .errors import NuTooCloseToContour, PoleProximity
from .lineq import (
    GSolution,
    MeasureWeights,
    NystromOperator,
    build_measure,
    deformed_operator,
    g_driving,
    solve_G,
)
from .model import DisorderParam, ModelParams, coth_safe


@dataclass(frozen=True)
class PsiEvaluation:
    """Value of the two-parameter integral plus the placement bookkeeping."""

    nu1: complex
    nu2: complex
    value: complex
    placement: tuple  # ("inside"|"outside", "inside"|"outside") for (nu1, nu2)
    kappa: complex
    alpha: complex


def psi_weight(m: MeasureWeights, nu1: complex, rho_nu1: complex, alpha: DisorderParam):
    """q^alpha coth(mu - nu1 - eta) - rho(nu1) coth(mu - nu1) sampled on the nodes."""
    p = m.params
    qa = p.q_pow(alpha.alpha)
    mu = m.grid.nodes
    return qa * coth_safe(mu - nu1 - p.eta) - rho_nu1 * coth_safe(mu - nu1)


def psi_inside(
    G: GSolution,
    m: MeasureWeights,
    nu1: complex,
    rho_nu1: complex,
    alpha: DisorderParam,
) -> PsiEvaluation:
    """Defining integral for both parameters inside the work contour."""
    if m.grid.min_distance(nu1) < m.proximity_floor(nu1) or not m.grid.contour.contains(nu1):
        raise NuTooCloseToContour(f"nu1 = {nu1} must be strictly inside, 3 spacings away")
    val = m.total(G.values * psi_weight(m, nu1, rho_nu1, alpha))
    return PsiEvaluation(
        nu1=nu1,
        nu2=G.nu,
        value=complex(val),
        placement=("inside", "inside"),
        kappa=m.params.kappa,
        alpha=alpha.alpha,
    )


def g_continued(
    m: MeasureWeights,
    nu: complex,
    alpha: DisorderParam,
    rho_nu: complex,
    aux_nu: complex,
    op: NystromOperator | None = None,
) -> GSolution:
    """Density for nu outside the contour: same linear system, driving
    augmented by -K_alpha(lam - nu)/(1 + a(nu))."""
    p = m.params
    qa = p.q_pow(alpha.alpha)
    base = g_driving(m, nu, alpha, rho_nu)

    def drive(lam):
        lam = np.asarray(lam, dtype=complex)
        correction = (
            coth_safe(lam - nu - p.eta) / qa - qa * coth_safe(lam - nu + p.eta)
        ) / (1.0 + aux_nu)
        return base(lam) - correction

    op = op or deformed_operator(m, alpha)
    values = op.solve(drive(m.grid.nodes))
    return GSolution(
        measure=m,
        values=values,
        alpha=alpha,
        variant="deformed",
        nu=nu,
        rho_nu=rho_nu,
        driving=drive,
    )


def psi_continued_nu2(
    G_aug: GSolution,
    m: MeasureWeights,
    nu1: complex,
    rho_nu1: complex,
    alpha: DisorderParam,
    aux_nu2: complex,
) -> PsiEvaluation:
    """nu2 outside: the weighted integral of the augmented density minus the
    exited-pole term at nu2."""
    p = m.params
    qa = p.q_pow(alpha.alpha)
    nu2 = G_aug.nu
    val = m.total(G_aug.values * psi_weight(m, nu1, rho_nu1, alpha))
    val -= (
        qa * coth_safe(nu2 - nu1 - p.eta) - rho_nu1 * coth_safe(nu2 - nu1)
    ) / (1.0 + aux_nu2)
    return PsiEvaluation(
        nu1=nu1,
        nu2=nu2,
        value=complex(val),
        placement=("inside", "outside"),
        kappa=p.kappa,
        alpha=alpha.alpha,
    )


def psi_continued_nu1(
    G_sol: GSolution,
    m: MeasureWeights,
    nu1: complex,
    rho_nu1: complex,
    alpha: DisorderParam,
    aux_nu1: complex,
    nu2_correction: complex = 0.0,
) -> PsiEvaluation:
    """nu1 outside: subtract G(nu1, nu2)/(1 + a(nu1)), with G evaluated by
    natural interpolation of the (possibly augmented) nu2-solution."""
    val = m.total(G_sol.values * psi_weight(m, nu1, rho_nu1, alpha))
    val -= complex(nu2_correction)
    val -= G_sol(nu1) / (1.0 + aux_nu1)
    placement_nu2 = "outside" if nu2_correction != 0.0 else "inside"
    return PsiEvaluation(
        nu1=nu1,
        nu2=G_sol.nu,
        value=complex(val),
        placement=("outside", placement_nu2),
        kappa=m.params.kappa,
        alpha=alpha.alpha,
    )


def one_point_closed_form(rho_nu: complex, alpha: DisorderParam, p: ModelParams) -> complex:
    """(q^(-alpha) - rho(nu)) / (q^alpha - q^(-alpha)): the exact value of
    oint dm(lam) G(lam, nu)."""
    gap = alpha.gap(p)
    return complex((p.q_pow(-alpha.alpha) - rho_nu) / gap)


def psi_xi(xi: complex, alpha: DisorderParam) -> complex:
    """Elementary weight (xi^alpha / 2) (xi^2 + 1)/(xi^2 - 1), principal branch
    of xi^alpha (cut along the negative real axis)."""
    xi = complex(xi)
    if abs(xi * xi - 1.0) < 1e-10:
        raise PoleProximity("psi_xi has poles at xi = +-1")
    return complex(np.exp(alpha.alpha * np.log(xi)) * 0.5 * (xi * xi + 1.0) / (xi * xi - 1.0))


class PsiCalculator:
    """Bundles the deformed measure, the shared LU and the closed-form
    suppliers; dispatches Psi evaluations on placement automatically.

    Caches the density solution per nu2, so parameter sweeps (asymptotic
    sequences, symmetry partners) reuse one factorization.
    """

    def __init__(self, bundle: QFunctionBundle, grid, refine=()):
        self.bundle = bundle
        self.alpha = bundle.alpha
        self.grid = grid
        p = bundle.params
        if np.max(np.abs(bundle.state_k.roots.imag)) > 0.95 * grid.contour.d or np.max(
            np.abs(bundle.state_k.roots.real)
        ) > 0.95 * grid.contour.R:
            raise NuTooCloseToContour("work contour does not safely enclose the roots")
        aux = aux_from_bethe(bundle.state_k, grid)
        rho = rho_finite(bundle, grid.nodes)
        self.measure = build_measure(
            grid, aux, rho_values=rho, variant="deformed", rho_backend="finite_N"
        )
        self.operator = deformed_operator(self.measure, self.alpha)
        self._g_cache: dict = {}

    # closed-form suppliers -------------------------------------------------
    def rho(self, z) -> complex:
        return complex(rho_finite(self.bundle, z))

    def aux(self, z) -> complex:
        return complex(self.bundle.state_k.aux(z))

    def placement(self, z) -> str:
        c = self.grid.contour
        if c.contains(z) and self.measure.grid.min_distance(z) >= self.measure.proximity_floor(z):
            return "inside"
        if not c.contains(z) and self.measure.grid.min_distance(z) >= self.measure.proximity_floor(z):
            return "outside"
        raise NuTooCloseToContour(
            f"{z} within 3 node spacings of the work contour; use a refined calculator"
        )

    def refined_near(self, *points, factor: int = 4) -> "PsiCalculator":
        """New calculator on a locally subdivided grid resolving the given points."""
        c = self.grid.contour
        refine = []
        n_vertical = self.grid.segment_tags.tolist().count(2)
        for z in points:
            z = complex(z)
            dist = max(1e-3, min(abs(abs(z.imag) - c.d), abs(abs(z.real) - c.R)))
            near_vertical = abs(abs(z.real) - c.R) < abs(abs(z.imag) - c.d)
            if near_vertical:
                n_vertical = max(n_vertical, factor * 24)
            else:
                refine.append((z.real, max(dist / 2.0, 0.01)))
        grid = build_grid(c, n_vertical=n_vertical, per_panel=self.grid.per_panel, refine=tuple(refine))
        return PsiCalculator(self.bundle, grid)

    # density solutions -----------------------------------------------------
    def g_solution(self, nu) -> tuple:
        nu = complex(nu)
        key = (nu.real, nu.imag)
        if key not in self._g_cache:
            place = self.placement(nu)
            rho_nu = self.rho(nu)
            if place == "inside":
                sol = solve_G(self.measure, nu, self.alpha, rho_nu, self.operator)
            else:
                sol = g_continued(
                    self.measure, nu, self.alpha, rho_nu, self.aux(nu), self.operator
                )
            self._g_cache[key] = (sol, place)
        return self._g_cache[key]

    def g_value(self, lam, nu) -> complex:
        """Continued density G(lam, nu) at arbitrary lam via natural interpolation."""
        sol, _ = self.g_solution(nu)
        return complex(sol(lam))

    def one_point_integral(self, nu) -> complex:
        sol, _ = self.g_solution(nu)
        return self.measure.total(sol.values)

    # Psi -------------------------------------------------------------------
    def psi(self, nu1, nu2) -> PsiEvaluation:
        nu1, nu2 = complex(nu1), complex(nu2)
        p1, (sol2, p2) = self.placement(nu1), self.g_solution(nu2)
        rho1 = self.rho(nu1)
        if p1 == "inside" and p2 == "inside":
            return psi_inside(sol2, self.measure, nu1, rho1, self.alpha)
        if p1 == "inside":
            return psi_continued_nu2(sol2, self.measure, nu1, rho1, self.alpha, self.aux(nu2))
        corr = 0.0
        if p2 == "outside":
            p = self.measure.params
            qa = p.q_pow(self.alpha.alpha)
            corr = (
                qa * coth_safe(nu2 - nu1 - p.eta) - rho1 * coth_safe(nu2 - nu1)
            ) / (1.0 + self.aux(nu2))
        return psi_continued_nu1(
            sol2, self.measure, nu1, rho1, self.alpha, self.aux(nu1), nu2_correction=corr
        )

    # reference values ------------------------------------------------------
    def psi_limit_nu1(self, nu2) -> complex:
        """Closed-form limit of Psi as Re nu1 -> infinity."""
        p = self.measure.params
        return complex(
            -(p.q_pow(-self.alpha.alpha) - self.rho(nu2)) / (1.0 + p.q_pow(2.0 * self.bundle.state_k.twist))
        )

    def psi_limit_nu2(self, nu1) -> complex:
        """Closed-form limit of Psi as Re nu2 -> infinity."""
        p = self.measure.params
        return complex(
            -(p.q_pow(self.alpha.alpha) - self.rho(nu1)) / (1.0 + p.q_pow(-2.0 * self.bundle.state_k.twist))
        )
