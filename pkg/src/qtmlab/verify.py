"""Machine verification of the identity suite.

Each check compares two independently computed quantities (a contour
integral against a closed form, two solution routes against each other, a
dense oracle against the functional relation) and records the worst
residual with its tolerance.  The CLI `verify` command runs the whole
suite; the acceptance tests run the same checks at their pinned parameters.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import numpy as np

from .bethe import (
    BetheState,
    QFunctionBundle,
    aux_from_bethe,
    dominant_state,
    lambda_eigenvalue,
    make_bundle,
    phi0_via_integral,
    qtm_exact_diag,
    refine_roots,
    rho_finite,
    sigma_from_phi,
    vacuum_eigenvalues,
    verify_id0,
    verify_id2,
)
from .config import RunConfig
from .contour import build_grid
from .correlator import PsiCalculator, one_point_closed_form
from .errors import NewtonDivergence, RootCollision
from .lineq import dressed_trick_check, solve_sigma_alpha
from .model import DisorderParam, ModelParams
from .nlie import rho_trotter_limit, solve_aux_finite, solve_aux_limit, suggested_refinements
from .thermo import ThermoPipeline

TWO_PI_I = 2j * np.pi


@dataclass
class CheckRecord:
    name: str
    anchor: str
    max_residual: float
    tolerance: float
    passed: bool
    details: dict = field(default_factory=dict)

    @classmethod
    def make(cls, name, anchor, residual, tolerance, extra_ok=True, **details):
        residual = float(residual)
        return cls(
            name=name,
            anchor=anchor,
            max_residual=residual,
            tolerance=float(tolerance),
            passed=bool(residual < tolerance) and extra_ok,
            details=details,
        )


class VerifyContext:
    """Caches the expensive shared objects (grids, solves, root sets)."""

    def __init__(self, cfg: RunConfig):
        self.cfg = cfg
        self.p = cfg.model_params()
        self.alpha = DisorderParam(cfg.alpha)
        self.grid_cfg = cfg.grid_config()
        self.iter_cfg = cfg.iter_config()
        self._grids = {}
        self._aux = {}
        self._states = {}
        self._work = None

    # grids -------------------------------------------------------------
    def outer_grid(self, N: int | None = None, p: ModelParams | None = None):
        p = p or self.p
        contour = self.grid_cfg.outer_contour(p)
        refine = suggested_refinements(p, contour, N)
        key = (p.gamma, p.T, p.J, refine)
        if key not in self._grids:
            self._grids[key] = build_grid(
                contour,
                self.grid_cfg.n_horizontal,
                self.grid_cfg.n_vertical,
                self.grid_cfg.per_panel,
                refine=refine,
            )
        return self._grids[key]

    def work_grid(self):
        if self._work is None:
            self._work = build_grid(
                self.grid_cfg.work_contour(self.p),
                self.grid_cfg.n_horizontal,
                self.grid_cfg.n_vertical,
                self.grid_cfg.per_panel,
            )
        return self._work

    # solves --------------------------------------------------------------
    def aux_limit(self, twist):
        key = ("limit", complex(twist))
        if key not in self._aux:
            self._aux[key] = solve_aux_limit(self.p, twist, self.outer_grid(), self.iter_cfg)
        return self._aux[key]

    def aux_finite(self, N: int, twist):
        key = (N, complex(twist))
        if key not in self._aux:
            self._aux[key] = solve_aux_finite(self.p, twist, N, self.outer_grid(N), self.iter_cfg)
        return self._aux[key]

    def state(self, N: int, twist) -> BetheState:
        key = (N, complex(twist))
        if key not in self._states:
            grid = self.outer_grid(N) if N > 6 else None
            base = self._states.get((N, complex(self.p.kappa)))
            if base is not None and abs(twist - self.p.kappa) > 0:
                try:
                    self._states[key] = refine_roots(base.roots, N, twist, self.p)
                    return self._states[key]
                except (NewtonDivergence, RootCollision):
                    pass
            self._states[key] = dominant_state(N, twist, self.p, grid=grid)
        return self._states[key]

    def bundle(self, N: int, alpha: DisorderParam | None = None) -> QFunctionBundle:
        alpha = alpha or self.alpha
        return make_bundle(N, alpha, self.p, grid=self.outer_grid(N), state_k=self.state(N, self.p.kappa))

    def calculator(self, N: int, alpha: DisorderParam | None = None) -> PsiCalculator:
        return PsiCalculator(self.bundle(N, alpha), self.work_grid())

    def negated(self) -> "VerifyContext":
        """Context at (-kappa, -alpha) for the reflection-symmetry checks.

        Root sets at -kappa are seeded from the conjugated roots at kappa
        (the auxiliary function obeys a(-conj lam | kappa) = conj a(lam | kappa)),
        with the generic pipeline as fallback.
        """
        cfg2 = RunConfig(entries={**self.cfg.entries})
        ctx = VerifyContext(cfg2)
        ctx.p = self.p.with_twist(-self.p.kappa)
        ctx.alpha = DisorderParam(-self.alpha.alpha)
        ctx._work = self.work_grid()
        for (N, tw), st in list(self._states.items()):
            if abs(tw - self.p.kappa) < 1e-14:
                try:
                    ctx._states[(N, complex(-self.p.kappa))] = refine_roots(
                        np.conj(st.roots), N, -self.p.kappa, ctx.p
                    )
                except (NewtonDivergence, RootCollision):
                    pass
        return ctx


# -------------------------------------------------------------------------
# individual checks
# -------------------------------------------------------------------------


def check_free_spin(ctx: VerifyContext, points=((1.0, 0.6), (0.5, 0.2)), tol=1e-10):
    worst = 0.0
    for T, h in points:
        pl = ThermoPipeline(gamma=ctx.p.gamma, J=0.0, grid_cfg=ctx.grid_cfg, iter_cfg=ctx.iter_cfg)
        r = pl.point(T=T, h=h)
        f_exact = -T * np.log(2.0 * np.cosh(h / (2.0 * T)))
        m_exact = 0.5 * np.tanh(h / (2.0 * T))
        worst = max(
            worst,
            abs(r.f - f_exact) / abs(f_exact),
            abs(r.m_sigma - m_exact) / abs(m_exact),
            abs(r.m_G - m_exact) / abs(m_exact),
        )
    return CheckRecord.make("free-spin-closed-forms", "zero-coupling-limit", worst, tol)


def check_thermo_baseline(ctx: VerifyContext, tol_trick=1e-9, tol_fd=1e-6):
    pl = ThermoPipeline(ctx.p.gamma, ctx.p.J, ctx.grid_cfg, ctx.iter_cfg)
    r = pl.point(T=ctx.p.T, h=ctx.p.h, delta_h=float(ctx.cfg["solver.delta_h"]))
    rec1 = CheckRecord.make(
        "dressed-trick-plain",
        "two-route-magnetization",
        abs(r.m_sigma - r.m_G),
        tol_trick,
        cond_estimate=r.cond_estimate,
        max_imag=r.max_imag,
    )
    rec2 = CheckRecord.make(
        "magnetization-fd-consistency",
        "field-derivative-route",
        abs(r.m_sigma - r.m_fd),
        tol_fd,
    )
    return [rec1, rec2]


def deformed_setup(ctx: VerifyContext, N: int, alpha: DisorderParam | None = None):
    """(bundle, measure, operator, sigma) on the work grid."""
    calc = ctx.calculator(N, alpha)
    sigma = solve_sigma_alpha(calc.measure, calc.alpha, calc.operator)
    return calc, sigma


def check_dressed_charge_q_form(ctx: VerifyContext, N_list=None, tol=1e-8):
    worst, conds = 0.0, {}
    for N in N_list or ctx.cfg.trotter_list:
        calc, sigma = deformed_setup(ctx, N)
        closed = sigma_from_phi(calc.bundle, calc.measure.grid.nodes)
        worst = max(worst, float(np.max(np.abs(sigma.values - closed))))
        conds[N] = calc.operator.cond_estimate
    return CheckRecord.make(
        "dressed-charge-quotient-form", "q-quotient-closed-form", worst, tol, cond_estimates=conds
    )


def check_phi0(ctx: VerifyContext, N_list=None, tol=1e-10):
    worst = 0.0
    grid = ctx.work_grid()
    for N in N_list or ctx.cfg.trotter_list:
        bun = ctx.bundle(N)
        sol_k = aux_from_bethe(bun.state_k, grid)
        sol_ka = aux_from_bethe(bun.state_ka, grid)
        worst = max(worst, abs(phi0_via_integral(sol_k, sol_ka) - bun.phi0))
    return CheckRecord.make("phi0-two-representations", "roots-vs-contour-integral", worst, tol)


def check_one_point(ctx: VerifyContext, N=8, alphas=(None, 0.3j), nus=(0.0, 0.1, -0.2 + 0.05j), tol=1e-8):
    worst = 0.0
    for a in alphas:
        alpha = ctx.alpha if a is None else DisorderParam(a)
        calc = ctx.calculator(N, alpha)
        for nu in nus:
            lhs = calc.one_point_integral(nu)
            rhs = one_point_closed_form(calc.rho(nu), alpha, ctx.p)
            worst = max(worst, abs(lhs - rhs))
    return CheckRecord.make("one-point-identity", "weighted-density-integral", worst, tol)


def check_dressed_trick_deformed(ctx: VerifyContext, N=8, nu=0.1, tol=1e-9):
    calc, sigma = deformed_setup(ctx, N)
    sol, _ = calc.g_solution(nu)
    resid = dressed_trick_check(sigma, sol, calc.measure)
    return CheckRecord.make("dressed-trick-deformed", "transpose-duality", resid, tol)


def check_id0(ctx: VerifyContext, N=8, n_points=20, tol=1e-10):
    bun = ctx.bundle(N)
    rng = np.random.RandomState(7)
    c = ctx.work_grid().contour
    pts = (rng.uniform(-2.0, 2.0, n_points) + 1j * rng.uniform(-0.6, 0.6, n_points) * c.d)
    worst = 0.0
    for z in pts:
        if np.min(np.abs(z - bun.state_k.roots)) < 1e-2:
            continue
        worst = max(worst, verify_id0(bun, z))
    return CheckRecord.make("local-quotient-identity", "t-q-pointwise", worst, tol)


def check_id2(ctx: VerifyContext, N_list=(4, 8), tol=1e-8, tol_r=1e-9):
    worst, worst_r = 0.0, 0.0
    grid = ctx.work_grid()
    for N in N_list:
        bun = ctx.bundle(N)
        r1 = verify_id2(bun, grid)
        r2 = verify_id2(bun, grid, R=grid.contour.R + 2.0)
        worst = max(worst, r1, r2)
        worst_r = max(worst_r, abs(r1 - r2))
    rec = CheckRecord.make(
        "vertical-contour-identity", "tall-rectangle-verticals", worst, tol, r_independence=worst_r
    )
    rec.passed = rec.passed and worst_r < tol_r
    return rec


def check_sum_of_roots(ctx: VerifyContext, N_list=None, tol=1e-9):
    grid = ctx.outer_grid()
    worst = 0.0
    used = []
    for N in N_list or ctx.cfg.trotter_list:
        if abs(ctx.p.beta) / N >= 0.95 * grid.contour.d:
            continue  # pole at -beta/N outside: single-twist integral winds
        used.append(N)
        st = ctx.state(N, ctx.p.kappa)
        sol = aux_from_bethe(st, grid)
        lhs = np.sum(grid.weights * sol.log_one_plus_a) / TWO_PI_I
        rhs = -np.sum(st.roots) - ctx.p.beta / 2.0
        worst = max(worst, abs(lhs - rhs))
    return CheckRecord.make("sum-of-roots", "log-integral-vs-roots", worst, tol, N_used=used)


def check_aux_reconstruction(ctx: VerifyContext, N=8, tol=1e-8):
    grid = ctx.outer_grid(N)
    sol = ctx.aux_finite(N, ctx.p.kappa)
    st = ctx.state(N, ctx.p.kappa)
    rel = np.max(np.abs(np.exp(sol.log_a_values) / st.aux(grid.nodes) - 1.0))
    return CheckRecord.make("aux-reconstruction", "closed-form-vs-integral-equation", rel, tol)


def check_root_closure(ctx: VerifyContext, N_list=None, tol=1e-12):
    worst = 0.0
    counts_ok = True
    details = {}
    for N in N_list or ctx.cfg.trotter_list:
        st = ctx.state(N, ctx.p.kappa)
        res = float(np.max(st.bethe_residuals()))
        worst = max(worst, res)
        counts_ok = counts_ok and (st.roots.size == N // 2)
        details[N] = res
    return CheckRecord.make(
        "bethe-closure", "defining-equation-residuals", worst, tol, extra_ok=counts_ok, residuals=details
    )


def check_ed_oracle(ctx: VerifyContext, N_list=(2, 4), tol=1e-10):
    worst = 0.0
    for N in N_list:
        ed = qtm_exact_diag(N, ctx.p.kappa, ctx.p)
        st = ctx.state(N, ctx.p.kappa)
        for lam in (0.0, 0.2):
            tq = lambda_eigenvalue(st, lam)
            dom = ed.dominant_eigenvalue_at(lam)
            worst = max(worst, abs(tq - dom) / abs(dom))
        av, dv = ed.vacuum_action(0.17)
        a, d = vacuum_eigenvalues(0.17, N, ctx.p)
        worst = max(worst, abs(av - a) / abs(a), abs(dv - d) / abs(d))
    return CheckRecord.make("ed-oracle", "dense-transfer-matrix", worst, tol)


def check_symmetry(ctx: VerifyContext, N=8, tol_psi=1e-8, tol_rho=1e-9):
    calc = ctx.calculator(N)
    ctx_n = ctx.negated()
    calc_n = ctx_n.calculator(N)
    pairs = [
        (0.1, -0.15),
        (0.0, 0.2),
        (-0.3 + 0.04j, 0.25),
        (0.4, 0.05 - 0.03j),
        (7.2, 0.1),  # nu1 outside the work contour
    ]
    worst_psi = 0.0
    for n1, n2 in pairs:
        worst_psi = max(worst_psi, abs(calc.psi(n1, n2).value - calc_n.psi(n2, n1).value))
    rng = np.random.RandomState(3)
    pts = rng.uniform(-2, 2, 10) + 1j * rng.uniform(-0.1, 0.1, 10)
    worst_rho = float(
        np.max(np.abs(rho_finite(calc.bundle, pts) - rho_finite(calc_n.bundle, pts)))
    )
    rec1 = CheckRecord.make("psi-symmetry", "twist-negation-exchange", worst_psi, tol_psi)
    rec2 = CheckRecord.make("rho-symmetry", "twist-negation", worst_rho, tol_rho)
    return [rec1, rec2]


def check_asymptotics(ctx: VerifyContext, N=8, tol_at_8=1e-4):
    calc = ctx.calculator(N)
    nu_fix = 0.1
    res = {"nu1": [], "nu2": []}
    lim1, lim2 = calc.psi_limit_nu1(nu_fix), calc.psi_limit_nu2(nu_fix)
    for re in (4.0, 5.0, 6.0, 7.0, 8.0):
        res["nu1"].append(abs(calc.psi(re, nu_fix).value - lim1))
        res["nu2"].append(abs(calc.psi(nu_fix, re).value - lim2))
    dec = all(a > b for seq in res.values() for a, b in zip(seq, seq[1:]))
    worst = max(res["nu1"][-1], res["nu2"][-1])
    g_seq = [abs(calc.g_value(x, nu_fix)) for x in (6.0, 8.0, 10.0)]
    g_nu_seq = [abs(calc.g_value(0.3, x)) for x in (6.0, 8.0, 10.0)]
    g_dec = all(a > b for seq in (g_seq, g_nu_seq) for a, b in zip(seq, seq[1:]))
    g_worst = max(g_seq[-1], g_nu_seq[-1])
    rec = CheckRecord.make(
        "psi-asymptotics",
        "large-re-closed-forms",
        worst,
        tol_at_8,
        extra_ok=dec,
        decreasing=dec,
        sequences=res,
    )
    rec2 = CheckRecord.make(
        "g-decay", "density-vanishes-at-infinity", g_worst, tol_at_8, extra_ok=g_dec
    )
    return [rec, rec2]


def check_rho_backends(ctx: VerifyContext, N_seq=(8, 16, 32), tol=1e-3):
    sol_k = ctx.aux_limit(ctx.p.kappa)
    sol_ka = ctx.aux_limit(ctx.p.kappa + ctx.alpha.alpha)
    pts = (0.0, 0.3, -0.4, 0.15 - 0.05j, 0.8 + 0.03j)
    devs = []
    for N in N_seq:
        bun = ctx.bundle(N)
        dev = 0.0
        for z in pts:
            r_lim = rho_trotter_limit(sol_k, sol_ka, z)
            r_fin = complex(rho_finite(bun, z))
            dev = max(dev, abs(r_lim - r_fin) / abs(r_fin))
        devs.append(dev)
    decreasing = all(a > b for a, b in zip(devs, devs[1:]))
    return CheckRecord.make(
        "rho-backend-agreement",
        "integral-vs-finite-trotter",
        devs[-1],
        tol,
        extra_ok=decreasing,
        deviations=dict(zip(N_seq, devs)),
    )


def check_damping_independence(ctx: VerifyContext, thetas=(0.3, 0.7), tol_factor=10.0):
    grid = ctx.outer_grid()
    sols = [
        solve_aux_limit(
            ctx.p,
            ctx.p.kappa,
            grid,
            type(ctx.iter_cfg)(tol=ctx.iter_cfg.tol, max_iter=ctx.iter_cfg.max_iter, damping=th),
        )
        for th in thetas
    ]
    diff = float(np.max(np.abs(sols[0].log_a_values - sols[1].log_a_values)))
    return CheckRecord.make(
        "damping-independence", "fixed-point-uniqueness", diff, tol_factor * ctx.iter_cfg.tol
    )


def check_grid_doubling(ctx: VerifyContext, tol=1e-9):
    """Doubling the per-panel node count must leave observables unchanged."""
    results = []
    for per in (ctx.grid_cfg.per_panel, 2 * ctx.grid_cfg.per_panel):
        gc = dataclasses.replace(ctx.grid_cfg, per_panel=per)
        pl = ThermoPipeline(ctx.p.gamma, ctx.p.J, gc, ctx.iter_cfg)
        r = pl.point(T=ctx.p.T, h=ctx.p.h)
        results.append(r)
    worst = max(
        abs(results[0].f - results[1].f),
        abs(results[0].m_sigma - results[1].m_sigma),
        abs(results[0].m_G - results[1].m_G),
    )
    # deformed-route observables on the doubled work grid
    calc = ctx.calculator(8)
    work2 = build_grid(
        ctx.grid_cfg.work_contour(ctx.p), per_panel=2 * ctx.grid_cfg.per_panel
    )
    calc2 = PsiCalculator(ctx.bundle(8), work2)
    worst = max(worst, abs(calc.one_point_integral(0.1) - calc2.one_point_integral(0.1)))
    worst = max(worst, abs(calc.psi(0.1, -0.15).value - calc2.psi(0.1, -0.15).value))
    return CheckRecord.make("grid-doubling", "quadrature-convergence", worst, tol)


def run_suite(cfg: RunConfig, include_slow: bool = True):
    """The full identity suite; returns (records, context)."""
    ctx = VerifyContext(cfg)
    records = []
    records.append(check_free_spin(ctx))
    records.extend(check_thermo_baseline(ctx))
    records.append(check_root_closure(ctx))
    records.append(check_ed_oracle(ctx))
    records.append(check_dressed_charge_q_form(ctx))
    records.append(check_phi0(ctx))
    records.append(check_one_point(ctx))
    records.append(check_dressed_trick_deformed(ctx))
    records.append(check_id0(ctx))
    records.append(check_id2(ctx))
    records.append(check_sum_of_roots(ctx))
    records.append(check_aux_reconstruction(ctx))
    records.extend(check_symmetry(ctx))
    records.extend(check_asymptotics(ctx))
    records.append(check_damping_independence(ctx))
    if include_slow:
        records.append(check_rho_backends(ctx))
        records.append(check_grid_doubling(ctx))
    return records, ctx
