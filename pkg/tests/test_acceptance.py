"""Acceptance gate: every criterion at its stated tolerance.

Baseline point: gamma = pi/4, J = 1, T = 1, h = 0.2, alpha = 0.2, default
grids.  Each test prints one PASS line with the worst residual it measured
(run with -s to see them on passing runs).
"""

import dataclasses

import numpy as np
import pytest

from qtmlab.bethe import (
    QFunctionBundle,
    aux_from_bethe,
    lambda_eigenvalue,
    qtm_exact_diag,
    rho_finite,
    sigma_from_phi,
    vacuum_eigenvalues,
    verify_id0,
    verify_id2,
)
from qtmlab.contour import GridConfig, build_grid
from qtmlab.correlator import PsiCalculator, one_point_closed_form
from qtmlab.lineq import solve_sigma_alpha
from qtmlab.model import DisorderParam
from qtmlab.nlie import IterConfig, locate_bethe_roots, rho_trotter_limit, solve_aux_limit
from qtmlab.thermo import ThermoPipeline
from qtmlab.verify import check_phi0

TWO_PI_I = 2j * np.pi

LATTICE_T = (0.2, 0.5, 1.0, 2.0)
LATTICE_H = (0.0, 0.1, 0.5)
LATTICE_GAMMA = (np.pi / 6, np.pi / 4, np.pi / 3)


def report(criterion, name, value, tol, extra=""):
    line = f"ACCEPTANCE {criterion:>2} {name}: PASS (worst {value:.3e} < {tol:.1e}{extra})"
    print(line)


@pytest.fixture(scope="module")
def lattice_results():
    """36 thermodynamic points; route-consistency tolerances do not require
    the finest grids, so the sweep runs at a slightly lighter panel order."""
    grid_cfg = GridConfig(per_panel=12)
    out = {}
    for gamma in LATTICE_GAMMA:
        pl = ThermoPipeline(gamma=gamma, J=1.0, grid_cfg=grid_cfg)
        for T in LATTICE_T:
            for h in LATTICE_H:
                out[(gamma, T, h)] = pl.point(T=T, h=h)
    return out


def test_criterion_01_free_spin_limit():
    worst = 0.0
    for T, h in ((1.0, 0.6), (0.5, 0.2)):
        pl = ThermoPipeline(gamma=np.pi / 4, J=0.0)
        r = pl.point(T=T, h=h)
        f_exact = -T * np.log(2 * np.cosh(h / (2 * T)))
        m_exact = 0.5 * np.tanh(h / (2 * T))
        worst = max(
            worst,
            abs(r.f - f_exact) / abs(f_exact),
            abs(r.m_sigma - m_exact) / abs(m_exact),
            abs(r.m_G - m_exact) / abs(m_exact),
        )
    assert worst < 1e-10
    report(1, "free-spin closed forms", worst, 1e-10)


def test_criterion_02_dressed_trick_lattice(lattice_results):
    worst = max(abs(r.m_sigma - r.m_G) for r in lattice_results.values())
    assert worst < 1e-8
    report(2, "two-route magnetization on 36-point lattice", worst, 1e-8)


def test_criterion_03_field_derivative_lattice(lattice_results):
    worst = max(abs(r.m_sigma - r.m_fd) for r in lattice_results.values())
    worst_imag = max(r.max_imag / max(1.0, abs(r.f)) for r in lattice_results.values())
    assert worst < 1e-6
    assert worst_imag < 1e-9
    report(3, "field-derivative consistency on lattice", worst, 1e-6)


def test_criterion_04_dressed_charge_closed_form(ctx):
    worst = 0.0
    for N in (4, 8, 16):
        calc = ctx.calculator(N)
        sigma = solve_sigma_alpha(calc.measure, calc.alpha, calc.operator)
        closed = sigma_from_phi(calc.bundle, calc.measure.grid.nodes)
        worst = max(worst, float(np.max(np.abs(sigma.values - closed))))
    assert worst < 1e-8
    rec = check_phi0(ctx, N_list=(4, 8, 16))
    assert rec.passed, rec
    report(4, "dressed charge via Q-quotients (N=4,8,16)", worst, 1e-8,
           extra=f"; phi0 reps {rec.max_residual:.1e} < 1e-10")


def test_criterion_05_one_point_identity(ctx):
    worst = 0.0
    for a in (DisorderParam(0.2), DisorderParam(0.3j)):
        calc = ctx.calculator(8, a)
        for nu in (0.0, 0.1, -0.2 + 0.05j):
            lhs = calc.one_point_integral(nu)
            rhs = one_point_closed_form(calc.rho(nu), a, ctx.p)
            worst = max(worst, abs(lhs - rhs))
    assert worst < 1e-8
    report(5, "one-point identity (nu x alpha lattice)", worst, 1e-8)


def test_criterion_06_asymptotics(calc8):
    res = {"nu1": [], "nu2": []}
    lim1, lim2 = calc8.psi_limit_nu1(0.1), calc8.psi_limit_nu2(0.1)
    for re in (4.0, 5.0, 6.0, 7.0, 8.0):
        res["nu1"].append(abs(calc8.psi(re, 0.1).value - lim1))
        res["nu2"].append(abs(calc8.psi(0.1, re).value - lim2))
    for seq in res.values():
        assert seq[-1] < 1e-4
        assert all(a > b for a, b in zip(seq, seq[1:]))
    g_lam = [abs(calc8.g_value(x, 0.1)) for x in (4.0, 6.0, 8.0, 10.0)]
    g_nu = [abs(calc8.g_value(0.3, x)) for x in (4.0, 6.0, 8.0, 10.0)]
    for seq in (g_lam, g_nu):
        assert seq[-1] < 1e-3
        assert all(a > b for a, b in zip(seq, seq[1:]))
    worst = max(res["nu1"][-1], res["nu2"][-1])
    report(6, "asymptotic closed forms at Re nu = 8, monotone from 4", worst, 1e-4)


def test_criterion_07_symmetry(ctx, calc8):
    ctx_n = ctx.negated()
    calc_n = ctx_n.calculator(8)
    pairs = [
        (0.1, -0.15),
        (0.0, 0.2),
        (-0.3 + 0.04j, 0.25),
        (0.4, 0.05 - 0.03j),
        (7.2, 0.1),
        (0.1, 7.2),
        (8.0, 7.5),
        (1.5, -1.0),
        (-2.0, 0.6),
        (0.33 + 0.02j, -0.41 + 0.01j),
    ]
    worst_psi = max(abs(calc8.psi(a, b).value - calc_n.psi(b, a).value) for a, b in pairs)
    rng = np.random.RandomState(3)
    pts = rng.uniform(-2, 2, 10) + 1j * rng.uniform(-0.1, 0.1, 10)
    worst_rho = float(np.max(np.abs(rho_finite(calc8.bundle, pts) - rho_finite(calc_n.bundle, pts))))
    assert worst_psi < 1e-8
    assert worst_rho < 1e-9
    report(7, "twist-negation symmetry (Psi, rho at 10 points)", max(worst_psi, worst_rho), 1e-8)


def test_criterion_08_rho_backend_agreement(ctx):
    sol_k = ctx.aux_limit(ctx.p.kappa)
    sol_ka = ctx.aux_limit(ctx.p.kappa + ctx.alpha.alpha)
    pts = (0.0, 0.3, -0.4, 0.15 - 0.05j, 0.8 + 0.03j)
    devs = []
    for N in (8, 16, 32):
        bun = ctx.bundle(N)
        dev = max(
            abs(rho_trotter_limit(sol_k, sol_ka, z) - complex(rho_finite(bun, z)))
            / abs(complex(rho_finite(bun, z)))
            for z in pts
        )
        devs.append(dev)
    assert devs[-1] < 1e-3
    assert devs[0] > devs[1] > devs[2]
    report(8, "integral vs finite-Trotter eigenvalue ratio (N=32)", devs[-1], 1e-3,
           extra=f"; decreasing {[f'{d:.1e}' for d in devs]}")


def test_criterion_09_bethe_nlie_closure(ctx):
    worst_res, worst_rec, worst_sum = 0.0, 0.0, 0.0
    for N in (8, 16):
        sol = ctx.aux_finite(N, ctx.p.kappa)
        roots = locate_bethe_roots(sol)
        assert roots.size == N // 2  # argument-principle count inside locate
        st = ctx.state(N, ctx.p.kappa)
        worst_res = max(worst_res, float(np.max(st.bethe_residuals())))
        rec = np.max(np.abs(np.exp(sol.log_a_values) / st.aux(sol.grid.nodes) - 1.0))
        worst_rec = max(worst_rec, float(rec))
        lhs = np.sum(sol.grid.weights * sol.log_one_plus_a) / TWO_PI_I
        worst_sum = max(worst_sum, abs(lhs + np.sum(st.roots) + ctx.p.beta / 2.0))
    assert worst_res < 1e-12
    assert worst_rec < 1e-8
    assert worst_sum < 1e-9
    report(9, "root closure (count, residuals, reconstruction, root sum)",
           max(worst_rec, worst_sum), 1e-8)


def test_criterion_10_proof_identity_suite(ctx, work_grid, bundle8):
    rng = np.random.RandomState(7)
    pts = rng.uniform(-1.5, 1.5, 20) + 1j * rng.uniform(-0.12, 0.12, 20)
    worst_id0 = max(
        verify_id0(bundle8, z)
        for z in pts
        if np.min(np.abs(z - bundle8.state_k.roots)) > 1e-2
    )
    assert worst_id0 < 1e-10
    worst_id2, worst_rind = 0.0, 0.0
    for N in (4, 8):
        bun = ctx.bundle(N)
        r1 = verify_id2(bun, work_grid)
        r2 = verify_id2(bun, work_grid, R=work_grid.contour.R + 2.0)
        worst_id2 = max(worst_id2, r1, r2)
        worst_rind = max(worst_rind, abs(r1 - r2))
    assert worst_id2 < 1e-8
    assert worst_rind < 1e-9
    from test_bethe import residue_probe

    worst_pole = max(residue_probe(bundle8.state_k, r) for r in bundle8.state_k.roots)
    assert worst_pole < 1e-6
    report(10, "pointwise quotient / vertical-contour identities, pole probe",
           max(worst_id0, worst_id2), 1e-8, extra=f"; R-independence {worst_rind:.1e}")


def test_criterion_11_ed_oracle(ctx):
    worst = 0.0
    worst_vac = 0.0
    for N in (2, 4):
        ed = qtm_exact_diag(N, ctx.p.kappa, ctx.p)
        st = ctx.state(N, ctx.p.kappa)
        for lam in (0.0, 0.2):
            tq = lambda_eigenvalue(st, lam)
            worst = max(worst, abs(ed.dominant_eigenvalue_at(lam) - tq) / abs(tq))
        av, dv = ed.vacuum_action(0.17)
        a, d = vacuum_eigenvalues(0.17, N, ctx.p)
        worst_vac = max(worst_vac, abs(av - a) / abs(a), abs(dv - d) / abs(d))
    assert worst < 1e-10
    assert worst_vac < 1e-13  # "exactly to rounding"
    report(11, "dense transfer-matrix oracle (N=2,4)", worst, 1e-10,
           extra=f"; vacuum action {worst_vac:.1e}")


def test_criterion_12_numerical_health(ctx):
    # grid doubling: all reported observables move by < 1e-9
    results = []
    for per in (16, 32):
        pl = ThermoPipeline(ctx.p.gamma, ctx.p.J, GridConfig(per_panel=per))
        results.append(pl.point(T=ctx.p.T, h=ctx.p.h))
    worst = max(
        abs(results[0].f - results[1].f),
        abs(results[0].m_sigma - results[1].m_sigma),
        abs(results[0].m_G - results[1].m_G),
    )
    calc = ctx.calculator(8)
    work2 = build_grid(calc.grid.contour, per_panel=32)
    calc2 = PsiCalculator(ctx.bundle(8), work2)
    worst = max(worst, abs(calc.one_point_integral(0.1) - calc2.one_point_integral(0.1)))
    worst = max(worst, abs(calc.psi(0.1, -0.15).value - calc2.psi(0.1, -0.15).value))
    assert worst < 1e-9
    # damping independence to 10x the solver tolerance
    sols = [
        solve_aux_limit(ctx.p, ctx.p.kappa, ctx.outer_grid(), IterConfig(damping=th))
        for th in (0.3, 0.7)
    ]
    ddiff = float(np.max(np.abs(sols[0].log_a_values - sols[1].log_a_values)))
    assert ddiff < 1e-11
    report(12, "grid doubling and damping independence", worst, 1e-9,
           extra=f"; damping gap {ddiff:.1e}")
