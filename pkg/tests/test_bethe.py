import numpy as np
import pytest

from qtmlab.bethe import (
    QFunctionBundle,
    aux_from_bethe,
    dominant_state,
    lambda_eigenvalue,
    make_bundle,
    phi,
    phi0_via_integral,
    q_function,
    qtm_exact_diag,
    refine_roots,
    rho_finite,
    sigma_from_phi,
    vacuum_eigenvalues,
    verify_id0,
    verify_id2,
)
from qtmlab.errors import DimensionTooLarge, PoleProximity
from qtmlab.model import DisorderParam, ModelParams

TWO_PI_I = 2j * np.pi


# ---------------------------------------------------------------- vacuum


def test_vacuum_asymptotics(params):
    N = 8
    a, d = vacuum_eigenvalues(25.0, N, params)
    assert abs(a - params.q_pow(N // 2)) < 1e-10
    assert abs(d - params.q_pow(-(N // 2))) < 1e-10


def test_vacuum_zero_coupling_reflection():
    # at beta = 0 the two eigenvalues are related by reflection: d(lam) = a(-lam)
    p0 = ModelParams(gamma=np.pi / 4, J=0.0, T=1.0, h=0.2)
    lam = 0.31 + 0.07j
    a_pos, d_pos = vacuum_eigenvalues(lam, 8, p0)
    a_neg, _ = vacuum_eigenvalues(-lam, 8, p0)
    assert abs(d_pos - a_neg) < 1e-13


def test_vacuum_periodicity(params):
    lam = 0.4 - 0.1j
    a1, d1 = vacuum_eigenvalues(lam, 4, params)
    a2, d2 = vacuum_eigenvalues(lam + 1j * np.pi, 4, params)
    assert abs(a1 - a2) < 1e-12 and abs(d1 - d2) < 1e-12


# ---------------------------------------------------------------- roots


def test_refine_residuals(ctx):
    for N in (4, 8, 16):
        st = ctx.state(N, ctx.p.kappa)
        assert np.max(st.bethe_residuals()) < 1e-13


def test_refinement_of_converged_roots_is_small(ctx):
    from qtmlab.nlie import locate_bethe_roots

    sol = ctx.aux_finite(8, ctx.p.kappa)
    raw = locate_bethe_roots(sol)
    st = refine_roots(raw, 8, ctx.p.kappa, ctx.p)
    assert np.max(np.abs(np.sort_complex(st.roots) - np.sort_complex(raw))) < 1e-6


def test_alpha_continuation_smoothness(ctx):
    base = ctx.state(8, ctx.p.kappa)
    for a in (1e-3, 1e-4):
        moved = refine_roots(base.roots, 8, ctx.p.kappa + a, ctx.p)
        dist = np.max(np.abs(np.sort_complex(moved.roots) - np.sort_complex(base.roots)))
        assert dist < 10.0 * a
        assert dist > 0


# ---------------------------------------------------------------- Q and Lambda


def test_q_function_zero_and_antiperiodicity(ctx):
    st = ctx.state(4, ctx.p.kappa)
    assert abs(q_function(st, st.roots[0])) < 1e-14
    lam = 0.37 + 0.02j
    sign = (-1.0) ** (st.N // 2)
    assert abs(q_function(st, lam + 1j * np.pi) - sign * q_function(st, lam)) < 1e-12


def test_q_function_growth(ctx):
    st = ctx.state(4, ctx.p.kappa)
    val = abs(q_function(st, 20.0))
    assert abs(val / (np.exp(2 * 20.0) / 4.0) - 1.0) < 0.1


def residue_probe(st, root, radius=1e-4, n_angles=8):
    """Residue of the eigenvalue at a root, estimated from the circle mean of
    Lambda * (lam - root); an 8-angle mean annihilates the analytic terms up
    to degree 7, so a clean state probes at ~1e-15 while an uncanceled pole
    shows its full residue."""
    th = 2.0 * np.pi * np.arange(n_angles) / n_angles
    z = root + radius * np.exp(1j * th)
    vals = lambda_eigenvalue(st, z)
    return abs(np.mean(vals * radius * np.exp(1j * th))) / (radius * np.mean(np.abs(vals)))


def test_lambda_pole_free_at_roots(ctx):
    st = ctx.state(8, ctx.p.kappa)
    for root in st.roots:
        assert residue_probe(st, root) < 1e-6


def test_lambda_near_root_averaging(ctx):
    # the averaged evaluation inside the 1e-6 window continues the direct one
    st = ctx.state(8, ctx.p.kappa)
    v_near = lambda_eigenvalue(st, st.roots[0] + 1e-8)
    v_far = lambda_eigenvalue(st, st.roots[0] + 1e-5)
    assert abs(v_near - v_far) / abs(v_far) < 1e-4


def test_lambda_asymptote(ctx, params):
    st = ctx.state(8, params.kappa)
    target = params.q_pow(params.kappa) + params.q_pow(-params.kappa)
    assert abs(lambda_eigenvalue(st, 25.0) - target) < 1e-8


def test_trotter_free_energy_converges(ctx, params):
    from qtmlab.thermo import free_energy

    f_inf = free_energy(ctx.aux_limit(params.kappa), params)
    devs = []
    for N in (4, 8, 16):
        st = ctx.state(N, params.kappa)
        f_N = -params.T * np.log(lambda_eigenvalue(st, 0.0))
        devs.append(abs(f_N - f_inf))
    assert devs[0] > devs[1] > devs[2]


# ---------------------------------------------------------------- rho and phi


def test_rho_alpha_zero(ctx):
    st = ctx.state(8, ctx.p.kappa)
    bun = QFunctionBundle(state_k=st, state_ka=st, alpha=DisorderParam(0.0))
    pts = np.array([0.1, -0.4 + 0.03j, 2.0])
    assert np.max(np.abs(rho_finite(bun, pts) - 1.0)) < 1e-14


def test_rho_limit(ctx, params, bundle8):
    a = bundle8.alpha.alpha
    target = (params.q_pow(params.kappa + a) + params.q_pow(-params.kappa - a)) / (
        params.q_pow(params.kappa) + params.q_pow(-params.kappa)
    )
    assert abs(rho_finite(bundle8, 25.0) - target) < 1e-8


def test_phi_properties(bundle8, params):
    lam = 0.4 + 0.03j
    assert abs(phi(bundle8, lam + 1j * np.pi) - phi(bundle8, lam)) < 1e-12
    assert abs(phi(bundle8, 25.0) - bundle8.b) < 1e-8
    assert abs(phi(bundle8, -25.0) - 1.0 / bundle8.b) < 1e-8
    with pytest.raises(PoleProximity):
        phi(bundle8, bundle8.state_k.roots[0])


def test_phi_alpha_zero(ctx):
    st = ctx.state(8, ctx.p.kappa)
    bun = QFunctionBundle(state_k=st, state_ka=st, alpha=DisorderParam(0.0))
    assert abs(phi(bun, 0.3) - 1.0) < 1e-14
    assert abs(bun.phi0 - 1.0) == 0.0


def test_phi0_two_representations(ctx, work_grid):
    for N, a in ((4, 0.1), (8, 0.1), (16, 0.1), (8, 0.3j)):
        bun = ctx.bundle(N, DisorderParam(a))
        ph0 = phi0_via_integral(
            aux_from_bethe(bun.state_k, work_grid), aux_from_bethe(bun.state_ka, work_grid)
        )
        assert abs(ph0 - bun.phi0) < 1e-10


def test_phi0_integral_grid_invariance(ctx, bundle8):
    from qtmlab.contour import build_grid

    g1 = ctx.work_grid()
    g2 = build_grid(g1.contour, per_panel=g1.per_panel + 8)
    v1 = phi0_via_integral(aux_from_bethe(bundle8.state_k, g1), aux_from_bethe(bundle8.state_ka, g1))
    v2 = phi0_via_integral(aux_from_bethe(bundle8.state_k, g2), aux_from_bethe(bundle8.state_ka, g2))
    assert abs(v1 - v2) < 1e-11


def test_phi0_from_nlie_solutions(ctx, bundle8):
    # the same integral, with ln(1 + a) realized by the integral-equation solver
    sol_k = ctx.aux_finite(8, ctx.p.kappa)
    sol_ka = ctx.aux_finite(8, ctx.p.kappa + ctx.alpha.alpha)
    assert abs(phi0_via_integral(sol_k, sol_ka) - bundle8.phi0) < 1e-10


# ---------------------------------------------------------------- sigma and identities


def test_sigma_from_phi_asymptote(bundle8, params):
    target = bundle8.b / bundle8.phi0
    assert abs(sigma_from_phi(bundle8, 25.0) - target) < 1e-8


def test_sigma_from_phi_alpha_to_zero(ctx, params):
    """The small-alpha limit reproduces the twist-derivative form
    1 + (1/2 eta)(Q'/Q(lam - eta) - Q'/Q(lam + eta))."""
    dk = 1e-5
    st_p = ctx.state(8, params.kappa + dk)
    st_m = ctx.state(8, params.kappa - dk)
    small = DisorderParam(1e-5)
    bun = make_bundle(8, small, params, state_k=ctx.state(8, params.kappa))

    def dlogQ(lam):
        qp = np.prod(np.sinh(lam - st_p.roots))
        qm = np.prod(np.sinh(lam - st_m.roots))
        return (np.log(qp) - np.log(qm)) / (2.0 * dk)

    for lam in (0.1, 0.45 + 0.03j):
        closed = 1.0 + (dlogQ(lam - params.eta) - dlogQ(lam + params.eta)) / (2.0 * params.eta)
        assert abs(sigma_from_phi(bun, lam) - closed) < 1e-5


def test_id0_residuals(bundle8):
    rng = np.random.RandomState(11)
    pts = rng.uniform(-1.5, 1.5, 20) + 1j * rng.uniform(-0.12, 0.12, 20)
    for z in pts:
        if np.min(np.abs(z - bundle8.state_k.roots)) < 1e-2:
            continue
        assert verify_id0(bundle8, z) < 1e-10


def test_id0_alpha_zero_degenerate(ctx):
    st = ctx.state(8, ctx.p.kappa)
    bun = QFunctionBundle(state_k=st, state_ka=st, alpha=DisorderParam(0.0))
    assert verify_id0(bun, 0.21 + 0.05j) < 1e-13


def test_id2_residual_and_r_independence(ctx, work_grid):
    for N in (4, 8):
        bun = ctx.bundle(N)
        r1 = verify_id2(bun, work_grid)
        r2 = verify_id2(bun, work_grid, R=work_grid.contour.R + 2.0)
        assert r1 < 1e-8
        assert abs(r1 - r2) < 1e-9


def test_id2_alpha_zero(ctx, work_grid):
    st = ctx.state(4, ctx.p.kappa)
    bun = QFunctionBundle(state_k=st, state_ka=st, alpha=DisorderParam(0.0))
    assert verify_id2(bun, work_grid) < 1e-10


# ---------------------------------------------------------------- dense oracle


def test_ed_vacuum_action(params):
    for N in (2, 4, 6):
        ed = qtm_exact_diag(N, params.kappa, params)
        for lam in (0.0, 0.3 + 0.1j):
            av, dv = ed.vacuum_action(lam)
            a, d = vacuum_eigenvalues(lam, N, params)
            assert abs(av - a) < 1e-12 * max(1.0, abs(a))
            assert abs(dv - d) < 1e-12 * max(1.0, abs(d))


def test_ed_matches_tq(ctx, params):
    for N in (2, 4):
        ed = qtm_exact_diag(N, params.kappa, params)
        st = ctx.state(N, params.kappa)
        for lam in (0.0, 0.25):
            tq = lambda_eigenvalue(st, lam)
            assert abs(ed.dominant_eigenvalue_at(lam) - tq) / abs(tq) < 1e-10


def test_ed_periodicity(params):
    ed = qtm_exact_diag(2, params.kappa, params)
    v = ed.dominant_eigenvalue_at(0.2)
    assert abs(ed.nearest_eigenvalue(0.2 + 1j * np.pi, v) - v) < 1e-12


def test_ed_zero_coupling_free_spins():
    p0 = ModelParams(gamma=np.pi / 4, J=0.0, T=1.0, h=0.2)
    target = p0.q_pow(p0.kappa) + p0.q_pow(-p0.kappa)
    for N in (2, 4):
        ed = qtm_exact_diag(N, p0.kappa, p0)
        assert abs(ed.dominant_eigenvalue_at(0.0) - target) < 1e-12


def test_ed_dimension_guard(params):
    with pytest.raises(DimensionTooLarge):
        qtm_exact_diag(8, params.kappa, params)


# ---------------------------------------------------------------- negative control


def test_perturbed_root_breaks_identities(ctx, work_grid):
    """Shifting one root by 1e-3 must blow up every root-sensitive residual.

    (The pointwise quotient identity and the vertical-contour identity are
    algebraic in the root set -- they hold for any roots as long as rho and
    the auxiliary function are built from the same set -- so the sensitive
    checks are the defining residuals, the pole probe, the closed-form
    dressed charge against its integral equation, and the one-point value.)
    """
    from qtmlab.bethe import aux_from_bethe, sigma_from_phi
    from qtmlab.correlator import PsiCalculator, one_point_closed_form
    from qtmlab.lineq import solve_sigma_alpha

    bun = ctx.bundle(4)
    bad_roots = bun.state_k.roots.copy()
    bad_roots[0] += 1e-3
    bad_state = type(bun.state_k)(N=4, twist=bun.state_k.twist, roots=bad_roots, params=ctx.p)
    bad = QFunctionBundle(state_k=bad_state, state_ka=bun.state_ka, alpha=bun.alpha)
    assert np.max(bad_state.bethe_residuals()) > 1e-6
    assert residue_probe(bad_state, bad_roots[0]) > 1e-6
    calc = PsiCalculator(bad, work_grid)
    sigma = solve_sigma_alpha(calc.measure, calc.alpha, calc.operator)
    gap = np.max(np.abs(sigma.values - sigma_from_phi(bad, work_grid.nodes)))
    assert gap > 1e-6
    one_pt = abs(
        calc.one_point_integral(0.1) - one_point_closed_form(calc.rho(0.1), bad.alpha, ctx.p)
    )
    assert one_pt > 1e-7
