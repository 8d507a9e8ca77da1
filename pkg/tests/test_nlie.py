import numpy as np
import pytest

from qtmlab.bethe import dominant_state
from qtmlab.contour import Contour, GridConfig, build_grid
from qtmlab.errors import OutOfDomain, SingularDriving
from qtmlab.model import ModelParams, bare_energy
from qtmlab.nlie import (
    IterConfig,
    eval_aux,
    locate_bethe_roots,
    rho_trotter_limit,
    solve_aux_finite,
    solve_aux_limit,
    suggested_refinements,
)

TWO_PI_I = 2j * np.pi


@pytest.fixture(scope="module")
def free_spin_solution(free_spin_params):
    grid = build_grid(GridConfig().outer_contour(free_spin_params))
    return solve_aux_limit(free_spin_params, free_spin_params.kappa, grid), free_spin_params


def test_zero_coupling_constant_solution(free_spin_solution):
    sol, p0 = free_spin_solution
    target = p0.q_pow(-2 * p0.kappa)
    assert np.max(np.abs(np.exp(sol.log_a_values) - target)) < 1e-12
    assert abs(eval_aux(sol, 0.123 + 0.05j) - target) < 1e-12


def test_zero_coupling_finite_trotter(free_spin_solution):
    _, p0 = free_spin_solution
    grid = build_grid(GridConfig().outer_contour(p0))
    sol = solve_aux_finite(p0, p0.kappa, 8, grid)
    assert np.max(np.abs(np.exp(sol.log_a_values) - p0.q_pow(-2 * p0.kappa))) < 1e-12


def test_residual_and_winding(aux_limit_k):
    assert aux_limit_k.residual < 1e-12
    assert aux_limit_k.winding == 0


def test_asymptotic_value_at_right_edge(aux_limit_k, params):
    R = aux_limit_k.grid.contour.R
    assert abs(eval_aux(aux_limit_k, R - 0.1) - params.q_pow(-2 * params.kappa)) < 1e-6


def test_eval_periodicity_and_node_consistency(aux_limit_k):
    assert abs(eval_aux(aux_limit_k, 0.3 + 1j * np.pi) - eval_aux(aux_limit_k, 0.3)) < 1e-9
    nodes = aux_limit_k.grid.nodes[:50]
    vals = eval_aux(aux_limit_k, nodes)
    assert np.max(np.abs(vals - np.exp(aux_limit_k.log_a_values[:50]))) < 1e-10


def test_eval_out_of_strip(aux_limit_k):
    c = aux_limit_k.grid.contour
    with pytest.raises(OutOfDomain):
        eval_aux(aux_limit_k, 0.1 + 1j * (c.gamma - c.d))


def test_warm_start_reduces_iterations(params, outer_grid, aux_limit_k):
    sol = solve_aux_limit(params, params.kappa, outer_grid, x0=aux_limit_k.log_a_values)
    assert sol.iterations <= 3


def test_damping_independence(params, outer_grid):
    sols = [
        solve_aux_limit(params, params.kappa, outer_grid, IterConfig(damping=th))
        for th in (0.3, 0.7)
    ]
    assert np.max(np.abs(sols[0].log_a_values - sols[1].log_a_values)) < 1e-11


@pytest.mark.slow
def test_trotter_convergence_monotone(params, outer_grid):
    limit = solve_aux_limit(params, params.kappa, outer_grid)
    sups = []
    for N in (8, 16, 32, 64):
        sol = solve_aux_finite(params, params.kappa, N, outer_grid)
        sups.append(np.max(np.abs(sol.log_a_values - limit.log_a_values)))
    assert all(a > b for a, b in zip(sups, sups[1:]))


def test_singular_driving_raises(params, outer_grid):
    # |beta|/N outside the contour for N = 2, 4 at the baseline temperature
    for N in (2, 4):
        with pytest.raises(SingularDriving):
            solve_aux_finite(params, params.kappa, N, outer_grid)


def test_locate_roots_n8(ctx):
    sol = ctx.aux_finite(8, ctx.p.kappa)
    roots = locate_bethe_roots(sol)
    assert roots.size == 4
    assert max(abs(1 + eval_aux(sol, z)) for z in roots) < 1e-10
    assert sol.winding == 0


def test_locate_roots_n16(ctx):
    sol = ctx.aux_finite(16, ctx.p.kappa)
    roots = locate_bethe_roots(sol)
    assert roots.size == 8


@pytest.mark.slow
def test_locate_roots_n4_tall_contour():
    # |beta|/4 = 0.354 only fits a contour taller than the default third
    p = ModelParams(gamma=np.pi / 4, J=1.0, T=1.0, h=0.1)
    c = Contour(R=6.0, d=0.47 * p.gamma, gamma=p.gamma)
    grid = build_grid(c, refine=suggested_refinements(p, c, N=4))
    sol = solve_aux_finite(p, p.kappa, 4, grid)
    roots = locate_bethe_roots(sol)
    assert roots.size == 2
    ed_route = dominant_state(4, p.kappa, p)
    assert np.max(np.abs(np.sort_complex(roots) - np.sort_complex(ed_route.roots))) < 1e-8


def test_reflection_symmetry_of_roots_at_zero_field():
    p = ModelParams(gamma=np.pi / 4, J=1.0, T=1.0, h=0.0)
    st = dominant_state(4, p.kappa, p)
    r = np.sort_complex(st.roots)
    assert np.max(np.abs(np.sort_complex(-np.conj(r)) - r)) < 1e-10


def test_sum_of_roots_from_nlie_solution(ctx):
    sol = ctx.aux_finite(8, ctx.p.kappa)
    st = ctx.state(8, ctx.p.kappa)
    lhs = np.sum(sol.grid.weights * sol.log_one_plus_a) / TWO_PI_I
    rhs = -np.sum(st.roots) - ctx.p.beta / 2.0
    assert abs(lhs - rhs) < 1e-9


def test_rho_trotter_limit_alpha_zero(ctx):
    sol = ctx.aux_limit(ctx.p.kappa)
    assert abs(rho_trotter_limit(sol, sol, 0.1) - 1.0) < 1e-14


def test_rho_trotter_limit_free_energy_relation(ctx):
    from qtmlab.thermo import free_energy

    p = ctx.p
    sol_k = ctx.aux_limit(p.kappa)
    sol_ka = ctx.aux_limit(p.kappa + ctx.alpha.alpha)
    rho0 = rho_trotter_limit(sol_k, sol_ka, 0.0)
    f_k = free_energy(sol_k, p)
    f_ka = free_energy(sol_ka, p)
    assert abs(rho0 - np.exp((f_k - f_ka) / p.T)) < 1e-12


def test_rho_trotter_limit_domain_guard(ctx):
    sol = ctx.aux_limit(ctx.p.kappa)
    d = sol.grid.contour.d
    with pytest.raises(OutOfDomain):
        rho_trotter_limit(sol, sol, 1j * (d - 1e-4))


def test_driving_decays_at_edge(aux_limit_k, params):
    # ln a approaches its constant at the right edge of the contour
    k = int(np.argmax(aux_limit_k.grid.nodes.real))
    const = -2 * params.kappa * params.eta
    assert abs(aux_limit_k.log_a_values[k] - const) < 1e-8
