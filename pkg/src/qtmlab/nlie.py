"""Nonlinear integral equation for the auxiliary function.

The unknown is x(lam) = ln a(lam) sampled on the contour nodes.  The fixed
point of

    x(lam) = D(lam) - (1/2*pi*i) * sum_l w_l K(lam - mu_l) * ln(1 + a(mu_l))

is reached by damped iteration; ln(1 + a) is tracked on a continuous branch
along the contour (nearest-branch continuation node to node), anchored to
the principal value at the right edge where a -> q^(-2*twist).

Two driving terms are supported: the Trotter-limit form -2*twist*eta -
beta*e(lam), and the finite-Trotter logarithm of sinh ratios.  The finite
form is only valid when the points -+beta/N lie strictly inside the
contour; outside that window the closed-form route through the Q-functions
must be used instead (see bethe.dominant_state).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .contour import QuadratureGrid
from .errors import (
    NewtonDivergence,
    NoConvergence,
    OutOfDomain,
    RootCountMismatch,
    SingularDriving,
)
from .model import ModelParams, bare_energy, kernel_K

TWO_PI_I = 2j * np.pi


@dataclass(frozen=True)
class IterConfig:
    tol: float = 1e-12
    max_iter: int = 500
    damping: float = 0.5


def log1p_exp(x):
    """Continuous-safe ln(1 + e^x) on the principal branch, stable for large |Re x|."""
    x = np.asarray(x, dtype=complex)
    out = np.empty_like(x)
    big = x.real > 30.0
    out[~big] = np.log1p(np.exp(x[~big]))
    out[big] = x[big] + np.log1p(np.exp(-x[big]))
    return out


def continuous_branch(values, anchor_index=None, anchor_value=None):
    """Unwind a sequence of log-values to nearest-branch continuity.

    Returns (unwound, winding) where winding counts the 2*pi*i closure jump
    of the underlying function around the closed node sequence.
    """
    v = np.asarray(values, dtype=complex)
    jumps = np.diff(v.imag)
    steps = np.concatenate(([0.0], np.cumsum(-2.0 * np.pi * np.round(jumps / (2.0 * np.pi)))))
    u = v + 1j * steps
    closure = (v.imag[0] - v.imag[-1]) - 2.0 * np.pi * np.round(
        (v.imag[0] - v.imag[-1]) / (2.0 * np.pi)
    )
    winding = int(np.round((u.imag[-1] + closure - u.imag[0]) / (2.0 * np.pi)))
    if anchor_index is not None and anchor_value is not None:
        shift = 2.0 * np.pi * np.round((anchor_value.imag - u.imag[anchor_index]) / (2.0 * np.pi))
        u = u + 1j * shift
    return u, winding


@dataclass(frozen=True)
class AuxSolution:
    """Converged ln a on a grid plus the off-grid Nystrom evaluator contract.

    trotter is the Trotter number N (even int) or None for the Trotter limit.
    source is "nlie" (fixed-point solve) or "closed_form" (sampled from the
    Q-function representation; residual then reports the consistency of that
    closed form with the integral equation, NaN if the equation is not valid
    on this contour).
    """

    grid: QuadratureGrid
    params: ModelParams
    twist: complex
    trotter: int | None
    log_a_values: np.ndarray
    log_one_plus_a: np.ndarray
    winding: int
    iterations: int
    residual: float
    source: str = "nlie"
    _closed_form: object = field(default=None, repr=False, compare=False)

    @property
    def asymptote(self) -> complex:
        """a -> q^(-2*twist) as Re lam -> +inf."""
        return self.params.q_pow(-2.0 * self.twist)

    def conv_weights(self):
        return self.grid.weights / TWO_PI_I

    def driving(self, lam):
        if self.trotter is None:
            return driving_limit(lam, self.params, self.twist)
        return driving_finite(lam, self.params, self.twist, self.trotter)

    def rhs_at(self, lam):
        """Right-hand side of the defining equation at arbitrary lam (natural
        Nystrom interpolation)."""
        lam = np.asarray(lam, dtype=complex)
        conv = kernel_K(lam[..., None] - self.grid.nodes, self.params) @ (
            self.conv_weights() * self.log_one_plus_a
        )
        return self.driving(lam) - conv


def driving_limit(lam, p: ModelParams, twist):
    return -2.0 * twist * p.eta - p.beta * bare_energy(lam, p)


def _finite_log_terms(lam, p: ModelParams, N: int):
    lam = np.asarray(lam, dtype=complex)
    x = p.beta / N
    return (
        np.log(np.sinh(lam - x))
        + np.log(np.sinh(lam + x + p.eta))
        - np.log(np.sinh(lam + x))
        - np.log(np.sinh(lam - x + p.eta))
    )


def driving_finite(lam, p: ModelParams, twist, N: int):
    """Finite-Trotter driving on the principal branch of each sinh logarithm.

    Branch ambiguities are multiples of 2*pi*i, which drop out of a = e^x
    because N/2 * 2*pi*i * k is a multiple of 2*pi*i for even N; the solver
    re-anchors the on-grid values for cosmetic continuity.
    """
    return -2.0 * twist * p.eta + 0.5 * N * _finite_log_terms(lam, p, N)


def finite_driving_singularities(p: ModelParams, N: int):
    x = p.beta / N
    return np.array([x, -x, -x - p.eta, x - p.eta])


def suggested_refinements(p: ModelParams, contour, N: int | None = None):
    """Local panel refinements near Re = 0 that keep the branch tracking safe.

    On the contour ln a varies like beta*e(lam), whose imaginary part sweeps
    at a rate ~ |beta|/d^2 near the center; node-to-node phase steps must
    stay well under pi for nearest-branch continuation.  At finite Trotter
    number the driving logarithm is additionally singular at -+beta/N inside
    the contour, at distance d - |beta|/N from the horizontal segments.
    """
    d = contour.d
    delta = min(d, contour.gamma - 2.0 * d)
    scales = []
    absb = abs(p.beta)
    if absb > 0:
        phase_safe = np.pi * d * d / (4.0 * absb)
        if phase_safe < 0.45 * delta:
            scales.append(phase_safe)
    if N is not None and absb > 0:
        margin = d - absb / N
        if 0 < margin < 0.9 * delta:
            scales.append(0.5 * margin)
    if not scales:
        return ()
    return ((0.0, float(min(scales))),)


def check_finite_driving(grid: QuadratureGrid, p: ModelParams, N: int):
    """The finite-Trotter equation needs -+beta/N strictly inside the contour
    and every driving zero/pole well away from the nodes."""
    sing = finite_driving_singularities(p, N)
    c = grid.contour
    for s in sing[:2]:
        if not c.contains(s, margin=1e-9):
            raise SingularDriving(
                f"driving singularity {s:.4f} outside the contour (|beta|/N = "
                f"{abs(p.beta) / N:.4f} vs d = {c.d:.4f}); "
                "use a taller contour, a higher temperature, or the closed-form route"
            )
    for s in sing[2:]:
        if c.contains(s, margin=-1e-9):
            raise SingularDriving(f"shifted driving singularity {s:.4f} inside the contour")
    fold = grid.nodes[None, :] - sing[:, None]
    fold = fold - 1j * np.pi * np.round(fold.imag / np.pi)
    if np.min(np.abs(fold)) < 1e-6:
        raise SingularDriving("driving-term zero/pole within 1e-6 of a grid node")


def _iterate(grid, p, twist, driving_values, cfg, x0=None):
    nodes = grid.nodes
    conv = kernel_K(nodes[:, None] - nodes[None, :], p) * (grid.weights / TWO_PI_I)[None, :]
    anchor = int(np.argmax(nodes.real))
    anchor_u = np.log1p(p.q_pow(-2.0 * twist))
    x = np.array(driving_values if x0 is None else x0, dtype=complex)
    theta = cfg.damping
    residual = np.inf
    for it in range(1, cfg.max_iter + 1):
        u, winding = continuous_branch(log1p_exp(x), anchor, anchor_u)
        x_rhs = driving_values - conv @ u
        residual = float(np.max(np.abs(x_rhs - x)))
        if residual < cfg.tol:
            x = x_rhs
            break
        x = (1.0 - theta) * x + theta * x_rhs
    else:
        raise NoConvergence(cfg.max_iter, residual)
    u, winding = continuous_branch(log1p_exp(x), anchor, anchor_u)
    return x, u, winding, it, residual


def solve_aux_limit(
    p: ModelParams,
    twist,
    grid: QuadratureGrid,
    cfg: IterConfig | None = None,
    x0=None,
) -> AuxSolution:
    """Damped fixed point of the Trotter-limit equation, started from the driving term."""
    cfg = cfg or IterConfig()
    d_values = driving_limit(grid.nodes, p, twist)
    x, u, winding, it, res = _iterate(grid, p, twist, d_values, cfg, x0)
    return AuxSolution(grid, p, twist, None, x, u, winding, it, res)


def solve_aux_finite(
    p: ModelParams,
    twist,
    N: int,
    grid: QuadratureGrid,
    cfg: IterConfig | None = None,
    x0=None,
) -> AuxSolution:
    """Fixed point of the finite-Trotter equation (N even, singularities checked)."""
    if N % 2 or N < 2:
        raise ValueError("Trotter number must be even and >= 2")
    cfg = cfg or IterConfig()
    check_finite_driving(grid, p, N)
    d_raw = driving_finite(grid.nodes, p, twist, N)
    # re-anchor the sinh-log branch so the sampled driving is continuous along
    # the contour and vanishes (up to the twist) at the right edge
    terms, _ = continuous_branch(
        _finite_log_terms(grid.nodes, p, N),
        int(np.argmax(grid.nodes.real)),
        0.0 + 0.0j,
    )
    d_values = -2.0 * twist * p.eta + 0.5 * N * terms
    assert np.allclose(np.exp(d_values), np.exp(d_raw), rtol=1e-8)
    x, u, winding, it, res = _iterate(grid, p, twist, d_values, cfg, x0)
    return AuxSolution(grid, p, twist, N, x, u, winding, it, res)


def eval_aux(sol: AuxSolution, lam):
    """a(lam) off the grid, accurate to the on-grid residual.

    Valid in the i*pi-periodic strip |Im lam| < gamma - d (kernel poles must
    stay off the contour) and away from the finite-Trotter driving
    singularities.
    """
    lam = np.asarray(lam, dtype=complex)
    scalar = lam.shape == ()
    lam = np.atleast_1d(lam)
    lam = lam - 1j * np.pi * np.round(lam.imag / np.pi)
    c = sol.grid.contour
    strip = c.gamma - c.d
    if np.any(np.abs(lam.imag) > strip - 0.02 * c.gamma):
        raise OutOfDomain(f"|Im lam| must stay below {strip:.4f} (less a margin)")
    if sol.trotter is not None:
        sing = finite_driving_singularities(sol.params, sol.trotter)
        fold = lam[:, None] - sing[None, :]
        fold = fold - 1j * np.pi * np.round(fold.imag / np.pi)
        if np.min(np.abs(fold)) < 1e-6:
            raise OutOfDomain("lam within 1e-6 of a driving singularity")
    if sol.source == "closed_form":
        vals = sol._closed_form(lam)
    else:
        vals = np.exp(sol.rhs_at(lam))
    return complex(vals[0]) if scalar else vals


def aux_winding(sol: AuxSolution) -> int:
    """Closure winding of 1 + a along the contour (zeros minus poles inside)."""
    return sol.winding


def locate_bethe_roots(
    sol: AuxSolution,
    scan_shape=(40, 12),
    scan_halfwidth: float | None = None,
    newton_tol: float = 1e-10,
    max_densify: int = 2,
):
    """The N/2 zeros of 1 + a inside the contour.

    Mesh scan of |1 + a| on an interior lattice, Newton polish on the
    Nystrom evaluator with a numerically differentiated derivative, and
    deflation by already-found roots.  The count is cross-checked against
    the argument principle: winding(1 + a) + N/2 poles at -beta/N.
    """
    if sol.trotter is None:
        raise ValueError("root location needs a finite-Trotter solution")
    expected = sol.trotter // 2
    c = sol.grid.contour
    count_ap = sol.winding + expected
    if count_ap != expected:
        raise RootCountMismatch(count_ap, expected)

    hw = scan_halfwidth or min(0.8 * c.R, max(2.0, 1.5 * abs(sol.params.beta)))
    nx, ny = scan_shape
    roots = _scan_and_polish(sol, hw, nx, ny, newton_tol, expected)
    for attempt in range(max_densify + 1):
        if len(roots) == expected:
            break
        # roots cluster near the contour center below the mesh resolution:
        # rescan a zoomed box around what was found, denser each attempt
        if roots:
            hw_zoom = 1.4 * max(max(abs(z.real) for z in roots), 0.1)
        else:
            hw_zoom = max(0.5, abs(sol.params.beta))
        nx_zoom = min(800, 25 * expected * (1 << attempt))
        roots = _scan_and_polish(
            sol, hw_zoom, nx_zoom, max(24, ny + 6 * attempt), newton_tol, expected, known=roots
        )
    if len(roots) != expected and expected <= 10:
        # moment seeding: power sums of the zeros from contour quadrature
        # (stable only at low order, hence the cap)
        roots = _polish_seeds(sol, _moment_seeds(sol), newton_tol, expected)
    if len(roots) != expected:
        raise RootCountMismatch(len(roots), expected)
    return np.array(sorted(roots, key=lambda z: (z.real, z.imag)))


def _moment_seeds(sol: AuxSolution):
    """Zeros of 1 + a inside C from power-sum moments.

    p_m = sum_j lam_j^m = (N/2)(-beta/N)^m - m * oint lam^(m-1) ln(1+a) dlam/(2*pi*i),
    converted to polynomial coefficients through the Newton identities.
    """
    M = sol.trotter // 2
    pole = -sol.params.beta / sol.trotter
    w = sol.grid.weights / TWO_PI_I
    z = sol.grid.nodes
    u = sol.log_one_plus_a
    p = np.empty(M + 1, dtype=complex)
    for m in range(1, M + 1):
        p[m] = M * pole**m - m * np.sum(w * z ** (m - 1) * u)
    e = np.zeros(M + 1, dtype=complex)
    e[0] = 1.0
    for k in range(1, M + 1):
        acc = 0.0
        for i in range(1, k + 1):
            acc += (-1.0) ** (i - 1) * e[k - i] * p[i]
        e[k] = acc / k
    coeffs = [(-1.0) ** k * e[k] for k in range(M + 1)]
    return np.roots(coeffs)


def _polish_seeds(sol, seeds, newton_tol, expected, known=()):
    c = sol.grid.contour
    roots = list(known)
    for seed in seeds:
        if len(roots) == expected:
            break
        if not c.contains(seed, margin=1e-6):
            continue
        try:
            z = _newton_deflated(sol, seed, roots, newton_tol)
        except (NewtonDivergence, OutOfDomain):
            continue
        if z is not None and c.contains(z, margin=1e-6):
            if not roots or np.min(np.abs(np.array(roots) - z)) > 1e-6:
                roots.append(z)
    return roots


def _scan_and_polish(sol, hw, nx, ny, newton_tol, expected, known=()):
    c = sol.grid.contour
    xs = np.linspace(-hw, hw, nx)
    # rows drawn quadratically toward the real axis, where the dominant-state
    # roots concentrate
    t = np.linspace(-1.0, 1.0, ny)
    ys = 0.92 * c.d * np.sign(t) * t * t
    mesh = (xs[:, None] + 1j * ys[None, :]).ravel()
    vals = np.abs(1.0 + eval_aux(sol, mesh)).reshape(nx, ny)
    # one seed per basin: strict local minima of |1 + a| on the mesh
    from scipy.ndimage import minimum_filter

    is_min = (vals == minimum_filter(vals, size=3)) & (vals < 0.95)
    mesh = mesh.reshape(nx, ny)
    seeds = mesh[is_min]
    seeds = seeds[np.argsort(vals[is_min])]
    return _polish_seeds(sol, seeds, newton_tol, expected, known)


def _newton_deflated(sol, z, known, tol, max_iter=60):
    """Backtracking Newton on the deflated function F/prod(z - known)."""
    h = 1e-7
    c = sol.grid.contour
    known_arr = np.array(known) if known else None

    def inside(w):
        return abs(w.imag) < 0.95 * c.d and abs(w.real) < c.R

    def g_of(w):
        val = 1.0 + eval_aux(sol, w)
        if known_arr is not None:
            val = val / np.prod(w - known_arr)
        return val

    g = g_of(z)
    for _ in range(max_iter):
        f = 1.0 + eval_aux(sol, z)
        if abs(f) < tol:
            return complex(z)
        fp = (eval_aux(sol, z + h) - eval_aux(sol, z - h)) / (2.0 * h)
        if known_arr is not None:
            gp = (fp - f * np.sum(1.0 / (z - known_arr))) / np.prod(z - known_arr)
        else:
            gp = fp
        if gp == 0:
            raise NewtonDivergence("vanishing derivative in root polish")
        step = g / gp
        if abs(step) > 0.25:
            step *= 0.25 / abs(step)
        # backtrack until the deflated residual decreases and the iterate
        # stays inside the scan box
        for _ in range(8):
            z_new = z - step
            if inside(z_new):
                g_new = g_of(z_new)
                if abs(g_new) < abs(g):
                    break
            step *= 0.5
        else:
            raise NewtonDivergence("no descent direction in root polish")
        z, g = z_new, g_new
    raise NewtonDivergence(f"no convergence, |1+a| = {abs(f):.2e}")


def rho_trotter_limit(sol_k: AuxSolution, sol_ka: AuxSolution, lam) -> complex:
    """Eigenvalue ratio at twists (kappa + alpha)/kappa from the two solved
    auxiliary functions:

        rho(lam) = exp( alpha*eta + oint e(mu - lam) [ln(1+a') - ln(1+a)] dmu/(2*pi*i) )

    The lam = 0 value reproduces the free-energy difference; away from 0 the
    formula is the analytic extrapolation of that relation and is gated by
    the finite-Trotter cross-check.
    """
    if sol_k.grid is not sol_ka.grid:
        raise OutOfDomain("both solutions must live on the same grid")
    lam = complex(lam)
    grid = sol_k.grid
    if not grid.contour.contains(lam) or grid.min_distance(lam) < 3.0 * grid.spacing_near(lam):
        raise OutOfDomain("lam must sit strictly inside the contour, 3 node spacings away")
    p = sol_k.params
    alpha = sol_ka.twist - sol_k.twist
    dv = sol_ka.log_one_plus_a - sol_k.log_one_plus_a
    integral = np.sum(grid.weights * bare_energy(grid.nodes - lam, p) * dv) / TWO_PI_I
    return complex(np.exp(alpha * p.eta + integral))
