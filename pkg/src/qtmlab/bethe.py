"""Finite-Trotter Q-function machinery.

Everything here is exact at finite Trotter number N: Bethe roots refined by
Newton on the closed-form equations, the eigenvalue via the t-Q relation,
the eigenvalue ratio rho, the Q-quotient phi with its normalization, and
the identity checks that tie these objects to the contour integrals.  A
dense transfer-matrix builder (N <= 6) serves as an independent oracle.

All products of sinh factors are evaluated as products of O(1) ratios so
that nothing overflows at large |Re lam|.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .contour import QuadratureGrid, gauss_segment
from .errors import (
    DimensionTooLarge,
    NewtonDivergence,
    PoleProximity,
    RootCollision,
)
from .model import DisorderParam, ModelParams, coth_safe
from .nlie import (
    AuxSolution,
    IterConfig,
    check_finite_driving,
    continuous_branch,
    locate_bethe_roots,
    log1p_exp,
    solve_aux_finite,
)

TWO_PI_I = 2j * np.pi


def vacuum_eigenvalues(lam, N: int, p: ModelParams):
    """Pseudo-vacuum eigenvalues (a, d) of the staggered column transfer matrix:

        a(lam) = [sinh(lam + beta/N) / sinh(lam + beta/N - eta)]^(N/2)
        d(lam) = [sinh(lam - beta/N) / sinh(lam - beta/N + eta)]^(N/2)
    """
    lam = np.asarray(lam, dtype=complex)
    x = p.beta / N
    for z in (lam + x - p.eta, lam - x + p.eta):
        if np.any(np.abs(np.sinh(z)) < 1e-12):
            raise PoleProximity("vacuum eigenvalue denominator too close to zero")
    a = (np.sinh(lam + x) / np.sinh(lam + x - p.eta)) ** (N // 2)
    d = (np.sinh(lam - x) / np.sinh(lam - x + p.eta)) ** (N // 2)
    return a, d


def _vacuum_log_derivatives(lam, N: int, p: ModelParams):
    """(a'/a, d'/d) for the Newton Jacobian."""
    x = p.beta / N
    m = N // 2
    da = m * (coth_safe(lam + x) - coth_safe(lam + x - p.eta))
    dd = m * (coth_safe(lam - x) - coth_safe(lam - x + p.eta))
    return da, dd


@dataclass(frozen=True)
class BetheState:
    """Refined Bethe roots of the dominant state at one twist."""

    N: int
    twist: complex
    roots: np.ndarray
    params: ModelParams

    def __post_init__(self):
        object.__setattr__(self, "roots", np.asarray(self.roots, dtype=complex))
        if self.roots.size != self.N // 2:
            raise ValueError(f"need N/2 = {self.N // 2} roots, got {self.roots.size}")

    def q_pair_ratio(self, lam, shift_num, shift_den):
        """prod_j sinh(lam + shift_num - lam_j)/sinh(lam + shift_den - lam_j)."""
        lam = np.asarray(lam, dtype=complex)[..., None]
        return np.prod(
            np.sinh(lam + shift_num - self.roots) / np.sinh(lam + shift_den - self.roots),
            axis=-1,
        )

    def q_ratio(self, lam, shift):
        """prod_j sinh(lam + shift - lam_j)/sinh(lam - lam_j), overflow-free."""
        return self.q_pair_ratio(lam, shift, 0.0)

    def aux(self, lam):
        """Closed-form auxiliary function q^(-2k) d Q(lam+eta) / (a Q(lam-eta)).

        Evaluated through the ratio Q(lam+eta)/Q(lam-eta), so it stays finite
        at the roots themselves (where it equals -1).
        """
        a, d = vacuum_eigenvalues(lam, self.N, self.params)
        eta = self.params.eta
        return self.params.q_pow(-2.0 * self.twist) * (d / a) * self.q_pair_ratio(lam, eta, -eta)

    def bethe_residuals(self):
        return np.abs(1.0 + self.aux(self.roots))


def q_function(s: BetheState, lam):
    """prod_j sinh(lam - lam_j); grows like exp(N/2 |Re lam|), use ratios at large Re."""
    lam = np.asarray(lam, dtype=complex)[..., None]
    out = np.prod(np.sinh(lam - s.roots), axis=-1)
    return complex(out) if out.shape == () else out


def refine_roots(initial, N: int, twist, p: ModelParams, tol: float = 1e-13, max_iter: int = 50):
    """Newton solve of q^(-2k) d(lam_j) Q(lam_j + eta) + a(lam_j) Q(lam_j - eta) = 0.

    The Jacobian is analytic via logarithmic derivatives.  Residuals are
    reported as |1 + a(lam_j)| of the closed form.
    """
    lam = np.asarray(initial, dtype=complex).copy()
    m = lam.size
    if m != N // 2:
        raise ValueError(f"need N/2 = {N // 2} seeds, got {m}")
    eta = p.eta
    qm2k = p.q_pow(-2.0 * twist)
    for _ in range(max_iter):
        a, d = vacuum_eigenvalues(lam, N, p)
        da, dd = _vacuum_log_derivatives(lam, N, p)
        diff = lam[:, None] - lam[None, :]
        qp = np.prod(np.sinh(diff + eta), axis=1)
        qm = np.prod(np.sinh(diff - eta), axis=1)
        t1 = qm2k * d * qp
        t2 = a * qm
        F = t1 + t2
        scale = np.abs(t2)
        if np.max(np.abs(F) / scale) < tol:
            break
        off = ~np.eye(m, dtype=bool)
        cp = np.zeros((m, m), dtype=complex)
        cm = np.zeros((m, m), dtype=complex)
        cp[off] = coth_safe(diff[off] + eta)
        cm[off] = coth_safe(diff[off] - eta)
        J = -t1[:, None] * cp - t2[:, None] * cm
        J[np.diag_indices(m)] = t1 * (dd + np.sum(cp, axis=1)) + t2 * (da + np.sum(cm, axis=1))
        try:
            step = np.linalg.solve(J, F)
        except np.linalg.LinAlgError as exc:
            raise NewtonDivergence(f"singular Jacobian: {exc}") from exc
        big = np.abs(step) > 0.25
        step[big] *= 0.25 / np.abs(step[big])
        lam = lam - step
    else:
        raise NewtonDivergence(f"Bethe Newton stalled, residual {np.max(np.abs(F) / scale):.2e}")
    if m > 1:
        dist = np.abs(lam[:, None] - lam[None, :])[~np.eye(m, dtype=bool)]
        if np.min(dist) < 1e-8:
            raise RootCollision(f"minimal root distance {np.min(dist):.2e}")
    order = np.lexsort((lam.imag, lam.real))
    return BetheState(N=N, twist=twist, roots=lam[order], params=p)


def lambda_eigenvalue(s: BetheState, lam, near_root_shift: float = 1e-5):
    """Transfer-matrix eigenvalue via the t-Q relation, in pole-free ratio form:

        Lambda = q^k a(lam) Q(lam-eta)/Q(lam) + q^(-k) d(lam) Q(lam+eta)/Q(lam)

    Within 1e-6 of a root the removable singularity is handled by symmetric
    averaging at lam +- 1e-5.
    """
    lam = np.asarray(lam, dtype=complex)
    scalar = lam.shape == ()
    lam = np.atleast_1d(lam)
    dist = np.min(np.abs(lam[:, None] - s.roots[None, :]), axis=-1)
    near = dist < 1e-6
    out = np.empty(lam.shape, dtype=complex)
    if np.any(~near):
        out[~near] = _tq_value(s, lam[~near])
    if np.any(near):
        z = lam[near]
        out[near] = 0.5 * (_tq_value(s, z + near_root_shift) + _tq_value(s, z - near_root_shift))
    return complex(out[0]) if scalar else out


def _tq_value(s: BetheState, lam):
    p = s.params
    a, d = vacuum_eigenvalues(lam, s.N, p)
    return p.q_pow(s.twist) * a * s.q_ratio(lam, -p.eta) + p.q_pow(-s.twist) * d * s.q_ratio(
        lam, p.eta
    )


@dataclass(frozen=True)
class QFunctionBundle:
    """Root sets at twists kappa and kappa + alpha plus the derived constants
    b (asymptotic value of phi) and phi0 = (b + 1/b)/2."""

    state_k: BetheState
    state_ka: BetheState
    alpha: DisorderParam

    def __post_init__(self):
        if self.state_k.N != self.state_ka.N:
            raise ValueError("both states must share the Trotter number")
        expected = self.state_k.twist + self.alpha.alpha
        if abs(self.state_ka.twist - expected) > 1e-12:
            raise ValueError("state_ka twist must equal kappa + alpha")

    @property
    def params(self) -> ModelParams:
        return self.state_k.params

    @property
    def b(self) -> complex:
        return complex(np.exp(np.sum(self.state_k.roots) - np.sum(self.state_ka.roots)))

    @property
    def phi0(self) -> complex:
        b = self.b
        return 0.5 * (b + 1.0 / b)


def phi(bundle: QFunctionBundle, lam):
    """Q(lam | kappa+alpha) / Q(lam | kappa) as a product of sinh ratios."""
    lam = np.asarray(lam, dtype=complex)
    if np.min(np.abs(np.atleast_1d(lam)[:, None] - bundle.state_k.roots[None, :])) < 1e-8:
        raise PoleProximity("phi evaluated at a root of Q(.|kappa)")
    lamc = lam[..., None]
    out = np.prod(
        np.sinh(lamc - bundle.state_ka.roots) / np.sinh(lamc - bundle.state_k.roots), axis=-1
    )
    return complex(out) if out.shape == () else out


def rho_finite(bundle: QFunctionBundle, lam):
    """Eigenvalue ratio Lambda(lam|kappa+alpha)/Lambda(lam|kappa)."""
    return lambda_eigenvalue(bundle.state_ka, lam) / lambda_eigenvalue(bundle.state_k, lam)


def phi0_via_integral(sol_k: AuxSolution, sol_ka: AuxSolution) -> complex:
    """cosh of the contour integral of ln[(1+a(.|kappa+alpha)) / (1+a(.|kappa))].

    The log of the ratio is continued along the contour; its winding is zero
    (the pole parts of both auxiliary functions cancel), so the integral is
    branch-safe even when the individual logarithms wind.
    """
    if sol_k.grid is not sol_ka.grid:
        raise ValueError("both solutions must share the grid")
    grid = sol_k.grid
    p = sol_k.params
    anchor = int(np.argmax(grid.nodes.real))
    ref = np.log1p(p.q_pow(-2.0 * sol_ka.twist)) - np.log1p(p.q_pow(-2.0 * sol_k.twist))
    v, winding = continuous_branch(
        sol_ka.log_one_plus_a - sol_k.log_one_plus_a, anchor, np.asarray(ref)
    )
    if winding != 0:
        raise ValueError(f"log-ratio winding {winding} != 0; contour misses root/pole pairs")
    integral = np.sum(grid.weights * v) / TWO_PI_I
    return complex(np.cosh(integral))


def aux_from_bethe(state: BetheState, grid: QuadratureGrid) -> AuxSolution:
    """Auxiliary-function solution sampled from the closed form on a grid.

    The residual reports consistency with the integral equation when the
    equation is valid on this contour (driving singularities inside), NaN
    otherwise; either way the sampled values themselves are exact.
    """
    p = state.params
    x = np.log(state.aux(grid.nodes))
    anchor = int(np.argmax(grid.nodes.real))
    u, winding = continuous_branch(
        log1p_exp(x), anchor, np.log1p(p.q_pow(-2.0 * state.twist))
    )
    sol = AuxSolution(
        grid=grid,
        params=p,
        twist=state.twist,
        trotter=state.N,
        log_a_values=x,
        log_one_plus_a=u,
        winding=winding,
        iterations=0,
        residual=np.nan,
        source="closed_form",
        _closed_form=state.aux,
    )
    try:
        check_finite_driving(grid, p, state.N)
    except Exception:
        return sol
    resid = float(np.max(np.abs(np.exp(sol.rhs_at(grid.nodes)) / state.aux(grid.nodes) - 1.0)))
    return AuxSolution(
        grid=grid,
        params=p,
        twist=state.twist,
        trotter=state.N,
        log_a_values=x,
        log_one_plus_a=u,
        winding=winding,
        iterations=0,
        residual=resid,
        source="closed_form",
        _closed_form=state.aux,
    )


def sigma_from_phi(bundle: QFunctionBundle, lam):
    """Closed form of the deformed dressed charge:

        sigma(lam) = [q^a phi(lam-eta) - q^(-a) phi(lam+eta)] / (phi0 (q^a - q^(-a)))
    """
    p = bundle.params
    gap = bundle.alpha.gap(p)
    qa = p.q_pow(bundle.alpha.alpha)
    return (qa * phi(bundle, lam - p.eta) - phi(bundle, lam + p.eta) / qa) / (bundle.phi0 * gap)


def verify_id0(bundle: QFunctionBundle, lam) -> float:
    """Residual of the local quotient identity tying phi, rho and the
    auxiliary function (a consequence of the t-Q relation)."""
    p = bundle.params
    qa = p.q_pow(bundle.alpha.alpha)
    rho = rho_finite(bundle, lam)
    aux = bundle.state_k.aux(lam)
    lhs = phi(bundle, lam)
    rhs = phi(bundle, lam + p.eta) / (qa * rho) + (
        qa * phi(bundle, lam - p.eta) - phi(bundle, lam + p.eta) / qa
    ) / (rho * (1.0 + aux))
    return float(abs(lhs - rhs))


def verify_id2(
    bundle: QFunctionBundle,
    grid: QuadratureGrid,
    lam=0.11 + 0.02j,
    R: float | None = None,
    n_nodes: int = 48,
) -> float:
    """Residual of the vertical-contour integral identity

        int_{I2+I4} phi(mu) K_alpha(mu - lam) dmu/(2*pi*i) = -(b + 1/b)(q^a - q^(-a))/2

    where I2/I4 are the verticals of the tall rectangle (height exactly pi,
    from -d to pi - d) whose horizontal edges cancel by i*pi-periodicity.
    The value is independent of R once all roots are enclosed.
    """
    p = bundle.params
    d = grid.contour.d
    R = R or grid.contour.R
    if np.max(np.abs(bundle.state_k.roots.real)) > R - 1.0:
        raise PoleProximity("roots too close to the vertical segments")
    qa = p.q_pow(bundle.alpha.alpha)

    def seg(z0, z1):
        return gauss_segment(z0, z1, n_nodes, n_panels=2)

    zi2, wi2 = seg(R - 1j * d, R + 1j * (np.pi - d))
    zi4, wi4 = seg(-R + 1j * (np.pi - d), -R - 1j * d)
    z = np.concatenate([zi2, zi4])
    w = np.concatenate([wi2, wi4])
    integrand = phi(bundle, z) * (
        coth_safe(z - lam - p.eta) / qa - qa * coth_safe(z - lam + p.eta)
    )
    integral = np.sum(w * integrand) / TWO_PI_I
    target = -0.5 * (bundle.b + 1.0 / bundle.b) * (qa - 1.0 / qa)
    return float(abs(integral - target))


# ---------------------------------------------------------------------------
# dense transfer-matrix oracle
# ---------------------------------------------------------------------------


class QtmExactDiag:
    """Dense staggered six-vertex column transfer matrix for N <= 6.

    Sites alternate between vertex weights at spectral argument
    lam + beta/N - eta (normalized by sinh of that argument) and lam - beta/N
    (normalized by sinh(arg + eta)); the auxiliary trace carries the twist
    diag(q^k, q^(-k)).  The pseudo-vacuum action of the diagonal monodromy
    entries reproduces the closed-form (a, d) pair, which pins the
    convention operationally.
    """

    def __init__(self, N: int, twist, p: ModelParams):
        if N % 2 or N < 2:
            raise ValueError("N must be even and >= 2")
        if N > 6:
            raise DimensionTooLarge(f"dense transfer matrix capped at N = 6, got {N}")
        self.N = N
        self.twist = twist
        self.p = p
        self.dim = 2**N

    def _site_blocks(self, nu, norm):
        sh = np.sinh
        a, b, c = sh(nu + self.p.eta) / norm, sh(nu) / norm, sh(self.p.eta) / norm
        return {
            (0, 0): np.array([[a, 0.0], [0.0, b]], dtype=complex),
            (0, 1): np.array([[0.0, 0.0], [c, 0.0]], dtype=complex),
            (1, 0): np.array([[0.0, c], [0.0, 0.0]], dtype=complex),
            (1, 1): np.array([[b, 0.0], [0.0, a]], dtype=complex),
        }

    def monodromy(self, lam):
        """2x2 block matrix [[A, B], [C, D]] of 2^N x 2^N operators."""
        lam = complex(lam)
        x = self.p.beta / self.N
        eye = np.eye(1, dtype=complex)
        T = {(0, 0): eye, (0, 1): np.zeros_like(eye), (1, 0): np.zeros_like(eye), (1, 1): eye}
        for j in range(self.N):
            if j % 2 == 0:
                nu = lam + x - self.p.eta
                blocks = self._site_blocks(nu, np.sinh(nu))
            else:
                nu = lam - x
                blocks = self._site_blocks(nu, np.sinh(nu + self.p.eta))
            Tn = {}
            for al in (0, 1):
                for be in (0, 1):
                    acc = 0.0
                    for ga in (0, 1):
                        acc = acc + np.kron(blocks[(al, ga)], T[(ga, be)])
                    Tn[(al, be)] = acc
            T = Tn
        return T

    def matrix(self, lam):
        """Twisted transfer matrix q^k A(lam) + q^(-k) D(lam)."""
        T = self.monodromy(lam)
        return self.p.q_pow(self.twist) * T[(0, 0)] + self.p.q_pow(-self.twist) * T[(1, 1)]

    def eigenvalues(self, lam):
        return np.linalg.eigvals(self.matrix(lam))

    def dominant_eigenvalue_at(self, lam) -> complex:
        ev = self.eigenvalues(lam)
        return complex(ev[np.argmax(np.abs(ev))])

    def nearest_eigenvalue(self, lam, target) -> complex:
        ev = self.eigenvalues(lam)
        return complex(ev[np.argmin(np.abs(ev - target))])

    def vacuum_action(self, lam):
        """(A|vac>, D|vac>) coefficients on the all-up state; the off-diagonal
        C must annihilate it."""
        T = self.monodromy(lam)
        vac = np.zeros(self.dim, dtype=complex)
        vac[0] = 1.0
        av = T[(0, 0)] @ vac
        dv = T[(1, 1)] @ vac
        cv = T[(1, 0)] @ vac
        if np.max(np.abs(cv)) > 1e-10 * max(1.0, np.max(np.abs(av))):
            raise AssertionError("pseudo-vacuum is not annihilated by C")
        for v in (av, dv):
            if np.max(np.abs(v[1:])) > 1e-10 * max(1.0, abs(v[0])):
                raise AssertionError("pseudo-vacuum is not an eigenstate of A/D")
        return complex(av[0]), complex(dv[0])


def qtm_exact_diag(N: int, twist, p: ModelParams) -> QtmExactDiag:
    return QtmExactDiag(N, twist, p)


# ---------------------------------------------------------------------------
# root pipelines
# ---------------------------------------------------------------------------


def _roots_from_eigenvalue_samples(eig_at, xs, N, twist, p):
    M = N // 2
    q2 = p.q_pow(2.0)
    rows, rhs = [], []
    for x in xs:
        lam_v = eig_at(x)
        a, d = vacuum_eigenvalues(x, N, p)
        z = np.exp(-2.0 * x)
        ca = p.q_pow(twist - M) * a
        cd = p.q_pow(M - twist) * d
        coeff = [
            lam_v * z**m - ca * (z * q2) ** m - cd * (z / q2) ** m for m in range(1, M + 1)
        ]
        rows.append(coeff)
        rhs.append(-(lam_v - ca - cd))
    c, *_ = np.linalg.lstsq(np.array(rows), np.array(rhs), rcond=None)
    t_roots = np.roots(np.concatenate([c[::-1], [1.0]]))
    lam = -0.5 * np.log(t_roots)
    return lam - 1j * np.pi * np.round(lam.imag / np.pi)


def seed_roots_ed(N: int, twist, p: ModelParams):
    """Root seeds for N <= 6 from the dense oracle.

    Sampling the dominant eigenvalue at a few points turns the t-Q relation
    into a linear system for the coefficients of Q written as
    e^(M lam) P(e^(-2 lam)) with P(0) = 1; the roots of P give the seeds.
    """
    ed = qtm_exact_diag(N, twist, p)
    M = N // 2
    xs = 0.13 + 0.17 * np.arange(M + 3)
    return _roots_from_eigenvalue_samples(ed.dominant_eigenvalue_at, xs, N, twist, p)


def dominant_state(
    N: int,
    twist,
    p: ModelParams,
    grid: QuadratureGrid | None = None,
    seeds=None,
    cfg: IterConfig | None = None,
) -> BetheState:
    """Bethe roots of the dominant state, seeded as appropriate:

    explicit seeds (continuation from a nearby parameter point), the dense
    oracle for N <= 6, or a finite-Trotter integral-equation solve with a
    zero scan -- run at a raised temperature if the contour cannot hold the
    driving singularities at the target one, then walked back down in T.
    """
    if seeds is not None:
        return refine_roots(seeds, N, twist, p)
    if N <= 6:
        return refine_roots(seed_roots_ed(N, twist, p), N, twist, p)
    if grid is None:
        raise ValueError("root location for N > 6 needs a quadrature grid")
    d = grid.contour.d
    t_scan = max(p.T, 2.0 * abs(p.J) * np.sin(p.gamma) / (0.7 * d * N))
    p_scan = ModelParams(gamma=p.gamma, J=p.J, T=t_scan, h=p.h, kappa=twist)
    sol = solve_aux_finite(p_scan, twist, N, grid, cfg)
    state = refine_roots(locate_bethe_roots(sol), N, twist, p_scan)
    t = t_scan
    while t > p.T * (1.0 + 1e-12):
        t = max(p.T, 0.7 * t)
        p_t = ModelParams(gamma=p.gamma, J=p.J, T=t, h=p.h, kappa=twist)
        state = refine_roots(state.roots, N, twist, p_t)
    if abs(t - p.T) > 1e-12 or state.params is not p:
        state = refine_roots(state.roots, N, twist, p)
    return state


def make_bundle(
    N: int,
    alpha: DisorderParam,
    p: ModelParams,
    grid: QuadratureGrid | None = None,
    state_k: BetheState | None = None,
) -> QFunctionBundle:
    """Bundle at (kappa, kappa + alpha); the deformed roots are continued
    from the undeformed ones."""
    kappa = p.kappa
    if state_k is None:
        state_k = dominant_state(N, kappa, p, grid)
    state_ka = _continue_in_alpha(state_k, alpha.alpha)
    return QFunctionBundle(state_k=state_k, state_ka=state_ka, alpha=alpha)


def _continue_in_alpha(state: BetheState, alpha: complex, steps: int = 1) -> BetheState:
    p = state.params
    for attempt in range(4):
        n = steps * 2**attempt
        try:
            cur = state
            for i in range(1, n + 1):
                tw = state.twist + alpha * i / n
                cur = refine_roots(cur.roots, state.N, tw, p)
            return cur
        except (NewtonDivergence, RootCollision):
            continue
    raise NewtonDivergence(f"alpha-continuation failed for alpha = {alpha}")
