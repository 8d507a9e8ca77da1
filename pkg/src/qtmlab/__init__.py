"""Numerical laboratory for the integral equations of the twisted staggered
six-vertex column transfer matrix: nonlinear and linear solvers on complex
contours, finite-Trotter Q-function machinery, thermodynamic observables,
and machine verification of the identities tying the routes together.
"""

from .model import ALPHA_FLOOR, DisorderParam, ModelParams, bare_energy, coth_safe, kernel_K, kernel_K_alpha
from .contour import Contour, GridConfig, QuadratureGrid, build_grid, build_nested_grids
from .nlie import (
    AuxSolution,
    IterConfig,
    eval_aux,
    locate_bethe_roots,
    rho_trotter_limit,
    solve_aux_finite,
    solve_aux_limit,
)
from .bethe import (
    BetheState,
    QFunctionBundle,
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
from .lineq import (
    DressedCharge,
    GSolution,
    MeasureWeights,
    build_measure,
    dressed_trick_check,
    nystrom_solve,
    solve_G,
    solve_G_plain,
    solve_sigma_alpha,
    solve_sigma_plain,
)
from .correlator import PsiCalculator, PsiEvaluation, one_point_closed_form, psi_xi
from .thermo import ThermoPipeline, ThermoResult, free_energy, magnetization_G, magnetization_sigma

__version__ = "0.1.0"
