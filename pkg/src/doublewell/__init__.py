"""Energy-stable convex minimization for the double-well energy and Allen-Cahn time stepping."""

from .energy import (EnergyParams, QuadraticModel, energy_E, energy_gradient, model_gradient,
                     model_hessian_apply, model_value, p_linearized, potential_F, potential_p)
from .grid import CGResult, Grid, cg_solve, dirichlet_energy, inner_product, laplacian_apply
from .qp import BoxConstraint, QpReport, kkt_residual, project_to_K, solve_box_qp
from .schemes import (SCHEMES, EnergyTrace, SchemeConfig, evolve, minimize_algorithm1,
                      step_convex_splitting, step_fully_implicit, step_ieq_constrained,
                      step_ieq_unconstrained, step_semi_implicit_stabilized)

__version__ = "0.1.0"
