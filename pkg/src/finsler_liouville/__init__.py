"""Numerical verification of the Finsler N-Laplacian Liouville equation in convex cones."""
from __future__ import annotations

__version__ = "0.1.0"

from .cone import (Box, ConvexCone, IsoperimetricResult, Simplex, WulffCap, anisotropic_perimeter,
                   cone_contains, cone_normal, isoperimetric_check, set_measure, unit_cap,
                   wulff_cap_measure, wulff_perimeter_identity)
from .dual import dual_eval, dual_grad, dual_hat_eval, dual_hat_grad
from .errors import *  # noqa: F401,F403
from .gauge import Gauge, a_field, check_ellipticity, eval_gauge, grad_gauge, sphere_extrema
from .liouville import LiouvilleSolution, asymptotic_checks, beta_ref, c_N
from .operator import FDScheme, convergence_study, neumann_flux, nlap_residual
from .poincare import (Ball, FanShell, MultiShell, TestFunction, contact_points, corollary_ball_check,
                       poincare_ratio, radial_width)
from .quadrature import QuadratureSpec
from .verify import (BalanceReport, coarea_level_mass, flux_mass_balance, level_geometry_check,
                     mass_quantization_check, pohozaev_check, total_mass)
