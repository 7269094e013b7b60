"""Integral identities of the explicit solutions, each returned as a BalanceReport.

Every check compares two independently computed numbers.  A check passes
when the gap is within max(tolerance, 3 * quadrature error); tolerances are
given relative to the larger side.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate

from .cone import WulffCap, wulff_cap_measure
from .liouville import interior_rays
from .quadrature import QuadratureSpec, _mc_reduce, integrate_volume, mc_sphere_sample

# Rounding allowance for identities whose two sides are both computed to
# near machine precision by the tensor rule.
ROUNDING_REL = 1e-10

__all__ = [
    "QuadratureSpec", "BalanceReport", "MassEstimate", "total_mass", "mass_quantization_check",
    "flux_mass_balance", "coarea_level_mass", "level_geometry_check", "pohozaev_check",
    "pohozaev_boundary_term", "boundary_decay_slope",
]


@dataclass
class BalanceReport:
    lhs: float
    rhs: float
    abs_gap: float
    rel_gap: float
    quadrature_err: float
    tolerance: float  # absolute
    passed: bool
    details: dict = field(default_factory=dict)

    @classmethod
    def compare(cls, lhs, rhs, err, rel_tol, details=None, extra_ok=True):
        lhs, rhs, err = float(lhs), float(rhs), float(err)
        gap = abs(lhs - rhs)
        scale = max(abs(lhs), abs(rhs))
        tol = rel_tol * scale
        rel = gap / scale if scale > 0 else 0.0
        ok = bool(gap <= max(tol, 3.0 * err) and extra_ok)
        return cls(lhs, rhs, gap, rel, err, tol, ok, dict(details or {}))


@dataclass
class MassEstimate:
    value: float  # semi-analytic polar reduction
    err: float
    mc_value: float  # direct importance-sampled Monte Carlo
    mc_err: float
    unit_measure: float
    unit_err: float

    def __iter__(self):
        return iter((self.value, self.err))


def _unit_cap(sol, R=1.0, center=None):
    center = np.zeros(sol.N) if center is None else center
    return WulffCap(sol.gauge, R, center, sol.cone)


def _radial_mass_integral(sol):
    N, a = sol.N, sol.exponent
    scale = sol.cN * sol.lam**N

    def f(r):
        return r ** (N - 1) * scale / (1.0 + (sol.lam * r) ** a) ** N

    # split at the bend of the profile so the adaptive rule sees both regimes
    knee = 1.0 / sol.lam
    v1, e1 = integrate.quad(f, 0.0, knee, epsabs=0, epsrel=1e-13, limit=200)
    v2, e2 = integrate.quad(f, knee, np.inf, epsabs=0, epsrel=1e-13, limit=200)
    return v1 + v2, e1 + e2


def _mc_mass(sol, quad):
    """Importance sampling with the Euclidean profile as proposal.

    With w = (lam r)^{N/(N-1)} the Euclidean profile makes w BetaPrime(N-1, 1)
    distributed, and the weight reduces to the ratio of the two profiles,
    which stays bounded as r -> infinity, so no truncation is needed.
    """
    N, a = sol.N, sol.exponent
    const = sol.cN / N

    def sampler(n, rng):
        omega, wo = mc_sphere_sample(N, sol.cone, n, rng)
        B = rng.random(n) ** (1.0 / (N - 1))
        w = B / (1.0 - B)
        r = w ** (1.0 / a) / sol.lam
        x = sol.x0 + r[:, None] * omega
        ratio = sol.density(x) * (1.0 + w) ** N / (sol.cN * sol.lam**N)
        inside = sol.cone.interior_mask(x) if not sol.cone.is_admissible_center(sol.x0) else True
        return np.where(inside, ratio, 0.0) * const * wo * n

    return _mc_reduce(sampler, quad)


def total_mass(sol, quad=None, mc_quad=None):
    """Integral of e^u over the cone, by polar reduction and by direct Monte Carlo."""
    quad = quad or QuadratureSpec()
    if mc_quad is None:
        mc_quad = quad if quad.method == "monte_carlo" else QuadratureSpec(
            "monte_carlo", max(quad.budget, 2**16), quad.seed, quad.target_rel_err)
    unit, unit_err = wulff_cap_measure(_unit_cap(sol), quad)
    radial, radial_err = _radial_mass_integral(sol)
    value = sol.N * unit * radial
    err = sol.N * (radial * unit_err + unit * radial_err)
    mc_value, mc_err = _mc_mass(sol, mc_quad)
    return MassEstimate(value, err, mc_value, mc_err, unit, unit_err)


def mass_quantization_check(sol, quad=None, rel_tol=5e-3, mc_quad=None):
    """Total mass against c_N |B_1 n C|; both mass estimators must agree with it."""
    quad = quad or QuadratureSpec()
    est = total_mass(sol, quad, mc_quad)
    rhs = sol.cN * est.unit_measure
    rhs_err = sol.cN * est.unit_err
    mc = BalanceReport.compare(est.mc_value, rhs, math.hypot(est.mc_err, rhs_err), rel_tol)
    lower_ok = est.value + 3 * est.err >= rhs - 3 * rhs_err - ROUNDING_REL * rhs
    lower_mc_ok = est.mc_value + 3 * est.mc_err >= rhs * (1 - ROUNDING_REL) - 3 * rhs_err
    details = {
        "mc_value": est.mc_value, "mc_err": est.mc_err, "mc_pass": mc.passed,
        "unit_measure": est.unit_measure, "lower_bound": bool(lower_ok and lower_mc_ok),
    }
    return BalanceReport.compare(est.value, rhs, math.hypot(est.err, rhs_err), rel_tol,
                                 details, extra_ok=mc.passed)


def _solution_cap(sol, R):
    return WulffCap(sol.gauge, R, sol.x0, sol.cone)


def _density_nodes(sol):
    return lambda nodes: sol.density_from_rho(sol.lam * nodes.s * nodes.hat)


def _grad_on_surface(sol, R, nodes):
    return sol.grad_from_rho(np.full(nodes.s.shape, sol.lam * R), nodes.hat_grad)


def flux_mass_balance(sol, R, quad=None, rel_tol=1e-2):
    """Outward conormal flux through the cap boundary against the mass inside."""
    quad = quad or QuadratureSpec()
    cap = _solution_cap(sol, R)
    g, N = sol.gauge, sol.N

    def flux(nodes, nu):
        a = g.a_field(_grad_on_surface(sol, R, nodes), N, check=False)
        return -np.sum(a * nu, axis=-1)

    lhs, el = cap.surface_integral(flux, quad, what="flux")
    rhs, er = integrate_volume(cap, _density_nodes(sol), quad, what="cap mass")
    return BalanceReport.compare(lhs, rhs, math.hypot(el, er), rel_tol, {"R": R})


def coarea_level_mass(sol, t, quad=None, rel_tol=ROUNDING_REL):
    """Mass of {u > t} against the surface integral of H^N(grad u)/|grad u| over {u = t}.

    ``details`` also carries the closed-form level mass and its relative gap.
    """
    quad = quad or QuadratureSpec()
    R = float(sol.level_radius(t))
    cap = _solution_cap(sol, R)
    g, N = sol.gauge, sol.N

    def integrand(nodes, nu):
        du = _grad_on_surface(sol, R, nodes)
        return g(du) ** N / np.linalg.norm(du, axis=-1)

    lhs, el = integrate_volume(cap, _density_nodes(sol), quad, what="level mass")
    rhs, er = cap.surface_integral(integrand, quad, what="co-area surface")
    unit, _ = wulff_cap_measure(_unit_cap(sol), quad)
    closed = float(sol.level_mass(t, unit))
    details = {"t": float(t), "R": R, "closed_form": closed, "closed_rel_gap": abs(lhs - closed) / closed}
    return BalanceReport.compare(lhs, rhs, math.hypot(el, er), rel_tol, details)


@dataclass
class LevelGeometry:
    t: float
    radius: float
    radius_power_rel_gap: float  # R(t)^N vs the product formula
    level_value_gap: float  # max |u - t| on the sampled level points
    h_grad_spread: float  # relative spread of H(grad u) on the level set
    grad_norm_spread: float  # relative spread of |grad u|
    mass_reconstructed: float  # N H^{N-1}(grad u) |B_1 n C| R^{N-1}
    mass_closed: float
    mass_rel_gap: float


def _spread(v):
    return float((v.max() - v.min()) / abs(v.mean()))


def level_geometry_check(sol, t_list, n_dirs=256, seed=0, quad=None, tol=1e-8, mass_tol=1e-3):
    """Per-level geometry: constancy of H(grad u), radius formulas, level-mass reconstruction.

    Returns (rows, passed).
    """
    quad = quad or QuadratureSpec()
    N = sol.N
    unit, _ = wulff_cap_measure(_unit_cap(sol), quad)
    omega = interior_rays(sol.cone, n_dirs, seed)
    rows = []
    ok = True
    for t in t_list:
        R = float(sol.level_radius(t))
        x = sol.level_point(t, omega)
        du = sol.grad(x)
        hg = sol.gauge(du)
        rp = float(sol.level_radius_power(t))
        recon = N * float(np.mean(hg)) ** (N - 1) * unit * R ** (N - 1)
        closed = float(sol.level_mass(t, unit))
        row = LevelGeometry(
            t=float(t), radius=R, radius_power_rel_gap=abs(R**N - rp) / rp,
            level_value_gap=float(np.max(np.abs(sol.value(x) - t))),
            h_grad_spread=_spread(hg), grad_norm_spread=_spread(np.linalg.norm(du, axis=1)),
            mass_reconstructed=recon, mass_closed=closed, mass_rel_gap=abs(recon - closed) / closed,
        )
        ok &= row.h_grad_spread <= tol and row.radius_power_rel_gap <= mass_tol and row.mass_rel_gap <= mass_tol
        rows.append(row)
    return rows, bool(ok)


def pohozaev_boundary_term(sol, R, quad=None):
    """(value, err) of the boundary integral of e^u <x - x0, nu>."""
    quad = quad or QuadratureSpec()
    cap = _solution_cap(sol, R)

    def integrand(nodes, nu):
        return sol.density_from_rho(np.full(nodes.s.shape, sol.lam * R)) * np.sum((nodes.x - sol.x0) * nu, axis=-1)

    return cap.surface_integral(integrand, quad, what="boundary density term")


def pohozaev_check(sol, R, quad=None, rel_tol=1e-2):
    """Pohozaev balance on the cap of radius R about x0 (facet terms vanish there)."""
    quad = quad or QuadratureSpec()
    cap = _solution_cap(sol, R)
    g, N = sol.gauge, sol.N
    mass, em = integrate_volume(cap, _density_nodes(sol), quad, what="cap mass")
    bnd, eb = pohozaev_boundary_term(sol, R, quad)

    def integrand(nodes, nu):
        du = _grad_on_surface(sol, R, nodes)
        h = g(du)
        gh = g.grad(du, check=False)
        d = nodes.x - sol.x0
        return (h ** (N - 1) * np.sum(gh * nu, axis=-1) * np.sum(d * du, axis=-1)
                - h**N / N * np.sum(d * nu, axis=-1))

    rhs, er = cap.surface_integral(integrand, quad, what="Pohozaev boundary")
    lhs = N * mass - bnd
    err = math.sqrt((N * em) ** 2 + eb**2 + er**2)
    return BalanceReport.compare(lhs, rhs, err, rel_tol, {"R": R, "mass": mass, "boundary_density_term": bnd})


def boundary_decay_slope(sol, radii=(10.0, 30.0, 100.0), quad=None):
    """Least-squares slope of log(boundary e^u term) against log R; expected N - beta0."""
    vals = [pohozaev_boundary_term(sol, R, quad)[0] for R in radii]
    return float(np.polyfit(np.log(radii), np.log(vals), 1)[0]), vals
