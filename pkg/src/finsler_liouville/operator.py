"""Nested finite-difference discretization of div(a(grad u)).

The inner gradient uses central differences of order 2 or 4 with step
``h_inner``; the outer divergence is an order-2 central difference of the
a-field with step ``h_outer``.  Everything is vectorized over points.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .dual import hat_values_and_gradients
from .errors import DegeneracyError, PlacementError
from .liouville import LiouvilleSolution

DEGENERACY_TOL = 1e-8


@dataclass(frozen=True)
class FDScheme:
    h_outer: float = 1e-3
    h_inner: float | None = None
    order: int = 2

    def __post_init__(self):
        if self.h_inner is None:
            object.__setattr__(self, "h_inner", self.h_outer / 8.0)
        if self.order not in (2, 4):
            raise ValueError("order must be 2 or 4")
        floor = 1e3 * np.finfo(float).eps
        if not (self.h_outer > floor and self.h_inner > floor):
            raise ValueError(f"steps must exceed {floor:.1e}")
        if self.h_inner > self.h_outer:
            raise ValueError("h_inner must not exceed h_outer")


def _fd_grad(u, X, h, order):
    """Central gradient of u at points X (m, N) with per-point steps h (m,)."""
    X = np.asarray(X, dtype=float)
    m, N = X.shape
    out = np.empty((m, N))
    for i in range(N):
        e = np.zeros(N)
        e[i] = 1.0
        d = h[:, None] * e
        if order == 2:
            out[:, i] = (u(X + d) - u(X - d)) / (2 * h)
        else:
            out[:, i] = (-u(X + 2 * d) + 8 * u(X + d) - 8 * u(X - d) + u(X - 2 * d)) / (12 * h)
    return out


def fd_grad(u, x, scheme):
    """Central-difference gradient of the scalar field u at x (or a batch) with step h_inner."""
    x = np.asarray(x, dtype=float)
    X = np.atleast_2d(x)
    g = _fd_grad(u, X, np.full(X.shape[0], scheme.h_inner), scheme.order)
    return g[0] if x.ndim == 1 else g


def _step_scale(u, X):
    if isinstance(u, LiouvilleSolution):
        h = hat_values_and_gradients(u.gauge, X - u.x0)[0]
        return np.maximum(1.0, h)
    return np.ones(X.shape[0])


def _check_placement(cone, X, reach):
    if cone is None or cone.normals.shape[0] == 0:
        return
    dist = -(X[:, cone.k:] @ cone.normals.T).max(axis=1)
    bad = dist <= reach
    if np.any(bad):
        i = int(np.flatnonzero(bad)[0])
        raise PlacementError(f"stencil at point {X[i].tolist()} reaches the cone boundary")


def nlap_residuals(g, N, u, X, scheme, cone=None):
    """-div_h(a(grad_h u)) - e^u at each row of X.

    ``u`` is a LiouvilleSolution or any vectorized callable; for a solution
    the steps grow with the dual distance to the center and the cone of the
    solution is used for the placement check.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    m = X.shape[0]
    if isinstance(u, LiouvilleSolution) and cone is None:
        cone = u.cone
    scale = _step_scale(u, X)
    H = scheme.h_outer * scale
    h_in = scheme.h_inner * scale
    reach = H + h_in * (2 if scheme.order == 4 else 1)
    _check_placement(cone, X, 2 * reach - 1e-15)

    div = np.zeros(m)
    for i in range(N):
        e = np.zeros(N)
        e[i] = 1.0
        grads = []
        for sgn in (1.0, -1.0):
            gr = _fd_grad(u, X + sgn * H[:, None] * e, h_in, scheme.order)
            if np.any(np.linalg.norm(gr, axis=1) < DEGENERACY_TOL):
                raise DegeneracyError("gradient vanishes on the stencil (degenerate point)")
            grads.append(gr)
        a_plus = g.a_field(grads[0], N, check=False)[:, i]
        a_minus = g.a_field(grads[1], N, check=False)[:, i]
        div += (a_plus - a_minus) / (2 * H)
    if isinstance(u, LiouvilleSolution):
        f = u.density(X)
    else:
        f = np.exp(u(X))
    return -div - f


def nlap_residual(g, N, u, x, scheme, cone=None):
    return float(nlap_residuals(g, N, u, np.asarray(x, dtype=float)[None, :], scheme, cone)[0])


def neumann_flux(g, sol, C, boundary_samples=1000, seed=0, margin=1e-2):
    """max |<a(grad u), nu>| over points sampled on the facets of C, away from edges."""
    m = C.normals.shape[0]
    if C.k == C.dim or m == 0:
        return 0.0
    rng = np.random.default_rng(seed)
    per = int(math.ceil(boundary_samples / m))
    nus = C.facet_normals()
    worst = 0.0
    for j in range(m):
        pts = C.sample_facet(j, per, rng, margin=margin)
        a = g.a_field(sol.grad(pts), sol.N, check=False)
        flux = np.abs(a @ nus[j])
        if not np.all(np.isfinite(flux)):
            raise ValueError("non-finite conormal flux on facet samples")
        worst = max(worst, float(np.max(flux)))
    return worst


@dataclass
class ConvergenceTable:
    h: np.ndarray
    max_residual: np.ndarray
    order: np.ndarray  # successive-ratio estimates, NaN in the first row
    slope: float  # least-squares slope of log residual against log h
    passed: bool

    def rows(self):
        return list(zip(self.h.tolist(), self.max_residual.tolist(), self.order.tolist()))


def convergence_study(g, N, sol, points, h_list, order=2, inner_ratio=8.0, accept=(1.5, 2.5), cone=None):
    """Max residual over ``points`` for each outer step in a geometric ``h_list``."""
    h = np.asarray(h_list, dtype=float)
    if h.size < 3:
        raise ValueError("need at least three step sizes")
    r = h[1:] / h[:-1]
    if not np.allclose(r, r[0], rtol=1e-6):
        raise ValueError("step sizes must form a geometric sequence")
    res = np.array([
        np.max(np.abs(nlap_residuals(g, N, sol, points, FDScheme(hh, hh / inner_ratio, order), cone)))
        for hh in h
    ])
    with np.errstate(divide="ignore", invalid="ignore"):
        est = np.concatenate([[np.nan], np.log(res[1:] / res[:-1]) / np.log(h[1:] / h[:-1])])
        slope = float(np.polyfit(np.log(h), np.log(res), 1)[0])
    ok = bool(np.isfinite(slope) and accept[0] <= slope <= accept[1])
    return ConvergenceTable(h, res, est, slope, ok)
