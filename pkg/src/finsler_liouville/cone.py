"""Convex cones R^k x C~, Wulff caps inside them, and anisotropic perimeter.

C~ is stored as an intersection of halfspaces {y : <n_j, y> <= 0} acting on
the last N - k coordinates.  A Wulff cap is {x in C : H0(x0 - x) < R}, i.e.
a ball of the reflected dual gauge of H.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy.optimize import linprog

from .dual import hat_values_and_gradients
from .errors import DimensionError, PlacementError, StratumError, UnsupportedShapeError
from .gauge import Gauge
from .quadrature import PolarNodes, PolarRegion, QuadratureSpec, integrate_directions, integrate_volume


@dataclass(frozen=True, eq=False)
class ConvexCone:
    dim: int
    k: int
    normals: np.ndarray = field(default_factory=lambda: np.zeros((0, 0)))

    def __post_init__(self):
        N, k = int(self.dim), int(self.k)
        if N < 1 or not 0 <= k <= N:
            raise DimensionError(f"need 0 <= k <= N, got N={N}, k={k}")
        m = N - k
        normals = np.asarray(self.normals, dtype=float)
        if normals.size == 0:
            normals = np.zeros((0, m))
        if normals.ndim != 2 or normals.shape[1] != m:
            raise DimensionError(f"normals must have {m} columns, got shape {normals.shape}")
        lengths = np.linalg.norm(normals, axis=1)
        if np.any(lengths == 0):
            raise ValueError("zero normal vector")
        normals = normals / lengths[:, None]
        if m > 0:
            if np.linalg.matrix_rank(normals) < m:
                raise ValueError("cone factor contains a line: normals must span R^(N-k)")
            lp = linprog(np.zeros(m), A_ub=normals, b_ub=-np.ones(normals.shape[0]),
                         bounds=[(None, None)] * m, method="highs")
            if lp.status != 0:
                raise ValueError("cone has empty interior")
        object.__setattr__(self, "dim", N)
        object.__setattr__(self, "k", k)
        object.__setattr__(self, "normals", normals)

    # -- constructors ---------------------------------------------------
    @classmethod
    def full_space(cls, N):
        return cls(N, N)

    @classmethod
    def half_space(cls, N):
        """{x_N > 0}."""
        return cls(N, N - 1, [[-1.0]])

    @classmethod
    def orthant(cls, N, m=None):
        """Last m coordinates positive (m = N gives the positive orthant)."""
        m = N if m is None else m
        return cls(N, N - m, -np.eye(m))

    @classmethod
    def from_config(cls, cfg):
        cfg = dict(cfg)
        extra = set(cfg) - {"dim", "k", "normals"}
        if extra:
            raise ValueError(f"unknown cone keys: {sorted(extra)}")
        k = int(cfg["k"])
        normals = np.asarray(cfg.get("normals", []), dtype=float)
        if normals.size:
            N = k + normals.shape[1]
            if "dim" in cfg and int(cfg["dim"]) != N:
                raise DimensionError(f"dim={cfg['dim']} disagrees with normals ({N})")
        else:
            if "dim" not in cfg:
                raise ValueError("cone config without normals needs 'dim'")
            N = int(cfg["dim"])
        return cls(N, k, normals)

    def to_config(self):
        return {"dim": self.dim, "k": self.k, "normals": self.normals.tolist()}

    # -- geometry -------------------------------------------------------
    def facet_normals(self):
        """Outward unit facet normals embedded in R^N as (0_k, n_j)."""
        out = np.zeros((self.normals.shape[0], self.dim))
        out[:, self.k:] = self.normals
        return out

    def margin(self, x):
        """max_j <n_j, y~>; -inf when there are no facets."""
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.dim:
            raise DimensionError(f"expected vectors of length {self.dim}, got shape {x.shape}")
        if self.normals.shape[0] == 0:
            return np.full(x.shape[:-1], -np.inf)
        return np.max(x[..., self.k:] @ self.normals.T, axis=-1)

    def interior_mask(self, x):
        return self.margin(x) < 0

    def closed_mask(self, x, tol=1e-12):
        return self.margin(x) <= tol

    def classify(self, x, tol=1e-12):
        s = float(self.margin(x))
        if s < -tol:
            return "inside"
        if s <= tol:
            return "boundary"
        return "outside"

    def is_admissible_center(self, x0, tol=1e-12):
        """True when x0 lies in R^k x {0}, the only centers the cone is invariant about."""
        x0 = np.asarray(x0, dtype=float)
        return bool(np.all(np.abs(x0[self.k:]) <= tol))

    def normal_at(self, x, tol=1e-9):
        x = np.asarray(x, dtype=float)
        if self.classify(x, tol) != "boundary":
            raise PlacementError("point is not on the cone boundary")
        vals = x[self.k:] @ self.normals.T
        active = np.flatnonzero(vals >= -tol)
        if active.size > 1:
            raise StratumError(f"point lies on {active.size} facets (edge or vertex)")
        return self.facet_normals()[active[0]]

    def sample_facet(self, j, n, rng, margin=1e-2, radius=(0.1, 5.0)):
        """n points on facet j whose angular distance to every other facet exceeds ``margin``."""
        nj = self.normals[j]
        if self.dim - self.k == 1:
            # the only facet of a half-line factor is R^k x {0}
            line = rng.uniform(-radius[1], radius[1], size=(n, self.k))
            return np.hstack([line, np.zeros((n, 1))])
        pts = []
        while sum(p.shape[0] for p in pts) < n:
            y = rng.standard_normal((4 * n, self.dim - self.k))
            y -= (y @ nj)[:, None] * nj
            y /= np.linalg.norm(y, axis=1, keepdims=True)
            others = np.delete(self.normals, j, axis=0)
            if others.shape[0]:
                y = y[np.all(y @ others.T < -margin, axis=1)]
            r = rng.uniform(*radius, size=y.shape[0])
            line = rng.uniform(-radius[1], radius[1], size=(y.shape[0], self.k))
            pts.append(np.hstack([line, r[:, None] * y]))
        return np.vstack(pts)[:n]


def cone_contains(C, x, tol=1e-12):
    return C.classify(x, tol)


def cone_normal(C, x, tol=1e-9):
    return C.normal_at(x, tol)


# -- sets inside the cone -------------------------------------------------

class WulffCap(PolarRegion):
    """{x in C : H0(x0 - x) < R} for the gauge H."""

    def __init__(self, gauge, R, x0, cone):
        if not R > 0:
            raise ValueError("R must be positive")
        x0 = np.asarray(x0, dtype=float)
        if x0.shape != (gauge.dim,) or cone.dim != gauge.dim:
            raise DimensionError("gauge, center and cone dimensions disagree")
        self.gauge = gauge
        self.R = float(R)
        self.x0 = x0
        self.cone = cone
        self.dim = gauge.dim
        self.center = x0
        self.admissible = cone.is_admissible_center(x0)
        self.direction_cone = cone if self.admissible else None

    def contains(self, x):
        x = np.asarray(x, dtype=float)
        return (hat_values_and_gradients(self.gauge, x - self.x0)[0] < self.R) & self.cone.interior_mask(x)

    def intervals(self, omega, hat):
        hi = self.R / hat
        lo = np.zeros_like(hi)
        if self.admissible:
            return [(lo, hi)]
        # clip the ray x0 + s*omega against every halfspace of the cone
        nrm = self.cone.normals
        a = self.x0[self.cone.k:] @ nrm.T
        b = omega[:, self.cone.k:] @ nrm.T
        with np.errstate(divide="ignore", invalid="ignore"):
            cut = -a[None, :] / b
        hi = np.minimum(hi, np.min(np.where(b > 0, cut, np.inf), axis=1))
        lo = np.maximum(lo, np.max(np.where(b < 0, cut, -np.inf), axis=1))
        blocked = np.any((b == 0) & (a[None, :] > 0), axis=1)
        hi = np.where(blocked, lo, hi)
        return [(lo, hi)]

    def surface_integral(self, f, quad, what="cap surface integral"):
        """int over C n dB_R of f(nodes, nu) dH^{N-1}, nu the outward unit normal."""
        N, R = self.dim, self.R

        def density(omega, hat, hat_grad):
            gn = np.linalg.norm(hat_grad, axis=-1)
            s = R / hat
            x = self.x0 + s[:, None] * omega
            nodes = PolarNodes(x=x, s=s, omega=omega, hat=hat, hat_grad=hat_grad)
            val = np.asarray(f(nodes, hat_grad / gn[:, None]), dtype=float)
            val = val * R ** (N - 1) * gn / hat**N
            if not self.admissible:
                val = np.where(self.cone.interior_mask(x), val, 0.0)
            return val

        return integrate_directions(N, self.direction_cone, density, quad, gauge=self.gauge, what=what)


@dataclass(frozen=True)
class Box:
    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        lo, hi = np.asarray(self.lo, float), np.asarray(self.hi, float)
        if lo.shape != hi.shape or np.any(hi <= lo):
            raise ValueError("box needs lo < hi componentwise")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @property
    def dim(self):
        return self.lo.size

    def vertices(self):
        grids = np.meshgrid(*[(a, b) for a, b in zip(self.lo, self.hi)], indexing="ij")
        return np.stack([g.ravel() for g in grids], axis=1)

    def volume(self):
        return float(np.prod(self.hi - self.lo))

    def faces(self):
        """(outward normal, area, centroid) for each of the 2N faces."""
        side = self.hi - self.lo
        mid = 0.5 * (self.lo + self.hi)
        out = []
        for i in range(self.dim):
            area = float(np.prod(np.delete(side, i)))
            for sgn, val in ((-1.0, self.lo[i]), (1.0, self.hi[i])):
                nu = np.zeros(self.dim)
                nu[i] = sgn
                c = mid.copy()
                c[i] = val
                out.append((nu, area, c))
        return out


@dataclass(frozen=True)
class Simplex:
    vertices_: np.ndarray

    def __post_init__(self):
        V = np.asarray(self.vertices_, float)
        if V.ndim != 2 or V.shape[0] != V.shape[1] + 1:
            raise ValueError("a simplex in R^N needs N+1 vertices")
        if abs(np.linalg.det(V[1:] - V[0])) < 1e-14:
            raise ValueError("degenerate simplex")
        object.__setattr__(self, "vertices_", V)

    @property
    def dim(self):
        return self.vertices_.shape[1]

    def vertices(self):
        return self.vertices_

    def volume(self):
        V = self.vertices_
        return abs(float(np.linalg.det(V[1:] - V[0]))) / math.factorial(self.dim)

    def faces(self):
        V = self.vertices_
        N = self.dim
        out = []
        for i in range(N + 1):
            F = np.delete(V, i, axis=0)
            E = (F[1:] - F[0]).T
            area = math.sqrt(max(np.linalg.det(E.T @ E), 0.0)) / math.factorial(N - 1)
            # normal = null vector of the edge matrix, pointed away from the opposite vertex
            nu = np.linalg.svd(E.T)[2][-1]
            if np.dot(nu, V[i] - F[0]) > 0:
                nu = -nu
            out.append((nu, area, F.mean(axis=0)))
        return out


class IsoperimetricResult(NamedTuple):
    quotient: float
    wulff_quotient: float
    is_equality: bool


def wulff_cap_measure(cap, quad=None):
    """(L^N(cap), err) by polar quadrature."""
    quad = quad or QuadratureSpec()
    return integrate_volume(cap, lambda nodes: np.ones(nodes.s.shape), quad, what="cap measure")


def _polytope_in_cone(E, C):
    if E.dim != C.dim:
        raise DimensionError("set and cone dimensions disagree")
    if not np.all(C.closed_mask(E.vertices(), tol=1e-12)):
        raise UnsupportedShapeError("polytope must lie in the closed cone")


def anisotropic_perimeter(E, C, g_hat, quad=None):
    """(P, err): integral of g_hat(nu) over the part of dE inside the open cone C.

    For polytopes, faces lying in a facet of C are dropped; the result is exact.
    """
    quad = quad or QuadratureSpec()
    if isinstance(E, WulffCap):
        cap = E if E.cone is C else WulffCap(E.gauge, E.R, E.x0, C)
        return cap.surface_integral(lambda nodes, nu: g_hat(nu), quad, what="perimeter")
    if isinstance(E, (Box, Simplex)):
        _polytope_in_cone(E, C)
        total = 0.0
        for nu, area, centroid in E.faces():
            if C.classify(centroid, tol=1e-12) == "boundary":
                continue
            total += float(g_hat(nu)) * area
        return total, 0.0
    raise UnsupportedShapeError(f"unsupported set type {type(E).__name__}")


def set_measure(E, C, quad=None):
    quad = quad or QuadratureSpec()
    if isinstance(E, WulffCap):
        cap = E if E.cone is C else WulffCap(E.gauge, E.R, E.x0, C)
        return wulff_cap_measure(cap, quad)
    if isinstance(E, (Box, Simplex)):
        _polytope_in_cone(E, C)
        return E.volume(), 0.0
    raise UnsupportedShapeError(f"unsupported set type {type(E).__name__}")


def unit_cap(g_hat, C):
    """Unit cap of the gauge whose reflected dual is the dual of g_hat, centered at 0."""
    return WulffCap(g_hat.reflected(), 1.0, np.zeros(C.dim), C)


def isoperimetric_check(E, C, g_hat, quad=None, eq_tol=1e-3):
    """Isoperimetric quotient of E against the optimal one of the unit Wulff cap.

    The optimal quotient is N * |B_1 n C|^{1/N}, using P(B_1; C) = N |B_1 n C|.
    """
    quad = quad or QuadratureSpec()
    N = C.dim
    per, _ = anisotropic_perimeter(E, C, g_hat, quad)
    vol, _ = set_measure(E, C, quad)
    if not vol > 0:
        raise ValueError("set has zero measure inside the cone")
    quotient = per / vol ** ((N - 1) / N)
    v1, _ = wulff_cap_measure(unit_cap(g_hat, C), quad)
    wq = N * v1 ** (1.0 / N)
    return IsoperimetricResult(float(quotient), float(wq), bool(abs(quotient - wq) / wq < eq_tol))


@dataclass(frozen=True)
class PerimeterIdentity:
    perimeter: float
    n_times_volume: float
    err: float  # combined quadrature error of the two sides

    def __iter__(self):
        return iter((self.perimeter, self.n_times_volume))

    @property
    def agrees(self):
        return abs(self.perimeter - self.n_times_volume) <= max(3 * self.err, 1e-12 * abs(self.perimeter))


def wulff_perimeter_identity(C, g_hat, quad=None):
    """Perimeter of the unit Wulff cap against N times its measure."""
    quad = quad or QuadratureSpec()
    cap = unit_cap(g_hat, C)
    per, perr = anisotropic_perimeter(cap, C, g_hat, quad)
    vol, verr = wulff_cap_measure(cap, quad)
    return PerimeterIdentity(per, C.dim * vol, math.hypot(perr, C.dim * verr))
