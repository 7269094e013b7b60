"""Radial Poincare inequality on domains with a radial center.

A domain is described by its radial center P and, along each ray from P,
the enter/exit radii.  The inequality

    ||f||_{L^p} <= d ||grad f||_{L^p}

holds for f vanishing on the back contact set (the exit points), with d the
largest enter-to-exit length over all rays.  Three domain families with
exact contact sets are supported: fan shells and unions of fan shells in a
cone about the vertex, and Euclidean balls about an arbitrary center.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .cone import ConvexCone
from .errors import HypothesisError
from .liouville import interior_rays
from .quadrature import PolarRegion, QuadratureSpec, integrate_volume

VANISH_TOL = 1e-12
DEFAULT_QUAD = QuadratureSpec("tensor_polar", budget=2**14, target_rel_err=5e-2)


class _Shells(PolarRegion):
    """Union of radial intervals about a center, restricted to a cone of directions."""

    def __init__(self, dim, center, cone, shells):
        self.dim = dim
        self.center = np.asarray(center, dtype=float)
        self.direction_cone = cone
        self.shells = shells

    def intervals(self, omega, hat):
        n = omega.shape[0]
        return [(np.full(n, float(a)), np.full(n, float(b))) for a, b in self.shells]


class FanShell:
    """(B_R \\ closure B_r) n C, radial center at the vertex."""

    def __init__(self, cone, r, R):
        if not (r >= 0 and R > r):
            raise ValueError("need 0 <= r < R")
        self.cone = cone
        self.r, self.R = float(r), float(R)
        self.dim = cone.dim
        self.P = np.zeros(self.dim)

    @property
    def shells(self):
        return [(self.r, self.R)]

    def radial_width(self):
        return self.R - self.r

    def region(self):
        return _Shells(self.dim, self.P, self.cone, self.shells)

    def ray_radii(self, omega):
        """Per direction, the list of (enter, exit) radii from P."""
        n = np.asarray(omega).shape[0]
        return [(np.full(n, a), np.full(n, b)) for a, b in self.shells]

    def contact_points(self, n, which="back", seed=0):
        rng = np.random.default_rng(seed)
        radii = np.array([b if which == "back" else a for a, b in self.shells])
        if which == "front":
            radii = radii[radii > 0]
        if radii.size == 0:
            return np.zeros((0, self.dim))
        # shells weighted by the area of their contact sphere
        w = radii ** (self.dim - 1)
        k = rng.choice(radii.size, size=n, p=w / w.sum())
        omega = interior_rays(self.cone, n, int(rng.integers(2**32)), margin=0.0)
        return radii[k][:, None] * omega

    def on_back(self, x, tol=1e-9):
        x = np.atleast_2d(x)
        rad = np.linalg.norm(x, axis=1)
        hit = np.zeros(x.shape[0], dtype=bool)
        for _, b in self.shells:
            hit |= np.abs(rad - b) <= tol * b
        return hit & self.cone.closed_mask(x)

    def back_factor(self, X, kappa=0.0):
        """(phi, grad phi) with phi = (exit radius of the shell) - |x|, zero on the back set."""
        rad = np.linalg.norm(X, axis=1)
        starts = np.array([a for a, _ in self.shells])
        ends = np.array([b for _, b in self.shells])
        outer = ends[np.clip(np.searchsorted(starts, rad, side="right") - 1, 0, None)]
        unit = X / np.where(rad > 0, rad, 1.0)[:, None]
        return outer - rad, -unit

    def radial_profile(self, X, k):
        phi, g = self.back_factor(X)
        return phi**k, (k * phi ** (k - 1))[:, None] * g


class MultiShell(FanShell):
    """Disjoint union of fan shells in one cone."""

    def __init__(self, cone, shells):
        sh = sorted((float(a), float(b)) for a, b in shells)
        if not sh:
            raise ValueError("need at least one shell")
        for (a, b), (c, _) in zip(sh, sh[1:] + [(math.inf, None)]):
            if not (0 <= a < b < c):
                raise ValueError("shells must be ordered, nonempty and disjoint")
        self.cone = cone
        self._shells = sh
        self.dim = cone.dim
        self.P = np.zeros(self.dim)

    @property
    def shells(self):
        return list(self._shells)

    def radial_width(self):
        return max(b - a for a, b in self._shells)


class Ball:
    """Euclidean ball B_radius(0) seen from the radial center P."""

    def __init__(self, radius, P):
        if not radius > 0:
            raise ValueError("radius must be positive")
        self.radius = float(radius)
        self.P = np.asarray(P, dtype=float)
        self.dim = self.P.size
        self.cone = None

    @property
    def center_inside(self):
        return float(self.P @ self.P) <= self.radius**2

    def radial_width(self):
        if self.center_inside:
            return self.radius + float(np.linalg.norm(self.P))
        return 2.0 * self.radius

    def region(self):
        # norms do not depend on P, so integrate about the ball's own center
        return _Shells(self.dim, np.zeros(self.dim), None, [(0.0, self.radius)])

    def ray_radii(self, omega):
        omega = np.atleast_2d(omega)
        b = omega @ self.P
        disc = b * b - float(self.P @ self.P) + self.radius**2
        root = np.sqrt(np.maximum(disc, 0.0))
        hi = -b + root
        lo = np.zeros_like(hi) if self.center_inside else -b - root
        miss = (disc <= 0) | (hi <= 0)
        return [(np.where(miss, 0.0, np.maximum(lo, 0.0)), np.where(miss, 0.0, hi))]

    def on_back(self, x, tol=1e-9):
        x = np.atleast_2d(x)
        on_sphere = np.abs(np.linalg.norm(x, axis=1) - self.radius) <= tol * self.radius
        if self.center_inside:
            return on_sphere
        return on_sphere & (np.sum(x * (x - self.P), axis=1) > 0)

    def contact_points(self, n, which="back", seed=0):
        """Boundary points classified by the exit (back) or entry (front) radius of their ray."""
        rng = np.random.default_rng(seed)
        if which == "front" and self.center_inside:
            return np.zeros((0, self.dim))
        out, got = [], 0
        while got < n:
            x = rng.standard_normal((4 * n, self.dim))
            x *= self.radius / np.linalg.norm(x, axis=1, keepdims=True)
            d = x - self.P
            dist = np.linalg.norm(d, axis=1)
            ok = dist > 0
            x, d, dist = x[ok], d[ok], dist[ok]
            lo, hi = self.ray_radii(d / dist[:, None])[0]
            target = hi if which == "back" else lo
            keep = (hi > lo) & (np.abs(target - dist) <= 1e-9 * self.radius)
            if which == "front":
                keep &= np.abs(hi - dist) > 1e-9 * self.radius
            out.append(x[keep])
            got += int(keep.sum())
        return np.vstack(out)[:n]

    def back_factor(self, X, kappa=0.0):
        """(phi, grad phi) vanishing on the back contact set.

        phi = radius^2 - |x|^2 + kappa max(0, <x, P> - radius^2)^2; on the sphere
        only the kappa term survives and it is zero wherever <x, x - P> >= 0.
        """
        s = X @ self.P - self.radius**2
        m = np.maximum(s, 0.0) if not self.center_inside else np.zeros_like(s)
        phi = self.radius**2 - np.sum(X * X, axis=1) + kappa * m * m
        g = -2.0 * X + (2.0 * kappa * m)[:, None] * self.P
        return phi, g

    def radial_profile(self, X, k):
        rad = np.linalg.norm(X, axis=1)
        phi = self.radius - rad
        unit = X / np.where(rad > 0, rad, 1.0)[:, None]
        return phi**k, -(k * phi ** (k - 1))[:, None] * unit


def radial_width(dom):
    return dom.radial_width()


def contact_points(dom, n, which="back", seed=0):
    if which not in ("back", "front"):
        raise ValueError("which must be 'back' or 'front'")
    if n < 1:
        raise ValueError("n must be positive")
    return dom.contact_points(n, which, seed)


# -- test functions ----------------------------------------------------------

@dataclass
class TestFunction:
    """``func(X) -> (values, gradients)`` on points of shape (m, N)."""

    __test__ = False  # not a pytest class

    func: object
    vanishing_set: str = "back"
    label: str = ""

    def __call__(self, X):
        return self.func(np.atleast_2d(np.asarray(X, dtype=float)))


@dataclass
class Polynomial:
    exps: np.ndarray  # (m, N) nonnegative integer exponents
    coef: np.ndarray  # (m,)

    @classmethod
    def random(cls, N, degree, rng):
        exps = np.array([e for e in itertools.product(range(degree + 1), repeat=N) if sum(e) <= degree])
        return cls(exps, rng.uniform(-1.0, 1.0, exps.shape[0]))

    def __call__(self, X):
        m, N = X.shape
        deg = int(self.exps.max()) if self.exps.size else 0
        pw = [np.ones(X.shape)]
        for _ in range(deg):
            pw.append(pw[-1] * X)
        val = np.zeros(m)
        grad = np.zeros((m, N))
        for c, e in zip(self.coef, self.exps):
            fac = [pw[e[j]][:, j] for j in range(N)]
            val += c * np.prod(fac, axis=0)
            for i in range(N):
                if e[i]:
                    rest = [pw[e[i] - 1][:, i]] + [fac[j] for j in range(N) if j != i]
                    grad[:, i] += c * e[i] * np.prod(rest, axis=0)
        return val, grad


def product_function(factor, poly, label=""):
    def f(X):
        a, ga = factor(X)
        b, gb = poly(X)
        return a * b, ga * b[:, None] + a[:, None] * gb

    return TestFunction(f, "back", label)


def admissible_family(dom, n, seed=0, degree=3):
    """Admissible functions for ``dom``: radial profiles and vanishing factor x random polynomial."""
    rng = np.random.default_rng(seed)
    out = []
    for i in range(n):
        if i % 4 == 0:
            k = 1 + (i // 4) % 3
            out.append(TestFunction(lambda X, k=k: dom.radial_profile(X, k), "back", f"radial^{k}"))
        else:
            kappa = float(rng.uniform(0.0, 4.0))
            poly = Polynomial.random(dom.dim, degree, rng)
            out.append(product_function(lambda X, kappa=kappa: dom.back_factor(X, kappa), poly,
                                        f"factor x poly #{i}"))
    return out


# -- the ratio -----------------------------------------------------------------

@dataclass
class PoincareResult:
    ratio: float
    bound: float
    passed: bool
    sigma_rel: float = 0.0
    norms: tuple = field(default=(0.0, 0.0))

    def __iter__(self):
        return iter((self.ratio, self.bound, self.passed))


def check_vanishing(dom, f, samples=256, seed=0, tol=VANISH_TOL):
    if f.vanishing_set not in ("back", "boundary"):
        raise HypothesisError(f"test function declares vanishing set {f.vanishing_set!r}; "
                              "it must vanish on the back contact set")
    pts = dom.contact_points(samples, "back", seed)
    vals = f(pts)[0]
    worst = float(np.max(np.abs(vals))) if vals.size else 0.0
    if not worst <= tol:
        raise HypothesisError(f"test function is {worst:.3e} on the back contact set (tolerance {tol:g})")
    return worst


def poincare_ratios(dom, f, ps, quad=None, check_seed=0):
    """One PoincareResult per exponent in ``ps``; f is evaluated once per node set."""
    ps = [float(p) for p in ps]
    if not all(p >= 1 for p in ps):
        raise ValueError("p must be >= 1")
    quad = quad or DEFAULT_QUAD
    check_vanishing(dom, f, seed=check_seed)
    region = dom.region()
    d = dom.radial_width()
    cache = []

    def evaluate(nodes):
        X = nodes.x.reshape(-1, dom.dim)
        for entry in cache:
            if entry[0].shape == X.shape and np.array_equal(entry[0], X):
                return entry
        v, g = f(X)
        cache.append((X.copy(), np.abs(v), np.linalg.norm(g, axis=1)))
        return cache[-1]

    out = []
    for p in ps:
        F, ef = integrate_volume(region, lambda n: evaluate(n)[1].reshape(n.s.shape) ** p, quad, what="|f|^p")
        G, eg = integrate_volume(region, lambda n: evaluate(n)[2].reshape(n.s.shape) ** p, quad,
                                 what="|grad f|^p")
        if not G > 0:
            raise ValueError("gradient norm vanishes; the ratio is undefined")
        ratio = (F / G) ** (1.0 / p)
        sigma = math.hypot(ef / F if F > 0 else 0.0, eg / G) / p
        out.append(PoincareResult(ratio, d, bool(ratio <= d * (1 + 3 * sigma)), sigma,
                                  (F ** (1 / p), G ** (1 / p))))
    return out


def poincare_ratio(dom, f, p, quad=None, check_seed=0):
    """||f||_p / ||grad f||_p against the radial width; pass if ratio <= d (1 + 3 sigma_rel)."""
    return poincare_ratios(dom, f, [p], quad, check_seed)[0]


# -- corollary on the unit ball ------------------------------------------------

@dataclass
class BallCorollaryReport:
    p: float
    eps: float
    far_center: float  # M with P = (0, ..., 0, -M)
    zero_ratios: np.ndarray  # functions vanishing on the whole sphere, bound 1
    cap_ratios: np.ndarray  # functions vanishing on the cap {x_N > -eps}, bound 2
    zero_bound: float
    cap_bound: float
    zero_pass: bool
    cap_pass: bool

    @property
    def passed(self):
        return self.zero_pass and self.cap_pass


def _cap_cutoff(eps, kappa):
    """1 - |x|^2 + kappa max(0, -eps - x_N)^2: zero on the sphere where x_N >= -eps."""

    def f(X):
        m = np.maximum(-eps - X[:, -1], 0.0)
        phi = 1.0 - np.sum(X * X, axis=1) + kappa * m * m
        g = -2.0 * X
        g[:, -1] -= 2.0 * kappa * m
        return phi, g

    return f


def corollary_ball_check(p, eps, family_size=20, seed=0, N=2, quad=None, degree=3):
    """Unit-ball constants: 1 for functions vanishing on the sphere, 2 for cap-vanishing ones."""
    if not 0 < eps < 1:
        raise ValueError("eps must lie in (0, 1)")
    M = 2.0 / eps  # back contact set from (0, ..., -M) is {x_N > -1/M}, inside the cap
    P = np.zeros(N)
    P[-1] = -M
    inner = Ball(1.0, np.zeros(N))
    outer = Ball(1.0, P)
    rng = np.random.default_rng(seed)
    zero, cap = [], []
    for i in range(family_size):
        poly = Polynomial.random(N, degree, rng)
        kappa = float(rng.uniform(0.0, 4.0))
        if i % 4 == 0:
            k = 1 + (i // 4) % 3
            fz = TestFunction(lambda X, k=k: inner.radial_profile(X, k), "boundary", f"radial^{k}")
        else:
            fz = product_function(lambda X: inner.back_factor(X), poly, "sphere factor x poly")
        fc = product_function(_cap_cutoff(eps, kappa), poly, "cap cutoff x poly")
        zero.append(poincare_ratio(inner, fz, p, quad))
        cap.append(poincare_ratio(outer, fc, p, quad))
    return BallCorollaryReport(
        p=p, eps=eps, far_center=M,
        zero_ratios=np.array([r.ratio for r in zero]), cap_ratios=np.array([r.ratio for r in cap]),
        zero_bound=inner.radial_width(), cap_bound=outer.radial_width(),
        zero_pass=all(r.passed for r in zero), cap_pass=all(r.passed for r in cap),
    )


def sharpness_probe(cone, R=2.0, widths=(0.5, 0.1, 0.02), p=2.0, quad=None):
    """ratio / width for f = R - |x| on thinning fan shells; stays in (0, 1]."""
    rows = []
    for w in widths:
        dom = FanShell(cone, R - w, R)
        res = poincare_ratio(dom, TestFunction(lambda X, dom=dom: dom.radial_profile(X, 1)), p, quad)
        rows.append((float(w), res.ratio / w))
    return rows


def domain_from_config(cfg):
    cfg = dict(cfg)
    kind = cfg.pop("kind", None)
    if kind == "fan_shell":
        allowed = {"cone", "r", "R"}
    elif kind == "multi_shell":
        allowed = {"cone", "shells"}
    elif kind == "ball":
        allowed = {"radius", "P"}
    else:
        raise ValueError(f"unknown domain kind {kind!r}")
    extra = set(cfg) - allowed
    if extra:
        raise ValueError(f"unknown domain keys: {sorted(extra)}")
    if kind == "ball":
        return Ball(cfg["radius"], cfg["P"])
    cone = ConvexCone.from_config(cfg["cone"])
    if kind == "fan_shell":
        return FanShell(cone, cfg["r"], cfg["R"])
    return MultiShell(cone, cfg["shells"])
