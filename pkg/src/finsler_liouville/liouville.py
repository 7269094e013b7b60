"""Closed-form solutions of -div(a(grad u)) = e^u in a cone, and their level sets.

    u(x) = log c_N + N log(lam) - N log(1 + rho^{N/(N-1)}),
    rho  = H0(lam (x0 - x)),  c_N = N (N^2/(N-1))^{N-1}.

Level sets of u are boundaries of Wulff caps centered at x0.  All batch
methods take points of shape (..., N).
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .cone import ConvexCone
from .dual import hat_values_and_gradients
from .errors import DimensionError, EmptyLevelError, PlacementError
from .gauge import Gauge
from .quadrature import mc_sphere_sample


def c_N(N):
    if int(N) != N or N < 2:
        raise ValueError(f"N must be an integer >= 2, got {N}")
    return N * (N * N / (N - 1)) ** (N - 1)


def beta_ref(N):
    """Decay exponent of the explicit family, N^2/(N-1) = (c_N/N)^{1/(N-1)}."""
    return N * N / (N - 1)


def beta0_from_mass(mass, N, unit_cap_measure):
    """(mass / (N * |B_1 n C|))^{1/(N-1)}."""
    if not mass > 0 or not unit_cap_measure > 0:
        raise ValueError("mass and unit cap measure must be positive")
    return (mass / (N * unit_cap_measure)) ** (1.0 / (N - 1))


class LiouvilleSolution:
    """One member of the explicit family, fixed by gauge, scale ``lam`` and center ``x0``.

    The center must respect the cone: anywhere when C = R^N, on R^k x {0}
    when 1 <= k <= N-1, and at the origin when k = 0.
    """

    def __init__(self, gauge, N, lam, x0, cone=None):
        N = int(N)
        if N != gauge.dim:
            raise DimensionError(f"N={N} but gauge has dim {gauge.dim}")
        if not lam > 0:
            raise ValueError("lambda must be positive")
        x0 = np.asarray(x0, dtype=float)
        if x0.shape != (N,):
            raise DimensionError(f"x0 must have length {N}")
        cone = ConvexCone.full_space(N) if cone is None else cone
        if cone.dim != N:
            raise DimensionError("cone dimension differs from N")
        if cone.k == 0 and np.any(x0 != 0):
            raise PlacementError("a pointed cone (k = 0) requires the center at the origin")
        if 0 < cone.k < N and not cone.is_admissible_center(x0, tol=0.0):
            raise PlacementError(f"center must lie in R^{cone.k} x {{0}} for this cone")
        self.gauge = gauge
        self.N = N
        self.lam = float(lam)
        self.x0 = x0
        self.cone = cone
        self.cN = c_N(N)
        self.exponent = N / (N - 1.0)

    @classmethod
    def from_config(cls, cfg, gauge=None, cone=None):
        cfg = dict(cfg)
        extra = set(cfg) - {"N", "lambda", "x0", "gauge", "cone"}
        if extra:
            raise ValueError(f"unknown solution keys: {sorted(extra)}")
        if gauge is None:
            gauge = Gauge.from_config(cfg["gauge"])
        if cone is None and "cone" in cfg:
            cone = ConvexCone.from_config(cfg["cone"])
        return cls(gauge, cfg["N"], cfg.get("lambda", 1.0), cfg.get("x0", [0.0] * int(cfg["N"])), cone)

    def to_config(self):
        return {"N": self.N, "lambda": self.lam, "x0": self.x0.tolist(),
                "gauge": self.gauge.to_config(), "cone": self.cone.to_config()}

    @property
    def t0(self):
        return math.log(self.cN) + self.N * math.log(self.lam)

    @property
    def beta(self):
        return beta_ref(self.N)

    # -- profile in terms of rho = H0(lam (x0 - x)) ------------------------
    def value_from_rho(self, rho):
        return self.t0 - self.N * np.log1p(rho**self.exponent)

    def density_from_rho(self, rho):
        return self.cN * self.lam**self.N / (1.0 + rho**self.exponent) ** self.N

    def grad_from_rho(self, rho, hat_grad):
        """grad u given rho and the reflected dual gradient at x - x0 (any positive multiple)."""
        N = self.N
        coef = -N * self.exponent * rho ** (1.0 / (N - 1)) * self.lam / (1.0 + rho**self.exponent)
        return coef[..., None] * hat_grad

    def rho(self, x):
        x = np.asarray(x, dtype=float)
        return self.lam * hat_values_and_gradients(self.gauge, x - self.x0)[0]

    # -- pointwise evaluation ----------------------------------------------
    def value(self, x):
        return self.value_from_rho(self.rho(x))

    def density(self, x):
        return self.density_from_rho(self.rho(x))

    def grad(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.N:
            raise DimensionError(f"expected vectors of length {self.N}")
        h, hg = hat_values_and_gradients(self.gauge, x - self.x0)
        out = self.grad_from_rho(self.lam * h, hg)
        return np.where((h == 0)[..., None], 0.0, out)

    def __call__(self, x):
        return self.value(x)

    # -- level sets -----------------------------------------------------
    def level_radius(self, t):
        """Wulff radius R(t) of {u = t}."""
        t = np.asarray(t, dtype=float)
        if np.any(t >= self.t0):
            raise EmptyLevelError(f"level t must be below t0 = {self.t0:.12g}")
        inner = np.expm1((self.t0 - t) / self.N)  # (c_N lam^N e^{-t})^{1/N} - 1
        return inner ** ((self.N - 1.0) / self.N) / self.lam

    def level_radius_power(self, t):
        """R^N(t) in the product form c_N (1 - e^{(t-t0)/N})^{N-1} e^{-((N-1) t + t0)/N}."""
        N = self.N
        return self.cN * (-np.expm1((t - self.t0) / N)) ** (N - 1) * np.exp(-((N - 1) * t + self.t0) / N)

    def level_mass(self, t, unit_cap_measure):
        """Mass of {u > t}: [B_N (1 - e^{(t-t0)/N})]^{N-1}."""
        N = self.N
        B = N / (N - 1) * N ** (N / (N - 1)) * unit_cap_measure ** (1.0 / (N - 1))
        return (B * -np.expm1((np.asarray(t, dtype=float) - self.t0) / N)) ** (N - 1)

    def level_point(self, t, omega):
        """Points of {u = t} in the unit directions omega (shape (..., N))."""
        omega = np.asarray(omega, dtype=float)
        h = hat_values_and_gradients(self.gauge, omega)[0]
        return self.x0 + (self.level_radius(t) / h)[..., None] * omega


@dataclass
class AsymptoticReport:
    beta_ref: float
    beta_est: float
    beta_err: float
    variation: float  # sup - inf of u + beta log H0 over all samples
    shell_radii: np.ndarray
    decay: np.ndarray  # max over rays of |x| |grad(u + beta log H0)| per shell
    decay_decreasing: bool
    c_est: float
    upper_bound_holds: bool
    l_est: float
    radii: np.ndarray
    local_beta: np.ndarray  # slope between consecutive radii, averaged over rays


def interior_rays(cone, n, seed=0, margin=1e-2):
    """n unit directions in the cone at angular distance > margin from every facet."""
    rng = np.random.default_rng(seed)
    normals = cone.facet_normals()
    out = []
    while sum(o.shape[0] for o in out) < n:
        omega, _ = mc_sphere_sample(cone.dim, cone, 8 * n, rng)
        if normals.shape[0]:
            omega = omega[np.all(omega @ normals.T < -math.sin(margin), axis=1)]
        out.append(omega)
    return np.vstack(out)[:n]


def asymptotic_checks(sol, ray_samples=8, radius_range=(1e2, 1e4), points_per_ray=64,
                      shells=None, seed=0):
    """Far-field behaviour along rays from x0, radii measured in the reflected dual gauge."""
    lo, hi = radius_range
    if not 10 <= lo < hi:
        raise ValueError("radius_range must satisfy 10 <= min < max")
    N = sol.N
    rays = interior_rays(sol.cone, max(ray_samples, 8), seed)
    hat_w, hat_grad = hat_values_and_gradients(sol.gauge, rays)
    radii = np.geomspace(lo, hi, points_per_ray)
    if not np.isfinite((hi * sol.lam) ** sol.exponent) or not np.isfinite(hi / hat_w.min()):
        raise ValueError("sampling radius exceeds the floating-point range")
    x = sol.x0 + (radii[None, :, None] / hat_w[:, None, None]) * rays[:, None, :]
    rho = sol.lam * radii
    u = sol.value_from_rho(np.broadcast_to(rho, x.shape[:2]))
    logh = np.broadcast_to(np.log(radii), u.shape)

    A = np.column_stack([np.ones(u.size), -logh.ravel()])
    beta_est = float(np.linalg.lstsq(A, u.ravel(), rcond=None)[0][1])
    b = sol.beta
    w = u + b * logh
    variation = float(w.max() - w.min())
    local = -np.diff(u.mean(axis=0)) / np.diff(np.log(radii))
    local_beta = np.column_stack([np.sqrt(radii[1:] * radii[:-1]), local])

    shells = np.array([lo, math.sqrt(lo * hi), hi] if shells is None else shells, dtype=float)
    decay = []
    for r in shells:
        xs = sol.x0 + (r / hat_w)[:, None] * rays
        g = sol.grad_from_rho(np.full(rays.shape[0], sol.lam * r), hat_grad)
        corr = g + b * hat_grad / r
        decay.append(float(np.max(np.linalg.norm(xs, axis=1) * np.linalg.norm(corr, axis=1))))
    decay = np.array(decay)

    normx = np.linalg.norm(x, axis=-1)
    bound = u + N * np.log(normx)
    c_est = float(bound[:, 0].max())
    upper = bool(np.all(bound <= c_est + 1e-12 * abs(c_est)))
    uhat = sol.t0 - u
    ln = np.log(normx)
    l_est = float(np.max(np.maximum(uhat / ln, ln / uhat)))
    return AsymptoticReport(
        beta_ref=b, beta_est=beta_est, beta_err=abs(beta_est - b), variation=variation,
        shell_radii=shells, decay=decay, decay_decreasing=bool(np.all(np.diff(decay) < 0)),
        c_est=c_est, upper_bound_holds=upper, l_est=l_est, radii=radii, local_beta=local_beta,
    )
