"""Gauge functions H, their gradients and the vector field a = H^{N-1} grad H.

A gauge is a nonnegative, positively 1-homogeneous convex function that is
positive on the unit sphere.  Only a closed set of analytic families is
supported; each family carries its own exact gradient.

All evaluation routines accept a single vector of shape ``(dim,)`` or a
batch of shape ``(..., dim)`` and broadcast over the leading axes.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import optimize

from .errors import DimensionError, RegularityError, SingularPointError

KINDS = ("euclidean", "pnorm", "linear_image", "ellipsoid", "drifted")

# |component| / |argument| below this marks a point where q < 2 norms lose C^2.
REGULARITY_THRESHOLD = 1e-9


def _as_points(xi, dim):
    xi = np.asarray(xi, dtype=float)
    if xi.ndim == 0 or xi.shape[-1] != dim:
        raise DimensionError(f"expected vectors of length {dim}, got shape {xi.shape}")
    return xi


def _qnorm(y, q):
    return np.sum(np.abs(y) ** q, axis=-1) ** (1.0 / q)


def _qnorm_grad(y, q):
    n = _qnorm(y, q)[..., None]
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.sign(y) * (np.abs(y) / n) ** (q - 1.0)


@dataclass(frozen=True, eq=False)
class Gauge:
    """One member of the supported analytic gauge families.

    Use the classmethod constructors rather than building instances by hand.
    """

    kind: str
    dim: int
    q: float | None = None
    M: np.ndarray | None = field(default=None, repr=False)
    A: np.ndarray | None = field(default=None, repr=False)
    b: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown gauge kind {self.kind!r}")
        if int(self.dim) < 2:
            raise DimensionError("gauges are defined for dim >= 2")
        if self.kind in ("pnorm", "linear_image"):
            if self.q is None or not (1.0 < float(self.q) < np.inf):
                raise ValueError(f"q must lie in (1, inf), got {self.q}")
        if self.kind == "linear_image":
            M = np.asarray(self.M, dtype=float)
            if M.shape != (self.dim, self.dim):
                raise DimensionError(f"M must be {self.dim}x{self.dim}")
            if abs(np.linalg.det(M)) < 1e-12 * max(1.0, np.abs(M).max() ** self.dim):
                raise ValueError("M must be invertible")
        if self.kind == "ellipsoid":
            A = np.asarray(self.A, dtype=float)
            if A.shape != (self.dim, self.dim):
                raise DimensionError(f"A must be {self.dim}x{self.dim}")
            if not np.allclose(A, A.T, rtol=0, atol=1e-12 * np.abs(A).max()):
                raise ValueError("A must be symmetric")
            if np.linalg.eigvalsh(A).min() <= 0:
                raise ValueError("A must be positive definite")
        if self.kind == "drifted":
            b = np.asarray(self.b, dtype=float)
            if b.shape != (self.dim,):
                raise DimensionError(f"b must have length {self.dim}")
            if np.linalg.norm(b) >= 1.0:
                raise ValueError("drift vector must have Euclidean norm < 1")

    # -- constructors ---------------------------------------------------
    @classmethod
    def euclidean(cls, dim):
        return cls("euclidean", int(dim))

    @classmethod
    def pnorm(cls, q, dim):
        return cls("pnorm", int(dim), q=float(q))

    @classmethod
    def linear_image(cls, M, q):
        M = np.array(M, dtype=float)
        return cls("linear_image", M.shape[0], q=float(q), M=M)

    @classmethod
    def ellipsoid(cls, A):
        A = np.array(A, dtype=float)
        return cls("ellipsoid", A.shape[0], A=A)

    @classmethod
    def drifted(cls, b):
        b = np.array(b, dtype=float)
        return cls("drifted", b.shape[0], b=b)

    # -- evaluation -----------------------------------------------------
    def __call__(self, xi):
        xi = _as_points(xi, self.dim)
        if self.kind == "euclidean":
            return np.linalg.norm(xi, axis=-1)
        if self.kind == "pnorm":
            return _qnorm(xi, self.q)
        if self.kind == "linear_image":
            return _qnorm(xi @ self.M.T, self.q)
        if self.kind == "ellipsoid":
            return np.sqrt(np.einsum("...i,ij,...j->...", xi, self.A, xi))
        return np.linalg.norm(xi, axis=-1) + xi @ self.b

    def grad(self, xi, check=True):
        """Gradient of H; 0-homogeneous.

        With ``check=True`` raises at the origin and, for q < 2 families, on
        coordinate hyperplanes of the mapped argument.  Batched callers that
        handle those loci themselves pass ``check=False``.
        """
        xi = _as_points(xi, self.dim)
        if check:
            self._check_differentiable(xi)
        if self.kind == "euclidean":
            return xi / np.linalg.norm(xi, axis=-1, keepdims=True)
        if self.kind == "pnorm":
            return _qnorm_grad(xi, self.q)
        if self.kind == "linear_image":
            return _qnorm_grad(xi @ self.M.T, self.q) @ self.M
        if self.kind == "ellipsoid":
            Axi = xi @ self.A
            return Axi / np.sqrt(np.sum(Axi * xi, axis=-1, keepdims=True))
        return xi / np.linalg.norm(xi, axis=-1, keepdims=True) + self.b

    def hess(self, xi):
        """Hessian of H; on q < 2 hyperplane loci the diverging entries are capped at 1e16."""
        xi = _as_points(xi, self.dim)
        eye = np.eye(self.dim)
        if self.kind in ("euclidean", "drifted"):
            n = np.linalg.norm(xi, axis=-1)[..., None, None]
            u = xi / n[..., 0]
            return (eye - u[..., :, None] * u[..., None, :]) / n
        if self.kind == "ellipsoid":
            h = self(xi)[..., None, None]
            gr = self.grad(xi, check=False)
            return (self.A - gr[..., :, None] * gr[..., None, :]) / h
        y = xi if self.kind == "pnorm" else xi @ self.M.T
        q = self.q
        h = _qnorm(y, q)[..., None]
        gy = _qnorm_grad(y, q)
        with np.errstate(divide="ignore"):
            diag = np.minimum(np.abs(y / h) ** (q - 2.0), 1e16)
        hy = (q - 1.0) / h[..., None] * (diag[..., :, None] * eye - gy[..., :, None] * gy[..., None, :])
        if self.kind == "pnorm":
            return hy
        return self.M.T @ hy @ self.M

    def _check_differentiable(self, xi):
        norms = np.linalg.norm(xi, axis=-1)
        if np.any(norms == 0):
            raise SingularPointError("gauge gradient is undefined at the origin")
        if self.kind in ("pnorm", "linear_image") and self.q < 2:
            y = xi if self.kind == "pnorm" else xi @ self.M.T
            rel = np.abs(y) / np.linalg.norm(y, axis=-1, keepdims=True)
            bad = rel < REGULARITY_THRESHOLD
            if np.any(bad):
                coord = int(np.argwhere(bad)[0][-1])
                raise RegularityError(
                    f"q={self.q} < 2: argument lies on the hyperplane of coordinate {coord}",
                    coordinate=coord,
                )

    def a_field(self, xi, N=None, check=True):
        """a(xi) = H(xi)^{N-1} grad H(xi), with a(0) = 0."""
        N = self.dim if N is None else N
        xi = _as_points(xi, self.dim)
        zero = np.linalg.norm(xi, axis=-1) == 0
        if not np.any(zero):
            return self(xi)[..., None] ** (N - 1) * self.grad(xi, check=check)
        out = np.zeros_like(xi)
        nz = ~zero
        if np.any(nz):
            out[nz] = self(xi[nz])[..., None] ** (N - 1) * self.grad(xi[nz], check=check)
        return out

    @property
    def is_symmetric(self):
        return self.kind != "drifted" or not np.any(self.b)

    def reflected(self):
        """The gauge xi -> H(-xi)."""
        if self.kind == "drifted":
            return Gauge.drifted(-self.b)
        return self

    # -- config ---------------------------------------------------------
    def to_config(self):
        cfg = {"kind": self.kind, "dim": self.dim}
        if self.q is not None:
            cfg["q"] = self.q
        if self.M is not None:
            cfg["M"] = np.asarray(self.M).tolist()
        if self.A is not None:
            cfg["A"] = np.asarray(self.A).tolist()
        if self.b is not None:
            cfg["b"] = np.asarray(self.b).tolist()
        return cfg

    @classmethod
    def from_config(cls, cfg):
        """Build from ``{"kind": ..., <parameters>}``; unknown keys are rejected."""
        cfg = dict(cfg)
        kind = cfg.pop("kind", None)
        allowed = {
            "euclidean": {"dim"},
            "pnorm": {"dim", "q"},
            "linear_image": {"M", "q", "dim"},
            "ellipsoid": {"A", "dim"},
            "drifted": {"b", "dim"},
        }
        if kind not in allowed:
            raise ValueError(f"unknown gauge kind {kind!r}")
        extra = set(cfg) - allowed[kind]
        if extra:
            raise ValueError(f"unknown keys for {kind} gauge: {sorted(extra)}")
        if kind == "euclidean":
            g = cls.euclidean(cfg["dim"])
        elif kind == "pnorm":
            g = cls.pnorm(cfg["q"], cfg["dim"])
        elif kind == "linear_image":
            g = cls.linear_image(cfg["M"], cfg["q"])
        elif kind == "ellipsoid":
            g = cls.ellipsoid(cfg["A"])
        else:
            g = cls.drifted(cfg["b"])
        if "dim" in cfg and int(cfg["dim"]) != g.dim:
            raise DimensionError(f"dim={cfg['dim']} disagrees with parameter shapes ({g.dim})")
        return g


def eval_gauge(g, xi):
    """H(xi) for a single vector or a batch."""
    return g(xi)


def grad_gauge(g, xi):
    return g.grad(xi, check=True)


def a_field(g, N, xi):
    return g.a_field(xi, N)


def sphere_points(dim, n, seed=0):
    """Deterministic point set on S^{dim-1}: axis directions first, then fill."""
    axes = np.vstack([np.eye(dim), -np.eye(dim)])
    m = max(n - 2 * dim, 0)
    if dim == 2:
        theta = (np.arange(m) + 0.5) * (2 * np.pi / max(m, 1))
        fill = np.column_stack([np.cos(theta), np.sin(theta)])
    else:
        fill = np.random.default_rng(seed).standard_normal((m, dim))
        fill /= np.linalg.norm(fill, axis=1, keepdims=True)
    return np.vstack([axes, fill])


def sphere_extrema(g, budget=2000):
    """(c_H, C_H) = (min, max) of H over the unit sphere.

    A deterministic scan is followed by a local polish of the best candidates,
    so the returned bounds are at least as extreme as every scanned value.
    """
    if budget < 2 * g.dim:
        raise ValueError("budget must be at least 2*dim")
    pts = sphere_points(g.dim, budget)
    vals = g(pts)

    def on_sphere(v, sign):
        n = np.linalg.norm(v)
        return sign * g(v / n) if n > 0 else np.inf

    lo, hi = vals.min(), vals.max()
    for sign, idx in ((1.0, np.argmin(vals)), (-1.0, np.argmax(vals))):
        res = optimize.minimize(on_sphere, pts[idx], args=(sign,), method="Nelder-Mead",
                                options={"xatol": 1e-12, "fatol": 1e-15, "maxiter": 4000})
        if sign > 0:
            lo = min(lo, res.fun)
        else:
            hi = max(hi, -res.fun)
    return float(lo), float(hi)


@dataclass(frozen=True)
class EllipticityEstimate:
    c1_hat: float
    c2_hat: float
    lambda_ell_hat: float
    samples: int


def ellipticity_ratios(g, N, xi1, xi2):
    """Monotonicity and Lipschitz quotients of the a-field for given pairs."""
    xi1 = np.atleast_2d(xi1)
    xi2 = np.atleast_2d(xi2)
    da = g.a_field(xi1, N, check=False) - g.a_field(xi2, N, check=False)
    d = xi1 - xi2
    scale = (np.linalg.norm(xi1, axis=1) + np.linalg.norm(xi2, axis=1)) ** (N - 2)
    dn = np.linalg.norm(d, axis=1)
    mono = np.sum(da * d, axis=1) / (scale * dn**2)
    lip = np.linalg.norm(da, axis=1) / (scale * dn)
    return mono, lip


def _singular_rows(g, xi):
    if g.kind in ("pnorm", "linear_image") and g.q < 2:
        y = xi if g.kind == "pnorm" else xi @ g.M.T
        rel = np.abs(y) / np.linalg.norm(y, axis=-1, keepdims=True)
        return np.any(rel < REGULARITY_THRESHOLD, axis=-1)
    return np.linalg.norm(xi, axis=-1) == 0


def check_ellipticity(g, N, samples=1000, seed=0, max_retries=10):
    """Sample the structural constants of the a-field.

    Half of the pairs are independent Gaussian vectors, the other half are
    close pairs (relative separation 1e-3) that probe the local Jacobian.
    lambda_ell_hat bounds both the smallest Hessian eigenvalue of H^N from
    below (as 1/lambda) and the absolute entry sum from above, at unit vectors.
    """
    if samples < 100:
        raise ValueError("samples must be >= 100")
    rng = np.random.default_rng(seed)
    dim = g.dim

    def draw(n):
        out = rng.standard_normal((n, dim))
        for _ in range(max_retries):
            bad = _singular_rows(g, out)
            if not np.any(bad):
                return out
            out[bad] = rng.standard_normal((int(bad.sum()), dim))
        raise RegularityError("could not sample away from non-differentiable points")

    half = samples // 2
    xi1 = draw(samples)
    xi2 = np.empty_like(xi1)
    xi2[:half] = draw(half)
    pert = rng.standard_normal((samples - half, dim))
    xi2[half:] = xi1[half:] + 1e-3 * np.linalg.norm(xi1[half:], axis=1, keepdims=True) * pert
    bad = _singular_rows(g, xi2)
    if np.any(bad):
        xi2[bad] = xi1[bad] * 2.0
    mono, lip = ellipticity_ratios(g, N, xi1, xi2)

    # Hessian of H^N is N * Da, evaluated by central differences of the analytic field.
    n_hess = min(samples, 200)
    units = xi1[:n_hess] / np.linalg.norm(xi1[:n_hess], axis=1, keepdims=True)
    h = 1e-5
    hess = np.empty((n_hess, dim, dim))
    for j in range(dim):
        e = np.zeros(dim)
        e[j] = h
        hess[:, :, j] = N * (g.a_field(units + e, N, check=False)
                             - g.a_field(units - e, N, check=False)) / (2 * h)
    hess = 0.5 * (hess + np.transpose(hess, (0, 2, 1)))
    min_eig = np.linalg.eigvalsh(hess)[:, 0].min()
    entry_sum = np.abs(hess).sum(axis=(1, 2)).max()
    lam = max(entry_sum, 1.0 / min_eig) if min_eig > 0 else np.inf

    return EllipticityEstimate(float(mono.min()), float(lip.max()), float(lam), samples)
