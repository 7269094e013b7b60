"""Dual gauge H0(x) = sup_{H(xi)=1} <x, xi> and its reflection x -> H0(-x).

The maximization runs over the Euclidean sphere (maximize <x, w>/H(w)) and the
winner is rescaled to H = 1.  Its gradient is the H-unit maximizer itself, so
no numerical differentiation of H0 is ever needed.

Solver outline, applied to whole batches of directions at once:

* N = 2: the objective is sampled at the start angles, and a golden-section
  search runs inside the bracket of every sample.
* N >= 3: Riemannian gradient ascent with Armijo backtracking from every start.
* Both finish with a bordered Newton solve of mu*grad H(xi) = x, H(xi) = 1 on
  the best candidate, which drives the stationarity residual to rounding level.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import AmbiguityError, ConvergenceError, DimensionError, SingularPointError
from .gauge import Gauge

START_SEED = 20240607
DISTINCT_DIST = 1e-4
DISTINCT_GAP = 1e-10
RESIDUAL_LIMIT = 1e-6
# Near a coordinate hyperplane of a q < 2 gauge grad H is only Holder there,
# so a maximizer that is accurate to 1e-11 can still leave a residual of
# 1e-6.  Such rows are accepted when the next Newton step is this small.
STEP_LIMIT = 1e-9
ASCENT_ITERS = 8
GOLDEN_ITERS = 64
NEWTON_ITERS = 60
# Longest Newton step on the H-unit sphere.  Where H is nearly flat in one
# coordinate (q > 2 near a coordinate plane) the raw step is huge along it.
MAX_STEP = 0.25


@dataclass(frozen=True)
class DualEvaluation:
    value: float
    maximizer: np.ndarray | None  # None when x = 0
    iterations: int
    residual: float


def closed_form_dual(g):
    """Dual gauge as a member of the supported families, or None."""
    if g.kind == "euclidean":
        return Gauge.euclidean(g.dim)
    if g.kind == "pnorm":
        return Gauge.pnorm(g.q / (g.q - 1.0), g.dim)
    if g.kind == "ellipsoid":
        return Gauge.ellipsoid(np.linalg.inv(g.A))
    if g.kind == "linear_image":
        return Gauge.linear_image(np.linalg.inv(g.M).T, g.q / (g.q - 1.0))
    return None


def start_directions(dim, seed=START_SEED):
    """2*dim axis directions followed by max(8, 4*dim) seeded random ones."""
    axes = np.vstack([np.eye(dim), -np.eye(dim)])
    rnd = np.random.default_rng(seed).standard_normal((max(8, 4 * dim), dim))
    rnd /= np.linalg.norm(rnd, axis=1, keepdims=True)
    return np.vstack([axes, rnd])


def _objective(g, x, w):
    # <x, w> / H(w); x broadcasts against w
    return np.sum(x * w, axis=-1) / g(w)


def _objective_grad(g, x, w):
    h = g(w)[..., None]
    return x / h - np.sum(x * w, axis=-1, keepdims=True) * g.grad(w, check=False) / h**2


def _residual(g, x, xi):
    """|x - H0(x) grad H(xi)| for unit x and H-unit xi."""
    val = np.sum(x * xi, axis=-1, keepdims=True)
    return np.linalg.norm(x - val * g.grad(xi, check=False), axis=-1)


def _candidates_2d(g, X, starts):
    ang0 = np.sort(np.arctan2(starts[:, 1], starts[:, 0]))
    S = ang0.size
    lo = np.roll(ang0, 1)
    lo[0] -= 2 * np.pi
    hi = np.roll(ang0, -1)
    hi[-1] += 2 * np.pi
    m = X.shape[0]
    a = np.broadcast_to(lo, (m, S)).copy()
    b = np.broadcast_to(hi, (m, S)).copy()
    Xb = X[:, None, :]

    def f(t):
        return _objective(g, Xb, np.stack([np.cos(t), np.sin(t)], axis=-1))

    inv = (np.sqrt(5.0) - 1.0) / 2.0
    c = b - inv * (b - a)
    d = a + inv * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(GOLDEN_ITERS):
        left = fc >= fd
        b = np.where(left, d, b)
        a = np.where(left, a, c)
        d_new = np.where(left, c, a + inv * (b - a))
        c_new = np.where(left, b - inv * (b - a), d)
        fd_new = np.where(left, fc, np.nan)
        fc_new = np.where(left, np.nan, fd)
        c, d = c_new, d_new
        need_c = left
        fc = np.where(need_c, f(c), fc_new)
        fd = np.where(need_c, fd_new, f(d))
    t = 0.5 * (a + b)
    W = np.stack([np.cos(t), np.sin(t)], axis=-1)
    return W, GOLDEN_ITERS


def _candidates_nd(g, X, starts):
    m = X.shape[0]
    W = np.broadcast_to(starts, (m,) + starts.shape).copy()
    Xb = X[:, None, :]
    fw = _objective(g, Xb, W)
    step = np.full(fw.shape, 0.5)
    it = 0
    for it in range(1, ASCENT_ITERS + 1):
        gr = _objective_grad(g, Xb, W)
        gn2 = np.sum(gr * gr, axis=-1)
        if np.all(gn2 < 1e-26):
            break
        accepted = np.zeros(fw.shape, dtype=bool)
        t = np.minimum(step * 2.0, 1.0)
        for _ in range(30):
            trial = W + t[..., None] * gr
            trial /= np.linalg.norm(trial, axis=-1, keepdims=True)
            ft = _objective(g, Xb, trial)
            ok = (ft >= fw + 1e-4 * t * gn2) & ~accepted
            W = np.where(ok[..., None], trial, W)
            fw = np.where(ok, ft, fw)
            step = np.where(ok, t, step)
            accepted |= ok
            if np.all(accepted | (gn2 < 1e-26)):
                break
            t = np.where(accepted, t, 0.5 * t)
    return W, it


def _capped(delta):
    dn = np.linalg.norm(delta, axis=1)
    return delta * np.minimum(1.0, MAX_STEP / np.where(dn > 0, dn, 1.0))[:, None]


def _newton(g, X, xi):
    """Bordered Newton polish of H-unit candidates; returns (xi, iterations).

    Each iteration first tries the Newton step (capped at MAX_STEP, then
    halved a few times) and falls back to Levenberg-Marquardt steps with
    growing damping.  Acceptance is on the stationarity residual.  This keeps
    the iteration stable where the Hessian of H blows up (q < 2) or
    degenerates (q > 2) near a coordinate hyperplane: damping steers the step
    into the well-determined coordinates.
    """
    dim = xi.shape[1]
    res = _residual(g, X, xi)
    its = 0
    for its in range(1, NEWTON_ITERS + 1):
        active = np.flatnonzero(res > 1e-15)
        if active.size == 0:
            break
        xa, Xa = xi[active], X[active]
        mu = np.sum(Xa * xa, axis=1)
        gH = g.grad(xa, check=False)
        J = np.zeros((active.size, dim + 1, dim + 1))
        J[:, :dim, :dim] = mu[:, None, None] * g.hess(xa)
        J[:, :dim, dim] = gH
        J[:, dim, :dim] = gH
        F = np.concatenate([mu[:, None] * gH - Xa, (g(xa) - 1.0)[:, None]], axis=1)
        with np.errstate(all="ignore"):
            try:
                newton = np.linalg.solve(J, -F[..., None])[..., 0][:, :dim]
            except np.linalg.LinAlgError:
                newton = np.stack([np.linalg.lstsq(Ji, -Fi, rcond=None)[0] for Ji, Fi in zip(J, F)])[:, :dim]
            newton = _capped(newton)
            JT = np.swapaxes(J, 1, 2)
            JTJ = JT @ J
            JTF = (JT @ F[..., None])[..., 0]
            scale = np.max(np.abs(np.diagonal(JTJ, axis1=1, axis2=2)), axis=1)
        eye = np.eye(dim + 1)
        moved = np.zeros(active.size, dtype=bool)
        tries = [(0.5**k, None) for k in range(4)] + [(1.0, 10.0 ** (k - 14)) for k in range(22)]
        for t, nu in tries:
            with np.errstate(all="ignore"):
                if nu is None:
                    delta = t * newton
                else:
                    A = JTJ + (nu * scale)[:, None, None] * eye
                    try:
                        delta = _capped(np.linalg.solve(A, -JTF[..., None])[..., 0][:, :dim])
                    except np.linalg.LinAlgError:
                        continue
                trial = xa + delta
                trial /= g(trial)[:, None]
                r_new = _residual(g, Xa, trial)
            ok = ~moved & np.isfinite(r_new) & (r_new < res[active])
            xi[active[ok]] = trial[ok]
            res[active[ok]] = r_new[ok]
            moved |= ok
            if np.all(moved):
                break
        if not np.any(moved):
            break
    return xi, its


def _newton_step(g, X, xi):
    dim = xi.shape[1]
    mu = np.sum(X * xi, axis=1)
    gH = g.grad(xi, check=False)
    J = np.zeros((xi.shape[0], dim + 1, dim + 1))
    J[:, :dim, :dim] = mu[:, None, None] * g.hess(xi)
    J[:, :dim, dim] = gH
    J[:, dim, :dim] = gH
    F = np.concatenate([mu[:, None] * gH - X, (g(xi) - 1.0)[:, None]], axis=1)
    with np.errstate(all="ignore"):
        delta = np.stack([np.linalg.lstsq(Ji, -Fi, rcond=None)[0][:dim] for Ji, Fi in zip(J, F)])
    return np.linalg.norm(delta, axis=1)


def _unconverged(g, X, xi, res):
    """Rows whose residual is too large and whose Newton step is not negligible."""
    bad = ~np.isfinite(res) | (res > RESIDUAL_LIMIT)
    idx = np.flatnonzero(bad & np.all(np.isfinite(xi), axis=1))
    if idx.size:
        with np.errstate(all="ignore"):
            step = _newton_step(g, X[idx], xi[idx])
        bad[idx[np.isfinite(step) & (step <= STEP_LIMIT)]] = False
    return bad


def solve_unit(g, X, seed=START_SEED, check_unique=False):
    """Maximizers for a batch of Euclidean-unit directions.

    Returns (values, maximizers, iterations, residuals) with maximizers scaled
    to H = 1.  With ``check_unique`` raises AmbiguityError when a second,
    distant candidate reaches the same value.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    starts = start_directions(g.dim, seed)
    if g.dim == 2:
        W, its = _candidates_2d(g, X, starts)
    else:
        W, its = _candidates_nd(g, X, starts)
    # raw starts stay in the pool so exact axis maximizers are not lost
    W = np.concatenate([W, np.broadcast_to(starts, (X.shape[0],) + starts.shape)], axis=1)
    fw = _objective(g, X[:, None, :], W)
    best = np.argmax(fw, axis=1)  # first index wins ties
    rows = np.arange(X.shape[0])
    w = W[rows, best]
    xi = w / g(w)[:, None]
    xi, n_its = _newton(g, X, xi)
    vals = np.sum(X * xi, axis=1)
    res = _residual(g, X, xi)

    if check_unique:
        Wn = W / g(W)[..., None]
        dist = np.linalg.norm(Wn - xi[:, None, :], axis=-1)
        far = dist > 1e-2
        if np.any(far):
            pr, pc = np.nonzero(far & (fw >= vals[:, None] - 1e-6))
            if pr.size:
                cand, _ = _newton(g, X[pr], Wn[pr, pc].copy())
                cv = np.sum(X[pr] * cand, axis=1)
                cd = np.linalg.norm(cand - xi[pr], axis=1)
                amb = (cd > DISTINCT_DIST) & (np.abs(cv - vals[pr]) < DISTINCT_GAP * (1 + vals[pr]))
                if np.any(amb):
                    raise AmbiguityError("two distinct maximizers reach the same dual value")
    return vals, xi, its + n_its, res


def _check_point(g, x):
    x = np.asarray(x, dtype=float)
    if x.shape != (g.dim,):
        raise DimensionError(f"expected a vector of length {g.dim}, got shape {x.shape}")
    return x


def dual_eval(g, x, check_unique=False):
    """H0(x) by multi-start maximization; x = 0 gives value 0 and no maximizer."""
    x = _check_point(g, x)
    nx = np.linalg.norm(x)
    if nx == 0:
        return DualEvaluation(0.0, None, 0, 0.0)
    u = x[None, :] / nx
    vals, xi, its, res = solve_unit(g, u, check_unique=check_unique)
    if _unconverged(g, u, xi, res)[0]:
        raise ConvergenceError("dual maximization did not reach stationarity",
                               best_value=float(vals[0] * nx), residual=float(res[0]))
    return DualEvaluation(float(vals[0] * nx), xi[0], int(its), float(res[0]))


def dual_hat_eval(g, x, check_unique=False):
    """H0(-x)."""
    x = _check_point(g, x)
    return dual_eval(g, -x, check_unique=check_unique)


def dual_grad(g, x):
    """grad H0(x), i.e. the H-unit maximizer of <x, xi>."""
    x = _check_point(g, x)
    if not np.any(x):
        raise SingularPointError("dual gradient is undefined at the origin")
    return dual_eval(g, x, check_unique=True).maximizer


def dual_hat_grad(g, x):
    """grad of x -> H0(-x), equal to -grad H0(-x)."""
    x = _check_point(g, x)
    return -dual_grad(g, -x)


# -- batch helpers used by quadrature and solution evaluation -------------

def _batch(g, X, use_closed_form):
    X = np.asarray(X, dtype=float)
    if X.shape[-1] != g.dim:
        raise DimensionError(f"expected vectors of length {g.dim}, got shape {X.shape}")
    flat = X.reshape(-1, g.dim)
    norms = np.linalg.norm(flat, axis=1)
    vals = np.zeros(flat.shape[0])
    grads = np.full(flat.shape, np.nan)
    nz = norms > 0
    if np.any(nz):
        dual = closed_form_dual(g) if use_closed_form else None
        if dual is not None:
            vals[nz] = dual(flat[nz])
            grads[nz] = dual.grad(flat[nz], check=False)
        else:
            U = flat[nz] / norms[nz, None]
            v, xi, _, res = solve_unit(g, U)
            bad = _unconverged(g, U, xi, res)
            if np.any(bad):
                k = int(np.flatnonzero(bad)[0])
                raise ConvergenceError("dual maximization did not reach stationarity",
                                       best_value=float(v[k] * norms[nz][k]), residual=float(res[k]))
            vals[nz] = v * norms[nz]
            grads[nz] = xi
    return vals.reshape(X.shape[:-1]), grads.reshape(X.shape)


def dual_values(g, X, use_closed_form=True):
    """H0 on a batch of points (closed form when the family has one)."""
    return _batch(g, X, use_closed_form)[0]


def dual_gradients(g, X, use_closed_form=True):
    """grad H0 on a batch; rows for x = 0 are NaN."""
    return _batch(g, X, use_closed_form)[1]


def hat_values(g, X, use_closed_form=True):
    return dual_values(g, -np.asarray(X, dtype=float), use_closed_form)


def hat_gradients(g, X, use_closed_form=True):
    return -dual_gradients(g, -np.asarray(X, dtype=float), use_closed_form)


def hat_values_and_gradients(g, X, use_closed_form=True):
    v, gr = _batch(g, -np.asarray(X, dtype=float), use_closed_form)
    return v, -gr
