"""Batch driver: ``verify run --config cfg.json [--suite NAME]* [--seed S] [--out DIR] [--budget B]``.

Writes ``report.json`` plus CSV tables under ``tables/``.  Exit code 0 when
every record passes, 1 when at least one fails, 2 for invalid input or IO.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import math
import sys
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .cone import Box, ConvexCone, WulffCap, isoperimetric_check, wulff_perimeter_identity
from .dual import closed_form_dual, dual_gradients, dual_values, hat_values
from .errors import ConfigError, FinslerError
from .gauge import Gauge, check_ellipticity, sphere_extrema, sphere_points
from .liouville import LiouvilleSolution, asymptotic_checks, beta0_from_mass, interior_rays
from .operator import convergence_study, neumann_flux
from .poincare import (Ball, FanShell, MultiShell, admissible_family, corollary_ball_check,
                       poincare_ratios)
from .quadrature import QuadratureSpec
from .verify import (boundary_decay_slope, coarea_level_mass, flux_mass_balance,
                     level_geometry_check, mass_quantization_check, pohozaev_check, total_mass)

SUITES = ("gauge", "dual", "cone", "residual", "mass", "levels", "pohozaev", "poincare")
CONFIG_KEYS = {"gauge", "cone", "solution", "quadrature", "tolerances", "suites", "seed", "output",
               "poincare"}

DEFAULT_CONFIG = {
    "gauge": {"kind": "euclidean", "dim": 2},
    "cone": {"dim": 2, "k": 2, "normals": []},
    "solution": {"lambda": 1.0, "x0": [0.0, 0.0]},
    "quadrature": {"method": "tensor_polar", "budget": 4096, "target_rel_err": 0.01},
    "tolerances": {},
    "suites": ["all"],
    "seed": 0,
    "output": {"dir": "verify_out"},
    "poincare": {"family_size": 8, "p": [1, 2, 4], "eps": 0.1},
}


def _strict(cfg, allowed, where):
    if not isinstance(cfg, dict):
        raise ConfigError(f"{where} must be an object")
    extra = set(cfg) - set(allowed)
    if extra:
        raise ConfigError(f"unknown keys in {where}: {sorted(extra)}")


def load_config(path=None):
    if path is None:
        return json.loads(json.dumps(DEFAULT_CONFIG))
    with open(path) as fh:
        cfg = json.load(fh)
    _strict(cfg, CONFIG_KEYS, "config")
    merged = json.loads(json.dumps(DEFAULT_CONFIG))
    merged.update(cfg)
    return merged


def config_hash(cfg):
    """sha256 of the canonical JSON of the numeric configuration (output paths excluded)."""
    body = {k: v for k, v in cfg.items() if k != "output"}
    text = json.dumps(body, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode()).hexdigest()


@dataclass
class Record:
    name: str
    anchor: str
    lhs: float
    rhs: float
    gap: float
    sigma: float
    tolerance: float
    passed: bool

    def to_json(self):
        return {"name": self.name, "anchor": self.anchor, "lhs": _num(self.lhs), "rhs": _num(self.rhs),
                "gap": _num(self.gap), "sigma": _num(self.sigma), "tolerance": _num(self.tolerance),
                "pass": bool(self.passed)}


def _num(x):
    x = float(x)
    return x if math.isfinite(x) else None


class Run:
    """Builds the objects named in a config and collects check records."""

    def __init__(self, cfg):
        _strict(cfg, CONFIG_KEYS, "config")
        self.cfg = cfg
        self.seed = int(cfg["seed"])
        self.gauge = Gauge.from_config(cfg["gauge"])
        self.N = self.gauge.dim
        self.cone = ConvexCone.from_config(cfg["cone"])
        if self.cone.dim != self.N:
            raise ConfigError(f"cone dim {self.cone.dim} differs from gauge dim {self.N}")
        sol_cfg = cfg["solution"]
        _strict(sol_cfg, {"lambda", "x0"}, "solution")
        x0 = sol_cfg.get("x0", [0.0] * self.N)
        self.sol = LiouvilleSolution(self.gauge, self.N, sol_cfg.get("lambda", 1.0), x0, self.cone)
        q = cfg["quadrature"]
        _strict(q, {"method", "budget", "target_rel_err"}, "quadrature")
        self.quad = QuadratureSpec(q.get("method", "tensor_polar"), int(q.get("budget", 4096)), self.seed,
                                   float(q.get("target_rel_err", 1e-2)))
        self.tolerances = dict(cfg["tolerances"])
        for k, v in self.tolerances.items():
            if not isinstance(v, (int, float)) or not v >= 0:
                raise ConfigError(f"tolerance {k!r} must be a nonnegative number")
        pc = cfg["poincare"]
        _strict(pc, {"family_size", "p", "eps"}, "poincare")
        self.poincare = {**DEFAULT_CONFIG["poincare"], **pc}
        suites = cfg["suites"]
        if not isinstance(suites, list) or not suites:
            raise ConfigError("suites must be a nonempty list")
        self.suites = expand_suites(suites)
        self.records = []
        self.tables = {}
        self.notes = []

    # -- record helpers ----------------------------------------------------
    def _tol(self, name, default):
        return self.tolerances.get(name, default), name in self.tolerances

    def _finish(self, name, anchor, lhs, rhs, gap, sigma, tol, user):
        if user and tol < 3 * sigma:
            self.notes.append(f"{name}: tolerance {tol:.3g} is below the 3-sigma floor {3 * sigma:.3g}; "
                              "reported as a failure")
            ok = False
        else:
            ok = bool(gap <= max(tol, 3 * sigma))
        self.records.append(Record(name, anchor, lhs, rhs, gap, sigma, tol, ok))

    def equality(self, name, anchor, lhs, rhs, sigma=0.0, rel_tol=1e-2):
        """|lhs - rhs| within rel_tol of the larger side (or 3 sigma)."""
        t, user = self._tol(name, rel_tol)
        scale = max(abs(lhs), abs(rhs))
        self._finish(name, anchor, lhs, rhs, abs(lhs - rhs), sigma, t * scale, user)

    def absolute(self, name, anchor, lhs, rhs, abs_tol, sigma=0.0):
        t, user = self._tol(name, abs_tol)
        self._finish(name, anchor, lhs, rhs, abs(lhs - rhs), sigma, t, user)

    def upper(self, name, anchor, lhs, rhs, sigma=0.0):
        """lhs <= rhs, up to 3 sigma."""
        t, user = self._tol(name, 0.0)
        self._finish(name, anchor, lhs, rhs, max(0.0, lhs - rhs), sigma, t * abs(rhs), user)

    def flag(self, name, anchor, lhs, rhs, ok):
        self.records.append(Record(name, anchor, lhs, rhs, abs(lhs - rhs), 0.0, 0.0, bool(ok)))

    def failed(self, name, anchor, exc):
        self.notes.append(f"{name}: {type(exc).__name__}: {exc}")
        self.records.append(Record(name, anchor, math.nan, math.nan, math.nan, math.nan, math.nan, False))

    def guarded(self, name, anchor, fn):
        try:
            fn()
        except (FinslerError, ValueError, ArithmeticError) as exc:
            self.failed(name, anchor, exc)

    # -- suites --------------------------------------------------------------
    def suite_gauge(self):
        g, N = self.gauge, self.N

        def sandwich():
            lo, hi = sphere_extrema(g)
            xi = sphere_points(N, 1000, self.seed) * np.random.default_rng(self.seed).uniform(0.1, 10, (1000, 1))
            r = g(xi) / np.linalg.norm(xi, axis=1)
            worst = max(float(np.max(lo - r)), float(np.max(r - hi)), 0.0)
            self.absolute("gauge_norm_bounds", "gauge comparable to the Euclidean norm", worst, 0.0, 1e-12)

        def ellipticity():
            est = check_ellipticity(g, N, samples=1000, seed=self.seed)
            ok = est.c1_hat > 0 and math.isfinite(est.c2_hat) and math.isfinite(est.lambda_ell_hat)
            self.flag("ellipticity_constants", "monotonicity and growth of the a-field", est.c1_hat, est.c2_hat, ok)

        def homogeneity():
            xi = sphere_points(N, 500, self.seed + 1)
            t = 3.7
            lhs = g.a_field(t * xi, N)
            rhs = t ** (N - 1) * g.a_field(xi, N)
            err = float(np.max(np.linalg.norm(lhs - rhs, axis=1) / np.linalg.norm(rhs, axis=1)))
            self.absolute("a_field_homogeneity", "a-field homogeneous of degree N-1", err, 0.0, 1e-12)

        self.guarded("gauge_norm_bounds", "gauge comparable to the Euclidean norm", sandwich)
        self.guarded("ellipticity_constants", "monotonicity and growth of the a-field", ellipticity)
        self.guarded("a_field_homogeneity", "a-field homogeneous of degree N-1", homogeneity)

    def suite_dual(self):
        g, N = self.gauge, self.N
        rng = np.random.default_rng(self.seed)
        X = rng.standard_normal((1000, N))

        def closed():
            cf = closed_form_dual(g)
            if cf is None:
                return
            num = dual_values(g, X, use_closed_form=False)
            ref = cf(X)
            err = float(np.max(np.abs(num - ref) / ref))
            self.absolute("dual_closed_form", "dual gauge as a supremum over the unit sphere", err, 0.0, 1e-6)

        def identities():
            gx = dual_gradients(g, X, use_closed_form=False)
            h0 = dual_values(g, X, use_closed_form=False)
            e1 = float(np.max(np.abs(g(gx) - 1.0)))
            self.absolute("identity_H_of_grad_dual", "H(grad H0) = 1", e1, 0.0, 1e-6)
            gxi = g.grad(X)
            e2 = float(np.max(np.abs(dual_values(g, gxi, use_closed_form=False) - 1.0)))
            self.absolute("identity_dual_of_grad_H", "H0(grad H) = 1", e2, 0.0, 1e-6)
            rec = h0[:, None] * g.grad(gx)
            e3 = float(np.max(np.linalg.norm(X - rec, axis=1) / np.linalg.norm(X, axis=1)))
            self.absolute("dual_reconstruction", "x = H0(x) grad H(grad H0(x))", e3, 0.0, 1e-6)
            rec2 = g(X)[:, None] * dual_gradients(g, gxi, use_closed_form=False)
            e4 = float(np.max(np.linalg.norm(X - rec2, axis=1) / np.linalg.norm(X, axis=1)))
            self.absolute("gauge_reconstruction", "xi = H(xi) grad H0(grad H(xi))", e4, 0.0, 1e-6)

        self.guarded("dual_closed_form", "dual gauge as a supremum over the unit sphere", closed)
        self.guarded("dual_identities", "H(grad H0) = H0(grad H) = 1", identities)

    def suite_cone(self):
        C, g_hat = self.cone, self.gauge.reflected()

        def identity():
            pid = wulff_perimeter_identity(C, g_hat, self.quad)
            self.equality("wulff_perimeter_identity", "perimeter of the unit Wulff cap equals N times its measure",
                          pid.perimeter, pid.n_times_volume, pid.err, 1e-6)

        def iso():
            cap_res = isoperimetric_check(_cap(self.gauge, C), C, g_hat, self.quad)
            self.equality("isoperimetric_equality", "Wulff caps attain the isoperimetric quotient",
                          cap_res.quotient, cap_res.wulff_quotient, 0.0, 1e-3)
            c = 3.0 * interior_rays(C, 1, self.seed, margin=0.1)[0]
            dist = -float(C.margin(c)) if C.normals.shape[0] else 1.0
            h = min(dist / math.sqrt(C.dim), 1.0) * 0.9
            box = Box(c - h, c + h)
            res = isoperimetric_check(box, C, g_hat, self.quad)
            self.upper("isoperimetric_box", "isoperimetric inequality in the cone",
                       res.wulff_quotient, res.quotient)

        self.guarded("wulff_perimeter_identity", "perimeter of the unit Wulff cap equals N times its measure",
                     identity)
        self.guarded("isoperimetric", "isoperimetric inequality in the cone", iso)

    def suite_residual(self):
        sol, C = self.sol, self.cone

        def study():
            pts = _interior_points(sol, C, 50, self.seed)
            table = convergence_study(self.gauge, self.N, sol, pts, [4e-3, 2e-3, 1e-3])
            self.absolute("pde_residual", "equation satisfied by the explicit family",
                          float(table.max_residual[-1]), 0.0, 1e-3)
            self.absolute("fd_convergence_order", "second-order consistency of the discrete operator",
                          table.slope, 2.0, 0.5)
            self.tables["convergence"] = (["h", "residual", "order", "slope"],
                                          [[h, r, o, table.slope] for h, r, o in table.rows()])

        def flux():
            if C.normals.shape[0] == 0:
                return
            val = neumann_flux(self.gauge, sol, C, boundary_samples=1000, seed=self.seed)
            self.absolute("conormal_flux", "zero conormal derivative on the cone boundary", val, 0.0, 1e-8)

        self.guarded("pde_residual", "equation satisfied by the explicit family", study)
        self.guarded("conormal_flux", "zero conormal derivative on the cone boundary", flux)

    def suite_mass(self):
        sol = self.sol
        anchor = "mass quantization"

        def mass():
            rep = mass_quantization_check(sol, self.quad)
            self.equality("mass_quantization", anchor, rep.lhs, rep.rhs, rep.quadrature_err, 5e-3)
            mc, mc_err = rep.details["mc_value"], rep.details["mc_err"]
            self.equality("mass_quantization_mc", anchor + " (Monte Carlo)", mc, rep.rhs, mc_err, 5e-3)
            self.flag("mass_lower_bound", "mass bounded below by the quantized value",
                      rep.lhs, rep.rhs, rep.details["lower_bound"])
            beta0 = beta0_from_mass(rep.lhs, self.N, rep.details["unit_measure"])
            self.absolute("beta_from_mass", "decay exponent equals the mass-normalized exponent",
                          beta0, sol.beta, 1e-3)

        def invariance():
            vals, errs = [], []
            for lam in (0.5, 1.0, 3.0):
                s = LiouvilleSolution(self.gauge, self.N, lam, sol.x0, self.cone)
                est = total_mass(s, self.quad)
                vals.append(est.mc_value)
                errs.append(est.mc_err)
            spread = max(vals) - min(vals)
            self.absolute("mass_scale_invariance", "total mass independent of the scale",
                          spread, 0.0, 0.0, sigma=float(math.sqrt(2) * max(errs)))

        def asymptotics():
            rep = asymptotic_checks(sol, seed=self.seed)
            self.absolute("decay_exponent", "logarithmic decay rate N^2/(N-1)", rep.beta_est, rep.beta_ref, 1e-3)
            self.flag("decay_correction_monotone", "sharp asymptotics: gradient correction decays",
                      float(rep.decay[-1]), float(rep.decay[0]), rep.decay_decreasing)
            self.flag("upper_log_bound", "upper bound C - N log|x|", rep.c_est, rep.c_est, rep.upper_bound_holds)
            self.tables["asymptotics"] = (["radius", "beta_est"], rep.local_beta.tolist())

        self.guarded("mass_quantization", anchor, mass)
        self.guarded("mass_scale_invariance", "total mass independent of the scale", invariance)
        self.guarded("decay_exponent", "logarithmic decay rate N^2/(N-1)", asymptotics)

    def suite_levels(self):
        sol = self.sol
        rng = np.random.default_rng(self.seed)
        ts = np.concatenate([[sol.t0 - 0.01], sol.t0 - np.sort(rng.uniform(0.1, 6.0, 4))])
        rows = []
        for i, t in enumerate(ts):
            name = f"coarea_level_{i}"

            def one(t=t, name=name):
                rep = coarea_level_mass(sol, t, self.quad)
                self.equality(name, "co-area law for the level mass", rep.lhs, rep.rhs, rep.quadrature_err, 1e-10)
                rows.append([float(t), rep.details["R"], rep.lhs, rep.details["closed_form"]])

            self.guarded(name, "co-area law for the level mass", one)

        def geometry():
            geo, _ = level_geometry_check(sol, ts, seed=self.seed, quad=self.quad)
            self.absolute("level_radius_law", "closed form of the level radius",
                          max(r.radius_power_rel_gap for r in geo), 0.0, 1e-3)
            self.absolute("level_mass_law", "closed form of the level mass",
                          max(r.mass_rel_gap for r in geo), 0.0, 1e-3)
            self.absolute("level_h_grad_constancy", "H(grad u) constant on level sets",
                          max(r.h_grad_spread for r in geo), 0.0, 1e-8)

        self.guarded("level_geometry", "level sets are Wulff spheres", geometry)
        self.tables["levels"] = (["t", "R", "M_measured", "M_closed"], rows)

    def suite_pohozaev(self):
        sol = self.sol
        for R in (1.0, 10.0):
            name = f"flux_mass_R{R:g}"
            self.guarded(name, "flux-mass balance on Wulff caps", lambda R=R, name=name: self._report(
                name, "flux-mass balance on Wulff caps", flux_mass_balance(sol, R, self.quad)))
            name = f"pohozaev_R{R:g}"
            self.guarded(name, "Pohozaev balance on Wulff caps", lambda R=R, name=name: self._report(
                name, "Pohozaev balance on Wulff caps", pohozaev_check(sol, R, self.quad)))

        def slope():
            s, _ = boundary_decay_slope(sol, quad=self.quad)
            self.absolute("boundary_term_decay", "boundary density term decays like R^(N - beta)",
                          s, self.N - sol.beta, 0.3)

        self.guarded("boundary_term_decay", "boundary density term decays like R^(N - beta)", slope)

    def _report(self, name, anchor, rep):
        self.equality(name, anchor, rep.lhs, rep.rhs, rep.quadrature_err, 1e-2)

    def suite_poincare(self):
        N = self.N
        pc = self.poincare
        ps = [float(p) for p in pc["p"]]
        eps = float(pc["eps"])
        orth = ConvexCone.orthant(N)
        far = np.zeros(N)
        far[-1] = -2.0 / eps
        domains = {
            "fan_shell": (FanShell(orth, 1.0, 2.0), 1.0),
            "multi_shell": (MultiShell(orth, [(1.0, 2.0), (4.0, 8.0)]), 4.0),
            "ball": (Ball(1.0, far), 2.0),
        }
        for key, (dom, expected) in domains.items():
            self.absolute(f"radial_width_{key}", "radial width of the domain", dom.radial_width(), expected, 0.0)

            def fam(key=key, dom=dom):
                fs = admissible_family(dom, int(pc["family_size"]), seed=self.seed)
                res = [poincare_ratios(dom, f, ps) for f in fs]
                for j, p in enumerate(ps):
                    worst = max(r[j].ratio for r in res)
                    sig = max(r[j].sigma_rel for r in res) * dom.radial_width()
                    self.upper(f"poincare_{key}_p{p:g}", "radial Poincare inequality", worst,
                               dom.radial_width(), sig)

            self.guarded(f"poincare_{key}", "radial Poincare inequality", fam)

        for p in ps:
            def cor(p=p):
                rep = corollary_ball_check(p, eps, int(pc["family_size"]), self.seed, N=N)
                self.flag(f"ball_constant_1_p{p:g}", "unit-ball constant 1 for functions vanishing on the sphere",
                          float(rep.zero_ratios.max()), rep.zero_bound, rep.zero_pass)
                self.flag(f"ball_constant_2_p{p:g}", "unit-ball constant 2 for functions vanishing on a cap",
                          float(rep.cap_ratios.max()), rep.cap_bound, rep.cap_pass)

            self.guarded(f"ball_constants_p{p:g}", "unit-ball Poincare constants", cor)

    def execute(self):
        for s in self.suites:
            getattr(self, f"suite_{s}")()
        return self


def _cap(gauge, C):
    return WulffCap(gauge, 1.0, np.zeros(C.dim), C)


def _interior_points(sol, C, n, seed, reach=0.2):
    """n points with Wulff radius in [0.2, 10] about x0, at least ``reach`` from the cone boundary."""
    rng = np.random.default_rng(seed)
    out = []
    while sum(len(o) for o in out) < n:
        om = interior_rays(C, 4 * n, int(rng.integers(2**32)), margin=0.0)
        r = rng.uniform(0.2, 10.0, om.shape[0]) / hat_values(sol.gauge, om)
        x = sol.x0 + r[:, None] * om
        if C.normals.shape[0]:
            x = x[-C.margin(x) >= reach]
        x = x[np.linalg.norm(x - sol.x0, axis=1) <= 10.0]
        out.append(x)
    return np.vstack(out)[:n]


def expand_suites(names):
    """Selected suite names in declared order, whatever order they were requested in."""
    chosen = set()
    for s in names:
        if s == "all":
            chosen.update(SUITES)
        elif s in SUITES:
            chosen.add(s)
        else:
            raise ConfigError(f"unknown suite {s!r}")
    return [s for s in SUITES if s in chosen]


def build_report(run, wall_time=None):
    records = [r.to_json() for r in run.records]
    return {
        "tool_version": __version__,
        "config_hash": config_hash(run.cfg),
        "records": records,
        "wall_time": wall_time,
        "overall_pass": bool(records) and all(r["pass"] for r in records),
    }


def emit_tables(tables, out_dir):
    tdir = Path(out_dir) / "tables"
    tdir.mkdir(parents=True, exist_ok=True)
    written = []
    for name, (header, rows) in tables.items():
        path = tdir / f"{name}.csv"
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for row in rows:
                w.writerow([repr(float(v)) for v in row])
        written.append(path)
    return written


def run(config_path=None, suites=None, seed=None, out=None, budget=None, timing=False):
    """Run the selected suites; returns (exit_code, report or None)."""
    t_start = time.perf_counter()
    try:
        cfg = load_config(config_path)
        if suites:
            cfg["suites"] = list(suites)
        if seed is not None:
            cfg["seed"] = int(seed)
        if budget is not None:
            cfg["quadrature"] = {**cfg["quadrature"], "budget": int(budget)}
        out_cfg = cfg.get("output", {})
        _strict(out_cfg, {"dir"}, "output")
        out_dir = Path(out if out is not None else out_cfg.get("dir", "verify_out"))
        r = Run(cfg)
    except (OSError, json.JSONDecodeError) as exc:
        print(f"error: cannot read config: {exc}", file=sys.stderr)
        return 2, None
    except (FinslerError, ValueError, KeyError, TypeError) as exc:
        print(f"error: invalid config: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2, None

    r.execute()
    for note in r.notes:
        print(f"note: {note}", file=sys.stderr)
    wall = round(time.perf_counter() - t_start, 3) if timing else None
    report = build_report(r, wall)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        with open(out_dir / "report.json", "w") as fh:
            json.dump(report, fh, indent=2, sort_keys=True)
            fh.write("\n")
        emit_tables(r.tables, out_dir)
    except OSError as exc:
        print(f"error: cannot write outputs: {exc}", file=sys.stderr)
        return 2, report
    for rec in report["records"]:
        if not rec["pass"]:
            print(f"FAIL {rec['name']}: lhs={rec['lhs']} rhs={rec['rhs']} gap={rec['gap']}", file=sys.stderr)
    return (0 if report["overall_pass"] else 1), report


def main(argv=None):
    parser = argparse.ArgumentParser(prog="verify", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("run", help="run verification suites")
    p.add_argument("--config", help="JSON config (built-in default when omitted)")
    p.add_argument("--suite", action="append", choices=SUITES + ("all",), help="repeatable")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="output directory")
    p.add_argument("--budget", type=int, help="quadrature budget override")
    p.add_argument("--timing", action="store_true", help="record wall time in the report")
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code else 0
    code, _ = run(args.config, args.suite, args.seed, args.out, args.budget, args.timing)
    return code


if __name__ == "__main__":
    sys.exit(main())
