from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from finsler_liouville.cone import ConvexCone
from finsler_liouville.dual import hat_values_and_gradients
from finsler_liouville.errors import DimensionError, EmptyLevelError, PlacementError
from finsler_liouville.gauge import Gauge
from finsler_liouville.liouville import (LiouvilleSolution, asymptotic_checks, beta0_from_mass, beta_ref, c_N,
                                         interior_rays)
from finsler_liouville.operator import FDScheme, fd_grad


def sol2(lam=1.0, x0=(0.0, 0.0), gauge=None, cone=None):
    return LiouvilleSolution(gauge or Gauge.euclidean(2), 2, lam, np.asarray(x0, float), cone)


ELL = Gauge.ellipsoid([[2.0, 0.4], [0.4, 1.0]])


def test_c_N_values():
    assert c_N(2) == 8
    assert c_N(3) == pytest.approx(60.75, rel=1e-15)
    assert c_N(4) == pytest.approx(16384 / 27, rel=1e-15)
    with pytest.raises(ValueError):
        c_N(1)


def test_c_N_matches_beta_ref():
    for N in range(2, 7):
        assert beta_ref(N) == pytest.approx((c_N(N) / N) ** (1 / (N - 1)), rel=1e-14)


def test_value_examples():
    u = sol2()
    assert u.value([0.0, 0.0]) == pytest.approx(math.log(8), abs=1e-14)
    assert u.value([0.0, 1.0]) == pytest.approx(math.log(2), abs=1e-14)
    u3 = LiouvilleSolution(Gauge.euclidean(3), 3, 1.0, np.zeros(3))
    assert u3.value([0.0, 0.0, 1.0]) == pytest.approx(math.log(60.75 / 8), abs=1e-12)


def test_grad_examples():
    u = sol2()
    assert np.allclose(u.grad([1.0, 0.0]), [-2.0, 0.0], atol=1e-14)
    assert np.array_equal(u.grad([0.0, 0.0]), [0.0, 0.0])
    v = sol2(lam=2.0, x0=(1.0, -1.0), gauge=ELL)
    assert np.array_equal(v.grad([1.0, -1.0]), [0.0, 0.0])


def test_density_examples():
    u = sol2()
    assert u.density([0.0, 0.0]) == pytest.approx(8.0)
    assert u.density([1.0, 0.0]) == pytest.approx(2.0)
    assert u.density([100.0, 0.0]) == pytest.approx(8 / (1 + 1e4) ** 2, rel=1e-12)
    assert u.density([100.0, 0.0]) == pytest.approx(7.9984e-8, rel=1e-4)


def test_level_radius_examples():
    u = sol2()
    assert u.level_radius(math.log(2)) == pytest.approx(1.0, rel=1e-14)
    assert u.level_radius(math.log(8) - 4 * math.log(3)) == pytest.approx(math.sqrt(8), rel=1e-14)
    assert u.level_radius(u.t0 - 1e-12) < 1e-5
    with pytest.raises(EmptyLevelError):
        u.level_radius(u.t0)


def test_level_radius_power_product_form():
    u = sol2()
    assert u.level_radius_power(math.log(2)) == pytest.approx(1.0, rel=1e-14)
    v = LiouvilleSolution(ELL.reflected(), 2, 1.7, np.zeros(2))
    ts = np.linspace(-10, v.t0 - 0.1, 7)
    assert np.allclose(v.level_radius_power(ts), v.level_radius(ts) ** 2, rtol=1e-12)


def test_beta0_examples():
    assert beta0_from_mass(8 * math.pi, 2, math.pi) == pytest.approx(4.0)
    assert beta0_from_mass(2 * math.pi, 2, math.pi / 4) == pytest.approx(4.0)
    unit = 4 * math.pi / 3
    assert beta0_from_mass(c_N(3) * unit, 3, unit) == pytest.approx(4.5)
    with pytest.raises(ValueError):
        beta0_from_mass(0.0, 2, 1.0)


def test_constructor_checks_center_placement():
    with pytest.raises(PlacementError):
        sol2(x0=(0.0, 1.0), cone=ConvexCone.half_space(2))
    with pytest.raises(PlacementError):
        sol2(x0=(1.0, 0.0), cone=ConvexCone.orthant(2))
    sol2(x0=(3.0, 0.0), cone=ConvexCone.half_space(2))
    with pytest.raises(DimensionError):
        LiouvilleSolution(Gauge.euclidean(3), 2, 1.0, np.zeros(2))
    with pytest.raises(ValueError):
        sol2(lam=0.0)


def test_config_round_trip():
    u = sol2(lam=2.5, x0=(1.0, 0.0), gauge=ELL, cone=ConvexCone.half_space(2))
    v = LiouvilleSolution.from_config(u.to_config())
    x = np.array([[0.3, 0.7], [2.0, 5.0]])
    assert np.array_equal(u.value(x), v.value(x))


def test_rotation_symmetry_euclidean():
    u = sol2()
    rng = np.random.default_rng(1)
    X = rng.normal(size=(20, 2))
    th = 0.7
    Q = np.array([[math.cos(th), -math.sin(th)], [math.sin(th), math.cos(th)]])
    assert np.allclose(u.value(X @ Q.T), u.value(X), atol=1e-13)
    assert np.allclose(u.grad(X @ Q.T), u.grad(X) @ Q.T, atol=1e-13)


@pytest.mark.parametrize("gauge", [Gauge.euclidean(2), ELL, Gauge.pnorm(3, 2), Gauge.drifted([0.3, -0.2])])
def test_grad_matches_finite_differences(gauge):
    u = sol2(lam=1.3, x0=(0.2, -0.1), gauge=gauge)
    X = np.random.default_rng(2).uniform(-3, 3, (10, 2))
    sch = FDScheme(h_outer=1e-5, h_inner=1e-5, order=2)
    for x in X:
        g = u.grad(x)
        assert np.linalg.norm(fd_grad(u, x, sch) - g) <= 1e-5 * np.linalg.norm(g)


@given(lam=st.floats(0.1, 10), a=st.floats(-3, 3), b=st.floats(-3, 3))
def test_scaling_closure(lam, a, b):
    x0 = np.array([a, b])
    base = sol2(gauge=ELL)
    u = sol2(lam=lam, x0=x0, gauge=ELL)
    X = np.random.default_rng(3).uniform(-5, 5, (10, 2))
    assert np.allclose(u.value(X), base.value(lam * (X - x0)) + 2 * math.log(lam), atol=1e-12)
    assert abs(u.value(x0) - math.log(8 * lam**2)) <= 1e-12


@pytest.mark.parametrize("gauge", [Gauge.euclidean(2), ELL, Gauge.drifted([0.3, -0.2])])
def test_level_round_trip(gauge):
    u = sol2(lam=1.7, x0=(0.5, 0.0), gauge=gauge, cone=ConvexCone.half_space(2))
    rng = np.random.default_rng(4)
    ts = u.t0 - rng.uniform(1e-3, 20, 20)
    omega = interior_rays(u.cone, 20, seed=5)
    hat = hat_values_and_gradients(gauge, omega)[0]
    X = u.x0 + (u.level_radius(ts) / hat)[:, None] * omega
    assert np.max(np.abs(u.value(X) - ts)) <= 1e-9
    assert np.allclose(u.density(X), np.exp(ts), rtol=1e-10)
    assert np.allclose(u.level_point(ts, omega), X)


def test_monotone_along_rays():
    u = LiouvilleSolution(ELL, 2, 0.8, np.zeros(2), ConvexCone.orthant(2))
    omega = interior_rays(u.cone, 8, seed=0)
    r = np.geomspace(1e-3, 1e3, 200)
    vals = u.value(r[None, :, None] * omega[:, None, :])
    assert np.all(np.diff(vals, axis=1) < 0)


def test_asymptotics_2d():
    rep = asymptotic_checks(sol2())
    assert rep.beta_ref == 4.0
    assert rep.beta_err <= 1e-3
    assert rep.decay_decreasing and rep.upper_bound_holds


def test_asymptotics_3d():
    u = LiouvilleSolution(Gauge.ellipsoid(np.diag([1.0, 2.0, 3.0])), 3, 1.0, np.zeros(3), ConvexCone.half_space(3))
    rep = asymptotic_checks(u)
    assert rep.beta_err <= 1e-2
    assert rep.decay_decreasing and rep.upper_bound_holds


def test_beta_estimate_improves_on_nested_ranges():
    u = LiouvilleSolution(Gauge.euclidean(3), 3, 1.0, np.zeros(3))
    errs = [asymptotic_checks(u, radius_range=r).beta_err for r in ((1e1, 1e3), (1e2, 1e4), (1e3, 1e5))]
    assert errs[0] > errs[1] > errs[2]


def test_asymptotics_rejects_small_radii():
    with pytest.raises(ValueError):
        asymptotic_checks(sol2(), radius_range=(1.0, 100.0))
