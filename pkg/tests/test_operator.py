from __future__ import annotations

import numpy as np
import pytest

from finsler_liouville.cone import ConvexCone
from finsler_liouville.errors import DegeneracyError, PlacementError
from finsler_liouville.gauge import Gauge
from finsler_liouville.liouville import LiouvilleSolution, interior_rays
from finsler_liouville.operator import FDScheme, convergence_study, fd_grad, neumann_flux, nlap_residual, nlap_residuals

E2 = Gauge.euclidean(2)
E3 = Gauge.euclidean(3)
ELL = Gauge.ellipsoid([[2.0, 0.4], [0.4, 1.0]])


def test_scheme_defaults_and_validation():
    s = FDScheme(1e-3)
    assert s.h_inner == pytest.approx(1.25e-4)
    with pytest.raises(ValueError):
        FDScheme(1e-3, order=3)
    with pytest.raises(ValueError):
        FDScheme(1e-3, h_inner=1e-2)
    with pytest.raises(ValueError):
        FDScheme(1e-16)


def test_fd_grad_linear_is_exact():
    c = np.array([0.3, -1.7, 2.0])
    for order in (2, 4):
        g = fd_grad(lambda X: X @ c, np.array([1.0, 2.0, -0.5]), FDScheme(1e-2, order=order))
        assert np.allclose(g, c, atol=1e-12)


def test_fd_grad_quadratic():
    g = fd_grad(lambda X: 0.5 * np.sum(X**2, axis=-1), np.array([1.0, 2.0]), FDScheme(1e-2, 1e-2))
    assert np.allclose(g, [1.0, 2.0], atol=1e-12)


def test_fd_grad_of_solution():
    u = LiouvilleSolution(E2, 2, 1.0, np.zeros(2))
    g = fd_grad(u, np.array([1.0, 0.0]), FDScheme(1e-5, 1e-5))
    assert np.allclose(g, [-2.0, 0.0], atol=1e-8)


def test_residual_examples():
    u2 = LiouvilleSolution(E2, 2, 1.0, np.zeros(2))
    assert abs(nlap_residual(E2, 2, u2, [0.5, 0.0], FDScheme(1e-3))) <= 1e-4
    u3 = LiouvilleSolution(E3, 3, 1.0, np.zeros(3))
    assert abs(nlap_residual(E3, 3, u3, [1.0, 0.0, 0.0], FDScheme(1e-3))) <= 1e-3


def test_residual_halves_by_four():
    u = LiouvilleSolution(ELL, 2, 1.0, np.zeros(2))
    x = np.array([[0.7, -0.4]])
    r1 = abs(nlap_residuals(ELL, 2, u, x, FDScheme(4e-3))[0])
    r2 = abs(nlap_residuals(ELL, 2, u, x, FDScheme(2e-3))[0])
    assert 3.0 <= r1 / r2 <= 5.0


def test_residual_rejects_flat_fields_and_boundary():
    u = LiouvilleSolution(E2, 2, 1.0, np.zeros(2), ConvexCone.half_space(2))
    with pytest.raises(DegeneracyError):
        nlap_residual(E2, 2, lambda X: np.full(X.shape[0], 2.0), [0.3, 0.4], FDScheme(1e-3))
    with pytest.raises(PlacementError):
        nlap_residual(E2, 2, u, [1.0, 1e-3], FDScheme(1e-3))
    assert abs(nlap_residual(E2, 2, u, [1.0, 0.5], FDScheme(1e-3))) <= 1e-4


@pytest.mark.parametrize("N,gauge", [(2, E2), (2, ELL), (3, E3), (3, Gauge.ellipsoid(np.diag([1.0, 2.0, 3.0])))])
def test_convergence_order_near_two(N, gauge):
    u = LiouvilleSolution(gauge, N, 1.0, np.zeros(N))
    rng = np.random.default_rng(0)
    pts = interior_rays(u.cone, 10, seed=1) * rng.uniform(0.3, 5.0, (10, 1))
    tab = convergence_study(gauge, N, u, pts, [4e-3, 2e-3, 1e-3])
    assert tab.passed and 1.5 <= tab.slope <= 2.5
    assert tab.max_residual[-1] <= 1e-3
    assert len(tab.rows()) == 3 and np.isnan(tab.order[0])


def test_convergence_study_rejects_linear_function():
    c = np.array([1.0, -0.5])
    pts = np.array([[0.5, 0.5], [1.0, 2.0]])
    tab = convergence_study(E2, 2, lambda X: X @ c, pts, [4e-3, 2e-3, 1e-3])
    # a(const) has zero divergence, so the residual is exactly -e^u at every step
    assert np.allclose(tab.max_residual, np.max(np.exp(pts @ c)), rtol=1e-9)
    assert not tab.passed


def test_convergence_study_validates_steps():
    u = LiouvilleSolution(E2, 2, 1.0, np.zeros(2))
    with pytest.raises(ValueError):
        convergence_study(E2, 2, u, np.ones((1, 2)), [1e-3, 5e-4])
    with pytest.raises(ValueError):
        convergence_study(E2, 2, u, np.ones((1, 2)), [4e-3, 2e-3, 5e-4])


def test_flux_full_space_is_zero():
    u = LiouvilleSolution(E2, 2, 1.0, np.zeros(2))
    assert neumann_flux(E2, u, ConvexCone.full_space(2)) == 0.0


@pytest.mark.parametrize("gauge", [E2, ELL, Gauge.drifted([0.3, -0.2])])
def test_flux_vanishes_for_admissible_centers(gauge):
    half = ConvexCone.half_space(2)
    u = LiouvilleSolution(gauge, 2, 1.3, np.array([0.7, 0.0]), half)
    assert neumann_flux(gauge, u, half) <= 1e-8
    quad = ConvexCone.orthant(2)
    v = LiouvilleSolution(gauge, 2, 0.6, np.zeros(2), quad)
    assert neumann_flux(gauge, v, quad) <= 1e-8


def test_flux_detects_inadmissible_center():
    # the solution exists in the plane, but x0 = (1, 0) is not a valid center for the quadrant
    u = LiouvilleSolution(E2, 2, 1.0, np.array([1.0, 0.0]))
    assert neumann_flux(E2, u, ConvexCone.orthant(2)) > 1e-2


def test_fd_grad_matches_solution_grad():
    u = LiouvilleSolution(ELL, 2, 1.0, np.array([0.2, 0.1]))
    X = np.random.default_rng(7).uniform(-4, 4, (20, 2))
    G = fd_grad(u, X, FDScheme(1e-5, 1e-5))
    ref = u.grad(X)
    assert np.all(np.linalg.norm(G - ref, axis=1) <= 1e-5 * np.linalg.norm(ref, axis=1))
