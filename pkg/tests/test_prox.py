import numpy as np
import pytest
from scipy.optimize import brentq

from ilmc_lab.errors import AdmissibilityError, ConvergenceError
from ilmc_lab.potentials import make_gaussian, make_ginzburg_landau
from ilmc_lab.prox import (DEFAULT_PROX, ProxConfig, lipschitz_probe,
                           max_step_size, phi, phi_inverse, prox_objective,
                           r_prime)

GA = make_gaussian(1, 1.0)
GL = make_ginzburg_landau(1, 1.0, 1.0)


def test_phi_values():
    assert phi(GL, 0.1, 2.0) == pytest.approx(4.8)
    assert phi(GA, 0.1, 2.0) == pytest.approx(2.2)
    assert phi(GL, 0.1, 0.0) == 0.0  # critical point is fixed


def test_phi_inverse_linear_case():
    assert phi_inverse(GA, 0.1, 2.2) == pytest.approx(2.0, abs=1e-10)


def test_phi_inverse_forward_oracle():
    x = 2.0
    assert phi_inverse(GL, 0.1, phi(GL, 0.1, x)) == pytest.approx(x, abs=1e-10)


def test_phi_inverse_critical_point():
    assert phi_inverse(GL, 0.1, 0.0) == 0.0


def test_phi_inverse_bisection_oracle():
    # scalar root of x + h*(4x^3 - 2x) = x0, independently bracketed
    h, x0 = 0.1, 10.0
    root = brentq(lambda x: x + h * (4 * x**3 - 2 * x) - x0, 0.0, x0, xtol=1e-14)
    assert phi_inverse(GL, h, x0) == pytest.approx(root, abs=1e-10)


def test_phi_inverse_admissibility_gate():
    with pytest.raises(AdmissibilityError):
        phi_inverse(GL, 0.3, 1.0)   # beyond 0.9/(2*neg_curv) = 0.225
    with pytest.raises(AdmissibilityError):
        phi(GL, -0.1, 1.0)
    assert max_step_size(GA) == np.inf  # convex potential: any h


def test_phi_inverse_convergence_error_carries_residual():
    with pytest.raises(ConvergenceError) as err:
        phi_inverse(GL, 0.1, 1e6, ProxConfig(max_iters=2))
    assert err.value.residual > 0


def test_prox_objective_values():
    assert prox_objective(GA, 1.0, 0.0, 0.0) == 0.0
    assert prox_objective(GA, 1.0, 1.0, 0.0) == pytest.approx(1.0)


def test_prox_objective_minimized_at_inverse():
    h, x0 = 0.1, 1.7
    xstar = phi_inverse(GL, h, x0)
    # first-order optimality of U(x) + |x-x0|^2/(2h)
    assert abs(GL.grad(xstar) + (xstar - x0) / h) <= DEFAULT_PROX.tol / h
    # and a grid scan does not find anything better
    xs = np.linspace(xstar - 1.0, xstar + 1.0, 2001)
    vals = GL.u(xs) + (xs - x0) ** 2 / (2 * h)
    assert prox_objective(GL, h, xstar, x0) <= vals.min() + 1e-9


@pytest.mark.parametrize("p", [GA, GL], ids=["gaussian", "ginzburg_landau"])
@pytest.mark.parametrize("h", [0.001, 0.01, 0.1])
def test_round_trip_and_optimality(p, h):
    rng = np.random.default_rng(99)
    x = rng.uniform(-5, 5, size=1000)
    back = phi_inverse(p, h, phi(p, h, x))
    assert np.max(np.abs(back - x)) <= 10 * DEFAULT_PROX.tol
    # first-order optimality of the movement objective at every solve
    x0 = rng.uniform(-5, 5, size=1000)
    xstar = phi_inverse(p, h, x0)
    assert np.max(np.abs(p.grad(xstar) + (xstar - x0) / h)) <= DEFAULT_PROX.tol / h


@pytest.mark.parametrize("p", [GA, GL], ids=["gaussian", "ginzburg_landau"])
@pytest.mark.parametrize("h", [0.001, 0.01, 0.1])
def test_lipschitz_probe_bounds(p, h):
    rep = lipschitz_probe(p, h, 4000, rng_seed=5)
    assert rep.n_far_pairs > 50
    assert rep.far_field_ok, (rep.max_ratio_far, rep.far_bound)
    assert rep.global_ok, (rep.max_ratio_global, rep.global_bound)
    assert rep.stability_ok


def test_gaussian_ratio_is_constant_contraction():
    h = 0.1
    rep = lipschitz_probe(GA, h, 2000, rng_seed=8)
    assert rep.max_ratio_global == pytest.approx(1 / (1 + h), abs=1e-9)
    assert 1 / (1 + h) <= np.exp(-GA.m * h / 4)  # holds for h <= 2


def test_r_prime_formula():
    assert r_prime(GL) == pytest.approx((4 + 16 * GL.big_m / GL.m) * GL.r_conf)
    assert r_prime(GL) == pytest.approx(20.0)


def test_phi_inverse_multidim():
    p = make_gaussian(3, 2.0)
    x0 = np.array([1.0, -2.0, 0.5])
    assert np.allclose(phi_inverse(p, 0.1, x0), x0 / 1.2, atol=1e-10)

    p2 = make_ginzburg_landau(2, 1.0, 1.0)
    rng = np.random.default_rng(4)
    xs = rng.uniform(-2, 2, size=(20, 2))
    fwd = np.stack([phi(p2, 0.05, row) for row in xs])
    back = phi_inverse(p2, 0.05, fwd)
    assert np.allclose(back, xs, atol=1e-9)
