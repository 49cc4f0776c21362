import numpy as np
import pytest

from ilmc_lab.errors import ConfigurationError, ParameterError
from ilmc_lab.fp1d import (DensityField, Grid1D, InitialDensitySpec,
                           _FluxAssembler, entropy_curve, gibbs_density,
                           gradient_bound_check, make_initial_density,
                           solve_ilmc_fp, solve_langevin_fp,
                           tail_sandwich_check)
from ilmc_lab.metrics import relative_entropy_grid
from ilmc_lab.potentials import make_gaussian, make_ginzburg_landau

GA = make_gaussian(1, 1.0)
GL = make_ginzburg_landau(1, 1.0, 1.0)


def _gaussian_field(grid, var, mean=0.0):
    return make_initial_density(
        InitialDensitySpec(kind="gaussian", mean=mean, var=var), grid)


def test_grid_invariants():
    grid = Grid1D(3.0, 1200)
    assert grid.dx * grid.n_cells == pytest.approx(2 * grid.l, abs=1e-12)
    assert grid.centers.shape == (1200,)
    assert grid.interior_faces.shape == (1199,)
    with pytest.raises(ParameterError):
        Grid1D(-1.0, 100)


def test_initial_density_kinds():
    grid = Grid1D(3.0, 600)
    for spec in (InitialDensitySpec(kind="gibbs_tempered", gamma=0.5),
                 InitialDensitySpec(kind="gaussian", var=0.5),
                 InitialDensitySpec(kind="custom", custom_values=np.ones(600))):
        f = make_initial_density(spec, grid, GL)
        assert f.mass() == pytest.approx(1.0, abs=1e-12)
        assert np.all(f.values >= 0)
    with pytest.raises(ParameterError):
        make_initial_density(InitialDensitySpec(kind="gibbs_tempered", gamma=1.5), grid, GL)
    with pytest.raises(ParameterError):
        make_initial_density(InitialDensitySpec(kind="nope"), grid, GL)


def test_gibbs_density_is_stationary():
    grid = Grid1D(8.0, 1600)
    for p in (GA, GL):
        gibbs = gibbs_density(p, grid)
        out = solve_langevin_fp(p, gibbs, 1.0, 1e-3)
        drift = np.sum(np.abs(out.values - gibbs.values)) * grid.dx
        assert drift <= 1e-6


def test_zero_time_returns_copy():
    grid = Grid1D(5.0, 200)
    rho0 = _gaussian_field(grid, 1.0)
    out = solve_langevin_fp(GA, rho0, 0.0, 1e-3)
    assert np.array_equal(out.values, rho0.values)
    assert out is not rho0


def test_ou_variance_relaxation():
    grid = Grid1D(10.0, 2000)
    rho0 = _gaussian_field(grid, 4.0)
    out = solve_langevin_fp(GA, rho0, 1.0, 5e-4)
    assert abs(out.variance() - (1 + 3 * np.exp(-2.0))) <= 1e-3
    assert out.mass() == pytest.approx(1.0, abs=1e-8)
    assert out.values.min() >= 0.0


def test_ilmc_fp_reaches_numerical_stationary_variance():
    h = 0.1
    grid = Grid1D(8.0, 2000)
    rho0 = _gaussian_field(grid, 1.0)
    out = solve_ilmc_fp(GA, rho0, 50 * h, h, h / 64)
    assert abs(out.variance() - 2.0 / (2.0 + h)) <= 2e-3
    assert out.mass() == pytest.approx(1.0, abs=1e-8)
    assert out.values.min() >= 0.0


def test_ilmc_fp_tracks_exact_in_step_variance_law():
    # Gaussian chain: within a step, Var(s) = (V_n + 2 tau) / (1 + tau)^2
    h = 0.2
    grid = Grid1D(8.0, 2000)
    rho0 = _gaussian_field(grid, 2.0)
    v = 2.0
    field = rho0
    for k in range(4):  # advance half-steps: tau alternates 0.1, 0 (reset)
        field = solve_ilmc_fp(GA, field, h / 2, h, h / 64)
        tau = h / 2 if k % 2 == 0 else h
        v_expect = (v + 2 * tau) / (1 + tau) ** 2 if k % 2 == 0 else None
        if k % 2 == 1:  # full step boundary: chain recursion from last grid value
            v = (v + 2 * h) / (1 + h) ** 2
            v_expect = v
        assert abs(field.variance() - v_expect) <= 1.5e-3


def test_ilmc_fp_with_h_equal_dt_matches_langevin_bitwise():
    grid = Grid1D(6.0, 800)
    rho0 = _gaussian_field(grid, 1.5)
    dt = 1e-3
    a = solve_langevin_fp(GL, rho0, 0.05, dt)
    b = solve_ilmc_fp(GL, rho0, 0.05, dt, dt)   # tau is always 0
    assert np.array_equal(a.values, b.values)
    assert relative_entropy_grid(b, a) <= 1e-10


def test_tau_zero_assembly_matches_langevin():
    asm = _FluxAssembler(GL, Grid1D(3.0, 300))
    w0, d0 = asm.langevin()
    w1, d1 = asm.ilmc(0.0)
    assert np.array_equal(w0, w1)
    assert np.array_equal(d0, d1)


def test_dt_validation():
    grid = Grid1D(3.0, 300)
    rho0 = _gaussian_field(grid, 1.0)
    with pytest.raises(ConfigurationError):
        solve_langevin_fp(GA, rho0, 1.0, -1e-3)
    with pytest.raises(ConfigurationError):
        solve_langevin_fp(GA, rho0, 0.0015, 1e-3)      # t_end not multiple of dt
    with pytest.raises(ConfigurationError):
        solve_ilmc_fp(GA, rho0, 0.1, 0.05, 0.02)       # dt does not divide h
    with pytest.raises(ConfigurationError):
        entropy_curve(GA, rho0, 1.0, [])


def test_entropy_curve_slope_on_fine_grid():
    grid = Grid1D(3.0, 1200)
    rho0 = make_initial_density(InitialDensitySpec(kind="gibbs_tempered", gamma=0.5),
                                grid, GL)
    rep = entropy_curve(GL, rho0, 1.0, [0.1, 0.05, 0.025])
    fit = rep.slope_fits["relative_entropy"]
    assert 1.7 <= fit.slope <= 2.3
    assert fit.r_squared > 0.99
    sups = {h: max(r.value for r in rep.rows if r.h == h) for h in (0.1, 0.05, 0.025)}
    assert 3.2 <= sups[0.1] / sups[0.05] <= 4.8
    assert 3.2 <= sups[0.05] / sups[0.025] <= 4.8


def test_scheme_convergence_richardson_self_check():
    # halving dx and dt moves the terminal entropy by < 5% at the coarsest h
    h = 0.2
    vals = []
    for cells, div in ((1200, 64), (2400, 128)):
        grid = Grid1D(3.0, cells)
        rho0 = make_initial_density(InitialDensitySpec(kind="gibbs_tempered", gamma=0.5),
                                    grid, GL)
        truth = solve_langevin_fp(GL, rho0, 1.0, h / div)
        num = solve_ilmc_fp(GL, rho0, 1.0, h, h / div)
        vals.append(relative_entropy_grid(num, truth))
    assert abs(vals[1] - vals[0]) / vals[0] < 0.05


def test_entropy_curve_no_fit_for_short_h_list():
    grid = Grid1D(3.0, 400)
    rho0 = make_initial_density(InitialDensitySpec(kind="gibbs_tempered", gamma=0.5),
                                grid, GL)
    rep = entropy_curve(GL, rho0, 0.5, [0.1], dt=0.1 / 16)
    assert rep.slope_fits == {}
    assert len(rep.rows) == 3


def _analytic_field(grid, var):
    x = grid.centers
    vals = np.exp(-0.5 * x**2 / var) / np.sqrt(2 * np.pi * var)
    return DensityField(grid, vals)


def test_tail_sandwich_on_gaussian_stationary_field():
    h = 0.1
    grid = Grid1D(8.0, 1024)
    field = _analytic_field(grid, 2.0 / (2.0 + h))
    rep = tail_sandwich_check(field, GA, gamma=0.99, ell1=2.0, c2=1.0)
    assert rep.passed
    assert np.isfinite(rep.c_upper) and np.isfinite(rep.c_lower)
    assert rep.upper_interior and rep.lower_interior


def test_tail_sandwich_flags_violation_at_boundary():
    # -log rho = x^2/3 + c grows slower than 0.99*U = 0.495*x^2: the upper
    # inequality margin is pinned to the window edge
    grid = Grid1D(8.0, 1024)
    field = _analytic_field(grid, 1.5)
    rep = tail_sandwich_check(field, GA, gamma=0.99, ell1=2.0, c2=1.0)
    assert not rep.upper_interior
    assert not rep.passed


def test_density_bounds_propagate_along_true_flow():
    # a tempered start keeps a Gibbs-type upper bound and a polynomial-
    # exponent lower bound after evolving under the Langevin equation
    for p, l, ell1 in ((GA, 6.0, 2.0), (GL, 3.0, 4.0)):
        grid = Grid1D(l, 600)
        rho0 = make_initial_density(InitialDensitySpec(kind="gibbs_tempered", gamma=0.5),
                                    grid, p)
        out = solve_langevin_fp(p, rho0, 1.0, 1e-3)
        rep = tail_sandwich_check(out, p, gamma=0.45, ell1=ell1, c2=1.0)
        assert rep.passed, rep


def test_gradient_bound_check_cases():
    grid = Grid1D(8.0, 1024)
    std_normal = _analytic_field(grid, 1.0)
    rep = gradient_bound_check(std_normal, ell0=1.0)
    assert rep.passed
    assert rep.sup_ratio <= 1.0 + 1e-6

    grid2 = Grid1D(3.0, 600)
    gibbs = gibbs_density(GL, grid2)
    rep2 = gradient_bound_check(gibbs, ell0=3.0)
    assert rep2.passed
    assert rep2.sup_ratio <= 4.2

    rep3 = gradient_bound_check(std_normal, ell0=0.0)
    assert rep3.grows_at_edge
    assert not rep3.passed
