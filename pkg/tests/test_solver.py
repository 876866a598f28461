import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from pqlab.experiments import CylindricalProfile, ball_grid
from pqlab.grid import BallRegion, Grid, ScalarField, integrate_ball
from pqlab.integrand import ModelIntegrand, PQParams
from pqlab.solver import (EllipticCoefficients, MinimizationProblem, SolverError, bilinear_form,
                          discrete_energy, elliptic_residual, energy_convergence_study,
                          estimate_caccioppoli_constants, euler_lagrange_residual, minimize,
                          solve_linear, tent_cutoff, tent_lattice, verify_subsolution)


def quadratic(lam=2.0):
    return ModelIntegrand(PQParams(1.0, lam, 2.0, 2.0, 0.0))


def poisson_error(n, h):
    grid = ball_grid(n, 1.0, h)
    ball = BallRegion.centered(n, 1.0)
    zero = ScalarField.constant(grid, 0.0)
    u, rep = minimize(MinimizationProblem(quadratic(), ScalarField.constant(grid, 4.0 * n), zero, ball),
                      tol=1e-11)
    exact = 1 - grid.dist2()
    return float(np.max(np.abs(u.values - exact)[ball.mask(grid)])), rep


def test_poisson_second_order_2d():
    e1, rep = poisson_error(2, 1 / 16)
    e2, _ = poisson_error(2, 1 / 32)
    assert rep.converged and rep.iterations <= 3
    assert 3.5 <= e1 / e2 <= 4.5


def test_affine_data_is_reproduced():
    grid = Grid(2, 1.0, 0.125)
    g = ScalarField.from_function(grid, lambda x, y: 0.7 * x - 0.2 * y + 0.1)
    F = ModelIntegrand(PQParams(1.0, 4.0, 2.0, 3.0, 0.5), 1.0, 1.0)
    u, rep = minimize(MinimizationProblem(F, ScalarField.constant(grid, 0.0), g), tol=1e-11)
    assert np.max(np.abs(u.values - g.values)) < 1e-10
    assert euler_lagrange_residual(u, MinimizationProblem(F, ScalarField.constant(grid, 0.0), g)) <= 1e-10


def test_energy_decreases_along_newton():
    grid = ball_grid(2, 1.0, 1 / 16)
    ball = BallRegion.centered(2, 1.0)
    F = ModelIntegrand(PQParams(1.0, 20.0, 2.0, 4.0, 0.0), 1.0, 1.0)
    bd = ScalarField.from_function(grid, lambda x, y: x * x - y)
    prob = MinimizationProblem(F, ScalarField.constant(grid, 1.0), bd, ball)
    u, rep = minimize(prob, tol=1e-9)
    hist = rep.energy_history
    assert all(b <= a + 1e-12 * abs(a) for a, b in zip(hist, hist[1:]))
    assert rep.residual <= 1e-9
    # the minimizer beats nearby competitors
    rng = np.random.default_rng(0)
    inner = ball.mask(grid) & (grid.dist2() < 0.8)
    for _ in range(5):
        bump = np.where(inner, rng.normal(size=grid.shape) * 1e-3, 0.0)
        assert discrete_energy(ScalarField(grid, u.values + bump), prob) >= rep.energy


def test_pq_energy_self_convergence():
    F = ModelIntegrand(PQParams(1.0, 20.0, 2.0, 4.0, 0.0), 1.0, 1.0)
    energies = []
    for h in (1 / 16, 1 / 32, 1 / 64):
        grid = ball_grid(2, 1.0, h)
        ball = BallRegion.centered(2, 1.0)
        bd = ScalarField.from_function(grid, lambda x, y: 0.5 * x + 0.25 * y * y)
        u, _ = minimize(MinimizationProblem(F, ScalarField.constant(grid, 1.0), bd, ball), tol=1e-9)
        energies.append(discrete_energy(u, MinimizationProblem(F, ScalarField.constant(grid, 1.0), bd, ball)))
    assert abs(energies[2] - energies[1]) / abs(energies[2]) < 0.01


def test_invalid_tolerance_and_singular_integrand():
    grid = Grid(2, 1.0, 0.25)
    zero = ScalarField.constant(grid, 0.0)
    with pytest.raises(ValueError):
        minimize(MinimizationProblem(quadratic(), zero, zero), tol=0.0)
    F = ModelIntegrand(PQParams(1.0, 1.0, 1.5, 1.5, 0.0))
    with pytest.raises(Exception):
        minimize(MinimizationProblem(F, ScalarField.constant(grid, 1.0), zero))


def test_solve_linear_matches_minimizer_and_scales():
    grid = ball_grid(3, 1.0, 1 / 8)
    ball = BallRegion.centered(3, 1.0)
    zero = ScalarField.constant(grid, 0.0)
    f = ScalarField.from_function(grid, lambda x, y, z: 1 + x * y)
    u2 = solve_linear(EllipticCoefficients.constant(grid, 2 * np.eye(3)), zero, f, tol=1e-11, region=ball)
    u1 = solve_linear(EllipticCoefficients.constant(grid, np.eye(3)), zero, f, tol=1e-11, region=ball)
    assert np.max(np.abs(u1.values - 2 * u2.values)) < 1e-9
    um, _ = minimize(MinimizationProblem(quadratic(), f, zero, ball), tol=1e-11)
    assert np.max(np.abs(um.values - u2.values)) < 1e-9


def test_solve_linear_reproduces_counterexample():
    grid = Grid(3, 1.0, 1 / 8)
    prof = CylindricalProfile(3, 10.0)
    v = prof.field(grid)
    a = prof.coefficients(grid, 0.0)
    out = solve_linear(a, v, ScalarField.constant(grid, 0.0), tol=1e-11)
    assert np.max(np.abs(out.values - v.values)) < 1e-9
    assert np.max(np.abs(elliptic_residual(a, v).values)) < 1e-9


def test_coefficient_validation():
    grid = Grid(2, 1.0, 0.5)
    with pytest.raises(ValueError):
        EllipticCoefficients(grid, np.array([[1.0, 0.5], [0.0, 1.0]]), 0.5, 2.0)
    with pytest.raises(ValueError):
        EllipticCoefficients(grid, np.eye(2) * 5, 1.0, 2.0)


def test_verify_subsolution_examples():
    grid = Grid(3, 1.0, 1 / 8)
    a = EllipticCoefficients.constant(grid, np.eye(3))
    cuts = [tent_cutoff(grid, r, s) for r, s in tent_lattice(0.9, 3)]
    v = ScalarField.from_function(grid, lambda x, y, z: x * x + y * y + z * z)
    assert verify_subsolution(v, a, cuts).passed  # subharmonic
    w = ScalarField(grid, -v.values)
    rep = verify_subsolution(w, a, cuts)
    assert not rep.passed and rep.max_violation > 1
    lin = ScalarField.from_function(grid, lambda x, y, z: x - 2 * z)
    assert abs(verify_subsolution(lin, a, cuts).max_violation) < 1e-10
    with pytest.raises(ValueError):
        verify_subsolution(v, a, [ScalarField.constant(grid, -1.0)])


def test_counterexample_is_a_solution():
    grid = Grid(3, 1.0, 1 / 8)
    prof = CylindricalProfile(3, 100.0)
    v, a = prof.field(grid), prof.coefficients(grid, 0.0)
    cuts = [tent_cutoff(grid, r, s) for r, s in tent_lattice(0.9, 3)]
    rep = verify_subsolution(v, a, cuts)
    assert abs(rep.max_violation) < 1e-9


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000))
def test_bilinear_form_is_symmetric(seed):
    grid = Grid(2, 1.0, 0.25)
    rng = np.random.default_rng(seed)
    m = rng.normal(size=(2, 2))
    a = EllipticCoefficients.constant(grid, m @ m.T + np.eye(2))
    v = ScalarField(grid, rng.normal(size=grid.shape))
    w = ScalarField(grid, rng.normal(size=grid.shape))
    assert bilinear_form(v, w, a) == pytest.approx(bilinear_form(w, v, a), rel=1e-12, abs=1e-12)
    assert bilinear_form(v, v, a) >= 0


def test_caccioppoli_linear_and_constant():
    grid = Grid(3, 1.0, 1 / 16)
    ball = BallRegion.centered(3, 1.0)
    cuts = [tent_cutoff(grid, r, s) for r, s in tent_lattice(1.0, 3)]
    const = ScalarField.constant(grid, 0.5)
    fit = estimate_caccioppoli_constants(const, None, (0.0,), cuts, ball)
    assert fit.samples == 0 and not fit.saturated
    lin = ScalarField.from_function(grid, lambda x, y, z: x + 0 * y)
    fit = estimate_caccioppoli_constants(lin, None, (0.0, 0.25), cuts, ball)
    assert not fit.saturated and fit.M1 < 10
    assert fit.samples > 0


def test_energy_convergence_study_trends():
    F = ModelIntegrand(PQParams(1.0, 1.0, 1.5, 1.5, 0.0))
    grid = ball_grid(2, 1.2, 1 / 16)
    ball = BallRegion.centered(2, 1.0)
    bd = ScalarField.from_function(grid, lambda x, y: 0.5 * x + 0 * y)
    f = ScalarField.from_function(grid, lambda x, y: 3 * np.cos(4 * x))
    rows, checks = energy_convergence_study(F, f, ball, (0.1, 0.03, 0.01), (1, 2, 4), bd)
    assert checks["lift_to_zero"] and checks["tilde_trend"]
    assert rows[-1]["lift"] < rows[0]["lift"]
    assert all(np.isfinite(r["energy"]) for r in rows)
    ref = integrate_ball(ScalarField.constant(grid, 0.5 ** 1.5), ball)
    assert rows[0]["reference"] == pytest.approx(ref, rel=1e-12)


def test_solver_error_carries_report():
    err = SolverError("boom", report="r")
    assert err.report == "r" and str(err) == "boom"


def test_minimizer_beats_boundary_extension_and_random_control():
    grid = ball_grid(2, 1.0, 1 / 16)
    ball = BallRegion.centered(2, 1.0)
    F = ModelIntegrand(PQParams(1.0, 8.0, 2.0, 3.0, 1.0), 1.0, 1.0)
    bd = ScalarField.from_function(grid, lambda x, y: np.sin(2 * x) + y * y)
    prob = MinimizationProblem(F, ScalarField.constant(grid, 2.0), bd, ball)
    u, rep = minimize(prob, tol=1e-10)
    assert rep.energy <= discrete_energy(bd, prob)
    assert euler_lagrange_residual(u, prob) <= 1e-10
    noise = ScalarField(grid, np.random.default_rng(1).normal(size=grid.shape))
    assert euler_lagrange_residual(noise, prob) > 1.0


def test_linear_solutions_are_subsolutions_against_bumps():
    grid = Grid(3, 1.0, 1 / 8)
    X, Y, _ = grid.coords()
    diag = np.zeros((3, 3) + grid.shape)
    diag[0, 0], diag[1, 1], diag[2, 2] = 1 + X * X, 2 + np.sin(Y), 1.0
    a = EllipticCoefficients(grid, diag, 1.0, 3.0)
    f = ScalarField.from_function(grid, lambda x, y, z: -(1 + x * x))
    v = solve_linear(a, ScalarField.constant(grid, 0.0), f, tol=1e-12)
    rng = np.random.default_rng(2)
    bumps = []
    for _ in range(50):
        c = rng.uniform(-0.4, 0.4, 3)
        rad = rng.uniform(0.2, 0.5)
        bumps.append(ScalarField(grid, np.maximum(rad ** 2 - grid.dist2(c), 0.0)))
    rep = verify_subsolution(v, a, bumps, tol=1e-9)
    assert rep.passed and max(rep.normalized) < 0


def test_lift_column_proportional_to_eps():
    F = quadratic()
    grid = ball_grid(2, 1.2, 1 / 8)
    ball = BallRegion.centered(2, 1.0)
    bd = ScalarField.from_function(grid, lambda x, y: x + 0 * y)
    rows, _ = energy_convergence_study(F, ScalarField.constant(grid, 4.0), ball, (0.1, 0.01, 0.001),
                                       (1, 2, 4), bd)
    lifts = np.array([r["lift"] for r in rows])
    assert np.allclose(lifts / np.array([0.1, 0.01, 0.001]), lifts[0] / 0.1, rtol=1e-12)
