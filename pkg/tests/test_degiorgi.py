import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from pqlab.degiorgi import (IterationConstants, alpha_exponent, ball_volume, check_hole_filling,
                            default_c1, default_c2, delta_parts, estimate_ball_sobolev_constant,
                            estimate_sphere_sobolev_constant, hole_filling_bound,
                            hole_filling_constant, linfty_bound, m1_exponent, optimal_cutoff,
                            prop2_exponent, run_iteration, sphere_area, talenti_constant, tau,
                            theorem_exponents, two_star)
from pqlab.experiments import CylindricalProfile
from pqlab.grid import BallRegion, Grid, GridError, ScalarField, sup_ball
from pqlab.rearrangement import StepProfile


def constants(n=3, kappa=0.25, **kw):
    kw.setdefault("c1", 5.0)
    kw.setdefault("c2", 7.0)
    return IterationConstants.build(n, kappa, **kw)


def test_two_star_examples():
    assert two_star(4) == 6 and two_star(5) == 4
    assert two_star(3, 0.25) == 10
    with pytest.raises(ValueError):
        two_star(3)
    with pytest.raises(ValueError):
        two_star(2)


def test_tau_examples():
    assert tau(4) == pytest.approx(0.25, abs=1e-15)
    assert tau(5) == pytest.approx(2 ** -2.5, abs=1e-15)


@pytest.mark.parametrize("n", range(3, 9))
@pytest.mark.parametrize("kappa", [0.05, 0.25, 0.45])
def test_tau_identity(n, kappa):
    t = tau(n, kappa)
    s = two_star(n, kappa)
    assert 0 < t < 0.5
    assert abs((2 * t) ** (s / 2 - 1) * 2 ** alpha_exponent(n, kappa) - 1) < 1e-14


def test_m1_exponent_and_prop2():
    assert m1_exponent(4) == pytest.approx(0.5)
    assert m1_exponent(3, 0.1) == pytest.approx(0.1)
    assert m1_exponent(7) == pytest.approx(2.0)
    assert prop2_exponent(4) == pytest.approx(0.75)
    assert prop2_exponent(3, 0.1) == pytest.approx(0.55)
    C = constants(3, 0.1)
    assert linfty_bound(C, 1.0).m1_exponent == pytest.approx(1.1)
    assert linfty_bound(constants(4, None), 1.0).m1_exponent == pytest.approx(1.5)


def test_iteration_constants_validation():
    with pytest.raises(ValueError):
        constants(M1=0.5)
    with pytest.raises(ValueError):
        constants(c_m=0.0)
    with pytest.raises(ValueError):
        IterationConstants.build(2, None, c1=1, c2=1)


def test_delta_parts_structure():
    C = constants()
    parts = [delta_parts(l, 2.0, 1.0, C) for l in range(1, 8)]
    for (a1, a2, a3, _), (b1, b2, b3, _) in zip(parts, parts[1:]):
        assert b1 / a1 == pytest.approx(0.5, abs=1e-14)
        assert b3 / a3 == pytest.approx(C.tau, rel=1e-14)
        assert a2 == b2 == 0.0  # f = 0
    d3 = parts[0][2] / 2.0
    assert d3 == pytest.approx((3 * C.c2 / C.tau) ** (3 / 6), rel=1e-14)
    with pytest.raises(ValueError):
        delta_parts(0, 1.0, 1.0, C)


def test_delta2_uses_omega_inverse():
    C = constants(M2=1.0)
    prof = StepProfile([2.0], [4.0])
    d1, d2, d3, sat = delta_parts(3, 1.0, 0.5, C, prof)
    assert d2 > 0 and not sat
    y = C.tau ** 3 / (3 * C.c_m)
    t = (y / 2.0) ** 2
    assert d2 == pytest.approx(C.c2 ** (1 / 6) * 0.5 / t ** (1 / 6), rel=1e-10)
    _, d2, _, sat = delta_parts(1, 1e6, 1.0, C, prof)
    assert sat and d2 == 0.0


def test_run_iteration_zero_field():
    grid = Grid(3, 1.0, 0.125)
    res = run_iteration(ScalarField.constant(grid, 0.0), None, constants(k0=0.3))
    assert res.bound == 0.3 and res.finite and res.rows == []


def test_run_iteration_counterexample_bound():
    grid = Grid(3, 1.0, 1 / 16)
    lam = 10.0
    v = CylindricalProfile(3, lam).field(grid)
    C = constants(M1=math.sqrt(lam), c_m=2.0)
    res = run_iteration(v, None, C)
    assert res.finite and math.isfinite(res.bound)
    assert res.bound >= sup_ball(v, BallRegion.centered(3, 0.5))
    assert res.failures_above_floor == 0
    bigger = run_iteration(v, None, C.scaled(2.0))
    assert bigger.bound >= res.bound


def test_linfty_bound_contrast_free():
    C = constants()
    b = linfty_bound(C, 2.0)
    assert b.value == pytest.approx(b.c_v * 2.0)
    assert linfty_bound(C, 2.0, 1.0).value == b.value  # M2 = 0
    C2 = constants(M2=1.0)
    assert linfty_bound(C2, 2.0, 1.0).value > b.value


def test_optimal_cutoff_capacitor():
    res = optimal_cutoff(lambda r: np.ones_like(r), 0.5, 1.0, 1.0, h=1e-4, n=3)
    assert res.energy == pytest.approx(4 * math.pi, rel=1e-6)
    assert res.bound == pytest.approx(14 * math.pi / 3, rel=1e-6)
    assert res.holds
    assert res.eta[0] == 1.0 and abs(res.eta[-1]) < 1e-12
    zero = optimal_cutoff(lambda r: np.zeros_like(r), 0.5, 1.0, 1.0, h=0.01, n=3)
    assert zero.energy == 0.0 and zero.bound == 0.0


def test_optimal_cutoff_on_grid():
    grid = Grid(3, 1.0, 1 / 64)
    res = optimal_cutoff(ScalarField.constant(grid, 1.0), 0.5, 1.0, 1.0)
    assert res.energy == pytest.approx(4 * math.pi, rel=0.02)
    assert res.cutoff is not None and res.holds
    with pytest.raises(GridError):
        optimal_cutoff(ScalarField.constant(grid, 1.0), 0.5, 0.52, 1.0)
    with pytest.raises(ValueError):
        optimal_cutoff(ScalarField.constant(grid, 1.0), 0.5, 1.0, 0.0)


@settings(max_examples=30, deadline=None)
@given(st.floats(0.1, 0.5), st.floats(0.1, 0.5), st.floats(0.2, 1.0), st.integers(0, 1000))
def test_optimal_cutoff_never_exceeds_bound(rho, gap, delta, seed):
    sigma = rho + gap
    c = np.random.default_rng(seed).uniform(0.1, 3, 3)
    prof = lambda r: c[0] + c[1] * np.sin(7 * r) ** 2 + c[2] * r
    assert optimal_cutoff(prof, rho, sigma, delta, h=gap / 50, n=3).holds


def test_hole_filling():
    c, b = hole_filling_bound(0.0, 1.0, 0.5, 2.0, 0.0, 1.0)
    assert c == pytest.approx(4.0) and b == pytest.approx(4 * 1.5)
    assert hole_filling_bound(0.5, 0.0, 0.0, 1.5, 0.0, 1.0)[1] == 0.0
    with pytest.raises(ValueError):
        hole_filling_constant(1.0, 1.0)
    A, alpha, rho0 = 1.0, 1.5, -1.0  # t - s <= s - rho0 on [0, 1]
    Z = lambda t: A * (t - rho0) ** (-alpha)
    rep = check_hole_filling(Z, 0.0, A, 0.0, alpha, 0.0, 1.0)
    assert rep.hypothesis_holds and rep.conclusion_holds
    rep = check_hole_filling(Z, 0.3, A, 0.0, alpha, 0.0, 1.0)
    assert rep.hypothesis_holds and rep.conclusion_holds


@settings(max_examples=40, deadline=None)
@given(st.floats(0, 0.9), st.floats(0.2, 3))
def test_hole_filling_constant_at_least_one(theta, alpha):
    c = hole_filling_constant(theta, alpha)
    assert c >= 1 and math.isfinite(c)


def test_theorem_exponents_example():
    ex = theorem_exponents(4, 2.0, 2.5, 0.1)
    assert ex.gamma == pytest.approx(0.6875) and ex.gamma_tilde == pytest.approx(0.5625)
    assert ex.alpha_n == pytest.approx(0.8) and ex.beta_n == pytest.approx(8 / 7)
    assert ex.identity_alpha == pytest.approx(0.0, abs=1e-14)
    assert ex.identity_beta == pytest.approx(0.0, abs=1e-14)
    assert ex.m == pytest.approx(0.75)


@pytest.mark.parametrize("n", [3, 4, 6])
def test_theorem_exponents_equal_growth(n):
    ex = theorem_exponents(n, 2.5, 2.5, 0.2)
    assert ex.gamma == pytest.approx(0.5) and ex.gamma_tilde == pytest.approx(0.4)
    assert ex.admissible


def test_theorem_exponents_n3_thresholds():
    ex = theorem_exponents(3, 2.0, 2.5, 0.2)
    assert ex.kappa_ok and ex.gamma_below_one and ex.gamma_tilde_below_one and ex.admissible
    bad = theorem_exponents(5, 2.0, 4.0, 0.2)
    assert not bad.pq and not bad.admissible
    with pytest.raises(ValueError):
        theorem_exponents(3, 2.0, 1.5, 0.2)


def test_sobolev_constants():
    # constants on the sphere are admissible test functions
    for n, r in ((4, 1.0), (5, 0.5)):
        s = two_star(n)
        const_ratio = sphere_area(n, r) ** (1 / s - 0.5)
        assert estimate_sphere_sobolev_constant(n, s, r) >= const_ratio * (1 - 1e-12)
    assert talenti_constant(3) == pytest.approx(
        1 / math.sqrt(3 * math.pi) * (4 / math.sqrt(math.pi)) ** (1 / 3), rel=1e-12)
    assert estimate_ball_sobolev_constant(3, 1.0) >= 2 ** (1 / 3) * talenti_constant(3)
    assert default_c1(3, 0.25) >= 1 and default_c2(3) >= 1
    assert ball_volume(3) == pytest.approx(4 * math.pi / 3)
    assert sphere_area(3, 2.0) == pytest.approx(16 * math.pi)


@pytest.mark.parametrize("n", [5, 6, 7])
def test_sphere_constant_rescaling(n):
    s = two_star(n)
    a = estimate_sphere_sobolev_constant(n, s, 1.0)
    b = estimate_sphere_sobolev_constant(n, s, 0.5)
    assert b == pytest.approx(a * 0.5 ** ((n - 1) * (1 / s - 0.5)), rel=0.05)


@pytest.mark.parametrize("n,kappa", [(3, 0.25), (4, None), (5, None)])
def test_sphere_constant_grows_with_library(n, kappa):
    s = two_star(n, kappa)
    small = estimate_sphere_sobolev_constant(n, s, 1.0, library_size=12)
    assert estimate_sphere_sobolev_constant(n, s, 1.0, library_size=24) >= small
