import math

import numpy as np
import pytest
from scipy import integrate

from pqlab.experiments import (ConfigError, CylindricalProfile, QuadratureError, admissibility,
                               build_config, build_forcing, contrast_study, counterexample_pde_check,
                               counterexample_ratio, counterexample_study, degiorgi_study,
                               degiorgi_zero_bound, fit_slope, lipschitz_rhs, lipschitz_study,
                               parallel_map, parse_config_text, read_samples_csv,
                               regularization_study)
from pqlab.grid import Grid


def cfg(experiment="", **raw):
    return build_config({k: str(v) for k, v in raw.items()}, experiment)


def test_parse_config_text():
    raw = parse_config_text("# comment\nn = 4\n\nlambda_list = 10, 100  # trailing\nh = 1/16\n")
    assert raw == {"n": "4", "lambda_list": "10, 100", "h": "1/16"}
    c = build_config(raw, "contrast")
    assert c.n == 4 and c.lambda_list == (10.0, 100.0) and c.h == 1 / 16
    with pytest.raises(ConfigError):
        parse_config_text("n 4")


def test_config_keys_and_aliases():
    c = cfg(**{"lambda": 5, "pq-list": "2:2.4, 2.5:3", "nu": 1})
    assert c.lam == 5.0 and c.pq_list == ((2.0, 2.4), (2.5, 3.0))
    with pytest.raises(ConfigError):
        cfg(bogus=1)
    with pytest.raises(ConfigError):
        cfg(n="three")


@pytest.mark.parametrize("raw", [
    {"lambda_list": "100, 10"}, {"lambda_list": ""}, {"h": "0"}, {"tol": "-1"},
    {"mode": "exact"}, {"forcing": "random"}, {"eps_list": "0.01, 0.1"},
    {"eps_list": "0.1, 0.01", "m_list": "1, 2, 3"}, {"threads": "0"}, {"nu": "2", "lambda": "1"},
])
def test_config_validation(raw):
    with pytest.raises(ConfigError):
        build_config(raw)


def test_parallel_map_preserves_order():
    assert parallel_map(abs, [-3, 2, -1], threads=1) == [3, 2, 1]
    assert parallel_map(abs, [-3, 2, -1], threads=2) == [3, 2, 1]


def test_cylindrical_profile():
    prof = CylindricalProfile(3, 10.0)
    assert prof(0.0, 0.0) == 1.0 and prof(0.5, 1.0) == pytest.approx(2 - 2.5)
    assert prof.sup_quarter_ball(64) == pytest.approx(1 + 1 / 16, abs=1e-15)
    assert prof.weight_constant == pytest.approx(2 * math.pi)  # length of the unit circle
    with pytest.raises(ValueError):
        CylindricalProfile(2, 1.0)


def test_l2_matches_direct_quadrature():
    for n, lam in ((3, 10.0), (4, 100.0)):
        prof = CylindricalProfile(n, lam)
        w = prof.weight_constant

        def inner(xn):
            top = min(math.sqrt((1 + xn * xn) / lam), math.sqrt(1 - xn * xn))
            val, _ = integrate.quad(lambda r: max(prof(r, xn), 0.0) ** 2 * r ** (n - 2), 0, top,
                                    epsabs=1e-13, epsrel=1e-12)
            return val
        xs = math.sqrt((lam - 1) / (lam + 1))
        oracle = sum(integrate.quad(inner, a, b, epsabs=1e-12, epsrel=1e-11)[0]
                     for a, b in ((-1, -xs), (-xs, 0), (0, xs), (xs, 1)))
        assert prof.positive_l2_squared(64) == pytest.approx(w * oracle, rel=1e-8)


def test_counterexample_ratio_and_slope():
    lams = [1e2, 1e3, 1e4, 1e5]
    ratios = [counterexample_ratio(4, lam) for lam in lams]
    assert 0.70 <= fit_slope(lams, ratios) <= 0.80
    r, sup, l2 = counterexample_ratio(3, 10.0, full_output=True)
    assert sup >= 1 and r == pytest.approx(sup / l2)
    with pytest.raises(ValueError):
        counterexample_ratio(3, 0.5)
    with pytest.raises(QuadratureError):
        counterexample_ratio(8, 1e5, resolution=2)


def test_fit_slope_exact_power():
    lams = np.array([1.0, 10.0, 100.0])
    assert fit_slope(lams, 3 * lams ** 0.4) == pytest.approx(0.4)


@pytest.mark.parametrize("n,lam", [(3, 10.0), (4, 100.0), (3, 1e3), (4, 1e3)])
def test_pde_check_exact(n, lam):
    assert counterexample_pde_check(n, lam) <= 1e-10 * lam


def test_pde_check_perturbed_control():
    assert counterexample_pde_check(3, 10.0, perturb=0.01) > 1e-3


def test_counterexample_study_rows():
    cols, rows, checks = counterexample_study(cfg(n_list="4", lambda_list="100, 1000, 10000, 100000"))
    assert all(checks.values())
    assert len(rows) == 4 and set(cols) <= set(rows[0])
    assert 0.70 <= rows[0]["slope"] <= 0.80 and rows[0]["target"] == 0.75


def test_contrast_analytic_modes():
    _, rows, checks = contrast_study(cfg(n=4, lambda_list="100, 1000, 10000, 100000"))
    assert checks["sound"]
    assert 0.70 <= rows[0]["fitted_exponent"] <= 0.80
    _, rows, checks = contrast_study(cfg(n=3, kappa=0.1, lambda_list="10, 100, 1000"))
    assert checks["sound"] and all(r["within_c_max"] for r in rows)
    assert all(r["c_implied"] <= 100 for r in rows)


def test_contrast_grid_isotropic_is_flat():
    _, rows, checks = contrast_study(cfg(mode="grid", isotropic=1, lambda_list="10, 100", h="1/8"))
    assert checks["sound"]
    assert rows[0]["ratio"] == pytest.approx(rows[1]["ratio"], rel=1e-12)
    assert abs(rows[0]["fitted_exponent"]) < 1e-9


def test_degiorgi_zero_field():
    assert degiorgi_zero_bound(k0=0.25) == 0.25
    assert degiorgi_zero_bound() == 0.0


def test_degiorgi_forcing_raises_bound():
    base = dict(lambda_list="10", h="1/16")
    _, zero_rows, checks = degiorgi_study(cfg(**base))
    assert checks["sound"] and zero_rows[0]["bound"] >= zero_rows[0]["sup"]
    _, f_rows, _ = degiorgi_study(cfg(forcing="constant", f_scale=1.0, **base))
    assert f_rows[0]["bound"] > zero_rows[0]["bound"]
    with pytest.raises(ConfigError):
        degiorgi_study(cfg(n=5))


def test_build_forcing():
    g = Grid(3, 1.0, 0.25)
    assert np.all(build_forcing(cfg(), g).values == 0)
    assert np.all(build_forcing(cfg(forcing="constant", f_scale=2), g).values == 2)
    f = build_forcing(cfg(forcing="power", f_cap=4, f_exponent=0.5), g).values
    assert f.max() == 4.0 and f.min() > 0
    r = np.sqrt(g.dist2())
    far = r > 0.5
    assert np.allclose(f[far], r[far] ** -0.5)


def test_admissibility_gate():
    ok, ex = admissibility(3, 2.0, 2.4, 0.2)
    assert ok and ex.admissible
    q = 2.0 * (1 + 2 / 2 + 0.01)
    assert not admissibility(3, 2.0, q, 0.2)[0]
    with pytest.raises(ConfigError):
        lipschitz_study(cfg(pq_list=f"2:{q}", kappa=0.2))
    with pytest.raises(ConfigError):
        lipschitz_study(cfg(n=4))


def test_lipschitz_rhs_terms():
    assert lipschitz_rhs(1.0, 0.0, 2.0, 0.8, 1.0) == pytest.approx(2.0)
    X = 1.0 + 2.0 ** 2
    assert lipschitz_rhs(1.0, 2.0, 2.0, 0.8, 1.5) == pytest.approx(X ** 0.5 + X ** 0.8 + 2 ** 1.5)


def test_lipschitz_affine_boundary():
    common = dict(pq_list="2:2.4", h_list="1/8", slope=0.5, cq=1, eps=1e-8, tol=1e-10)
    _, rows, checks = lipschitz_study(cfg(domain="box", **common))
    assert checks["finite"]
    assert rows[0]["grad_sup"] == pytest.approx(0.5, abs=1e-9)
    # on the ball the cut-edge rule is exact for affine data only when F is quadratic
    _, rows, _ = lipschitz_study(cfg(**common))
    assert rows[0]["grad_sup"] == pytest.approx(0.5, rel=0.01)
    _, rows, _ = lipschitz_study(cfg(**dict(common, pq_list="2:2", cq=0)))
    assert rows[0]["grad_sup"] == pytest.approx(0.5, abs=1e-9)


def test_lipschitz_poisson_gradient():
    # -div(grad u) = 12 with zero data: u = 2(1 - |x|^2), |grad u| = 4|x|, sup on the half ball 2
    _, rows, _ = lipschitz_study(cfg(pq_list="2:2", h_list="1/16", forcing="constant", f_scale=12,
                                     cp=0.5, boundary="zero", eps=1e-10, tol=1e-8))
    assert rows[0]["grad_sup"] == pytest.approx(2.0, rel=0.02)


def test_regularization_smooth_base_has_zero_deviation():
    _, rows, checks = regularization_study(cfg(p=1.5, q=1.5, mu=1, h="1/8", n=2,
                                               forcing="constant", f_scale=0.5))
    assert all(r["deviation"] == 0.0 for r in rows)
    assert all(r["truncation"] == 0.0 for r in rows)  # m >= 1 > ||f||_inf
    assert checks["lift_decreasing"]


def test_regularization_singular_base():
    _, rows, checks = regularization_study(cfg(p=1.5, q=1.5, mu=0, h="1/8", n=2, forcing="power",
                                               f_cap=8))
    assert all(checks.values())
    assert rows[0]["deviation"] > rows[-1]["deviation"] > 0
    assert rows[0]["eps0"] >= 0.1
    with pytest.raises(ConfigError):
        regularization_study(cfg(p=1.5, q=1.5, mu=0, h="1/8", n=2, eps_list="0.5, 0.1, 0.01"))


def test_read_samples_csv(tmp_path):
    p = tmp_path / "s.csv"
    p.write_text("value,measure\n1.0,0.5\n-2.0,0.25\n")
    s = read_samples_csv(str(p))
    assert len(s) == 2 and s.total_measure == 0.75
    p.write_text("value,measure\n")
    with pytest.raises(ConfigError):
        read_samples_csv(str(p))
    p.write_text("1,1\nx,y\n")
    with pytest.raises(ConfigError):
        read_samples_csv(str(p))
