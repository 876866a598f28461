"""Experiment drivers behind the command line: counterexample scaling, contrast
studies, De Giorgi runs, the Lipschitz study and regularization convergence.

Each study takes an ExperimentConfig and returns (columns, rows, checks),
where ``checks`` maps soundness names to booleans.
"""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, fields, replace
from fractions import Fraction

import numpy as np
from scipy.special import gamma as Gamma, roots_legendre

from .degiorgi import (IterationConstants, linfty_bound, prop2_exponent, run_iteration,
                       theorem_exponents)
from .grid import (BallRegion, Grid, ScalarField, gradient, integrate_ball, sup_ball,
                   truncate_above)
from .integrand import ModelIntegrand, PQParams, find_eps0, regularize, truncate_forcing
from .rearrangement import WeightedSamples, lorentz_n1, lp_norm_from_profile, rearrange
from .solver import (EllipticCoefficients, MinimizationProblem, elliptic_residual,
                     energy_convergence_study, estimate_caccioppoli_constants, minimize,
                     solve_linear, tent_cutoff, tent_lattice)


class ConfigError(ValueError):
    pass


class QuadratureError(RuntimeError):
    pass


# ---------------------------------------------------------------- config

def _floats(s):
    return tuple(float(Fraction(x.strip())) for x in str(s).split(",") if x.strip())


def _ints(s):
    return tuple(int(x) for x in str(s).split(",") if x.strip())


def _pairs(s):
    out = []
    for item in str(s).split(","):
        if item.strip():
            a, b = item.split(":")
            out.append((float(Fraction(a)), float(Fraction(b))))
    return tuple(out)


def _float(s):
    return float(Fraction(str(s).strip()))


def _str(s):
    return str(s).strip()


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str = ""
    n: int = 3
    n_list: tuple = (4, 5, 7)
    p: float = 2.0
    q: float = 2.0
    kappa: float = 0.25
    mu: float = 0.0
    nu: float = 1.0
    lam: float = 1.0
    lambda_list: tuple = (10.0, 100.0, 1000.0)
    cp: float = 1.0
    cq: float = 0.0
    h: float = 1 / 16
    h_list: tuple = (1 / 16, 1 / 32)
    radius: float = 1.0
    tol: float = 1e-9
    seed: int = 0
    resolution: int = 64
    mode: str = "analytic"
    isotropic: int = 0
    c_max: float = 100.0
    pq_list: tuple = ((2.0, 2.4), (2.5, 3.2), (1.8, 2.2))
    forcing: str = "zero"
    f_scale: float = 1.0
    f_exponent: float = 0.5
    f_cap: float = 4.0
    m2: float = -1.0
    boundary: str = "affine"
    slope: float = 0.5
    domain: str = "ball"
    eps: float = 0.01
    T: float = 1.0
    eps_list: tuple = (0.1, 0.03, 0.01)
    m_list: tuple = (1.0, 2.0, 4.0)
    levels: tuple = (0.0, 0.25, 0.5, 0.75)
    input: str = ""
    criteria: tuple = tuple(range(1, 11))
    out: str = ""
    threads: int = 1


_PARSERS = {"n": int, "n_list": _ints, "seed": int, "resolution": int, "isotropic": int,
            "threads": int, "criteria": _ints, "pq_list": _pairs, "experiment": _str,
            "mode": _str, "forcing": _str, "boundary": _str, "domain": _str, "input": _str,
            "out": _str}
for _f in fields(ExperimentConfig):
    if _f.name not in _PARSERS:
        _PARSERS[_f.name] = _floats if isinstance(_f.default, tuple) else _float

# external key -> field name
ALIASES = {"lambda": "lam"}
CONFIG_KEYS = sorted({f.name for f in fields(ExperimentConfig)} - {"lam"} | {"lambda"})


def config_key(name: str) -> str:
    name = name.strip().replace("-", "_")
    return ALIASES.get(name, name)


def parse_config_text(text: str) -> dict:
    """Flat ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        k, v = line.split("=", 1)
        out[k.strip()] = v.strip()
    return out


def build_config(raw: dict, experiment: str = "") -> ExperimentConfig:
    known = {f.name for f in fields(ExperimentConfig)}
    vals = {}
    for k, v in raw.items():
        name = config_key(k)
        if name not in known:
            raise ConfigError(f"unknown config key {k!r}")
        try:
            vals[name] = _PARSERS[name](v)
        except (ValueError, ZeroDivisionError) as exc:
            raise ConfigError(f"bad value for {k!r}: {v!r}") from exc
    if experiment:
        vals["experiment"] = experiment
    cfg = ExperimentConfig(**vals)
    validate(cfg)
    return cfg


def validate(cfg: ExperimentConfig):
    lams = cfg.lambda_list
    if not lams or any(b <= a for a, b in zip(lams, lams[1:])) or lams[0] <= 0:
        raise ConfigError("lambda_list must be non-empty, positive and increasing")
    if not cfg.h > 0 or any(h <= 0 for h in cfg.h_list):
        raise ConfigError("grid spacings must be positive")
    if not cfg.tol > 0:
        raise ConfigError("tol must be positive")
    if cfg.threads < 1:
        raise ConfigError("threads must be at least 1")
    if not 0 < cfg.nu <= cfg.lam:
        raise ConfigError("need 0 < nu <= lambda")
    if cfg.mode not in ("analytic", "grid"):
        raise ConfigError("mode must be 'analytic' or 'grid'")
    if cfg.forcing not in ("zero", "constant", "power"):
        raise ConfigError("forcing must be zero, constant or power")
    if cfg.boundary not in ("affine", "zero", "quadratic"):
        raise ConfigError("boundary must be affine, zero or quadratic")
    if cfg.domain not in ("ball", "box"):
        raise ConfigError("domain must be ball or box")
    eps = cfg.eps_list
    if any(b >= a for a, b in zip(eps, eps[1:])) or any(e <= 0 for e in eps):
        raise ConfigError("eps_list must be positive and decreasing")
    if any(b <= a for a, b in zip(cfg.m_list, cfg.m_list[1:])) or any(m <= 0 for m in cfg.m_list):
        raise ConfigError("m_list must be positive and increasing")
    if len(cfg.eps_list) != len(cfg.m_list):
        raise ConfigError("eps_list and m_list must have equal length")


def parallel_map(fn, items, threads=1):
    """Order-preserving map; a process pool when threads > 1."""
    items = list(items)
    if threads <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


# ---------------------------------------------------------- counterexample

@dataclass(frozen=True)
class CylindricalProfile:
    """v = x_n^2 + 1 - Lambda |x'|^2 as a function of (r = |x'|, x_n)."""
    n: int
    lam: float

    def __post_init__(self):
        if self.n < 3:
            raise ValueError("need n >= 3")
        if not self.lam > 0:
            raise ValueError("Lambda must be positive")

    def __call__(self, r, xn):
        return xn * xn + 1 - self.lam * r * r

    @property
    def weight_constant(self) -> float:
        """Area of the unit sphere in R^{n-1}."""
        return 2 * math.pi ** ((self.n - 1) / 2) / Gamma((self.n - 1) / 2)

    def field(self, grid: Grid) -> ScalarField:
        n, lam = self.n, self.lam

        def fn(*x):
            r2 = sum(c * c for c in x[:-1])
            return x[-1] ** 2 + 1 - lam * r2
        if grid.n != n:
            raise ValueError("grid dimension differs from profile dimension")
        return ScalarField.from_function(grid, fn)

    def coefficients(self, grid: Grid, perturb: float = 0.0) -> EllipticCoefficients:
        d = np.ones(self.n)
        d[-1] = (self.n - 1) * self.lam * (1 + perturb)
        return EllipticCoefficients.diagonal(grid, d)

    def positive_l2_squared(self, resolution: int) -> float:
        """int_{B_1} v_+^2 by Gauss-Legendre in (x_n, r), split where the limiting surface changes."""
        n, lam = self.n, self.lam
        xg, wg = roots_legendre(resolution)
        cuts = [-1.0, 1.0]
        if lam > 1:
            xs = math.sqrt((lam - 1) / (lam + 1))
            cuts = [-1.0, -xs, 0.0, xs, 1.0]
        total = 0.0
        for a, b in zip(cuts, cuts[1:]):
            xn = 0.5 * (b - a) * xg + 0.5 * (a + b)
            wx = 0.5 * (b - a) * wg
            top = np.minimum(np.sqrt((1 + xn * xn) / lam), np.sqrt(np.maximum(1 - xn * xn, 0.0)))
            r = 0.5 * top[:, None] * (xg[None, :] + 1)
            wr = 0.5 * top[:, None] * wg[None, :]
            vals = np.maximum(self(r, xn[:, None]), 0.0) ** 2 * r ** (n - 2)
            total += float(np.sum(wx * np.sum(vals * wr, axis=1)))
        return self.weight_constant * total

    def sup_quarter_ball(self, resolution: int) -> float:
        """sup of v over B_{1/4} on the reduced (r, x_n) quarter disk, boundary included."""
        xn = np.linspace(-0.25, 0.25, 2 * resolution + 1)
        r = np.linspace(0.0, 0.25, resolution + 1)
        R, X = np.meshgrid(r, xn, indexing="ij")
        inside = R * R + X * X <= 0.0625 * (1 + 1e-12)
        return float(np.max(self(R, X)[inside]))


def counterexample_ratio(n: int, lam: float, resolution: int = 64, full_output: bool = False):
    """||v_+||_{L^inf(B_1/4)} / ||v_+||_{L^2(B_1)}, checked against doubled resolution."""
    if n < 3 or lam < 1:
        raise ValueError("need n >= 3 and Lambda >= 1")
    prof = CylindricalProfile(n, lam)
    sup = prof.sup_quarter_ball(resolution)
    l2 = math.sqrt(prof.positive_l2_squared(resolution))
    l2_fine = math.sqrt(prof.positive_l2_squared(2 * resolution))
    if abs(l2 - l2_fine) > 1e-3 * l2_fine:
        raise QuadratureError(f"quadrature unresolved at resolution {resolution}")
    ratio = sup / l2_fine
    return (ratio, sup, l2_fine) if full_output else ratio


def fit_slope(lams, values) -> float:
    return float(np.polyfit(np.log(lams), np.log(values), 1)[0])


def counterexample_pde_check(n: int, lam: float, h: float | None = None, perturb: float = 0.0) -> float:
    """Sup of the discrete residual of -div(a grad v) at interior nodes.

    The default dyadic spacings make nodes, nodal values and differences
    exact in binary, so the residual carries no roundoff from v itself.
    """
    if n not in (3, 4):
        raise ValueError("grid check supports n in {3, 4}")
    h = (0.125 if n == 3 else 0.25) if h is None else h
    grid = Grid(n, 1.0, h)
    prof = CylindricalProfile(n, lam)
    res = elliptic_residual(prof.coefficients(grid, perturb), prof.field(grid))
    return float(np.max(np.abs(res.values)))


def _counterexample_row(args):
    n, lam, res = args
    ratio, sup, l2 = counterexample_ratio(n, lam, res, full_output=True)
    return {"n": n, "lambda": lam, "sup": sup, "l2": l2, "ratio": ratio}


def counterexample_study(cfg: ExperimentConfig):
    jobs = [(n, lam, cfg.resolution) for n in cfg.n_list for lam in cfg.lambda_list]
    rows = parallel_map(_counterexample_row, jobs, cfg.threads)
    checks = {}
    for n in cfg.n_list:
        sel = [r for r in rows if r["n"] == n]
        slope = fit_slope([r["lambda"] for r in sel], [r["ratio"] for r in sel]) if len(sel) > 1 else math.nan
        for r in sel:
            r["slope"] = slope
            r["target"] = (n - 1) / 4
            r["lambda_min"] = cfg.lambda_list[0]
            r["lambda_max"] = cfg.lambda_list[-1]
            r["sup_ge_one"] = r["sup"] >= 1.0
        checks[f"sup_ge_one_n{n}"] = all(r["sup_ge_one"] for r in sel)
    cols = ["n", "lambda", "sup", "l2", "ratio", "slope", "target", "lambda_min", "lambda_max",
            "sup_ge_one"]
    return cols, rows, checks


# ---------------------------------------------------------------- contrast

def ball_grid(n: int, radius: float, h: float) -> Grid:
    """Box grid with one spare cell around B_radius (the solvers need it)."""
    cells = math.ceil(radius / h - 1e-9) + 1
    return Grid(n, cells * h, h)


def _harmonic_boundary(n):
    def g(*x):
        r2 = sum(c * c for c in x[:-1])
        return x[-1] ** 2 - r2 / (n - 1) + 1
    return g


def _contrast_grid_row(args):
    cfg, lam = args
    n = 3
    grid = ball_grid(n, cfg.radius, cfg.h)
    ball = BallRegion.centered(n, cfg.radius)
    d = np.ones(n) if cfg.isotropic else np.array([1.0] * (n - 1) + [lam])
    a = EllipticCoefficients.diagonal(grid, d)
    bdry = ScalarField.from_function(grid, _harmonic_boundary(n))
    v = solve_linear(a, bdry, ScalarField.constant(grid, 0.0), tol=cfg.tol, region=ball)
    sup = max(sup_ball(v, BallRegion.centered(n, cfg.radius / 2)), 0.0)
    l2 = math.sqrt(integrate_ball(truncate_above(v, 0.0).map(np.square), ball))
    contrast = 1.0 if cfg.isotropic else lam
    return {"lambda": lam, "contrast": contrast, "sup": sup, "l2": l2, "ratio": sup / l2,
            "c_m": 2.0, "M1": math.sqrt(contrast / cfg.nu)}


def _contrast_analytic_row(args):
    cfg, lam = args
    n = cfg.n
    ratio, sup, l2 = counterexample_ratio(n, lam, cfg.resolution, full_output=True)
    return {"lambda": lam, "contrast": (n - 1) * lam, "sup": sup, "l2": l2, "ratio": ratio,
            "c_m": 2.0, "M1": math.sqrt((n - 1) * lam)}


def contrast_study(cfg: ExperimentConfig):
    """sup over the inner ball of v_+ against the L^2 norm, across contrasts.

    Analytic mode uses the counterexample (inner ball B_1/4); grid mode solves
    -div(a grad v) = 0 on B_1 with a = diag(1, .., 1, Lambda) (or a = I when
    ``isotropic``) and harmonic boundary data (inner ball B_1/2).  Each row
    carries the explicit local boundedness bound on the ratio, built from a Caccioppoli
    inequality with c_m = 2 and M1 = sqrt(contrast).
    """
    if cfg.mode == "grid":
        if cfg.n != 3:
            raise ConfigError("grid contrast study runs in n = 3")
        rows = parallel_map(_contrast_grid_row, [(cfg, lam) for lam in cfg.lambda_list], cfg.threads)
        scale = cfg.radius
    else:
        if cfg.n < 3:
            raise ConfigError("analytic mode needs n >= 3")
        rows = parallel_map(_contrast_analytic_row, [(cfg, lam) for lam in cfg.lambda_list], cfg.threads)
        scale = 1.0
    n = cfg.n
    kappa = cfg.kappa if n == 3 else None
    m = prop2_exponent(n, kappa)
    volB = math.pi ** (n / 2) / Gamma(n / 2 + 1) * scale ** n
    base = IterationConstants.build(n, kappa)
    slope = fit_slope([r["lambda"] for r in rows], [r["ratio"] for r in rows]) if len(rows) > 1 else math.nan
    for r in rows:
        C = replace(base, c_m=r["c_m"], M1=max(1.0, r["M1"]))
        # the lemma bounds sup over B_1/2 by the L^2 norm on B_2; dilate so the
        # inner ball of the study lands on B_1/2
        dil = 4 / scale if cfg.mode == "grid" else 2.0
        r["bound_ratio"] = linfty_bound(C, 1.0).value * dil ** (n / 2)
        r["m"] = m
        r["c_implied"] = r["ratio"] * math.sqrt(volB) / r["contrast"] ** m
        r["fitted_exponent"] = slope
        r["sound"] = r["ratio"] <= r["bound_ratio"]
        r["within_c_max"] = r["c_implied"] <= cfg.c_max
    checks = {"sound": all(r["sound"] for r in rows)}
    cols = ["lambda", "contrast", "sup", "l2", "ratio", "m", "c_implied", "bound_ratio",
            "fitted_exponent", "sound", "within_c_max"]
    return cols, rows, checks


# ---------------------------------------------------------------- de giorgi

def build_forcing(cfg: ExperimentConfig, grid: Grid) -> ScalarField:
    if cfg.forcing == "zero":
        return ScalarField.constant(grid, 0.0)
    if cfg.forcing == "constant":
        return ScalarField.constant(grid, cfg.f_scale)
    r = np.sqrt(grid.dist2())
    with np.errstate(divide="ignore"):
        vals = cfg.f_scale * np.where(r > 0, r, 0.0) ** (-cfg.f_exponent)
    return ScalarField(grid, np.minimum(vals, cfg.f_cap))


def _degiorgi_row(args):
    cfg, lam = args
    n = cfg.n
    grid = ball_grid(n, 1.0, cfg.h) if cfg.mode == "grid" else Grid(n, 1.0, cfg.h)
    unit = BallRegion.centered(n, 1.0)
    prof = CylindricalProfile(n, lam)
    if cfg.mode == "grid":
        a = prof.coefficients(grid)
        v = solve_linear(a, prof.field(grid), ScalarField.constant(grid, 0.0), tol=cfg.tol, region=unit)
    else:
        v = prof.field(grid)
    f = build_forcing(cfg, grid)
    fvals = None if cfg.forcing == "zero" else f
    c_m = math.sqrt(4 * (n - 1))
    cuts = [tent_cutoff(grid, r, s) for r, s in tent_lattice(1.0)]
    fit = estimate_caccioppoli_constants(v, fvals, cfg.levels, cuts, unit, c_m_grid=(c_m,))
    kappa = cfg.kappa if n == 3 else None
    M2 = fit.M2 if cfg.m2 < 0 else cfg.m2
    if fvals is not None and M2 == 0:
        M2 = 1.0
    C = IterationConstants.build(n, kappa, c_m=c_m, M1=max(1.0, fit.M1), M2=M2)
    res = run_iteration(v, fvals, C)
    Crem = replace(C, M1=math.sqrt(lam))
    rem = run_iteration(v, fvals, Crem)
    sup = sup_ball(v, BallRegion.centered(n, 0.5))
    l2 = math.sqrt(integrate_ball(truncate_above(v, 0.0).map(np.square), unit))
    lf = 0.0
    if fvals is not None:
        lf = lorentz_n1(rearrange(WeightedSamples.from_field(f, unit)), n)
    explicit = linfty_bound(Crem, 2 ** (n / 2) * l2, lf)
    limit = 1e3 * Crem.M1 ** Crem.m1_exponent
    return {"lambda": lam, "h": cfg.h, "c_m": c_m, "M1_est": fit.M1, "M2": M2,
            "saturated": fit.saturated, "bound": res.bound, "finite": res.finite,
            "bound_sqrt_lambda": rem.bound, "sup": sup, "bound_over_sup": res.bound / sup if sup > 0 else math.inf,
            "failures_above_floor": res.failures_above_floor + rem.failures_above_floor,
            "noise_floor": res.noise_floor, "iterations": len(res.rows), "l2": l2,
            "explicit_bound": explicit.value,
            "explicit_over_l2": explicit.value / l2 if l2 > 0 else 0.0, "limit": limit,
            "sound": bool(res.finite and res.bound >= sup and rem.bound >= sup
                          and res.failures_above_floor == 0 and rem.failures_above_floor == 0),
            "within_limit": (explicit.value / l2 if l2 > 0 else 0.0) <= limit}


def degiorgi_study(cfg: ExperimentConfig):
    """Caccioppoli estimation, the iteration, and the explicit bound per contrast.

    ``bound`` uses the estimated M1; ``bound_sqrt_lambda`` and ``explicit_bound``
    use M1 = sqrt(Lambda) with c_m^2 = 4(n-1), the constants the counterexample
    satisfies exactly.
    """
    if cfg.n not in (3, 4):
        raise ConfigError("De Giorgi study runs on grids with n in {3, 4}")
    rows = parallel_map(_degiorgi_row, [(cfg, lam) for lam in cfg.lambda_list], cfg.threads)
    checks = {"sound": all(r["sound"] for r in rows),
              "within_limit": all(r["within_limit"] for r in rows)}
    cols = ["lambda", "h", "c_m", "M1_est", "M2", "saturated", "bound", "finite", "bound_sqrt_lambda",
            "sup", "bound_over_sup", "failures_above_floor", "noise_floor", "iterations", "l2",
            "explicit_bound", "explicit_over_l2", "limit", "sound", "within_limit"]
    return cols, rows, checks


def degiorgi_zero_bound(n: int = 3, h: float = 0.125, k0: float = 0.0, kappa: float = 0.25) -> float:
    """Bound produced for v = 0; equals k0."""
    grid = Grid(n, 1.0, h)
    C = IterationConstants.build(n, kappa if n == 3 else None, k0=k0)
    return run_iteration(ScalarField.constant(grid, 0.0), None, C).bound


# ---------------------------------------------------------------- lipschitz

def admissibility(n: int, p: float, q: float, kappa: float, forcing_zero: bool = False):
    """(ok, ExponentSet).  Zero forcing or p >= 2 - 4/(n+1) relaxes the gap condition to q/p < 1 + 2/(n-1)."""
    ex = theorem_exponents(n, p, q, kappa)
    gap = ex.pq if (forcing_zero or p >= 2 - 4 / (n + 1)) else ex.pqrhs
    ok = gap and ex.kappa_ok and ex.gamma_below_one and ex.gamma_tilde_below_one
    return ok, ex


def _boundary_field(cfg: ExperimentConfig, grid: Grid) -> ScalarField:
    b = cfg.slope
    if cfg.boundary == "zero":
        return ScalarField.constant(grid, 0.0)
    if cfg.boundary == "affine":
        return ScalarField.from_function(grid, lambda *x: b * x[0])
    return ScalarField.from_function(grid, lambda *x: b * x[0] + 0.5 * sum(c * c for c in x[1:]))


def lipschitz_rhs(mean_F: float, lorentz_f: float, p: float, alpha_n: float, beta_n: float) -> float:
    """Three-term right side with c = 1: X^{1/p} + X^{alpha_n} + ||f||^{beta_n},
    X = mean of F(grad u) + ||f||^{p/(p-1)}."""
    X = mean_F + lorentz_f ** (p / (p - 1))
    return X ** (1 / p) + X ** alpha_n + (lorentz_f ** beta_n if lorentz_f > 0 else 0.0)


def _lipschitz_row(args):
    cfg, p, q, h = args
    n = 3
    grid = ball_grid(n, cfg.radius, h) if cfg.domain == "ball" else Grid(n, cfg.radius, h)
    ball = BallRegion.centered(n, cfg.radius)
    half = BallRegion.centered(n, cfg.radius / 2)
    F = ModelIntegrand(PQParams(cfg.nu, cfg.lam, p, q, cfg.mu), cfg.cp, cfg.cq)
    reg = regularize(F, cfg.eps, cfg.T)
    f = build_forcing(cfg, grid)
    prob = MinimizationProblem(reg, f, _boundary_field(cfg, grid), ball if cfg.domain == "ball" else None)
    u, rep = minimize(prob, tol=cfg.tol)
    du = gradient(u).values
    mod = np.sqrt(np.sum(du * du, axis=0))
    grad_sup = float(np.max(mod[half.mask(grid)]))
    inside = ball.mask(grid)
    Fvals = F.value(np.moveaxis(du, 0, -1))
    mean_F = float(np.mean(Fvals[inside]))
    lf = lorentz_n1(rearrange(WeightedSamples.from_field(f, ball)), n)
    ex = theorem_exponents(n, p, q, cfg.kappa)
    rhs = lipschitz_rhs(mean_F, lf, p, ex.alpha_n, ex.beta_n)
    return {"p": p, "q": q, "h": h, "grad_sup": grad_sup, "mean_F": mean_F, "lorentz_f": lf,
            "alpha_n": ex.alpha_n, "beta_n": ex.beta_n, "rhs": rhs, "ratio": grad_sup / rhs,
            "newton_iterations": rep.iterations, "residual": rep.residual}


def lipschitz_study(cfg: ExperimentConfig):
    """Gradient sup over the half ball against the three-term estimate, on each grid of h_list."""
    if cfg.n != 3:
        raise ConfigError("the Lipschitz study runs in n = 3")
    fz = cfg.forcing == "zero"
    for p, q in cfg.pq_list:
        try:
            ok, _ = admissibility(3, p, q, cfg.kappa, fz)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        if not ok:
            raise ConfigError(f"(p, q) = ({p}, {q}) is not admissible for n = 3, kappa = {cfg.kappa}")
        F = ModelIntegrand(PQParams(cfg.nu, cfg.lam, p, q, cfg.mu), cfg.cp, cfg.cq)
        if F.singular_at_origin and cfg.eps > find_eps0(F, cfg.T):
            raise ConfigError(f"eps = {cfg.eps} exceeds the convexity threshold for p = {p}")
    jobs = [(cfg, p, q, h) for p, q in cfg.pq_list for h in cfg.h_list]
    rows = parallel_map(_lipschitz_row, jobs, cfg.threads)
    for p, q in cfg.pq_list:
        sel = [r for r in rows if r["p"] == p and r["q"] == q]
        drift = abs(sel[-1]["ratio"] - sel[-2]["ratio"]) / sel[-2]["ratio"] if len(sel) > 1 else 0.0
        for r in sel:
            r["drift"] = drift
    checks = {"finite": all(math.isfinite(r["ratio"]) for r in rows),
              "drift": all(r["drift"] <= 0.2 for r in rows)}
    cols = ["p", "q", "h", "grad_sup", "mean_F", "lorentz_f", "alpha_n", "beta_n", "rhs", "ratio",
            "drift", "newton_iterations", "residual"]
    return cols, rows, checks


# ---------------------------------------------------------- regularization

def regularization_study(cfg: ExperimentConfig):
    """Per (eps, m): sup |F~_eps - F| on |z| <= T, the eps L_p energy of the
    comparison function, and ||f - f_m||_{L^n(B)}; all three should decrease."""
    n = cfg.n
    F = ModelIntegrand(PQParams(cfg.nu, cfg.lam, cfg.p, cfg.q, cfg.mu), cfg.cp, cfg.cq)
    eps0 = find_eps0(F, cfg.T)
    if cfg.eps_list[0] > eps0:
        raise ConfigError(f"eps = {cfg.eps_list[0]} exceeds the convexity threshold {eps0:.6g}")
    grid = ball_grid(n, cfg.radius * (1 + cfg.eps_list[0]), cfg.h)
    ball = BallRegion.centered(n, cfg.radius)
    f = build_forcing(cfg, grid)
    g = _boundary_field(cfg, grid)
    rows, _ = energy_convergence_study(F, f, ball, cfg.eps_list, cfg.m_list, g, cfg.T, cfg.tol)
    for r in rows:
        r["eps0"] = eps0
        r["deviation"] = regularize(F, r["eps"], cfg.T).deviation()
        diff = truncate_forcing(f, r["m"]).values - f.values
        prof = rearrange(WeightedSamples.from_field(ScalarField(grid, diff), ball))
        r["truncation"] = lp_norm_from_profile(prof, n) ** (1 / n)

    def dec(key):
        v = [r[key] for r in rows]
        return all(b <= a * (1 + 1e-12) + 1e-300 for a, b in zip(v, v[1:]))
    checks = {"deviation_decreasing": dec("deviation"), "lift_decreasing": dec("lift"),
              "truncation_decreasing": dec("truncation")}
    cols = ["eps", "m", "eps0", "deviation", "lift", "truncation", "tilde_inflated", "reference",
            "energy", "newton_iterations"]
    return cols, rows, checks


# ------------------------------------------------------------------ lorentz

def read_samples_csv(path: str) -> WeightedSamples:
    """Two columns (value, measure); a non-numeric first line is a header."""
    vals, meas = [], []
    with open(path, encoding="utf-8") as fh:
        for i, line in enumerate(fh):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = [x.strip() for x in line.split(",")]
            try:
                v, m = float(parts[0]), float(parts[1])
            except (ValueError, IndexError):
                if i == 0:
                    continue
                raise ConfigError(f"bad sample line {i + 1}: {line!r}")
            vals.append(v)
            meas.append(m)
    if not vals:
        raise ConfigError("no samples in input")
    return WeightedSamples(np.array(vals), np.array(meas))


def lorentz_study(cfg: ExperimentConfig):
    if not cfg.input:
        raise ConfigError("lorentz needs an input CSV of (value, measure) pairs")
    try:
        s = read_samples_csv(cfg.input)
    except OSError as exc:
        raise ConfigError(str(exc)) from exc
    prof = rearrange(s)
    n = cfg.n
    row = {"n": n, "samples": len(s), "total_measure": prof.total_measure,
           "sup": float(prof.levels[0]), "l1": lp_norm_from_profile(prof, 1),
           "l2": math.sqrt(lp_norm_from_profile(prof, 2)),
           "ln": lp_norm_from_profile(prof, n) ** (1 / n), "lorentz_n1": lorentz_n1(prof, n)}
    return list(row), [row], {}


STUDIES = {"counterexample": counterexample_study, "contrast": contrast_study,
           "degiorgi": degiorgi_study, "lipschitz": lipschitz_study,
           "regularize": regularization_study, "lorentz": lorentz_study}
