"""Level-set iteration for local boundedness, its constants and exponents.

Geometry is normalized: the subsolution lives on a grid covering the unit
ball, the iteration shrinks radii sigma_l = 1/2 + 2^{-(l+1)} towards 1/2,
and the emitted bound is for sup over B_{1/2}.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.special import gamma as Gamma

from .grid import BallRegion, GridError, ScalarField, sphere_integral, truncate_above, w12_norm
from .rearrangement import WeightedSamples, lorentz_lebesgue_constant, omega, omega_inverse, rearrange


def two_star(n: int, kappa: float | None = None) -> float:
    """Sobolev exponent used on (n-1)-spheres; any finite exponent is allowed in n = 3."""
    if n < 3:
        raise ValueError("the sphere exponent needs n >= 3")
    if n == 3:
        if kappa is None or not 0 < kappa < 0.5:
            raise ValueError("n = 3 needs kappa in (0, 1/2)")
        return 2.0 + 2.0 / kappa
    return 2.0 * (n - 1) / (n - 3)


def two_star_n(n: int) -> float:
    return 2.0 * n / (n - 2)


def alpha_exponent(n: int, kappa: float | None = None) -> float:
    return 0.5 + two_star(n, kappa) / 4


def tau(n: int, kappa: float | None = None) -> float:
    """tau in (0, 1/2) with (2 tau)^{2*/2 - 1} = 2^{-alpha}."""
    s = two_star(n, kappa)
    return 0.5 * 2.0 ** (-alpha_exponent(n, kappa) / (s / 2 - 1))


def m1_exponent(n: int, kappa: float | None = None) -> float:
    """1/(2*/2 - 1) = max{kappa, (n-3)/2}."""
    return 1.0 / (two_star(n, kappa) / 2 - 1)


def sphere_area(n: int, r: float = 1.0) -> float:
    """Surface measure of the sphere of radius r in R^n."""
    return 2 * math.pi ** (n / 2) / Gamma(n / 2) * r ** (n - 1)


def ball_volume(n: int, r: float = 1.0) -> float:
    return math.pi ** (n / 2) / Gamma(n / 2 + 1) * r ** n


def _graded_nodes(a, b, levels=30, per=16):
    """Gauss-Legendre nodes on [a, b] graded geometrically towards a."""
    x, w = np.polynomial.legendre.leggauss(per)
    cuts = a + (b - a) * np.concatenate([[0.0], 2.0 ** -np.arange(levels, -1, -1.0)])
    nodes, weights = [], []
    for lo, hi in zip(cuts[:-1], cuts[1:]):
        nodes.append(0.5 * (hi - lo) * x + 0.5 * (hi + lo))
        weights.append(0.5 * (hi - lo) * w)
    return np.concatenate(nodes), np.concatenate(weights)


def _zonal_library(size, bexp):
    """Constant plus bubbles (1 + a(1 - cos t))^{-b}; a_j = 4^{j/2}, nested in ``size``."""
    yield lambda t: (np.ones_like(t), np.zeros_like(t))
    for j in range(size):
        a = 2.0 ** j

        def prof(t, a=a):
            base = 1 + a * (1 - np.cos(t))
            return base ** (-bexp), -bexp * a * np.sin(t) * base ** (-bexp - 1)
        yield prof


def estimate_sphere_sobolev_constant(n: int, exponent: float, r: float = 1.0,
                                     library_size: int = 24) -> float:
    """Largest observed ||w||_{L^q(S_r)} / ||w||_{W^{1,2}(S_r)} over zonal test profiles."""
    if n < 3:
        raise ValueError("need n >= 3")
    d = n - 1
    q = float(exponent)
    t, wt = _graded_nodes(0.0, math.pi)
    dS = sphere_area(n - 1) * (r * np.sin(t)) ** (d - 1) * r * wt
    bexp = (d - 2) / 2 if d > 2 else d / q
    best = 0.0
    for prof in _zonal_library(library_size, bexp):
        w, dw = prof(t)
        lq = np.sum(np.abs(w) ** q * dS) ** (1 / q)
        w12 = np.sqrt(np.sum((w * w + (dw / r) ** 2) * dS))
        best = max(best, lq / w12)
    return float(best)


def talenti_constant(n: int) -> float:
    """Sharp constant of ||w||_{L^{2n/(n-2)}(R^n)} <= S ||grad w||_{L^2(R^n)}."""
    return float(1 / math.sqrt(math.pi * n * (n - 2)) * (Gamma(n) / Gamma(n / 2)) ** (1 / n))


def estimate_ball_sobolev_constant(n: int, radius: float, library_size: int = 24) -> float:
    """Observed ||w||_{L^{2*_n}(B_r)} / ||w||_{W^{1,2}(B_r)} over radial bubbles, floored by
    the boundary-concentration value 2^{1/n} S_n."""
    q = two_star_n(n)
    rho, wt = _graded_nodes(0.0, radius)
    dV = sphere_area(n) * rho ** (n - 1) * wt
    best = 2 ** (1 / n) * talenti_constant(n)
    for j in range(-1, library_size):
        if j < 0:
            w, dw = np.ones_like(rho), np.zeros_like(rho)
        else:
            a = 4.0 ** j
            base = 1 + a * rho * rho
            w = base ** (-(n - 2) / 2)
            dw = -(n - 2) * a * rho * base ** (-n / 2)
        lq = np.sum(w ** q * dV) ** (1 / q)
        best = max(best, lq / np.sqrt(np.sum((w * w + dw * dw) * dV)))
    return float(best)


def default_c1(n: int, kappa: float | None = None) -> float:
    s = two_star(n, kappa)
    C = max(estimate_sphere_sobolev_constant(n, s, r) for r in (0.5, 1.0))
    return max(1.0, C ** (s / 2))


def default_c2(n: int) -> float:
    q = two_star_n(n)
    C = max(estimate_ball_sobolev_constant(n, r) for r in (0.5, 1.0))
    return max(1.0, C ** q, C ** (1 + q / n))


@dataclass(frozen=True)
class IterationConstants:
    n: int
    kappa: float | None
    c1: float
    c2: float
    c_m: float
    M1: float
    M2: float = 0.0
    k0: float = 0.0

    def __post_init__(self):
        if self.n < 3:
            raise ValueError("the iteration needs n >= 3")
        two_star(self.n, self.kappa)
        if self.M1 < 1:
            raise ValueError("M1 must be at least 1")
        if min(self.c1, self.c2, self.c_m) <= 0 or self.M2 < 0:
            raise ValueError("constants must be positive")

    @classmethod
    def build(cls, n, kappa=None, c_m=2.0, M1=1.0, M2=0.0, k0=0.0, c1=None, c2=None):
        return cls(n, kappa if n == 3 else kappa, default_c1(n, kappa) if c1 is None else c1,
                   default_c2(n) if c2 is None else c2, c_m, M1, M2, k0)

    @property
    def two_star(self):
        return two_star(self.n, self.kappa)

    @property
    def two_star_n(self):
        return two_star_n(self.n)

    @property
    def alpha(self):
        return alpha_exponent(self.n, self.kappa)

    @property
    def tau(self):
        return tau(self.n, self.kappa)

    @property
    def m1_exponent(self):
        return m1_exponent(self.n, self.kappa)

    def scaled(self, s: float):
        return replace(self, c1=self.c1 * s, c2=self.c2 * s, c_m=self.c_m * s)


def delta_parts(ell: int, J0: float, J_prev: float, C: IterationConstants, profile=None):
    """(Delta1, Delta2, Delta3, saturated) for step ell."""
    if ell < 1:
        raise ValueError("ell starts at 1")
    t = C.tau
    e = C.m1_exponent
    d1 = (2 ** C.alpha * 3 * C.c1 * C.c_m * C.M1 * t ** (-(C.two_star / 2 - 1) - 1)) ** e * J0 * 2.0 ** (-ell)
    d3 = (3 * C.c2 / t) ** (C.n / C.two_star_n) * t ** (ell - 1) * J0
    d2, saturated = 0.0, False
    if profile is not None and C.M2 > 0 and J_prev > 0 and np.any(profile.levels > 0):
        y = t ** ell * J0 / (3 * C.c_m * C.M2)
        if y >= omega(profile, profile.total_measure):
            saturated = True
        else:
            ts, _ = omega_inverse(profile, y, full_output=True)
            d2 = C.c2 ** (1 / C.two_star_n) * J_prev / ts ** (1 / C.two_star_n)
    return d1, d2, d3, saturated


@dataclass
class IterationResult:
    rows: list
    bound: float
    finite: bool
    J0: float
    tail_estimate: float
    noise_floor: float
    failures_above_floor: int = 0

    @property
    def all_pass(self) -> bool:
        return self.failures_above_floor == 0


TRACE_COLUMNS = ("l", "k_l", "sigma_l", "delta1", "delta2", "delta3", "J_l", "target", "pass")


def run_iteration(v: ScalarField, f: ScalarField | None, C: IterationConstants,
                  ell_max: int = 200, rel_stop: float = 1e-12) -> IterationResult:
    grid = v.grid
    unit = BallRegion.centered(grid.n, 1.0)
    unit.check_inside(grid)
    J0 = w12_norm(truncate_above(v, C.k0), unit)
    floor = 10 * grid.h * J0
    if J0 == 0:
        return IterationResult([], C.k0, True, 0.0, 0.0, 0.0)
    profile = None
    if f is not None and np.any(f.values != 0):
        profile = rearrange(WeightedSamples.from_field(f, unit))
    vmax = float(np.max(v.values[unit.mask(grid)]))
    rows, k, J_prev, fails = [], C.k0, J0, 0
    finite = False
    last = np.inf
    for ell in range(1, ell_max + 1):
        d1, d2, d3, sat = delta_parts(ell, J0, J_prev, C, profile)
        delta = d1 + d2 + d3
        k += delta
        sigma = 0.5 + 2.0 ** (-(ell + 1))
        J = 0.0 if k >= vmax else w12_norm(truncate_above(v, k), BallRegion.centered(grid.n, sigma))
        target = C.tau ** ell * J0
        ok = J <= target * (1 + 1e-12)
        if not ok and J >= floor:
            fails += 1
        rows.append({"l": ell, "k_l": k, "sigma_l": sigma, "delta1": d1, "delta2": d2,
                     "delta3": d3, "J_l": J, "target": target, "pass": ok, "saturated": sat})
        J_prev = J
        last = delta
        if delta < rel_stop * J0:
            finite = True
            break
    t = C.tau
    tail = last * max(1.0, t / (1 - t)) if finite else np.inf
    bound = k if finite else np.inf
    return IterationResult(rows, bound, finite, J0, tail, floor, fails)


@dataclass(frozen=True)
class LinftyBound:
    value: float
    c: float
    c_v: float
    c_f: float
    m1_exponent: float
    prop2_exponent: float


def linfty_bound(C: IterationConstants, l2_norm: float, lorentz_f: float = 0.0) -> LinftyBound:
    """Explicit form of sup_{B_{1/2}} v <= k0 + c_v M1^{1+e} ||(v-k0)_+||_{L^2(B_2)}
    + c_f M1^e M2 ||f||_{L^{n,1}(B_2)}, with e = max{kappa, (n-3)/2}.

    The constants follow the proof chain: the geometric Delta-sums give P and
    Q, the Lorentz sum gives R_f, and one more Caccioppoli step with a cutoff
    of unit slope between B_1 and B_2 converts the W^{1,2}(B_1) norm into the
    L^2(B_2) norm.  ``c`` is the constant of the averaged form.
    """
    n, t, e = C.n, C.tau, C.m1_exponent
    P = (2 ** C.alpha * 3 * C.c1 * C.c_m * t ** (-(C.two_star / 2 - 1) - 1)) ** e
    Q = (3 * C.c2 / t) ** (n / C.two_star_n) / (1 - t)
    Rf = 3 * C.c_m * C.c2 ** (1 / C.two_star_n) / (2 * t * t * abs(math.log(t)))
    volB2 = ball_volume(n, 2.0)
    c_v = (P + Q) * (1 + C.c_m)
    c_f = (P + Q) * C.c_m * volB2 ** (0.5 - 1.0 / n) * lorentz_lebesgue_constant(n) + Rf
    val = C.k0 + c_v * C.M1 ** (1 + e) * l2_norm + c_f * C.M1 ** e * C.M2 * lorentz_f
    return LinftyBound(val, max(c_v * math.sqrt(volB2), c_f), c_v, c_f, 1 + e, prop2_exponent(n, C.kappa))


def prop2_exponent(n: int, kappa: float | None = None) -> float:
    """m in sup v <= c (Lambda/nu)^m (mean of v_+^2)^{1/2}: (n-1)/4, or (1+kappa)/2 in n = 3."""
    return 0.5 * (1 + m1_exponent(n, kappa))


@dataclass
class CutoffResult:
    energy: float
    bound: float
    radii: np.ndarray
    eta: np.ndarray
    shell_mass: np.ndarray
    cutoff: ScalarField | None = None
    holds: bool = True


def optimal_cutoff(v, rho: float, sigma: float, delta: float, h: float | None = None,
                   n: int | None = None) -> CutoffResult:
    """Minimize the radial Dirichlet energy of eta weighted by |v| between B_rho and B_sigma.

    ``v`` is a ScalarField (shell masses from sphere_integral) or a radial
    profile callable, in which case ``n`` and the shell width ``h`` are needed.
    For shell masses a_i and width dr the discrete minimum is 1/sum(dr/a_i),
    attained by slopes proportional to 1/a_i.
    """
    if not 0 < delta <= 1:
        raise ValueError("delta must lie in (0, 1]")
    if not 0 < rho < sigma:
        raise ValueError("need 0 < rho < sigma")
    field_mode = isinstance(v, ScalarField)
    if field_mode:
        h = v.grid.h if h is None else h
        n = v.grid.n
    elif h is None or n is None:
        raise ValueError("radial mode needs h and n")
    if sigma - rho < 2 * h:
        raise GridError("annulus thinner than two shells")
    count = int(round((sigma - rho) / h))
    dr = (sigma - rho) / count
    radii = rho + (np.arange(count) + 0.5) * dr
    if field_mode:
        absv = v.map(np.abs)
        a = np.array([sphere_integral(absv, r) for r in radii])
    else:
        a = sphere_area(n) * radii ** (n - 1) * np.abs(np.asarray(v(radii), float))
    bound = (sigma - rho) ** (-(1 + 1 / delta)) * (np.sum(a ** delta) * dr) ** (1 / delta)
    if np.any(a <= 0):
        energy = 0.0
        drop = np.zeros(count)
        drop[int(np.argmax(a <= 0))] = 1.0
    else:
        inv = dr / a
        energy = 1.0 / np.sum(inv)
        drop = inv / np.sum(inv)
    edges = np.concatenate([[rho], rho + dr * np.arange(1, count + 1)])
    eta = 1.0 - np.concatenate([[0.0], np.cumsum(drop)])
    cut = None
    if field_mode:
        r = np.sqrt(v.grid.dist2())
        cut = ScalarField(v.grid, np.interp(r, edges, eta, left=1.0, right=0.0))
    return CutoffResult(float(energy), float(bound), edges, eta, a, cut,
                        energy <= bound * (1 + 1e-6))


def hole_filling_constant(theta: float, alpha: float) -> float:
    if not 0 <= theta < 1 or alpha <= 0:
        raise ValueError("need theta in [0, 1) and alpha > 0")
    if theta == 0:
        return 2.0 ** alpha
    lam = theta ** (1 / (2 * alpha))
    return (1 - lam) ** (-alpha) / (1 - math.sqrt(theta))  # theta lam^{-alpha} = sqrt(theta)


def hole_filling_bound(theta, A, B, alpha, rho, sigma):
    c = hole_filling_constant(theta, alpha)
    return c, c * ((sigma - rho) ** (-alpha) * A + B)


@dataclass
class HoleFillingReport:
    hypothesis_holds: bool
    conclusion_holds: bool
    z_rho: float
    bound: float
    c: float


def check_hole_filling(Z, theta, A, B, alpha, rho, sigma, npts=200) -> HoleFillingReport:
    """Test the hypothesis Z(s) <= theta Z(t) + (t-s)^{-alpha} A + B on sampled pairs
    rho <= s < t <= sigma, then the conclusion Z(rho) <= c((sigma-rho)^{-alpha} A + B)."""
    x = np.linspace(rho, sigma, npts)
    zx = np.asarray([Z(t) for t in x], float)
    S, Tt = np.meshgrid(np.arange(npts), np.arange(npts), indexing="ij")
    m = S < Tt
    s, t = x[S[m]], x[Tt[m]]
    lhs = zx[S[m]]
    rhs = theta * zx[Tt[m]] + (t - s) ** (-alpha) * A + B
    hyp = bool(np.all(lhs <= rhs * (1 + 1e-12) + 1e-300))
    c, bound = hole_filling_bound(theta, A, B, alpha, rho, sigma)
    z0 = float(Z(rho))
    return HoleFillingReport(hyp, z0 <= bound * (1 + 1e-12), z0, bound, c)


@dataclass(frozen=True)
class ExponentSet:
    n: int
    p: float
    q: float
    kappa: float
    gamma: float
    gamma_tilde: float
    alpha_n: float
    beta_n: float
    m: float
    pqrhs: bool
    pq: bool
    kappa_ok: bool
    gamma_below_one: bool
    gamma_tilde_below_one: bool
    identity_alpha: float = field(default=float("nan"))
    identity_beta: float = field(default=float("nan"))

    @property
    def admissible(self) -> bool:
        return self.pqrhs and self.kappa_ok and self.gamma_below_one and self.gamma_tilde_below_one


def theorem_exponents(n: int, p: float, q: float, kappa: float) -> ExponentSet:
    if n < 3:
        raise ValueError("need n >= 3")
    if not 1 < p <= q:
        raise ValueError("need 1 < p <= q")
    if not 0 < kappa < 0.5:
        raise ValueError("kappa must lie in (0, 1/2)")
    big = max(kappa, (n - 3) / 2)
    g = 0.5 * (q - p) / p * big + q / (2 * p)
    gt = 0.5 * (q - p) / p * big + 1 / p
    with np.errstate(divide="ignore"):
        if n >= 4:
            an_den = (n + 1) * p - (n - 1) * q
            bn_den = 4 * (p - 1) - (q - p) * (n - 3)
            an = 2 / an_den if an_den != 0 else math.inf
            bn = 4 / bn_den if bn_den != 0 else math.inf
            second = 4 * (p - 1) / (p * (n - 3))
        else:
            an_den = 2 * p - q - (q - p) * kappa
            bn_den = 2 * (p - 1) - (q - p) * kappa
            an = 1 / an_den if an_den != 0 else math.inf
            bn = 2 / bn_den if bn_den != 0 else math.inf
            second = math.inf
    pq = q / p < 1 + 2 / (n - 1)
    pqrhs = q / p < 1 + min(2 / (n - 1), second)
    if q > p:
        kmax = min(0.5, (2 * p - q) / (q - p), 2 * (p - 1) / (q - p))
    else:
        kmax = 0.5
    ia = an * 2 * p * (1 - g) - 1 if math.isfinite(an) else math.nan
    ib = bn * p * (1 - gt) - 1 if math.isfinite(bn) else math.nan
    return ExponentSet(n, p, q, kappa, g, gt, an, bn, prop2_exponent(n, kappa), pqrhs, pq,
                       kappa < kmax, g < 1, gt < 1, ia, ib)
