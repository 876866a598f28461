"""Radial (p,q)-growth integrands, their regularization and growth envelopes.

Every integrand here is radial, F(z) = H(|z|), so values, gradients and
Hessians come from the profile H and its first two derivatives:

    dF  = H'(s) z/s
    d2F = H''(s) zz^T/s^2 + (H'(s)/s) (I - zz^T/s^2)
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import integrate

from .grid import ScalarField


class SingularityError(ArithmeticError):
    """Hessian requested where it does not exist (mu = 0, p < 2, z = 0)."""


class ConvexityError(ValueError):
    """The regularized integrand failed the convexity check."""


@dataclass(frozen=True)
class PQParams:
    nu: float
    lam: float
    p: float
    q: float
    mu: float = 0.0

    def __post_init__(self):
        if not 0 < self.nu <= self.lam:
            raise ValueError(f"need 0 < nu <= lambda, got nu={self.nu}, lambda={self.lam}")
        if not 1 < self.p <= self.q:
            raise ValueError(f"need 1 < p <= q, got p={self.p}, q={self.q}")
        if not 0 <= self.mu <= 1:
            raise ValueError(f"mu must lie in [0, 1], got {self.mu}")


class RadialIntegrand:
    """Shared evaluation machinery; subclasses provide ``profile``."""

    def profile(self, s):
        """Return (H, H', H'/s, H'') at radii s >= 0."""
        raise NotImplementedError

    def evaluate(self, z, order=2):
        """Value, gradient and Hessian at points z of shape (..., n)."""
        z = np.asarray(z, float)
        s = np.sqrt(np.sum(z * z, axis=-1))
        H, H1, H1s, H2 = self.profile(s)
        if order == 0:
            return H
        grad = np.where(s[..., None] > 0, np.where(s > 0, H1s, 0.0)[..., None] * z, 0.0)
        if order == 1:
            return H, grad
        if not (np.all(np.isfinite(H1s)) and np.all(np.isfinite(H2))):
            raise SingularityError("Hessian is singular at z = 0 for mu = 0 and p < 2")
        n = z.shape[-1]
        with np.errstate(invalid="ignore", divide="ignore"):
            zhat = np.where(s[..., None] > 0, z / np.where(s > 0, s, 1.0)[..., None], 0.0)
        outer = zhat[..., :, None] * zhat[..., None, :]
        hess = H1s[..., None, None] * np.eye(n) + (H2 - H1s)[..., None, None] * outer
        return H, grad, hess

    def value(self, z):
        return self.evaluate(z, 0)

    def grad(self, z):
        return self.evaluate(z, 1)[1]

    def hessian(self, z):
        return self.evaluate(z, 2)[2]


def _power_term(c, e, mu, s):
    """Profile pieces (H, H', H'/s, H'') of c (mu^2 + s^2)^{e/2}."""
    w = mu * mu + s * s
    pos = w > 0
    ws = np.where(pos, w, 1.0)
    at_zero = 0.0 if e > 2 else (c * e if e == 2 else np.inf)
    H = c * w ** (e / 2)
    H1s = np.where(pos, c * e * ws ** (e / 2 - 1), at_zero)
    H2 = np.where(pos, c * e * ws ** (e / 2 - 2) * (mu * mu + (e - 1) * s * s), at_zero)
    with np.errstate(invalid="ignore"):
        H1 = np.where(pos, H1s * s, 0.0)
    return H, H1, H1s, H2


@dataclass(frozen=True)
class ModelIntegrand(RadialIntegrand):
    """F(z) = cp (mu^2+|z|^2)^{p/2} + cq (mu^2+|z|^2)^{q/2}."""
    params: PQParams
    cp: float = 1.0
    cq: float = 0.0

    def __post_init__(self):
        if self.cp < 0 or self.cq < 0:
            raise ValueError("coefficients cp, cq must be non-negative")

    @property
    def singular_at_origin(self) -> bool:
        return self.params.mu == 0 and self.params.p < 2 and self.cp > 0

    def profile(self, s):
        s = np.asarray(s, float)
        P = self.params
        out = [np.zeros_like(s) for _ in range(4)]
        for c, e in ((self.cp, P.p), (self.cq, P.q)):
            if c > 0:
                out = [a + b for a, b in zip(out, _power_term(c, e, P.mu, s))]
        return tuple(out)


def eval_F(integrand: RadialIntegrand, z):
    return integrand.value(z)


def eval_dF(integrand: RadialIntegrand, z):
    return integrand.grad(z)


def eval_d2F(integrand: RadialIntegrand, z):
    return integrand.hessian(z)


def smoothstep_cutoff(s, a, b):
    """rho = 1 on s <= a, 0 on s >= b, quintic smoothstep in between; returns rho, rho', rho''."""
    L = b - a
    t = np.clip((np.asarray(s, float) - a) / L, 0.0, 1.0)
    inside = (t > 0) & (t < 1)
    rho = 1.0 - t ** 3 * (10 - 15 * t + 6 * t * t)
    d1 = np.where(inside, -30 * t * t * (1 - t) ** 2 / L, 0.0)
    d2 = np.where(inside, -60 * t * (1 - t) * (1 - 2 * t) / L ** 2, 0.0)
    return rho, d1, d2


def _bump_weights(eps, npts=4096):
    """Midpoint nodes on (-eps, eps) with weights for phi, phi', phi''."""
    u = -1 + (np.arange(npts) + 0.5) * (2.0 / npts)
    a = 1 - u * u
    g1 = -2 * u / a ** 2
    g2 = -2 / a ** 2 - 8 * u * u / a ** 3
    phi = np.exp(-1.0 / a)
    du = 2.0 / npts
    norm = np.sum(phi) * du
    w0 = phi * du / norm
    w1 = phi * g1 * du / norm / eps
    w2 = phi * (g1 * g1 + g2) * du / norm / eps ** 2
    return eps * u, w0, w1, w2


def lp_lift(p):
    """L_p profile pieces (L, L', L'/s, L'')."""
    def prof(s):
        s = np.asarray(s, float)
        if p >= 2:
            return 0.5 * s * s, s, np.ones_like(s), np.ones_like(s)
        w = 1 + s * s
        L1s = p * w ** (p / 2 - 1)
        L2 = p * w ** (p / 2 - 2) * (1 + (p - 1) * s * s)
        return w ** (p / 2) - 1, L1s * s, L1s, L2
    return prof


@dataclass(frozen=True, eq=False)
class RegularizedIntegrand(RadialIntegrand):
    """F_eps = F~_eps + eps L_p with F~_eps glued from a mollified profile near 0."""
    base: ModelIntegrand
    eps: float
    T: float
    npts: int = 4096
    table_size: int = 4097
    _kernel: tuple = field(init=False, repr=False)
    _table: tuple = field(init=False, repr=False)

    def __post_init__(self):
        if not 0 <= self.eps <= 1:
            raise ValueError("eps must lie in [0, 1]")
        if not 0 < self.T <= 1:
            raise ValueError("T must lie in (0, 1]")
        object.__setattr__(self, "_kernel", _bump_weights(self.eps, self.npts) if self.mollified else None)
        object.__setattr__(self, "_table", None)

    @property
    def mollified(self) -> bool:
        return self.base.singular_at_origin and self.eps > 0

    def _mollify(self, s):
        y, w0, w1, w2 = self._kernel
        out = np.empty((3, s.size))
        for i in range(0, s.size, 256):
            chunk = s[i:i + 256]
            Fr = self.base.profile(np.abs(chunk[:, None] - y[None, :]))[0]
            out[0, i:i + 256] = Fr @ w0
            out[1, i:i + 256] = Fr @ w1
            out[2, i:i + 256] = Fr @ w2
        return out

    def _interpolate(self, s):
        """Mollified profile from the table: cubic Hermite for g and g', linear for g''."""
        if self._table is None:
            st = np.linspace(0.0, self.T / 3, self.table_size)
            object.__setattr__(self, "_table", (st,) + tuple(self._mollify(st)))
        st, g, g1, g2 = self._table
        ds = st[1] - st[0]
        i = np.clip((s / ds).astype(int), 0, st.size - 2)
        t = s / ds - i
        h00 = (1 + 2 * t) * (1 - t) ** 2
        h10 = t * (1 - t) ** 2
        h01 = t * t * (3 - 2 * t)
        h11 = t * t * (t - 1)
        val = h00 * g[i] + h10 * ds * g1[i] + h01 * g[i + 1] + h11 * ds * g1[i + 1]
        d1 = h00 * g1[i] + h10 * ds * g2[i] + h01 * g1[i + 1] + h11 * ds * g2[i + 1]
        d2 = (1 - t) * g2[i] + t * g2[i + 1]
        return val, d1, d2

    def tilde_profile(self, s, exact=False):
        """Profile of F~_eps (without the eps L_p lift).

        By default the mollified part is read from a precomputed table;
        ``exact=True`` evaluates the convolution directly.
        """
        s = np.asarray(s, float)
        H, H1, H1s, H2 = (np.array(a, float, copy=True) for a in
                          np.broadcast_arrays(*self.base.profile(s)))
        if not self.mollified:
            return H, H1, H1s, H2
        near = s < self.T / 3
        if not near.any():
            return H, H1, H1s, H2
        sn = s[near]
        g, g1, g2 = self._mollify(sn) if exact else self._interpolate(sn)
        rho, r1, r2 = smoothstep_cutoff(sn, self.T / 4, self.T / 3)
        F, F1, F2 = H[near], H1[near], H2[near]
        F2 = np.where(np.isfinite(F2), F2, 0.0)  # only hit where rho = 1
        h = rho * g + (1 - rho) * F
        h1 = r1 * (g - F) + rho * g1 + (1 - rho) * F1
        h2 = r2 * (g - F) + 2 * r1 * (g1 - F1) + rho * g2 + (1 - rho) * F2
        tiny = sn < 1e-6 * max(self.eps, 1e-300)
        with np.errstate(divide="ignore", invalid="ignore"):
            h1s = np.where(tiny, h2, h1 / np.where(tiny, 1.0, sn))
        H[near], H1[near], H1s[near], H2[near] = h, h1, h1s, h2
        return H, H1, H1s, H2

    def profile(self, s):
        H, H1, H1s, H2 = self.tilde_profile(s)
        L, L1, L1s, L2 = lp_lift(self.base.params.p)(s)
        e = self.eps
        return H + e * L, H1 + e * L1, H1s + e * L1s, H2 + e * L2

    def deviation(self, npts=2001) -> float:
        """sup over |z| <= T of |F~_eps - F|."""
        s = np.linspace(0.0, self.T, npts)
        return float(np.max(np.abs(self.tilde_profile(s, exact=True)[0] - self.base.profile(s)[0])))

    def convexity_margin(self, npts=4001) -> float:
        """Smallest Hessian eigenvalue of F~_eps over radii in [0, 2T]."""
        s = np.linspace(0.0, 2 * self.T, npts)
        _, _, H1s, H2 = self.tilde_profile(s, exact=True)
        if not self.mollified and self.base.singular_at_origin:
            H1s, H2 = H1s[1:], H2[1:]
        return float(min(np.min(H1s), np.min(H2)))


def regularize(F: ModelIntegrand, eps: float, T: float, check: bool = True) -> RegularizedIntegrand:
    reg = RegularizedIntegrand(F, eps, T)
    if check and reg.mollified and not reg.convexity_margin() > 0:
        raise ConvexityError(f"eps = {eps} too large: regularized integrand is not convex")
    return reg


def find_eps0(F: ModelIntegrand, T: float, iters: int = 30) -> float:
    """Largest eps in (0, 1] passing the convexity check, by bisection in log eps."""
    if not F.singular_at_origin:
        return 1.0

    def ok(e):
        return RegularizedIntegrand(F, e, T).convexity_margin() > 0

    if ok(1.0):
        return 1.0
    lo, hi = -6.0, 0.0
    if not ok(10 ** lo):
        raise ConvexityError("no admissible eps found")
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        lo, hi = (mid, hi) if ok(10 ** mid) else (lo, mid)
    return 10 ** lo


def truncate_forcing(f: ScalarField, m: float) -> ScalarField:
    if not m > 0:
        raise ValueError("truncation level must be positive")
    return f.map(lambda v: np.clip(v, -m, m))


@dataclass(frozen=True)
class AssumptionReport:
    worst_margin: float
    margins: dict
    violations: list

    @property
    def passed(self) -> bool:
        return not self.violations


def verify_assumption(integrand: RadialIntegrand, params: PQParams, z_samples, xi_samples,
                      rtol: float = 1e-12) -> AssumptionReport:
    """Check the growth and ellipticity bounds at sampled (z, xi) pairs.

    Margins are relative slack; a negative margin below -rtol is a violation.
    The Hessian size is measured in the spectral norm.
    """
    z = np.atleast_2d(np.asarray(z_samples, float))
    xi = np.atleast_2d(np.asarray(xi_samples, float))
    P = params
    w = P.mu ** 2 + np.sum(z * z, axis=1)
    Fv, _, Hs = integrand.evaluate(z)
    lower_F = P.nu * w ** (P.p / 2)
    upper_F = P.lam * (w ** (P.q / 2) + w ** (P.p / 2))
    spec = np.linalg.norm(Hs, ord=2, axis=(1, 2))
    upper_H = P.lam * (w ** ((P.q - 2) / 2) + w ** ((P.p - 2) / 2))
    quad = np.einsum("ti,tij,tj->t", xi, Hs, xi)
    lower_H = P.nu * w ** ((P.p - 2) / 2) * np.sum(xi * xi, axis=1)
    margins = {
        "F_lower": Fv / lower_F - 1,
        "F_upper": 1 - Fv / upper_F,
        "hessian_upper": 1 - spec / upper_H,
        "hessian_lower": quad / lower_H - 1,
    }
    violations = []
    for name, m in margins.items():
        for i in np.flatnonzero(m < -rtol):
            violations.append((name, int(i), float(m[i])))
    worst = float(min(np.min(m) for m in margins.values()))
    return AssumptionReport(worst, {k: float(np.min(v)) for k, v in margins.items()}, violations)


@dataclass(frozen=True)
class GrowthEnvelope:
    params: PQParams
    eps: float = 0.0
    T: float = 1.0

    def g1(self, s):
        P = self.params
        s = np.asarray(s, float)
        w = P.mu ** 2 + s * s
        if P.p < 2 and np.any(w == 0):
            raise SingularityError("g1 is singular at s = mu = 0 for p < 2")
        return P.nu * w ** ((P.p - 2) / 2)

    def g2eps(self, s):
        P = self.params
        s = np.asarray(s, float)
        w = P.mu ** 2 + s * s
        if P.p < 2 and np.any(w == 0):
            raise SingularityError("g2 is singular at s = mu = 0 for p < 2")
        lift = self.eps * P.lam * (1 + s * s) ** (min(P.p - 2, 0) / 2)
        return P.lam * w ** ((P.p - 2) / 2) + P.lam * w ** ((P.q - 2) / 2) + lift

    def G_T(self, t):
        P = self.params
        t = np.maximum(np.asarray(t, float), self.T)
        base = (P.mu ** 2 + self.T ** 2) ** (P.p / 2)
        return P.nu / P.p * ((P.mu ** 2 + t * t) ** (P.p / 2) - base)

    def G_T_quadrature(self, t):
        """The defining integral of G_T by adaptive quadrature."""
        if t <= self.T:
            return 0.0
        val, _ = integrate.quad(lambda s: float(self.g1(s)) * s, self.T, t,
                                epsabs=0.0, epsrel=1e-13, limit=200)
        return val

    def assembled_c1(self) -> float:
        """A valid c1 for both ratio bounds, built from the growth constants."""
        P = self.params
        theta = (P.q - P.p) / P.p
        c_theta = max(1.0, 2.0 ** (theta - 1))
        first = P.lam / P.nu * max(c_theta * (P.p / P.nu) ** theta,
                                   c_theta * 2 ** ((P.q - P.p) / 2) + 2, 1.0)
        second = (P.p / P.nu) ** (1 / P.p)
        return max(first, second, 1.0)


@dataclass(frozen=True)
class RatioBoundReport:
    c1: float
    smallest_c1: float
    holds: bool
    t_max: float


def ratio_bound_check(env: GrowthEnvelope, t_max: float, npts: int = 2000,
                      c1: float | None = None) -> RatioBoundReport:
    """Check g2/g1 <= c1 (G_T^{(q-p)/p} + 1 + eps X) and t <= c1 G_T^{1/p} + (mu^2+T^2)^{1/2}
    on a log-spaced grid of t in [T, t_max], where X = (mu^2+T^2)^{-(p-2)/2}."""
    P = env.params
    c1 = env.assembled_c1() if c1 is None else float(c1)
    t = np.geomspace(env.T, max(t_max, env.T), npts)
    G = env.G_T(t)
    X = (P.mu ** 2 + env.T ** 2) ** (-(P.p - 2) / 2)
    need1 = (env.g2eps(t) / env.g1(t)) / (G ** ((P.q - P.p) / P.p) + 1 + env.eps * X)
    shift = (P.mu ** 2 + env.T ** 2) ** 0.5
    with np.errstate(divide="ignore", invalid="ignore"):
        need2 = np.where(G > 0, (t - shift) / G ** (1 / P.p), 0.0)
    need2 = np.where(t <= shift, 0.0, need2)
    smallest = float(max(np.max(need1), np.max(need2)))
    return RatioBoundReport(c1, smallest, smallest <= c1 * (1 + 1e-12), float(t[-1]))
