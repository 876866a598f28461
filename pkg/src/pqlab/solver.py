"""Discrete energy minimization and linear elliptic solves on box grids.

The discrete energy of w is

    E(w) = sum_x sum_s 2^{-n} h^n F(D^s w(x)) - sum_x h^n f(x) w(x),

where s runs over the 2^n orientations in {+1,-1}^n and D^s w(x) collects
the one-sided differences s_k (w(x + s_k e_k) - w(x)) / h.  Every orientation
uses only grid edges, so the discrete divergence is the exact adjoint of
the discrete gradient and summation by parts holds without remainder.

On a ball region, nodes strictly inside the ball are unknowns and all
other nodes carry the boundary data.  An edge from a free node x to an
outside node y is cut by the sphere at fraction theta of its length; the
outside value is replaced by the boundary value at the crossing and the
difference is scaled by 1/sqrt(theta).  For quadratic integrands this is
the symmetric Shortley-Weller type flux and gives second-order accuracy.
"""
from __future__ import annotations

import itertools
import time
from dataclasses import dataclass, field

import numpy as np
import pyamg
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy import ndimage

from .grid import BallRegion, Grid, GridError, ScalarField, gradient, integrate_ball
from .integrand import ModelIntegrand, RadialIntegrand, lp_lift, regularize

THETA_MIN = 1e-3


class SolverError(RuntimeError):
    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


@dataclass
class SolveReport:
    iterations: int
    residual: float
    energy: float
    wall_time: float
    converged: bool = True
    energy_history: list = field(default_factory=list)
    residual_history: list = field(default_factory=list)


@dataclass(frozen=True, eq=False)
class EllipticCoefficients:
    """Symmetric matrix field a(x); ``values`` has shape (n, n) or (n, n, *grid.shape)."""
    grid: Grid
    values: np.ndarray
    nu: float
    lam: float

    def __post_init__(self):
        n = self.grid.n
        a = np.asarray(self.values, float)
        if a.shape not in ((n, n), (n, n) + self.grid.shape):
            raise ValueError(f"coefficient array has shape {a.shape}")
        if not np.array_equal(a, np.swapaxes(a, 0, 1)):
            raise ValueError("coefficient matrices must be exactly symmetric")
        if not 0 < self.nu <= self.lam:
            raise ValueError("need 0 < nu <= lambda")
        a = a.copy()
        a.flags.writeable = False
        object.__setattr__(self, "values", a)
        self._spot_check()

    @classmethod
    def constant(cls, grid: Grid, matrix, nu=None, lam=None):
        m = np.asarray(matrix, float)
        ev = np.linalg.eigvalsh(m)
        return cls(grid, m, ev[0] if nu is None else nu, ev[-1] if lam is None else lam)

    @classmethod
    def diagonal(cls, grid: Grid, diag):
        return cls.constant(grid, np.diag(np.asarray(diag, float)))

    @property
    def is_constant(self) -> bool:
        return self.values.ndim == 2

    def at(self, flat):
        """Matrices at flat node indices, shape (len(flat), n, n)."""
        n = self.grid.n
        if self.is_constant:
            return np.broadcast_to(self.values, (len(flat), n, n))
        return np.moveaxis(self.values.reshape(n, n, -1)[:, :, flat], -1, 0)

    def _spot_check(self, count=1000):
        if self.is_constant:
            mats = self.values[None]
        else:
            idx = np.linspace(0, self.grid.size - 1, min(count, self.grid.size)).astype(int)
            mats = self.at(idx)
        ev = np.linalg.eigvalsh(mats)
        if ev.min() < self.nu * (1 - 1e-12) or ev.max() > self.lam * (1 + 1e-12):
            raise ValueError(f"eigenvalues in [{ev.min()}, {ev.max()}] leave [{self.nu}, {self.lam}]")


@dataclass(frozen=True, eq=False)
class MinimizationProblem:
    integrand: RadialIntegrand
    forcing: ScalarField
    boundary: ScalarField
    region: BallRegion | None = None
    boundary_function: object = None  # optional exact data g(points) for cut edges

    @property
    def grid(self) -> Grid:
        return self.forcing.grid


def orientations(n):
    return list(itertools.product((1, -1), repeat=n))


class Discretization:
    """Unknown numbering and the per-orientation difference operators.

    For orientation s, ``B[s] @ w + d[s]`` stacks the n difference components
    (component-major) at the term nodes ``terms[s]``.
    """

    def __init__(self, grid: Grid, boundary: ScalarField, region: BallRegion | None = None,
                 boundary_function=None):
        if boundary.grid != grid:
            raise GridError("boundary data lives on a different grid")
        self.grid = grid
        n, N, h = grid.n, grid.count, grid.h
        if N < 3:
            raise GridError("grid too small for a Dirichlet problem")
        inner = np.zeros(grid.shape, bool)
        inner[(slice(1, -1),) * n] = True
        if region is None:
            free = inner
        else:
            region.check_inside(grid)
            reach = max(abs(c) for c in region.center) + region.radius
            if reach > grid.R - h * (1 - 1e-9):
                raise GridError("ball must stay at least one cell inside the box")
            free = inner & (grid.dist2(region.center) < region.radius ** 2 * (1 - 1e-9))
        self.region = region
        self.free = free
        self.m = int(free.sum())
        if self.m == 0:
            raise GridError("no unknowns inside the region")
        idx = np.full(grid.shape, -1, dtype=np.int64)
        idx[free] = np.arange(self.m)
        self.index = idx
        g = boundary.values
        self.g = g
        self.edge = [self._edges(k, boundary_function) for k in range(n)]

        self.B, self.d, self.terms = {}, {}, {}
        for s in orientations(n):
            self._build_orientation(s)

    def _edges(self, k, gfun):
        grid, n, h = self.grid, self.grid.n, self.grid.h
        lo = [slice(None)] * n
        hi = [slice(None)] * n
        lo[k], hi[k] = slice(0, -1), slice(1, None)
        lo, hi = tuple(lo), tuple(hi)
        Ld, Rd = self.index[lo].copy(), self.index[hi].copy()
        Lv, Rv = self.g[lo].copy(), self.g[hi].copy()
        scale = np.ones(Ld.shape)
        if self.region is not None:
            c = np.asarray(self.region.center)
            r = self.region.radius
            coords = grid.coords()
            for side, free_end, fixed_vals, sgn in ((0, (Ld >= 0) & (Rd < 0), Rv, 1.0),
                                                    (1, (Rd >= 0) & (Ld < 0), Lv, -1.0)):
                if not free_end.any():
                    continue
                pos = np.nonzero(free_end)
                sl = lo if side == 0 else hi
                xf = np.stack([np.broadcast_to(coords[j], grid.shape)[sl][pos] - c[j] for j in range(n)])
                a = sgn * xf[k]
                t = -a + np.sqrt(np.maximum(a * a - np.sum(xf * xf, axis=0) + r * r, 0.0))
                theta = np.clip(t / h, THETA_MIN, 1.0)
                gx = (Lv if side == 0 else Rv)[pos]
                if gfun is not None:
                    pts = xf.T + c
                    pts[:, k] += sgn * theta * h
                    b = np.asarray(gfun(pts), float)
                else:
                    b = (1 - theta) * gx + theta * fixed_vals[pos]
                fixed_vals[pos] = b
                scale[pos] = 1.0 / np.sqrt(theta)
        return Ld.ravel(), Rd.ravel(), Lv.ravel(), Rv.ravel(), scale.ravel(), Ld.shape

    def _build_orientation(self, s):
        grid, n, N, h = self.grid, self.grid.n, self.grid.count, self.grid.h
        ok = np.ones(grid.shape, bool)
        touch = self.free.copy()
        for k, sk in enumerate(s):
            sl = [slice(None)] * n
            sl[k] = slice(N - 1, N) if sk > 0 else slice(0, 1)
            ok[tuple(sl)] = False
            touch |= np.roll(self.free, -sk, axis=k)
        mask = ok & touch
        I = np.nonzero(mask)
        T = I[0].size
        self.terms[s] = np.ravel_multi_index(I, grid.shape)
        rows, cols, vals = [], [], []
        d = np.zeros(n * T)
        t = np.arange(T)
        for k, sk in enumerate(s):
            Ld, Rd, Lv, Rv, scale, eshape = self.edge[k]
            e_idx = list(I)
            if sk < 0:
                e_idx[k] = I[k] - 1
            e = np.ravel_multi_index(tuple(e_idx), eshape)
            c = scale[e] / h
            for dof, vv, sign in ((Rd[e], Rv[e], 1.0), (Ld[e], Lv[e], -1.0)):
                fr = dof >= 0
                rows.append(k * T + t[fr])
                cols.append(dof[fr])
                vals.append(sign * c[fr])
                d[k * T + t[~fr]] += sign * c[~fr] * vv[~fr]
        B = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                          shape=(n * T, self.m))
        self.B[s] = B
        self.d[s] = d

    @property
    def weight(self) -> float:
        return 2.0 ** (-self.grid.n) * self.grid.cell_volume

    def differences(self, w, s):
        T = self.terms[s].size
        return (self.B[s] @ w + self.d[s]).reshape(self.grid.n, T).T

    def block(self, mats):
        """Sparse block operator acting on component-major stacked differences."""
        T, n = mats.shape[0], mats.shape[1]
        base = np.arange(T)
        indices = (np.arange(n)[None, :, None] * T + base[None, None, :]).repeat(n, axis=0)
        indices = np.moveaxis(indices, 2, 1).reshape(-1)  # row (k, t) -> cols (l*T + t)
        data = np.moveaxis(mats, 0, 1).reshape(-1)
        indptr = np.arange(0, n * T * n + 1, n)
        return sp.csr_matrix((data, indices, indptr), shape=(n * T, n * T))

    def assemble_quadratic(self, mats_for):
        """sum_s B_s^T blk(weight * a) B_s with a supplied per orientation."""
        K = None
        for s in self.B:
            A = self.block(self.weight * mats_for(s))
            part = self.B[s].T @ (A @ self.B[s])
            K = part if K is None else K + part
        return K.tocsr()

    def full_field(self, w) -> ScalarField:
        vals = self.g.copy()
        vals[self.free] = w
        return ScalarField(self.grid, vals)

    def interior_mask(self) -> np.ndarray:
        """Free nodes whose whole 3^n neighbourhood is free (no boundary edge in their equation)."""
        st = np.ones((3,) * self.grid.n, bool)
        return ndimage.binary_erosion(self.free, structure=st, border_value=0)


class _Energy:
    def __init__(self, disc: Discretization, integrand: RadialIntegrand, f: ScalarField):
        self.disc = disc
        self.F = integrand
        self.fw = disc.grid.cell_volume * f.values[disc.free]

    def value(self, w):
        tot = 0.0
        for s in self.disc.B:
            tot += np.sum(self.F.value(self.disc.differences(w, s)))
        return self.disc.weight * tot - float(self.fw @ w)

    def gradient(self, w):
        n = self.disc.grid.n
        out = -self.fw.copy()
        for s, B in self.disc.B.items():
            _, gF = self.F.evaluate(self.disc.differences(w, s), 1)
            out += B.T @ (self.disc.weight * gF.T.reshape(-1))
        return out

    def hessian(self, w):
        H = None
        for s, B in self.disc.B.items():
            _, _, hF = self.F.evaluate(self.disc.differences(w, s), 2)
            part = B.T @ (self.disc.block(self.disc.weight * hF) @ B)
            H = part if H is None else H + part
        return H.tocsr()


def _amg(A):
    # local Jacobi weighting avoids the randomized spectral radius estimate,
    # so repeated runs are bitwise identical
    return pyamg.smoothed_aggregation_solver(A, symmetry="symmetric",
                                             smooth=("jacobi", {"weighting": "local"}))


def _spd_solve(A, b, rtol):
    if A.shape[0] <= 4000:
        return spla.spsolve(A.tocsc(), b)
    return _amg(A).solve(b, x0=np.zeros_like(b), tol=rtol, accel="cg", maxiter=500)


def minimize(problem: MinimizationProblem, tol: float = 1e-10, max_iter: int = 200,
             initial: ScalarField | None = None):
    """Damped Newton with backtracking on the discrete energy.

    Stops once the sup norm of the discrete gradient divided by h^n, which
    is the nodal Euler-Lagrange residual, is at most ``tol``.
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    t0 = time.perf_counter()
    disc = Discretization(problem.grid, problem.boundary, problem.region, problem.boundary_function)
    E = _Energy(disc, problem.integrand, problem.forcing)
    vol = problem.grid.cell_volume
    w = (problem.boundary if initial is None else initial).values[disc.free].copy()
    energy = E.value(w)
    grad = E.gradient(w)
    rep = SolveReport(0, float(np.max(np.abs(grad)) / vol), energy, 0.0, False, [energy], [])
    rep.residual_history.append(rep.residual)
    for it in range(1, max_iter + 1):
        if rep.residual <= tol:
            rep.converged = True
            break
        H = E.hessian(w)
        step = _spd_solve(H, -grad, 1e-11)
        if not np.all(np.isfinite(step)):
            raise SolverError("Newton step is not finite (singular Hessian)", rep)
        slope = float(grad @ step)
        if slope >= 0:
            raise SolverError("Hessian is not positive definite along the Newton step", rep)
        t, accepted = 1.0, False
        for _ in range(50):
            w_new = w + t * step
            e_new = E.value(w_new)
            if e_new <= energy + 1e-4 * t * slope:
                accepted = True
                break
            if e_new <= energy + 1e-13 * abs(energy):
                g_new = E.gradient(w_new)
                if np.max(np.abs(g_new)) < np.max(np.abs(grad)):
                    accepted = True  # decrease is below roundoff, gradient still improves
                    break
            t *= 0.5
        if not accepted:
            raise SolverError("line search failed to decrease the energy", rep)
        w, energy = w_new, min(e_new, energy)
        grad = E.gradient(w)
        rep.iterations = it
        rep.residual = float(np.max(np.abs(grad)) / vol)
        rep.energy = energy
        rep.energy_history.append(energy)
        rep.residual_history.append(rep.residual)
    else:
        if rep.residual > tol:
            rep.wall_time = time.perf_counter() - t0
            raise SolverError(f"Newton did not converge in {max_iter} iterations "
                              f"(residual {rep.residual:.3e})", rep)
    rep.converged = rep.residual <= tol
    rep.wall_time = time.perf_counter() - t0
    return disc.full_field(w), rep


def discrete_energy(u: ScalarField, problem: MinimizationProblem) -> float:
    disc = Discretization(problem.grid, problem.boundary, problem.region, problem.boundary_function)
    return _Energy(disc, problem.integrand, problem.forcing).value(u.values[disc.free])


def euler_lagrange_residual(u: ScalarField, problem: MinimizationProblem,
                            include_boundary_layer: bool = False) -> float:
    """sup |div dF(Du) + f| over interior nodes, with the adjoint discrete divergence."""
    disc = Discretization(problem.grid, problem.boundary, problem.region, problem.boundary_function)
    E = _Energy(disc, problem.integrand, problem.forcing)
    r = np.abs(E.gradient(u.values[disc.free])) / problem.grid.cell_volume
    if not include_boundary_layer:
        r = r[disc.interior_mask()[disc.free]]
    return float(np.max(r)) if r.size else 0.0


def _linear_system(a: EllipticCoefficients, boundary: ScalarField, f: ScalarField, region):
    disc = Discretization(a.grid, boundary, region)
    K = disc.assemble_quadratic(lambda s: a.at(disc.terms[s]))
    rhs = a.grid.cell_volume * f.values[disc.free]
    for s, B in disc.B.items():
        rhs -= B.T @ (disc.block(disc.weight * a.at(disc.terms[s])) @ disc.d[s])
    return disc, K, rhs


def pcg(K, rhs, M, x0, tol_abs, max_iter=2000, stall=100):
    """Preconditioned conjugate gradients stopping on the sup norm of the residual."""
    x = x0.copy()
    r = rhs - K @ x
    z = M @ r
    p = z.copy()
    rz = float(r @ z)
    best, best_it = np.inf, 0
    for it in range(1, max_iter + 1):
        res = float(np.max(np.abs(r))) if r.size else 0.0
        if res <= tol_abs:
            return x, it - 1, res
        if res < 0.9 * best:
            best, best_it = res, it
        elif it - best_it > stall:
            raise SolverError(f"CG stagnated at residual {res:.3e}")
        Kp = K @ p
        alpha = rz / float(p @ Kp)
        x += alpha * p
        r -= alpha * Kp
        if it % 50 == 0:
            r = rhs - K @ x  # refresh against drift
        z = M @ r
        rz_new = float(r @ z)
        p = z + (rz_new / rz) * p
        rz = rz_new
    raise SolverError(f"CG did not converge in {max_iter} iterations")


def solve_linear(a: EllipticCoefficients, boundary: ScalarField, f: ScalarField,
                 tol: float = 1e-10, region: BallRegion | None = None, full_output: bool = False):
    """Solve -div(a grad v) = f with Dirichlet data; residual sup norm per unit volume <= tol."""
    t0 = time.perf_counter()
    disc, K, rhs = _linear_system(a, boundary, f, region)
    vol = a.grid.cell_volume
    if K.shape[0] > 200:
        M = _amg(K).aspreconditioner(cycle="V")
    else:
        M = sp.diags(1.0 / K.diagonal())
    w0 = boundary.values[disc.free].copy()
    w, its, res = pcg(K, rhs, M, w0, tol * vol)
    out = disc.full_field(w)
    if full_output:
        return out, SolveReport(its, res / vol, float(0.5 * w @ (K @ w) - rhs @ w),
                                time.perf_counter() - t0)
    return out


def elliptic_residual(a: EllipticCoefficients, v: ScalarField, f: ScalarField | None = None):
    """Nodal -div(a grad v) - f at strictly interior nodes of the box, as a field (zero elsewhere)."""
    f = ScalarField.constant(a.grid, 0.0) if f is None else f
    disc, K, rhs = _linear_system(a, v, f, None)
    r = (K @ v.values[disc.free] - rhs) / a.grid.cell_volume
    vals = np.zeros(a.grid.shape)
    vals[disc.free] = r
    return ScalarField(a.grid, vals)


def _one_sided(values, h, k, sign):
    """Forward (sign=+1) or backward difference along axis k on the full array, NaN where undefined."""
    out = np.full(values.shape, np.nan)
    n = values.ndim
    a = [slice(None)] * n
    b = [slice(None)] * n
    if sign > 0:
        a[k], b[k] = slice(0, -1), slice(1, None)
        out[tuple(a)] = (values[tuple(b)] - values[tuple(a)]) / h
    else:
        a[k], b[k] = slice(1, None), slice(0, -1)
        out[tuple(a)] = (values[tuple(a)] - values[tuple(b)]) / h
    return out


def bilinear_form(v: ScalarField, phi: ScalarField, a: EllipticCoefficients) -> float:
    """sum_x sum_s 2^{-n} h^n D^s phi . a D^s v over nodes whose s-stencil is in the grid."""
    g = v.grid
    n, h = g.n, g.h
    fwd_v = [_one_sided(v.values, h, k, 1) for k in range(n)]
    bwd_v = [_one_sided(v.values, h, k, -1) for k in range(n)]
    fwd_p = [_one_sided(phi.values, h, k, 1) for k in range(n)]
    bwd_p = [_one_sided(phi.values, h, k, -1) for k in range(n)]
    A = a.values if a.is_constant else None
    total = 0.0
    for s in orientations(n):
        Dv = [fwd_v[k] if s[k] > 0 else bwd_v[k] for k in range(n)]
        Dp = [fwd_p[k] if s[k] > 0 else bwd_p[k] for k in range(n)]
        acc = np.zeros(g.shape)
        for k in range(n):
            for l in range(n):
                akl = A[k, l] if A is not None else a.values[k, l]
                if np.all(akl == 0):
                    continue
                acc = acc + Dp[k] * akl * Dv[l]
        total += np.nansum(acc)
    return float(total * 2.0 ** (-n) * g.cell_volume)


@dataclass
class SubsolutionReport:
    values: list
    normalized: list
    max_violation: float
    passed: bool


def verify_subsolution(v: ScalarField, a: EllipticCoefficients, cutoffs, tol: float = 1e-8,
                       form: str = "solver") -> SubsolutionReport:
    """Check int a grad v . grad phi <= tol ||phi||_1 for each non-negative phi.

    ``form='solver'`` uses the orientation-averaged one-sided form that the
    solvers discretize; ``form='central'`` uses central differences.
    """
    vals, normed = [], []
    for phi in cutoffs:
        if np.min(phi.values) < 0:
            raise ValueError("cutoffs must be non-negative")
        if form == "solver":
            I = bilinear_form(v, phi, a)
        elif form == "central":
            gv, gp = gradient(v).values, gradient(phi).values
            if a.is_constant:
                I = float(np.einsum("k...,kl,l...->", gp, a.values, gv) * v.grid.cell_volume)
            else:
                I = float(np.einsum("k...,kl...,l...->", gp, a.values, gv) * v.grid.cell_volume)
        else:
            raise ValueError(f"unknown form {form!r}")
        norm = float(np.sum(phi.values) * v.grid.cell_volume)
        vals.append(I)
        normed.append(I / norm if norm > 0 else 0.0)
    worst = max(normed) if normed else 0.0
    return SubsolutionReport(vals, normed, worst, worst <= tol)


def dirichlet_density(field: ScalarField) -> np.ndarray:
    """Orientation-averaged |D^s w|^2 at each node: sum_k (D+_k^2 + D-_k^2)/2.

    At the box faces only the available one-sided difference is used.
    """
    g = field.grid
    out = np.zeros(g.shape)
    for k in range(g.n):
        f = _one_sided(field.values, g.h, k, 1) ** 2
        b = _one_sided(field.values, g.h, k, -1) ** 2
        both = np.isfinite(f) & np.isfinite(b)
        out += np.where(both, 0.5 * (np.nan_to_num(f) + np.nan_to_num(b)), np.nan_to_num(f) + np.nan_to_num(b))
    return out


def tent_cutoff(grid: Grid, rho: float, sigma: float, center=None) -> ScalarField:
    """eta = 1 on B_rho, 0 outside B_sigma, linear in |x| between."""
    if not 0 <= rho < sigma:
        raise ValueError("need 0 <= rho < sigma")
    r = np.sqrt(grid.dist2(center))
    return ScalarField(grid, np.clip((sigma - r) / (sigma - rho), 0.0, 1.0))


def tent_lattice(radius: float, size: int = 6):
    """(rho, sigma) pairs with rho < sigma from a size x size lattice inside B_radius."""
    rhos = radius * (np.arange(size) + 1) / (size + 2)
    sigmas = radius * (np.arange(size) + 3) / (size + 2)
    return [(float(r), float(s)) for r in rhos for s in sigmas if r < s]


@dataclass
class CaccioppoliFit:
    c_m: float
    M1: float
    M2: float
    saturated: bool
    worst_ratio: float
    samples: int


def estimate_caccioppoli_constants(v: ScalarField, f: ScalarField | None, levels, cutoffs,
                                   ball: BallRegion, c_m_grid=(2.0,), m1_grid=None,
                                   m2_grid=None) -> CaccioppoliFit:
    """Smallest lattice constants with

        int |grad (v-k)_+|^2 eta^2 <= c_m^2 M1^2 int (v-k)_+^2 |grad eta|^2
                                     + c_m^2 M2^2 int_{v>k} eta^2 f^2

    for all supplied levels k and cutoffs eta.  The search is lexicographic
    in (c_m, M1, M2): the smallest c_m admitting a feasible pair, then the
    smallest M1 admitting some M2 of the lattice, then the smallest M2.
    """
    grid = v.grid
    ball.check_inside(grid)
    inside = ball.mask(grid)
    vol = grid.cell_volume
    m1_grid = np.sort(np.asarray(m1_grid if m1_grid is not None else np.geomspace(1, 1e4, 1843), float))
    m2_grid = np.sort(np.asarray(m2_grid if m2_grid is not None else np.concatenate([[0.0], np.geomspace(1e-3, 1e4, 701)]), float))
    fsq = np.zeros(grid.shape) if f is None else f.values ** 2
    eta_data = [(c.values ** 2, dirichlet_density(c)) for c in cutoffs]
    L, A, Bf = [], [], []
    for k in levels:
        w = np.maximum(v.values - k, 0.0)
        dens = dirichlet_density(ScalarField(grid, w))
        pos = w > 0
        for eta2, grad_eta2 in eta_data:
            L.append(np.sum((dens * eta2)[inside]) * vol)
            A.append(np.sum((w * w * grad_eta2)[inside]) * vol)
            Bf.append(np.sum((eta2 * fsq)[inside & pos]) * vol)
    L, A, Bf = map(np.asarray, (L, A, Bf))
    keep = L > 1e-14 * max(1.0, float(L.max(initial=0.0)))
    L, A, Bf = L[keep], A[keep], Bf[keep]
    worst = float(np.max(L / np.where(A > 0, A, np.inf))) if L.size else 0.0
    if L.size == 0:
        return CaccioppoliFit(float(min(c_m_grid)), float(m1_grid[0]), float(m2_grid[0]), False, 0.0, 0)
    for cm in sorted(c_m_grid):
        for M1 in m1_grid:
            deficit = L - cm ** 2 * M1 ** 2 * A
            bad = deficit > 1e-12 * L
            if not bad.any():
                return CaccioppoliFit(float(cm), float(M1), float(m2_grid[0]), False, worst, int(L.size))
            if np.any(Bf[bad] <= 0):
                continue
            need = np.sqrt(np.max(deficit[bad] / (cm ** 2 * Bf[bad])))
            ok = m2_grid >= need
            if ok.any():
                return CaccioppoliFit(float(cm), float(M1), float(m2_grid[ok][0]), False, worst, int(L.size))
    return CaccioppoliFit(float(max(c_m_grid)), float(m1_grid[-1]), float(m2_grid[-1]), True, worst, int(L.size))


def energy_convergence_study(F: ModelIntegrand, f: ScalarField, ball: BallRegion, eps_list, m_list,
                             boundary: ScalarField, T: float = 1.0, tol: float = 1e-9):
    """Track the three quantities of the approximation argument along (eps_m, m).

    For each pair: the lift eps int_B L_p(grad g), the integral of F~_eps(grad g)
    over the inflated ball B_{r(1+eps)}, and the energy int_B F_eps(grad u_m)
    of the discrete minimizer with forcing truncated at level m.  The boundary
    data g plays the role of the fixed comparison function.
    """
    from .integrand import truncate_forcing
    grid = f.grid
    gb = gradient(boundary).values
    zb = np.moveaxis(gb, 0, -1)
    lift_prof = lp_lift(F.params.p)
    sb = np.sqrt(np.sum(zb * zb, axis=-1))
    Lp = ScalarField(grid, lift_prof(sb)[0])
    reference = integrate_ball(ScalarField(grid, F.value(zb)), ball)
    rows = []
    for eps, m in zip(eps_list, m_list):
        reg = regularize(F, eps, T)
        big = BallRegion(ball.center, ball.radius * (1 + eps))
        tilde = integrate_ball(ScalarField(grid, reg.tilde_profile(sb)[0]), big)
        prob = MinimizationProblem(reg, truncate_forcing(f, m), boundary, ball)
        u, rep = minimize(prob, tol=tol)
        zu = np.moveaxis(gradient(u).values, 0, -1)
        energy = integrate_ball(ScalarField(grid, reg.value(zu)), ball)
        rows.append({"eps": eps, "m": m, "lift": eps * integrate_ball(Lp, ball),
                     "tilde_inflated": tilde, "energy": energy, "reference": reference,
                     "newton_iterations": rep.iterations})
    lifts = [r["lift"] for r in rows]
    gaps = [abs(r["tilde_inflated"] - reference) for r in rows]
    checks = {
        "lift_to_zero": all(b <= a * (1 + 1e-12) for a, b in zip(lifts, lifts[1:])),
        "tilde_trend": len(gaps) < 2 or gaps[-1] <= gaps[0] * (1 + 1e-12),
    }
    return rows, checks
