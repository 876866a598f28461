"""Uniform box grids with the discrete calculus used by the rest of the lab.

Nodes sit on [-R, R]^n with spacing h.  Balls are integrated with the
center-in rule and spheres with shells of width h.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np


class GridError(ValueError):
    """Raised for inconsistent grids or regions."""


@dataclass(frozen=True)
class Grid:
    n: int
    R: float
    h: float

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 1:
            raise GridError(f"dimension must be a positive integer, got {self.n}")
        if not (self.h > 0 and self.R > 0):
            raise GridError("R and h must be positive")
        cells = 2.0 * self.R / self.h
        if abs(cells - round(cells)) > 1e-9 * max(1.0, cells):
            raise GridError(f"2R/h = {cells} is not an integer")

    @property
    def cells(self) -> int:
        return int(round(2.0 * self.R / self.h))

    @property
    def count(self) -> int:
        """Nodes per axis (always odd, so the origin is a node)."""
        return self.cells + 1

    @property
    def shape(self) -> tuple:
        return (self.count,) * self.n

    @property
    def size(self) -> int:
        return self.count ** self.n

    @property
    def cell_volume(self) -> float:
        return self.h ** self.n

    @cached_property
    def axis(self) -> np.ndarray:
        return -self.R + self.h * np.arange(self.count)

    def coords(self):
        """Sparse broadcastable coordinate arrays, one per axis."""
        return np.meshgrid(*([self.axis] * self.n), indexing="ij", sparse=True)

    def dist2(self, center=None) -> np.ndarray:
        """Squared distance of each node to ``center`` (origin by default)."""
        c = np.zeros(self.n) if center is None else np.asarray(center, float)
        out = np.zeros(self.shape)
        for k, x in enumerate(self.coords()):
            out = out + (x - c[k]) ** 2
        return out


@dataclass(frozen=True, eq=False)
class ScalarField:
    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.size != self.grid.size:
            raise GridError(f"field has {v.size} values, grid has {self.grid.size} nodes")
        v = v.reshape(self.grid.shape)
        if not np.all(np.isfinite(v)):
            raise GridError("field values must be finite")
        v.flags.writeable = False
        object.__setattr__(self, "values", v)

    @classmethod
    def from_function(cls, grid: Grid, func):
        """Evaluate ``func(*coords)`` on the grid; coords broadcast sparsely."""
        vals = np.broadcast_to(np.asarray(func(*grid.coords()), float), grid.shape)
        return cls(grid, vals)

    @classmethod
    def constant(cls, grid: Grid, c: float):
        return cls(grid, np.full(grid.shape, float(c)))

    def map(self, fn):
        return ScalarField(self.grid, fn(self.values))


@dataclass(frozen=True, eq=False)
class VectorField:
    grid: Grid
    values: np.ndarray  # shape (n, *grid.shape)

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.shape != (self.grid.n,) + self.grid.shape:
            raise GridError(f"vector field shape {v.shape} does not match grid")
        if not np.all(np.isfinite(v)):
            raise GridError("vector field values must be finite")
        v.flags.writeable = False
        object.__setattr__(self, "values", v)

    def norm(self) -> ScalarField:
        return ScalarField(self.grid, np.sqrt(np.sum(self.values ** 2, axis=0)))


@dataclass(frozen=True)
class BallRegion:
    center: tuple
    radius: float

    def __post_init__(self):
        if not self.radius > 0:
            raise GridError("ball radius must be positive")
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))

    @classmethod
    def centered(cls, n: int, radius: float):
        return cls((0.0,) * n, radius)

    def check_inside(self, grid: Grid):
        if len(self.center) != grid.n:
            raise GridError("ball and grid dimensions differ")
        reach = max(abs(c) for c in self.center) + self.radius
        if reach > grid.R * (1 + 1e-12):
            raise GridError(f"ball (reach {reach}) escapes the box [-{grid.R}, {grid.R}]^{grid.n}")

    def mask(self, grid: Grid) -> np.ndarray:
        """Nodes whose center lies in the closed ball."""
        return grid.dist2(self.center) <= self.radius ** 2 * (1 + 1e-12)


def gradient(field: ScalarField) -> VectorField:
    g = field.grid
    if g.count < 3:
        raise GridError("gradient needs at least 3 nodes per axis")
    parts = np.gradient(field.values, g.h, edge_order=2)
    if g.n == 1:
        parts = [parts]
    return VectorField(g, np.stack(parts))


def integrate(field: ScalarField) -> float:
    return float(np.sum(field.values) * field.grid.cell_volume)


def integrate_ball(field: ScalarField, ball: BallRegion) -> float:
    ball.check_inside(field.grid)
    return float(np.sum(field.values[ball.mask(field.grid)]) * field.grid.cell_volume)


def sphere_integral(field: ScalarField, r: float, center=None) -> float:
    """Thin-shell approximation of the surface integral over |x - center| = r."""
    g = field.grid
    c = np.zeros(g.n) if center is None else np.asarray(center, float)
    if np.max(np.abs(c)) + r + g.h / 2 > g.R * (1 + 1e-12):
        raise GridError("shell escapes the box")
    d = np.sqrt(g.dist2(c))
    shell = (d >= r - g.h / 2) & (d < r + g.h / 2)
    if not shell.any():
        raise GridError(f"empty shell at r = {r}")
    return float(np.sum(field.values[shell]) * g.cell_volume / g.h)


def truncate_above(field: ScalarField, k: float) -> ScalarField:
    """(v - k)_+ nodewise."""
    return ScalarField(field.grid, np.maximum(field.values - k, 0.0))


def superlevel_measure(field: ScalarField, k: float, ball: BallRegion) -> float:
    ball.check_inside(field.grid)
    sel = ball.mask(field.grid) & (field.values > k)
    return float(np.count_nonzero(sel) * field.grid.cell_volume)


def w12_norm(field: ScalarField, ball: BallRegion) -> float:
    ball.check_inside(field.grid)
    m = ball.mask(field.grid)
    grad = gradient(field).values
    sq = field.values ** 2 + np.sum(grad ** 2, axis=0)
    return float(np.sqrt(np.sum(sq[m]) * field.grid.cell_volume))


def sup_ball(field: ScalarField, ball: BallRegion) -> float:
    m = ball.mask(field.grid)
    if not m.any():
        raise GridError("ball contains no grid node")
    return float(np.max(field.values[m]))
