"""Decreasing rearrangements of sampled functions and the norms built on them.

A sample set is a finite list of (|f| value, cell measure) pairs.  Its
rearrangement is an exact step function, so every integral here has a
closed form.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .grid import BallRegion, ScalarField


class RearrangementError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class WeightedSamples:
    values: np.ndarray
    measures: np.ndarray

    def __post_init__(self):
        v = np.abs(np.asarray(self.values, float)).ravel()
        m = np.asarray(self.measures, float).ravel()
        if m.size == 1 and v.size > 1:
            m = np.full(v.shape, float(m[0]))
        if v.shape != m.shape:
            raise RearrangementError("values and measures differ in length")
        if not (np.all(np.isfinite(v)) and np.all(np.isfinite(m))):
            raise RearrangementError("samples must be finite")
        if np.any(m <= 0):
            raise RearrangementError("measures must be positive")
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "measures", m)

    @classmethod
    def from_field(cls, field: ScalarField, ball: BallRegion | None = None):
        """One sample per node (inside ``ball`` if given), measure h^n each."""
        vals = field.values
        if ball is not None:
            ball.check_inside(field.grid)
            vals = vals[ball.mask(field.grid)]
        return cls(np.ravel(vals), np.full(np.size(vals), field.grid.cell_volume))

    @property
    def total_measure(self) -> float:
        return math.fsum(self.measures)

    def __len__(self):
        return self.values.size


@dataclass(frozen=True, eq=False)
class StepProfile:
    """f* as levels on [t_k, t_{k+1}); ``widths`` are the exact interval lengths."""
    levels: np.ndarray
    widths: np.ndarray

    def __post_init__(self):
        lv = np.asarray(self.levels, float)
        w = np.asarray(self.widths, float)
        if lv.shape != w.shape or lv.ndim != 1:
            raise RearrangementError("levels and widths must be 1-D of equal length")
        if np.any(lv < 0) or np.any(np.diff(lv) > 0):
            raise RearrangementError("levels must be non-negative and non-increasing")
        if np.any(w <= 0):
            raise RearrangementError("interval widths must be positive")
        object.__setattr__(self, "levels", lv)
        object.__setattr__(self, "widths", w)

    @property
    def breaks(self) -> np.ndarray:
        return np.concatenate([[0.0], np.cumsum(self.widths)])

    @property
    def total_measure(self) -> float:
        return math.fsum(self.widths)

    def value(self, t):
        """Right-continuous evaluation of f*(t); zero beyond the support."""
        t = np.asarray(t, float)
        b = self.breaks
        k = np.searchsorted(b, t, side="right") - 1
        inside = (k >= 0) & (k < self.levels.size)
        out = np.where(inside, self.levels[np.clip(k, 0, self.levels.size - 1)], 0.0)
        return out if out.ndim else float(out)

    @property
    def _sq_cumulative(self) -> np.ndarray:
        return np.concatenate([[0.0], np.cumsum(self.levels ** 2 * self.widths)])


def rearrange(samples: WeightedSamples) -> StepProfile:
    if len(samples) == 0:
        raise RearrangementError("cannot rearrange an empty sample set")
    order = np.argsort(-samples.values, kind="stable")
    v = samples.values[order]
    m = samples.measures[order]
    starts = np.flatnonzero(np.concatenate([[True], v[1:] != v[:-1]]))
    ends = np.append(starts[1:], v.size)
    widths = np.array([math.fsum(m[a:b]) for a, b in zip(starts, ends)])
    return StepProfile(v[starts], widths)


def lp_norm_from_profile(profile: StepProfile, p: float) -> float:
    """Integral of (f*)^p, i.e. the p-th power of the L^p norm."""
    if p < 1:
        raise RearrangementError("p must be at least 1")
    return math.fsum(profile.levels ** p * profile.widths)


def lorentz_n1(profile: StepProfile, n: int) -> float:
    """L^{n,1} norm: integral of t^{1/n} f*(t) dt/t, summed exactly."""
    if n < 1:
        raise RearrangementError("n must be positive")
    b = profile.breaks
    return math.fsum(profile.levels * n * (b[1:] ** (1.0 / n) - b[:-1] ** (1.0 / n)))


def omega(profile: StepProfile, t):
    """omega_f(t) = (int_0^t (f*)^2)^{1/2}."""
    t = np.asarray(t, float)
    total = profile.total_measure
    if np.any(t < 0) or np.any(t > total * (1 + 1e-12)):
        raise RearrangementError(f"t must lie in [0, {total}]")
    t = np.minimum(t, total)
    b = profile.breaks
    sq = profile._sq_cumulative
    k = np.clip(np.searchsorted(b, t, side="right") - 1, 0, profile.levels.size - 1)
    out = np.sqrt(sq[k] + profile.levels[k] ** 2 * (t - b[k]))
    return out if out.ndim else float(out)


def omega_inverse(profile: StepProfile, y: float, full_output: bool = False):
    """Smallest t with omega(t) >= y.

    omega^2 is piecewise linear, so the inverse is solved in closed form on
    the interval where the target is crossed.  Targets above the range
    saturate at the total measure; ``full_output`` also returns that flag.
    """
    total = profile.total_measure
    sq = profile._sq_cumulative
    y2 = float(y) ** 2
    if y <= 0:
        t, saturated = 0.0, False
    elif y2 > sq[-1]:
        t, saturated = total, True
    else:
        k = int(np.searchsorted(sq, y2, side="left")) - 1
        k = min(max(k, 0), profile.levels.size - 1)
        t = profile.breaks[k] + (y2 - sq[k]) / profile.levels[k] ** 2
        t, saturated = min(t, total), False
    return (t, saturated) if full_output else t


@dataclass(frozen=True)
class SubsetBoundReport:
    greedy: float
    profile_integral: float
    equal: bool


def subset_bound_check(samples: WeightedSamples, p: float, t: float) -> SubsetBoundReport:
    """Compare the greedy maximizer of int_A |f|^p over |A| <= t with int_0^t (f*)^p."""
    total = samples.total_measure
    if not 0 < t <= total * (1 + 1e-12):
        raise RearrangementError("t must lie in (0, |Omega|]")
    order = np.argsort(-samples.values, kind="stable")
    left, parts = float(t), []
    for i in order:
        take = min(samples.measures[i], left)
        parts.append(samples.values[i] ** p * take)
        left -= take
        if left <= 0:
            break
    greedy = math.fsum(parts)

    prof = rearrange(samples)
    b = prof.breaks
    take = np.clip(np.minimum(b[1:], t) - b[:-1], 0.0, None)
    integral = math.fsum(prof.levels ** p * take)
    ok = abs(greedy - integral) <= 1e-12 * max(1.0, abs(integral))
    return SubsetBoundReport(greedy, integral, ok)


def lorentz_lebesgue_constant(n: int) -> float:
    """C with ||f||_{L^n} <= C ||f||_{L^{n,1}} for step profiles.

    For non-increasing f*, (int (f*)^n)^{1/n} <= n^{(1-n)/n} int t^{1/n} f* dt/t,
    which follows from t^{1/n} f*(t) <= (1/n) int_0^t s^{1/n} f*(s) ds/s applied
    to all but one factor of (f*)^n.
    """
    return float(n) ** ((1.0 - n) / n)
