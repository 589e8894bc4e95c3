"""Polygonal curves with free time grids and their derived sets."""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

import numpy as np


class PolygonalCurve:
    """Piecewise-linear ``gamma: [0, 1] -> R^n`` through ``vertices`` at ``times``."""

    def __init__(self, vertices, times=None):
        self.vertices = np.asarray(vertices, dtype=float)
        if self.vertices.ndim != 2 or len(self.vertices) < 2:
            raise ValueError("need at least two vertices")
        m = len(self.vertices) - 1
        self.times = np.linspace(0.0, 1.0, m + 1) if times is None else np.asarray(times, dtype=float)
        if self.times.shape != (m + 1,) or self.times[0] != 0.0 or self.times[-1] != 1.0:
            raise ValueError("times must run from 0 to 1 with one entry per vertex")
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("times must be strictly increasing")

    @property
    def durations(self) -> np.ndarray:
        return np.diff(self.times)

    @property
    def displacements(self) -> np.ndarray:
        return np.diff(self.vertices, axis=0)

    @property
    def velocities(self) -> np.ndarray:
        return self.displacements / self.durations[:, None]

    def __call__(self, t: float) -> np.ndarray:
        return np.array([np.interp(t, self.times, col) for col in self.vertices.T])

    def lipschitz(self) -> float:
        return float(np.max(np.linalg.norm(self.velocities, axis=1)))

    def to_json(self) -> dict:
        return {"vertices": self.vertices.tolist(), "times": self.times.tolist()}


@dataclass
class DerivedSet:
    """Finite set of velocities, or the segment between two of them when ``is_segment``."""

    vectors: np.ndarray
    is_segment: bool = False

    @property
    def diameter(self) -> float:
        if len(self.vectors) < 2:
            return 0.0
        return float(np.linalg.norm(self.vectors[0] - self.vectors[-1]))

    def contains(self, v, tol: float = 1e-12) -> bool:
        v = np.asarray(v, float)
        if not self.is_segment:
            return bool(np.any(np.linalg.norm(self.vectors - v, axis=1) <= tol))
        a, b = self.vectors
        d = b - a
        lam = np.clip(np.dot(v - a, d) / max(np.dot(d, d), 1e-300), 0, 1)
        return bool(np.linalg.norm(a + lam * d - v) <= tol)


def derived_set(curve: PolygonalCurve, t: float) -> DerivedSet:
    """All limits of difference quotients of ``curve`` over intervals straddling ``t``.

    Inside a segment this is the segment velocity; at an interior vertex it is
    the closed segment between the two adjacent velocities; at the ends only
    one-sided quotients exist.
    """
    if not 0.0 <= t <= 1.0:
        raise ValueError("t must lie in [0, 1]")
    vel = curve.velocities
    idx = np.searchsorted(curve.times, t)
    if idx < len(curve.times) and curve.times[idx] == t:
        if idx == 0:
            return DerivedSet(vel[:1].copy())
        if idx == len(curve.times) - 1:
            return DerivedSet(vel[-1:].copy())
        before, after = vel[idx - 1], vel[idx]
        if np.array_equal(before, after):
            return DerivedSet(before[None].copy())
        return DerivedSet(np.stack([before, after]), is_segment=True)
    return DerivedSet(vel[idx - 1][None].copy())


def mean_value_point(curve: PolygonalCurve, w: Sequence) -> tuple[Fraction, list[Fraction]]:
    """For a closed curve, a time where ``0`` lies in the derived set of ``<gamma, w>``.

    Works in exact rational arithmetic on the binary values of the inputs and
    returns the time together with the derived set of the scalar function
    there (one or two slopes).
    """
    verts = [[Fraction(float(c)) for c in row] for row in curve.vertices]
    if verts[0] != verts[-1]:
        raise ValueError("curve is not closed")
    times = [Fraction(float(t)) for t in curve.times]
    wq = [Fraction(float(c)) for c in w]
    values = [sum((a * b for a, b in zip(row, wq)), Fraction(0)) for row in verts]
    slopes = [(values[i + 1] - values[i]) / (times[i + 1] - times[i]) for i in range(len(values) - 1)]
    for i, s in enumerate(slopes):
        if s == 0:
            return (times[i] + times[i + 1]) / 2, [s]
        if i + 1 < len(slopes) and (s > 0) != (slopes[i + 1] > 0) and slopes[i + 1] != 0:
            return times[i + 1], [s, slopes[i + 1]]
    # the slopes integrate to zero, so a sign change or a zero slope always exists
    raise AssertionError("no mean-value point on a closed curve")
