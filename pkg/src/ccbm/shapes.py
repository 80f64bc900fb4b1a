"""Fixed inner boundaries used by the annular mesher.

Every shape knows a star center and can emit a counterclockwise closed
polyline (first vertex not repeated) with edge length close to ``h``.
"""

import math
from dataclasses import dataclass

import numpy as np


def resample_closed(points, n):
    """Arc-length uniform resampling of a closed polyline to ``n`` vertices.

    The first vertex of ``points`` is kept as the first output vertex.
    """
    closed = np.vstack([points, points[:1]])
    seg = np.linalg.norm(np.diff(closed, axis=0), axis=1)
    s = np.concatenate([[0.0], np.cumsum(seg)])
    targets = np.arange(n) * (s[-1] / n)
    x = np.interp(targets, s, closed[:, 0])
    y = np.interp(targets, s, closed[:, 1])
    return np.column_stack([x, y])


def polyline_length(points):
    closed = np.vstack([points, points[:1]])
    return float(np.sum(np.linalg.norm(np.diff(closed, axis=0), axis=1)))


@dataclass(frozen=True)
class Circle:
    radius: float
    center: tuple = (0.0, 0.0)

    @property
    def star_center(self):
        return np.asarray(self.center, dtype=float)

    def polyline(self, h):
        n = max(8, int(math.ceil(2.0 * math.pi * self.radius / h)))
        theta = 2.0 * math.pi * np.arange(n) / n
        c = self.star_center
        return np.column_stack([c[0] + self.radius * np.cos(theta),
                                c[1] + self.radius * np.sin(theta)])

    def perimeter(self):
        return 2.0 * math.pi * self.radius


@dataclass(frozen=True)
class Polygon:
    """Straight-sided boundary; corners are always kept as mesh vertices."""

    corners: tuple
    center: tuple

    @property
    def star_center(self):
        return np.asarray(self.center, dtype=float)

    def polyline(self, h):
        corners = np.asarray(self.corners, dtype=float)
        out = []
        for a, b in zip(corners, np.roll(corners, -1, axis=0)):
            k = max(1, int(math.ceil(np.linalg.norm(b - a) / h - 1e-9)))
            s = np.arange(k)[:, None] / k
            out.append(a + s * (b - a))
        return np.vstack(out)

    def perimeter(self):
        return polyline_length(np.asarray(self.corners, dtype=float))


def lshape(star_center=(-0.05, -0.05)):
    """Boundary of (-0.25, 0.25)^2 minus [0, 0.25]^2, counterclockwise."""
    corners = ((-0.25, -0.25), (0.25, -0.25), (0.25, 0.0),
               (0.0, 0.0), (0.0, 0.25), (-0.25, 0.25))
    return Polygon(corners, tuple(star_center))


@dataclass(frozen=True)
class Ribbon:
    """theta -> (a cos t, b sin t (c + cos 2t)), default a=0.45, b=0.3, c=1.25."""

    a: float = 0.45
    b: float = 0.3
    c: float = 1.25
    center: tuple = (0.0, 0.0)

    @property
    def star_center(self):
        return np.asarray(self.center, dtype=float)

    def _dense(self, m=20000):
        t = 2.0 * math.pi * np.arange(m) / m
        return np.column_stack([self.a * np.cos(t),
                                self.b * np.sin(t) * (self.c + np.cos(2.0 * t))])

    def polyline(self, h):
        dense = self._dense()
        n = max(8, int(round(polyline_length(dense) / h)))
        return resample_closed(dense, n)

    def perimeter(self):
        return polyline_length(self._dense())


@dataclass(frozen=True)
class PolylineBoundary:
    """User-supplied closed polyline, resampled to spacing ``h``."""

    points: tuple
    center: tuple

    @property
    def star_center(self):
        return np.asarray(self.center, dtype=float)

    def polyline(self, h):
        pts = np.asarray(self.points, dtype=float)
        n = max(8, int(round(polyline_length(pts) / h)))
        return resample_closed(pts, n)

    def perimeter(self):
        return polyline_length(np.asarray(self.points, dtype=float))
