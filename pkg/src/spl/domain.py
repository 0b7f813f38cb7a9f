"""Bounded domains: intervals, rectangles, disks and origin-centred balls."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Domain:
    """A bounded domain in R^n.

    ``interval`` uses ``lower=(a,)``, ``upper=(b,)``; ``rectangle`` uses the
    two corners; ``disk`` and ``ball`` use ``center`` and ``radius``.  A
    ``ball`` may have any dimension and is only used for radial integrals
    (it cannot be meshed).
    """

    kind: str
    lower: tuple[float, ...] = ()
    upper: tuple[float, ...] = ()
    center: tuple[float, ...] = ()
    radius: float = 0.0

    def __post_init__(self):
        if self.kind in ("interval", "rectangle"):
            want = 1 if self.kind == "interval" else 2
            if len(self.lower) != want or len(self.upper) != want:
                raise ValueError(f"{self.kind} needs {want}-dimensional corners")
            if any(lo >= hi for lo, hi in zip(self.lower, self.upper)):
                raise ValueError(f"{self.kind} has empty extent: {self.lower} .. {self.upper}")
        elif self.kind in ("disk", "ball"):
            if self.radius <= 0:
                raise ValueError("radius must be positive")
            if self.kind == "disk" and len(self.center) != 2:
                raise ValueError("disk needs a 2D center")
            if not self.center:
                raise ValueError("ball needs a center")
        else:
            raise ValueError(f"unsupported domain kind {self.kind!r}")

    @classmethod
    def interval(cls, a: float, b: float) -> Domain:
        return cls("interval", lower=(float(a),), upper=(float(b),))

    @classmethod
    def rectangle(cls, x0=0.0, x1=1.0, y0=0.0, y1=1.0) -> Domain:
        return cls("rectangle", lower=(float(x0), float(y0)), upper=(float(x1), float(y1)))

    @classmethod
    def disk(cls, cx=0.0, cy=0.0, radius=1.0) -> Domain:
        return cls("disk", center=(float(cx), float(cy)), radius=float(radius))

    @classmethod
    def ball(cls, n: int, radius=1.0) -> Domain:
        return cls("ball", center=(0.0,) * int(n), radius=float(radius))

    @property
    def dim(self) -> int:
        if self.kind in ("interval", "rectangle"):
            return len(self.lower)
        return len(self.center)

    @property
    def diameter(self) -> float:
        if self.kind in ("interval", "rectangle"):
            return float(np.linalg.norm(np.subtract(self.upper, self.lower)))
        return 2.0 * self.radius

    @property
    def measure(self) -> float:
        if self.kind in ("interval", "rectangle"):
            return float(np.prod(np.subtract(self.upper, self.lower)))
        n = self.dim
        return math.pi ** (n / 2) / math.gamma(n / 2 + 1) * self.radius**n

    def bbox(self) -> tuple[np.ndarray, np.ndarray]:
        if self.kind in ("interval", "rectangle"):
            return np.array(self.lower), np.array(self.upper)
        c = np.array(self.center)
        return c - self.radius, c + self.radius

    def contains(self, x: np.ndarray, tol: float = 0.0) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if self.kind in ("interval", "rectangle"):
            lo, hi = self.bbox()
            return np.all((x >= lo - tol) & (x <= hi + tol), axis=1)
        return np.linalg.norm(x - np.array(self.center), axis=1) <= self.radius + tol

    def shrunk(self, factor: float) -> Domain:
        """Homothetic copy about the centre, used as a compact sub-box K."""
        if not 0 < factor < 1:
            raise ValueError("shrink factor must lie in (0, 1)")
        if self.kind in ("interval", "rectangle"):
            lo, hi = self.bbox()
            mid, half = (lo + hi) / 2, factor * (hi - lo) / 2
            return Domain(self.kind, lower=tuple(mid - half), upper=tuple(mid + half))
        return Domain(self.kind, center=self.center, radius=factor * self.radius)
