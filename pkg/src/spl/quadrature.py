"""Gauss rules, with geometric grading toward isolated singular points."""

from __future__ import annotations

from functools import lru_cache

import numpy as np


class QuadratureError(RuntimeError):
    """An integral could not be evaluated to the requested accuracy."""


@lru_cache(maxsize=None)
def gauss01(npts: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre points and weights on [0, 1]."""
    x, w = np.polynomial.legendre.leggauss(npts)
    return (x + 1.0) / 2.0, w / 2.0


def graded_cells(a: float, b: float, singular=(), levels: int = 40) -> np.ndarray:
    """Cell boundaries on [a, b], geometrically graded toward each singular point.

    Cells halve in length on approach to a singular point; the innermost cell
    has length ``2**-levels`` times the distance to the nearest break.
    """
    breaks = sorted({a, b, *[s for s in singular if a < s < b]})
    sing = set(float(s) for s in singular if a <= s <= b)
    edges = []
    for lo, hi in zip(breaks[:-1], breaks[1:]):
        frac = 0.5 ** np.arange(levels + 1)
        if lo in sing and hi in sing:
            mid = (lo + hi) / 2
            left = lo + (mid - lo) * frac[::-1]
            right = hi - (hi - mid) * frac
            pieces = np.concatenate([[lo], left, right[1:], [hi]])
        elif lo in sing:
            pieces = np.concatenate([[lo], lo + (hi - lo) * frac[::-1]])
        elif hi in sing:
            pieces = np.concatenate([hi - (hi - lo) * frac, [hi]])
        else:
            pieces = np.array([lo, hi])
        edges.append(pieces)
    out = np.unique(np.concatenate(edges))
    return out


def graded_rule(a: float, b: float, singular=(), levels: int = 40, npts: int = 8):
    """Composite Gauss rule on a graded partition of [a, b]."""
    edges = graded_cells(a, b, singular, levels)
    gx, gw = gauss01(npts)
    h = np.diff(edges)
    x = (edges[:-1, None] + h[:, None] * gx[None, :]).ravel()
    w = (h[:, None] * gw[None, :]).ravel()
    return x, w


def integrate_1d(fun, a: float, b: float, singular=(), levels: int = 40, npts: int = 8) -> float:
    x, w = graded_rule(a, b, singular, levels, npts)
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        vals = fun(x)
    if not np.all(np.isfinite(vals)):
        raise QuadratureError(f"non-finite integrand on [{a}, {b}]")
    return float(np.dot(w, vals))


# Degree-3 four-point rule on the reference triangle (barycentric, weights sum to 1).
TRI4_BARY = np.array(
    [[1 / 3, 1 / 3, 1 / 3], [0.6, 0.2, 0.2], [0.2, 0.6, 0.2], [0.2, 0.2, 0.6]]
)
TRI4_W = np.array([-27.0, 25.0, 25.0, 25.0]) / 48.0

# Degree-5 seven-point rule; positive weights, used where w may vanish.
_a1, _b1 = 0.059715871789770, 0.470142064105115
_a2, _b2 = 0.797426985353087, 0.101286507323456
TRI7_BARY = np.array(
    [
        [1 / 3, 1 / 3, 1 / 3],
        [_a1, _b1, _b1],
        [_b1, _a1, _b1],
        [_b1, _b1, _a1],
        [_a2, _b2, _b2],
        [_b2, _a2, _b2],
        [_b2, _b2, _a2],
    ]
)
TRI7_W = np.array([0.225] + [0.132394152788506] * 3 + [0.125939180544827] * 3)


def _split4(tri: np.ndarray) -> list[np.ndarray]:
    a, b, c = tri
    ab, bc, ca = (a + b) / 2, (b + c) / 2, (c + a) / 2
    return [np.array(t) for t in ((a, ab, ca), (ab, b, bc), (ca, bc, c), (ab, bc, ca))]


def _tri_contains(tri: np.ndarray, pt: np.ndarray, tol=1e-14) -> bool:
    t = np.vstack([tri.T, np.ones(3)])
    lam = np.linalg.solve(t, np.append(pt, 1.0))
    return bool(np.all(lam >= -tol))


def graded_triangle_rule(tri: np.ndarray, point: np.ndarray, levels: int = 12):
    """Points/weights on a triangle, refined toward ``point`` by repeated 4-splits.

    Only the child triangles touching the singular point are split again, so
    the cost grows linearly with ``levels``.
    """
    pts, wts = [], []
    stack = [(tri, 0)]
    while stack:
        t, depth = stack.pop()
        area = 0.5 * abs(np.linalg.det(np.array([t[1] - t[0], t[2] - t[0]])))
        if depth < levels and _tri_contains(t, point):
            stack.extend((child, depth + 1) for child in _split4(t))
            continue
        pts.append(TRI7_BARY @ t)
        wts.append(TRI7_W * area)
    return np.vstack(pts), np.concatenate(wts)
