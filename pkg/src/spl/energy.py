"""Energy functionals E_lambda (singular problem with f) and I_{lambda,eps}
(concave-convex problem), their nodal loads and gradients.

Nonlinear terms use the lumped nodal measure: int G(u) ~ sum_i m_i G(u_i).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .mesh import Field, space_for
from .quadrature import QuadratureError, graded_rule
from .solvers import Functional, NodalLoad
from .weights import Weight

POSITIVITY_FLOOR = 1e-14
TAIL_SLOPE = -0.005  # required log-log slope of f(t)/t^{q+p-1} over the last decade


@dataclass(frozen=True)
class Nonlinearity:
    """f(t) for t >= 0: ``affine`` c0 + c1 t, or ``power_shift`` c0 + t**beta."""

    kind: str
    c0: float = 1.0
    c1: float = 1.0
    beta: float = 1.0

    def __post_init__(self):
        if self.kind not in ("affine", "power_shift"):
            raise ValueError(f"unknown nonlinearity kind {self.kind!r}")

    def __call__(self, t):
        t = np.maximum(np.asarray(t, dtype=float), 0.0)
        if self.kind == "affine":
            return self.c0 + self.c1 * t
        return self.c0 + t**self.beta

    def derivative(self, t):
        t = np.maximum(np.asarray(t, dtype=float), 0.0)
        if self.kind == "affine":
            return np.full_like(t, self.c1)
        with np.errstate(divide="ignore"):
            return np.where(t > 0, self.beta * t ** (self.beta - 1), 0.0 if self.beta > 1 else np.inf)


@dataclass(frozen=True)
class GenericNonlinearity:
    """Wraps a plain callable f (vectorised); derivative by central differences."""

    fun: object

    def __call__(self, t):
        return np.asarray(self.fun(np.maximum(np.asarray(t, dtype=float), 0.0)), dtype=float)

    def derivative(self, t):
        t = np.asarray(t, dtype=float)
        h = 1e-6 * np.maximum(1.0, np.abs(t))
        return (self(t + h) - self(np.maximum(t - h, 0.0))) / (t + h - np.maximum(t - h, 0.0))


@dataclass(frozen=True)
class CaseISpec:
    p: float
    q: float
    lam: float
    f: Nonlinearity | GenericNonlinearity = field(default_factory=lambda: Nonlinearity("affine"))

    def __post_init__(self):
        if self.p <= 1:
            raise ValueError("p must exceed 1")
        if not 0 < self.q < 1:
            raise ValueError("q must lie in (0,1)")
        if self.lam <= 0:
            raise ValueError("lambda must be positive")


@dataclass(frozen=True)
class CaseIISpec:
    p: float
    q: float
    r: float
    lam: float
    eps: float = 0.0

    def __post_init__(self):
        if self.p <= 1:
            raise ValueError("p must exceed 1")
        if not 0 < self.q < 1:
            raise ValueError("q must lie in (0,1)")
        if self.r <= self.p - 1:
            raise ValueError(f"r must lie in the open interval (p-1, p_s*-1); got r = {self.r:g} <= p-1")
        if self.lam < 0:
            raise ValueError("lambda must be non-negative")
        if self.eps < 0:
            raise ValueError("eps must be non-negative")

    def at(self, eps: float | None = None, lam: float | None = None) -> CaseIISpec:
        return CaseIISpec(self.p, self.q, self.r, self.lam if lam is None else lam, self.eps if eps is None else eps)


# ---------------------------------------------------------------------------
# (f1)


@dataclass
class F1Validation:
    ok: bool
    diagnostics: list[str]

    def __bool__(self):
        return self.ok


def validate_f1(f, q: float, p: float, t_max: float = 1e3, growth: float = 10.0) -> F1Validation:
    """Numerical check of (f1) on finite grids; names the first violated clause.

    Clauses: f(0) > 0; f non-decreasing on the sample grid; f(t)/t^{q+p-1}
    decreasing over the last two decades below ``t_max``, with log-log slope
    at most TAIL_SLOPE over the last one; f(t)/t^q increasing
    as t decreases to 1e-12 and growing at least ``growth``-fold over that grid.
    """
    diag: list[str] = []
    with np.errstate(over="ignore", invalid="ignore"):
        f0 = float(np.asarray(f(np.array([0.0])))[0])
        grid = np.concatenate([[0.0], np.logspace(-12, math.log10(t_max), 400)])
        vals = np.asarray(f(grid), dtype=float)
        if not f0 > 0:
            diag.append(f"f(0) > 0 violated: f(0) = {f0:g}")
        elif np.any(np.diff(vals) < -1e-12 * np.maximum(1.0, np.abs(vals[:-1]))):
            i = int(np.argmax(np.diff(vals) < 0))
            diag.append(f"f non-decreasing violated near t = {grid[i]:g}")
        else:
            tail = np.logspace(math.log10(t_max) - 2, math.log10(t_max), 50)
            ratio = np.asarray(f(tail), dtype=float) / tail ** (q + p - 1)
            # a ratio that merely levels off (beta = q+p-1) must not pass
            decays = np.all(np.isfinite(ratio)) and np.all(np.diff(ratio) < 0)
            if decays:
                decays = math.log10(ratio[-1] / ratio[-26]) <= TAIL_SLOPE
            if not decays:
                diag.append(f"decay f(t)/t^(q+p-1) -> 0 violated: ratio not finite and decreasing on [{tail[0]:g}, {t_max:g}]")
            head = np.logspace(-12, -4, 50)
            blow = np.asarray(f(head), dtype=float) / head**q
            if np.any(np.diff(blow) >= 0) or blow[0] < growth * blow[-1]:
                diag.append("blow-up f(t)/t^q -> infinity as t -> 0 violated")
    return F1Validation(not diag, diag)


def F_primitive(t, spec: CaseISpec, rtol: float = 1e-12):
    """F(t) = int_0^t f(tau) tau^{-q} dtau for t > 0, and 0 for t <= 0.

    The substitution tau = sigma^{1/(1-q)} removes the tau^{-q} singularity,
    leaving f(sigma^{1/(1-q)}) / (1-q) on [0, t^{1-q}].  That integrand is only
    Hoelder at sigma = 0 for general f, so Gauss panels graded toward 0 are
    refined until two successive estimates agree to ``rtol``.
    """
    t = np.asarray(t, dtype=float)
    scalar = t.ndim == 0
    t = np.atleast_1d(t)
    out = np.zeros_like(t)
    pos = t > 0
    if np.any(pos):
        q = spec.q
        top = t[pos] ** (1 - q)
        prev = None
        for levels in (8, 16, 24, 32, 48, 64):
            s, ws = graded_rule(0.0, 1.0, (0.0,), levels=levels, npts=12)
            sig = top[:, None] * s[None, :]
            val = top * (spec.f(sig ** (1 / (1 - q))) @ ws) / (1 - q)
            if prev is not None and np.all(np.abs(val - prev) <= rtol * np.maximum(1.0, np.abs(val))):
                break
            prev = val
        else:
            raise QuadratureError("F_primitive quadrature did not converge")
        out[pos] = val
    return float(out[0]) if scalar else out


def caseI_load(spec: CaseISpec) -> NodalLoad:
    """Nodal load g(u) = lambda f(u) u^{-q}; assumes u > 0 where evaluated."""
    lam, q, f = spec.lam, spec.q, spec.f
    return NodalLoad(
        lambda u: lam * F_primitive(u, spec),
        lambda u: lam * f(u) * u ** (-q),
        lambda u: lam * (f.derivative(u) * u ** (-q) - q * f(u) * u ** (-q - 1)),
    )


def energy_caseI(u: Field, spec: CaseISpec, w: Weight) -> float:
    """E_lambda(u) = (1/p) int w |grad u|^p - lambda int F(u)."""
    space = space_for(u.mesh, w)
    F = F_primitive(u.values, spec)
    return space.dirichlet(u.values, spec.p) - spec.lam * space.lumped_integral(F)


def gradient_caseI(u: Field, spec: CaseISpec, w: Weight) -> np.ndarray:
    """Nodal covector of E_lambda; requires u > 0 at interior nodes."""
    space = space_for(u.mesh, w)
    idx = space.interior
    if np.any(u.values[idx] <= 0):
        raise ValueError("E_lambda gradient needs positive interior values")
    return Functional(space, spec.p, caseI_load(spec)).grad(u.values)


# ---------------------------------------------------------------------------
# Case II


def _check_floor(values: np.ndarray, eps: float):
    if eps == 0.0:
        bad = np.flatnonzero(values < POSITIVITY_FLOOR)
        if bad.size:
            raise ValueError(f"eps = 0 requires positive interior values; node {int(bad[0])} is {values[bad[0]]:g}")


def singular_load(lam: float, q: float, eps: float) -> NodalLoad:
    """lambda (u^+ + eps)^{-q} with primitive lambda [(u^+ + eps)^{1-q} - eps^{1-q}]/(1-q).

    Below zero the primitive continues linearly with slope lambda eps^{-q},
    matching the right-hand side of the regularised equation.  With eps = 0
    the load is only meaningful on positive values.
    """

    def primitive(u):
        up = np.maximum(u, 0.0)
        sing = ((up + eps) ** (1 - q) - eps ** (1 - q)) / (1 - q)
        if eps > 0:
            sing = sing + np.minimum(u, 0.0) * eps ** (-q)
        return lam * sing

    def load(u):
        return lam * (np.maximum(u, 0.0) + eps) ** (-q)

    def slope(u):
        with np.errstate(divide="ignore"):
            return np.where(u > 0, -lam * q * (np.maximum(u, 0.0) + eps) ** (-q - 1), 0.0)

    return NodalLoad(primitive, load, slope)


def power_load(r: float) -> NodalLoad:
    """(u^+)^r with primitive (u^+)^{r+1}/(r+1)."""

    def slope(u):
        with np.errstate(divide="ignore"):
            return np.where(u > 0, r * np.maximum(u, 0.0) ** (r - 1), 0.0)

    return NodalLoad(
        lambda u: np.maximum(u, 0.0) ** (r + 1) / (r + 1),
        lambda u: np.maximum(u, 0.0) ** r,
        slope,
    )


def caseII_load(spec: CaseIISpec) -> NodalLoad:
    """g(u) = lambda (u^+ + eps)^{-q} + (u^+)^r with its primitive and slope."""
    return singular_load(spec.lam, spec.q, spec.eps) + power_load(spec.r)


def caseII_functional(space, spec: CaseIISpec) -> Functional:
    return Functional(space, spec.p, caseII_load(spec))


def energy_caseII(u: Field, spec: CaseIISpec, w: Weight) -> float:
    """I_{lambda,eps}(u); with eps = 0 the limit functional I_lambda."""
    space = space_for(u.mesh, w)
    up = np.maximum(u.values, 0.0)
    q, eps = spec.q, spec.eps
    sing = ((up + eps) ** (1 - q) - eps ** (1 - q)) / (1 - q)
    power = up ** (spec.r + 1) / (spec.r + 1)
    return (
        space.dirichlet(u.values, spec.p)
        - spec.lam * space.lumped_integral(sing)
        - space.lumped_integral(power)
    )


def gradient_caseII(u: Field, spec: CaseIISpec, w: Weight) -> np.ndarray:
    """a(u, phi_i) - lambda int (u^+ + eps)^{-q} phi_i - int (u^+)^r phi_i."""
    space = space_for(u.mesh, w)
    idx = space.interior
    _check_floor(u.values[idx], spec.eps)
    return caseII_functional(space, spec).grad(u.values)


def caseII_rhs(spec: CaseIISpec):
    """g_lambda(u) = lambda (u + eps)^{-q} + u^r as a ``rhs(values, coords)`` callable."""
    return lambda v, x: spec.lam * (np.maximum(v, 0.0) + spec.eps) ** (-spec.q) + np.maximum(v, 0.0) ** spec.r


def caseI_rhs(spec: CaseISpec):
    return lambda v, x: spec.lam * spec.f(v) * v ** (-spec.q)
