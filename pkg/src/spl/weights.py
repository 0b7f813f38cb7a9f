"""Weight functions and their admissibility: A_p constants, the A_s
subclass, embedding exponents and the Morrey condition on 1/w."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .domain import Domain
from .quadrature import QuadratureError, gauss01, graded_rule, integrate_1d

# Grading depths used as the refinement sequence when deciding finiteness.
REFINEMENT_LEVELS = (16, 32, 64, 128)
STABLE_RTOL = 0.01


@dataclass(frozen=True, eq=False)
class Weight:
    """w(x) > 0 on R^n: constant, radial power |x|^alpha, or tabulated.

    Tabulated weights are piecewise-linear interpolants of strictly positive
    samples (columns ``x[,y],w``).
    """

    kind: str
    n: int = 1
    p: float = 2.0
    value: float = 1.0
    alpha: float = 0.0
    table_x: np.ndarray | None = field(default=None, repr=False)
    table_w: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.p <= 1:
            raise ValueError("p must exceed 1")
        if self.n < 1:
            raise ValueError("dimension n must be a positive integer")
        if self.kind == "constant":
            if self.value <= 0:
                raise ValueError("constant weight must be positive")
        elif self.kind == "power":
            pass
        elif self.kind == "table":
            if self.table_x is None or self.table_w is None:
                raise ValueError("tabulated weight needs samples")
            if np.any(np.asarray(self.table_w) <= 0):
                raise ValueError("tabulated weight must be strictly positive at all samples")
            if self.n > 2:
                raise ValueError("tabulated weights support n <= 2")
        else:
            raise ValueError(f"unknown weight kind {self.kind!r}")

    @classmethod
    def constant(cls, value=1.0, n=1, p=2.0) -> Weight:
        return cls("constant", n=n, p=p, value=float(value))

    @classmethod
    def power(cls, alpha: float, n=1, p=2.0) -> Weight:
        return cls("power", n=n, p=p, alpha=float(alpha))

    @classmethod
    def from_csv(cls, path, p=2.0) -> Weight:
        path = Path(path)
        with path.open(newline="") as fh:
            rows = list(csv.DictReader(fh))
        if not rows:
            raise ValueError(f"{path}: no weight samples")
        cols = rows[0].keys()
        coords = ["x"] + (["y"] if "y" in cols else [])
        if "x" not in cols or "w" not in cols:
            raise ValueError(f"{path}: expected columns x[,y],w")
        xs = np.array([[float(r[c]) for c in coords] for r in rows])
        ws = np.array([float(r["w"]) for r in rows])
        if xs.shape[1] == 1:
            order = np.argsort(xs[:, 0])
            xs, ws = xs[order], ws[order]
        return cls("table", n=xs.shape[1], p=p, table_x=xs, table_w=ws)

    def with_p(self, p: float) -> Weight:
        return Weight(self.kind, self.n, p, self.value, self.alpha, self.table_x, self.table_w)

    @property
    def key(self) -> tuple:
        if self.kind == "table":
            return ("table", id(self.table_x))
        return (self.kind, self.n, self.value, self.alpha)

    @property
    def singular_point(self) -> np.ndarray | None:
        """Where w or 1/w is singular (the origin for non-trivial powers)."""
        if self.kind == "power" and self.alpha != 0.0:
            return np.zeros(self.n)
        return None

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.ndim == 1 and self.n == 1:
            x = x[:, None]
        x = np.atleast_2d(x)
        if self.kind == "constant":
            return np.full(x.shape[0], self.value)
        if self.kind == "power":
            r = np.linalg.norm(x, axis=1)
            if self.alpha != 0.0 and np.any(r == 0.0):
                raise ValueError("power weight evaluated at its singular point")
            return r**self.alpha
        if self.n == 1:
            return np.interp(x[:, 0], self.table_x[:, 0], self.table_w)
        return _table_interp_2d(self)(x)

    def powered(self, x, exponent: float) -> np.ndarray:
        """w(x)**exponent, evaluated without forming w first for power weights."""
        if self.kind == "power":
            r = np.linalg.norm(np.atleast_2d(np.asarray(x, float).reshape(len(x), -1)), axis=1)
            return r ** (self.alpha * exponent)
        return self(x) ** exponent


_INTERP_CACHE: dict[int, object] = {}


def _table_interp_2d(w: Weight):
    from scipy.interpolate import LinearNDInterpolator, NearestNDInterpolator

    key = id(w.table_x)
    if key not in _INTERP_CACHE:
        lin = LinearNDInterpolator(w.table_x, w.table_w)
        near = NearestNDInterpolator(w.table_x, w.table_w)

        def interp(x):
            v = lin(x)
            bad = np.isnan(v)
            if np.any(bad):
                v[bad] = near(x[bad])
            return v

        _INTERP_CACHE[key] = interp
    return _INTERP_CACHE[key]


# ---------------------------------------------------------------------------
# A_p


def power_weight_ap_admissible(alpha: float, n: int, p: float) -> bool:
    """|x|^alpha is an A_p weight on R^n iff -n < alpha < n(p-1)."""
    if p <= 1:
        raise ValueError("p must exceed 1")
    if n < 1:
        raise ValueError("n must be a positive integer")
    return -n < alpha < n * (p - 1)


@dataclass(frozen=True)
class BallSampling:
    """Centres on a uniform lattice over the bounding box, radii d0 * 2**-j."""

    centers_per_axis: int = 32
    levels: int = 12

    def centers(self, domain: Domain) -> np.ndarray:
        lo, hi = domain.bbox()
        axes = [np.linspace(a, b, self.centers_per_axis) for a, b in zip(lo, hi)]
        grid = np.meshgrid(*axes, indexing="ij")
        pts = np.stack([g.ravel() for g in grid], axis=1)
        return pts[domain.contains(pts, tol=1e-12)]

    def radii(self, d0: float) -> np.ndarray:
        return d0 * 0.5 ** np.arange(1, self.levels + 1)


def _power_ball_integral(alpha_exp: float, n: int, center, r: float, nang: int = 512) -> float:
    """Integral of |x|**alpha_exp over the ball B(center, r) in R^n (n = 1, 2)."""
    c = np.asarray(center, dtype=float)
    dist = float(np.linalg.norm(c))
    if alpha_exp <= -n and dist <= r:
        raise QuadratureError(
            f"|x|^{alpha_exp:g} is not integrable on the ball at {c.tolist()} radius {r:g}"
        )
    if n == 1:
        lo, hi = c[0] - r, c[0] + r
        return integrate_1d(lambda x: np.abs(x) ** alpha_exp, lo, hi, singular=(0.0,), levels=200)
    if n != 2:
        raise NotImplementedError("ball integrals of power weights support n <= 2")
    # polar coordinates about the origin; radial part in closed form
    beta = alpha_exp + 2.0
    if dist <= r:
        theta0, half = 0.0, math.pi
    else:
        theta0, half = math.atan2(c[1], c[0]), math.asin(r / dist)
    # substitution theta = theta0 + half*sin(s) clusters nodes at tangency angles
    s, ws = gauss01(nang)
    s = -math.pi / 2 + math.pi * s
    ws = ws * math.pi
    theta = theta0 + half * np.sin(s)
    jac = half * np.cos(s)
    u = np.stack([np.cos(theta), np.sin(theta)], axis=1)
    uc = u @ c
    disc = np.maximum(uc**2 - dist**2 + r**2, 0.0)
    rho2 = uc + np.sqrt(disc)
    rho1 = np.maximum(uc - np.sqrt(disc), 0.0) if dist > r else np.zeros_like(rho2)
    radial = (rho2**beta - rho1**beta) / beta
    return float(np.dot(ws * jac, radial))


def _generic_ball_integral(w: Weight, exponent: float, center, r: float) -> float:
    c = np.asarray(center, dtype=float)
    if w.n == 1:
        return integrate_1d(lambda x: w.powered(x[:, None], exponent), c[0] - r, c[0] + r)
    rr, wr = gauss01(24)
    tt, wt = gauss01(48)
    R, T = np.meshgrid(rr * r, tt * 2 * math.pi, indexing="ij")
    pts = c + np.stack([R.ravel() * np.cos(T.ravel()), R.ravel() * np.sin(T.ravel())], axis=1)
    wts = (np.outer(wr * r, wt * 2 * math.pi) * R).ravel()
    return float(np.dot(wts, w.powered(pts, exponent)))


def ball_integral(w: Weight, exponent: float, center, r: float) -> float:
    """Integral of w**exponent over the ball B(center, r) of R^n."""
    if w.kind == "power":
        return _power_ball_integral(w.alpha * exponent, w.n, center, r)
    return _generic_ball_integral(w, exponent, center, r)


def ap_ratio(w: Weight, center, r: float) -> float:
    """(avg_B w) * (avg_B w^{-1/(p-1)})^{p-1} on one ball."""
    p = w.p
    vol = math.pi ** (w.n / 2) / math.gamma(w.n / 2 + 1) * r**w.n
    avg_w = ball_integral(w, 1.0, center, r) / vol
    avg_dual = ball_integral(w, -1.0 / (p - 1), center, r) / vol
    return avg_w * avg_dual ** (p - 1)


def estimate_ap_constant(w: Weight, domain: Domain, sampling: BallSampling | None = None) -> float:
    """Sampled supremum of the A_p ratio: a lower bound for c_{p,w}.

    Raises QuadratureError when w^{-1/(p-1)} fails to be integrable on one of
    the sampled balls.
    """
    sampling = sampling or BallSampling()
    if domain.dim != w.n:
        raise ValueError("weight and domain dimensions differ")
    best = -np.inf
    for c in sampling.centers(domain):
        for r in sampling.radii(domain.diameter):
            best = max(best, ap_ratio(w, c, r))
    return float(best)


# ---------------------------------------------------------------------------
# A_s and embeddings


def check_s_range(p: float, s: float, n: int) -> None:
    if s < 1.0 / (p - 1):
        raise ValueError(f"s = {s:g} violates s >= 1/(p-1) = {1.0 / (p - 1):g}")
    if s <= n / p:
        raise ValueError(f"s = {s:g} violates s > n/p = {n / p:g}")


def default_s(p: float, n: int) -> float:
    """Smallest convenient admissible s: 1/(p-1) when that exceeds n/p."""
    lo = 1.0 / (p - 1)
    return lo if lo > n / p else 1.01 * n / p


S_BOUNDED = 1e6  # stands in for s = infinity when w^{-1} is bounded


def largest_admissible_s(w: Weight) -> float:
    """A large s with w^{-s} integrable near the origin, for the widest embedding range.

    Bounded w^{-1} (constant weights, power weights with alpha <= 0) allows any
    s, so ``S_BOUNDED`` is returned.  For |x|^alpha with alpha > 0 the bound is
    s < n/alpha; 0.9 n/alpha (an integral the refinement test can certify) is used when admissible, else :func:`default_s`.
    Tabulated weights use :func:`default_s`.
    """
    if w.kind == "constant" or (w.kind == "power" and w.alpha <= 0):
        return S_BOUNDED
    if w.kind == "power":
        s = 0.9 * w.n / w.alpha
        if s >= 1.0 / (w.p - 1) and s > w.n / w.p:
            return s
    return default_s(w.p, w.n)


@dataclass(frozen=True)
class AsMembership:
    s: float
    integral_estimate: float
    member: bool
    refinements: tuple[float, ...] = ()


def _integral_neg_s(w: Weight, s: float, domain: Domain, levels: int) -> float:
    """Integral of w^{-s} over the domain at grading depth ``levels``."""
    if domain.kind == "interval":
        a, b = domain.lower[0], domain.upper[0]
        sing = (0.0,) if w.singular_point is not None else ()
        x, wt = graded_rule(a, b, sing, levels=levels, npts=8)
        return float(np.dot(wt, w.powered(x[:, None], -s)))
    if domain.kind == "ball":
        if w.kind == "table":
            raise NotImplementedError("ball domains need a radial weight")
        n = domain.dim
        sphere = 2 * math.pi ** (n / 2) / math.gamma(n / 2)
        rad, wt = graded_rule(0.0, domain.radius, (0.0,), levels=levels, npts=8)
        if w.kind == "power":
            vals = rad ** (-s * w.alpha)
        else:
            vals = np.full_like(rad, w.value ** (-s))
        return float(sphere * np.dot(wt, vals * rad ** (n - 1)))
    pts, wt = _domain_rule_2d(w, domain, levels)
    return float(np.dot(wt, w.powered(pts, -s)))


def _domain_rule_2d(w: Weight, domain: Domain, levels: int, resolution: int = 16):
    from .mesh import build_mesh, element_rule

    mesh = build_mesh(domain, resolution)
    return element_rule(mesh, w.singular_point, levels=min(levels, 40))


def as_membership(w: Weight, s: float, domain: Domain) -> AsMembership:
    """Decide w^{-s} in L^1(domain) from a refinement sequence of estimates.

    Finite means: the last two refinements agree to 1% relative.
    """
    check_s_range(w.p, s, w.n)
    seq = []
    for lev in REFINEMENT_LEVELS:
        with np.errstate(over="ignore", divide="ignore"):
            seq.append(_integral_neg_s(w, s, domain, lev))
    last, prev = seq[-1], seq[-2]
    member = bool(np.isfinite(last) and abs(last - prev) <= STABLE_RTOL * abs(last))
    return AsMembership(s=s, integral_estimate=float(last), member=member, refinements=tuple(seq))


@dataclass(frozen=True)
class EmbeddingExponents:
    p_s: float
    p_s_star: float  # math.inf when p_s >= n
    regime: str
    n: int = 3

    @property
    def below_analysis_dimension(self) -> bool:
        """The analysis assumes n >= 3; 1D/2D runs are flagged, not refused."""
        return self.n < 3


def embedding_exponents(p: float, s: float, n: int) -> EmbeddingExponents:
    check_s_range(p, s, n)
    p_s = p * s / (s + 1)
    if p_s < n:
        return EmbeddingExponents(p_s, n * p_s / (n - p_s), "subcritical_n", n)
    regime = "borderline_n" if p_s == n else "supercritical_n"
    return EmbeddingExponents(p_s, math.inf, regime, n)


# ---------------------------------------------------------------------------
# Morrey condition on 1/w


@dataclass(frozen=True)
class MorreyReport:
    exponent_q: float
    alpha_m: float
    t: float
    norm_estimate: float
    d0: float
    passes: bool
    vacuous: bool = False


def _morrey_sup(w: Weight, domain: Domain, exponent_q, t, sampling, levels) -> float:
    d0 = domain.diameter
    best = 0.0
    if domain.kind == "interval":
        a, b = domain.lower[0], domain.upper[0]
        sing = (0.0,) if w.singular_point is not None else ()
        for c in sampling.centers(domain)[:, 0]:
            for r in sampling.radii(d0):
                lo, hi = max(a, c - r), min(b, c + r)
                x, wt = graded_rule(lo, hi, sing, levels=levels, npts=8)
                wx = w.powered(x[:, None], 1.0)
                mu = np.dot(wt, wx)
                integral = np.dot(wt, w.powered(x[:, None], 1.0 - exponent_q))
                best = max(best, (r**t / mu * integral) ** (1.0 / exponent_q))
        return best
    pts, wt = _domain_rule_2d(w, domain, levels)
    wx = w.powered(pts, 1.0)
    dual = w.powered(pts, 1.0 - exponent_q)
    for c in sampling.centers(domain):
        dist = np.linalg.norm(pts - c, axis=1)
        for r in sampling.radii(d0):
            inside = dist < r
            if not np.any(inside):
                continue
            mu = np.dot(wt[inside], wx[inside])
            integral = np.dot(wt[inside], dual[inside])
            best = max(best, (r**t / mu * integral) ** (1.0 / exponent_q))
    return best


def morrey_check(
    w: Weight,
    exponent_q: float,
    alpha_m: float,
    domain: Domain,
    sampling: BallSampling | None = None,
    s: float | None = None,
) -> MorreyReport:
    """Sampled weighted Morrey norm of 1/w in L^{q, pn - alpha q (p-1)}.

    When ``s`` puts the embedding in the supercritical regime (p_s > n) the
    condition is not required and the report passes vacuously.
    """
    p, n = w.p, w.n
    if exponent_q <= n:
        raise ValueError(f"exponent_q = {exponent_q:g} must exceed n = {n}")
    bound = min(1.0, p * n / (exponent_q * (p - 1)))
    if not 0 < alpha_m < bound:
        raise ValueError(f"alpha_m = {alpha_m:g} must lie in (0, {bound:g})")
    t = p * n - alpha_m * exponent_q * (p - 1)
    d0 = domain.diameter
    if s is not None and embedding_exponents(p, s, n).regime == "supercritical_n":
        return MorreyReport(exponent_q, alpha_m, t, 0.0, d0, passes=True, vacuous=True)
    sampling = sampling or BallSampling()
    coarse = _morrey_sup(w, domain, exponent_q, t, sampling, REFINEMENT_LEVELS[0])
    fine = _morrey_sup(w, domain, exponent_q, t, sampling, REFINEMENT_LEVELS[1])
    passes = bool(np.isfinite(fine) and abs(fine - coarse) <= STABLE_RTOL * abs(fine))
    return MorreyReport(exponent_q, alpha_m, t, float(fine), d0, passes)
