"""Newton-type solvers for J(u) = (1/p) int w|grad u|^p - sum_i m_i G(u_i).

All solvers act on interior nodal values; boundary values stay at zero.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import spsolve

from .mesh import DiscreteSpace

log = logging.getLogger(__name__)

ARMIJO = 1e-4


class SolverError(RuntimeError):
    """A nonlinear solve failed to converge or broke an invariant."""


@dataclass
class NodalLoad:
    """Lumped nonlinear term sum_i m_i G(u_i) with g = G' and slope = g'."""

    primitive: Callable[[np.ndarray], np.ndarray]
    load: Callable[[np.ndarray], np.ndarray]
    slope: Callable[[np.ndarray], np.ndarray]

    @classmethod
    def linear(cls, b: np.ndarray | float) -> NodalLoad:
        """Constant nodal load density b (per unit lumped measure)."""
        return cls(lambda u: b * u, lambda u: b + 0.0 * u, lambda u: 0.0 * u)

    def __add__(self, other: NodalLoad) -> NodalLoad:
        return NodalLoad(
            lambda u: self.primitive(u) + other.primitive(u),
            lambda u: self.load(u) + other.load(u),
            lambda u: self.slope(u) + other.slope(u),
        )


@dataclass
class SolveInfo:
    iterations: int = 0
    residual: float = np.inf
    energies: list = field(default_factory=list)
    converged: bool = False


class Functional:
    """J(u) = D_p(u) - sum m_i G(u_i) on a discrete space."""

    def __init__(self, space: DiscreteSpace, p: float, load: NodalLoad):
        self.space, self.p, self.load = space, p, load
        self.m = space.lumped
        self.idx = space.interior

    def value(self, u):
        with np.errstate(invalid="raise", divide="raise"):
            return self.space.dirichlet(u, self.p) - float(np.dot(self.m[self.idx], self.load.primitive(u[self.idx])))

    def grad(self, u):
        g = self.space.flux(u, self.p)
        out = np.zeros_like(u)
        out[self.idx] = g[self.idx] - self.m[self.idx] * self.load.load(u[self.idx])
        return out

    def hessian(self, u, convexify=False):
        """Interior block of the Hessian, optionally with concave load parts dropped."""
        H = self.space.dirichlet_hessian(u, self.p)[self.idx][:, self.idx]
        diag = -self.m[self.idx] * self.load.slope(u[self.idx])
        if convexify:
            diag = np.maximum(diag, 0.0)
        return (H + sp.diags(diag)).tocsc()

    def residual(self, u, grad=None):
        """Scaled dual norm max_i |dJ/du_i| / (1 + ||phi_i||)."""
        g = self.grad(u) if grad is None else grad
        norms = self.space.hat_norms(self.p)
        return float(np.max(np.abs(g[self.idx]) / (1.0 + norms[self.idx]))) if self.idx.size else 0.0


def _positive_step(u, d, idx, frac=0.5):
    """Largest step in (0, 1] keeping interior values positive (fraction to boundary)."""
    neg = d[idx] < 0
    if not np.any(neg):
        return 1.0
    ratio = -u[idx][neg] / d[idx][neg]
    return float(min(1.0, frac * ratio.min()))


def _residual_step(J, u, d, lo, hi, res, E, keep_positive):
    idx = J.idx
    dd = np.zeros_like(u)
    dd[idx] = d
    step = _positive_step(u, dd, idx) if keep_positive else 1.0
    slack = 64 * np.finfo(float).eps * max(1.0, abs(E))
    for _ in range(30):
        trial = u.copy()
        trial[idx] = np.clip(u[idx] + step * d, lo[idx], hi[idx])
        try:
            Et = J.value(trial)
        except FloatingPointError:
            step *= 0.5
            continue
        g = J.grad(trial)
        g[idx] = np.where(
            (np.isfinite(lo[idx]) & (trial[idx] <= lo[idx]) & (g[idx] > 0))
            | (np.isfinite(hi[idx]) & (trial[idx] >= hi[idx]) & (g[idx] < 0)),
            0.0,
            g[idx],
        )
        if Et <= E + slack and J.residual(trial, g) < 0.9 * res:
            return trial, Et
        step *= 0.5
    return None, E


def minimize(
    J: Functional,
    u0: np.ndarray,
    lower: np.ndarray | None = None,
    upper: np.ndarray | None = None,
    tol: float = 1e-10,
    max_iter: int = 200,
    keep_positive: bool = False,
) -> tuple[np.ndarray, SolveInfo]:
    """Projected Newton descent with Armijo backtracking on the box [lower, upper].

    Nodes at an active bound are moved along the negative gradient; free nodes
    take a Newton step from the interior Hessian (with concave load parts
    dropped whenever the full Hessian fails to give a descent direction).
    Energies along the iteration are non-increasing.
    """
    idx = J.idx
    u = u0.astype(float).copy()
    lo = np.full_like(u, -np.inf) if lower is None else lower
    hi = np.full_like(u, np.inf) if upper is None else upper
    u[idx] = np.clip(u[idx], lo[idx], hi[idx])
    info = SolveInfo()
    E = J.value(u)
    info.energies.append(E)
    for it in range(max_iter):
        g = J.grad(u)
        gi = g[idx]
        at_lo = np.isfinite(lo[idx]) & (u[idx] - lo[idx] <= 1e-14 * (1 + np.abs(lo[idx]))) & (gi > 0)
        at_hi = np.isfinite(hi[idx]) & (hi[idx] - u[idx] <= 1e-14 * (1 + np.abs(hi[idx]))) & (gi < 0)
        active = at_lo | at_hi
        pg = np.where(active, 0.0, gi)
        full = np.zeros_like(u)
        full[idx] = pg
        info.residual = J.residual(u, full)
        info.iterations = it
        if info.residual < tol:
            info.converged = True
            break
        free = ~active
        d = np.zeros(idx.size)
        for convexify in (False, True):
            H = J.hessian(u, convexify=convexify)
            if np.any(active):
                Hf = H[free][:, free]
                dfree = spsolve(Hf.tocsc(), -gi[free]) if free.any() else np.zeros(0)
                d[free] = dfree
                d[active] = -gi[active] / np.maximum(H.diagonal()[active], 1e-300)
            else:
                d = spsolve(H, -gi)
            if np.all(np.isfinite(d)) and np.dot(d, gi) < 0:
                break
        else:
            raise SolverError("no descent direction found")
        step = 1.0
        if keep_positive:
            dd = np.zeros_like(u)
            dd[idx] = d
            step = _positive_step(u, dd, idx)
        accepted = False
        # below this predicted decrease the energy cannot discriminate steps
        resolvable = -np.dot(gi, d) > 256 * np.finfo(float).eps * max(1.0, abs(E))
        for _ in range(60 if resolvable else 0):
            trial = u.copy()
            trial[idx] = np.clip(u[idx] + step * d, lo[idx], hi[idx])
            try:
                Et = J.value(trial)
            except FloatingPointError:
                step *= 0.5
                continue
            if Et <= E + ARMIJO * np.dot(gi, trial[idx] - u[idx]):
                accepted = True
                break
            step *= 0.5
        if not accepted:
            # Energy differences are below rounding; fall back to residual decrease.
            trial, Et = _residual_step(J, u, d, lo, hi, info.residual, E, keep_positive)
            if trial is None:
                if info.residual < 1e3 * tol:
                    info.converged = True
                    break
                raise SolverError(f"energy increase after backtracking exhaustion (residual {info.residual:.3e})")
        u, E = trial, Et
        info.energies.append(E)
    else:
        info.iterations = max_iter
    return u, info


def find_critical(
    J: Functional,
    u0: np.ndarray,
    tol: float = 1e-10,
    max_iter: int = 100,
    keep_positive: bool = False,
) -> tuple[np.ndarray, SolveInfo]:
    """Newton's method on grad J = 0 with backtracking on the residual norm.

    Converges to saddle points as readily as to minima, so it is used to
    polish mountain-pass iterates.
    """
    idx = J.idx
    u = u0.astype(float).copy()
    info = SolveInfo()
    g = J.grad(u)
    res = J.residual(u, g)
    for it in range(max_iter):
        info.iterations, info.residual = it, res
        if res < tol:
            info.converged = True
            break
        H = J.hessian(u)
        d = np.zeros_like(u)
        d[idx] = spsolve(H, -g[idx])
        if not np.all(np.isfinite(d)):
            raise SolverError("singular Jacobian in Newton iteration")
        step = _positive_step(u, d, idx) if keep_positive else 1.0
        for _ in range(40):
            trial = u + step * d
            try:
                gt = J.grad(trial)
            except FloatingPointError:
                step *= 0.5
                continue
            rt = J.residual(trial, gt)
            if np.isfinite(rt) and rt < (1 - 1e-4 * step) * res:
                break
            step *= 0.5
        else:
            if res < 1e3 * tol:
                info.converged = True
                break
            raise SolverError(f"Newton stalled at residual {res:.3e}")
        u, g, res = trial, gt, rt
    else:
        info.iterations, info.residual = max_iter, res
        info.converged = res < tol
    return u, info


def solve_constant_load(space: DiscreteSpace, p: float, c: float = 1.0, tol: float = 1e-11) -> np.ndarray:
    """Discrete solution of -Delta_{p,w} u = c with zero boundary values."""
    J = Functional(space, p, NodalLoad.linear(c))
    u0 = np.zeros(space.mesh.n_nodes)
    if p != 2:
        # warm start from the linear problem, rescaled by p-homogeneity
        J2 = Functional(space, 2.0, NodalLoad.linear(1.0))
        u2, _ = minimize(J2, u0, tol=tol)
        u0 = u2 * abs(c) ** (1 / (p - 1))
    u, info = minimize(J, u0, tol=tol)
    if not info.converged:
        raise SolverError(f"constant-load solve did not converge (residual {info.residual:.3e})")
    return u
