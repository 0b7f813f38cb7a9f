"""First eigenpair of the weighted p-Laplacian by inverse power iteration."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .mesh import Field, Mesh, field_to_csv, space_for
from .solvers import Functional, NodalLoad, SolverError, minimize, solve_constant_load
from .weights import Weight

log = logging.getLogger(__name__)


@dataclass
class EigenPair:
    lambda1: float
    e1: Field
    iterations: int
    residual: float
    weighted_mass: bool = False

    def to_csv(self, path) -> Path:
        return field_to_csv(path, self.e1.mesh, e1=self.e1.values)

    def record(self) -> dict:
        return {"lambda1": self.lambda1, "iterations": self.iterations, "residual": self.residual}

    def to_json(self, path) -> Path:
        path = Path(path)
        path.write_text(json.dumps(self.record(), indent=2))
        return path


def rayleigh_quotient(space, u: np.ndarray, p: float, weighted_mass: bool = False) -> float:
    """int w |grad u|^p / int |u|^p (denominator weighted by w if requested)."""
    den = space.lp_mass(u, p, weighted_mass)
    if den <= 0:
        raise ValueError("Rayleigh quotient of the zero field")
    return p * space.dirichlet(u, p) / den


def eigen_residual(space, u: np.ndarray, lam: float, p: float, weighted_mass: bool = False) -> float:
    """Scaled weak residual of -Delta_{p,w} u = lam |u|^{p-2} u for sup-normalised u."""
    u = u / np.max(np.abs(u))
    r = space.flux(u, p) - lam * space.lp_mass_grad(u, p, weighted_mass)
    idx = space.interior
    return float(np.max(np.abs(r[idx]) / (1.0 + space.hat_norms(p)[idx])))


def first_eigenpair(
    w: Weight,
    p: float,
    mesh: Mesh,
    tol: float = 1e-8,
    max_iter: int = 500,
    residual_tol: float = 1e-6,
    weighted_mass: bool = False,
) -> EigenPair:
    """Minimise the Rayleigh quotient over discrete fields.

    Each step solves -Delta_{p,w} v = |u|^{p-2} u (a convex minimisation),
    then replaces v by |v| normalised in L^p.  The quotient decreases
    monotonically along this iteration.  The returned e1 has sup norm 1.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    space = space_for(mesh, w)
    idx = space.interior
    if idx.size == 0:
        raise ValueError("mesh has no interior nodes")
    m = space.lumped
    u = np.abs(solve_constant_load(space, p))
    u /= space.lp_mass(u, p, weighted_mass) ** (1 / p)
    lam = rayleigh_quotient(space, u, p, weighted_mass)
    res = np.inf
    for it in range(1, max_iter + 1):
        b = space.lp_mass_grad(u, p, weighted_mass)
        density = np.zeros_like(u)
        density[idx] = b[idx] / m[idx]
        J = Functional(space, p, NodalLoad.linear(density[idx]))
        # warm start: v is close to u / lam^{1/(p-1)} near convergence
        v, info = minimize(J, u * lam ** (-1 / (p - 1)), tol=1e-13, max_iter=100)
        v = np.abs(v)
        if not np.any(v[idx] > 0):
            raise SolverError("inverse iteration produced a sign-indefinite field")
        v /= space.lp_mass(v, p, weighted_mass) ** (1 / p)
        new = rayleigh_quotient(space, v, p, weighted_mass)
        change = abs(lam - new) / new
        u, lam = v, new
        res = eigen_residual(space, u, lam, p, weighted_mass)
        log.debug("eigen iter %d: lambda=%.12g change=%.2e residual=%.2e", it, lam, change, res)
        if change < tol and res < residual_tol:
            break
    else:
        raise SolverError(f"eigen iteration did not converge in {max_iter} steps (residual {res:.3e})")
    if np.any(u[idx] <= 0):
        raise SolverError("first eigenfunction is not positive at every interior node")
    e1 = u / u.max()
    return EigenPair(lam, Field(e1, mesh), it, res, weighted_mass)
