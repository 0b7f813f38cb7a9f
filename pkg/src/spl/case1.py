"""Singular problem -Delta_{p,w} u = lambda f(u) u^{-q}: sub/super-solutions
and minimisation of E_lambda over the order interval between them."""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np

from .eigen import EigenPair, first_eigenpair
from .energy import CaseISpec, caseI_load, caseI_rhs, energy_caseI, singular_load, validate_f1
from .mesh import Field, Mesh, compact_nodes, space_for, weak_defects, weak_residual
from .solvers import Functional, SolverError, minimize
from .weights import Weight

log = logging.getLogger(__name__)

A_FLOOR = 1e-12
A_CAP = 1e12
DEFECT_TOL = 1e-8


class StageError(RuntimeError):
    """A pipeline stage failed; ``stage`` names it."""

    def __init__(self, stage: str, message: str):
        super().__init__(f"{stage}: {message}")
        self.stage = stage


@dataclass
class OrderInterval:
    lower: Field
    upper: Field
    c_K: float = float("nan")

    def __post_init__(self):
        lo, hi = self.lower.values, self.upper.values
        if lo.shape != hi.shape:
            raise ValueError("bounds live on different meshes")
        if np.any(lo < 0) or np.any(lo > hi):
            bad = int(np.argmax((lo > hi) | (lo < 0)))
            raise ValueError(f"order interval violated at node {bad}: lower {lo[bad]:g}, upper {hi[bad]:g}")
        if np.isnan(self.c_K):
            self.c_K = float(lo[compact_nodes(self.lower.mesh)].min())

    def contains(self, u: Field, tol: float = 0.0) -> bool:
        return bool(np.all(u.values >= self.lower.values - tol) and np.all(u.values <= self.upper.values + tol))


@dataclass
class CaseIReport:
    a_lambda: float
    A_lambda: float
    v0: Field
    solution: Field
    energy: float
    residual: float
    interval: OrderInterval
    eigen: EigenPair
    sub_defect_max: float
    super_defect_min: float
    iterations: dict = field(default_factory=dict)
    energies: list = field(default_factory=list)
    seconds: float = 0.0

    @property
    def c_K(self) -> float:
        return self.interval.c_K

    def certificates(self, residual_tol: float = 1e-6) -> dict:
        """Fixed-schema pass/fail flags for every Case I certificate."""
        lo, hi, u = self.interval.lower.values, self.interval.upper.values, self.solution.values
        K = compact_nodes(self.solution.mesh)
        E = np.asarray(self.energies)
        checks = {
            "order_interval": bool(np.all(lo <= u) and np.all(u <= hi)),
            "subsolution_defect": self.sub_defect_max <= DEFECT_TOL,
            "supersolution_defect": self.super_defect_min >= -DEFECT_TOL,
            "residual": self.residual <= residual_tol,
            "compact_positivity": self.c_K > 0 and float(u[K].min()) >= self.c_K,
            "energy_monotone": bool(np.all(np.diff(E) <= 1e-12 * max(1.0, abs(E[0])))) if E.size else True,
        }
        return {k: "pass" if v else "fail" for k, v in checks.items()}

    def summary(self) -> dict:
        lo, hi, u = self.interval.lower.values, self.interval.upper.values, self.solution.values
        idx = self.solution.mesh.interior
        return {
            "a_lambda": self.a_lambda,
            "A_lambda": self.A_lambda,
            "c_K": self.c_K,
            "lambda1": self.eigen.lambda1,
            "energy": self.energy,
            "residual": self.residual,
            "sub_defect_max": self.sub_defect_max,
            "super_defect_min": self.super_defect_min,
            "solution_min_on_compact": float(u[compact_nodes(self.solution.mesh)].min()),
            "strictly_inside_fraction": float(np.mean((u[idx] > lo[idx]) & (u[idx] < hi[idx]))),
            "iterations": dict(self.iterations),
            "seconds": self.seconds,
        }


# ---------------------------------------------------------------------------
# v0: -Delta_{p,w} v0 = v0^{-q}


def solve_pure_singular(
    q: float,
    w: Weight,
    p: float,
    mesh: Mesh,
    tol: float = 1e-10,
    max_levels: int = 60,
    history: list | None = None,
) -> Field:
    """Solve -Delta_{p,w} v = v^{-q} through eps_j = 2^-j regularisation.

    Each level minimises the convex energy of -Delta_{p,w} v = (v^+ + eps_j)^{-q}
    from the previous level's solution.  The continuation stops once successive
    solutions differ by less than ``tol`` in the weighted p-seminorm; a final
    positivity-preserving Newton solve at eps = 0 gives v0.  If ``history`` is a
    list, (eps, nodal values) pairs are appended to it.
    """
    if not 0 < q < 1:
        raise ValueError("q must lie in (0,1)")
    space = space_for(mesh, w)
    idx = space.interior
    v = np.zeros(mesh.n_nodes)
    diffs: list[float] = []
    for j in range(1, max_levels + 1):
        eps = 2.0**-j
        J = Functional(space, p, singular_load(1.0, q, eps))
        new, info = minimize(J, v, tol=1e-12)
        if not info.converged:
            raise SolverError(f"regularised solve at eps={eps:g} did not converge")
        if history is not None:
            history.append((eps, new.copy()))
        diff = space.seminorm(new - v, p)
        v = new
        diffs.append(diff)
        log.debug("v0 continuation eps=%.3e diff=%.3e", eps, diff)
        if j > 1 and diff < tol:
            break
        if len(diffs) >= 5 and not min(diffs[-3:]) < diffs[-4]:
            raise SolverError(f"continuation stalled at eps={eps:g} (differences {diffs[-4:]})")
    else:
        raise SolverError(f"continuation did not reach tol={tol:g} in {max_levels} levels")
    if np.any(v[idx] <= 0):
        raise SolverError("regularised solution is not positive")
    J0 = Functional(space, p, singular_load(1.0, q, 0.0))
    v, info = minimize(J0, v, tol=1e-12, keep_positive=True)
    if not info.converged:
        raise SolverError(f"eps = 0 polish did not converge (residual {info.residual:.3e})")
    if not np.all(v[idx] > 0):
        raise SolverError("v0 lost positivity")
    return Field(v, mesh)


# ---------------------------------------------------------------------------
# sub- and super-solutions


def _sub_nodal_ok(spec: CaseISpec, eig: EigenPair, a: float) -> tuple[bool, int]:
    idx = eig.e1.mesh.interior
    t = a * eig.e1.values[idx]
    slack = spec.lam * spec.f(t) * t ** (-spec.q) - eig.lambda1 * t ** (spec.p - 1)
    return bool(np.all(slack >= 0)), int(idx[np.argmin(slack)])


def construct_subsolution(spec: CaseISpec, eig: EigenPair, w: Weight, a_max: float = 1.0):
    """Largest dyadic a in [A_FLOOR, a_max] making a e1 a sub-solution.

    Both the node-wise inequality lambda1 (a e1)^{p-1} <= lambda f(a e1)(a e1)^{-q}
    and the discrete defect a(a e1, phi_i) - int g(a e1) phi_i <= DEFECT_TOL are
    required.  Returns (a, a e1).
    """
    mesh = eig.e1.mesh
    a = a_max
    worst = -1
    while a >= A_FLOOR:
        ok, worst = _sub_nodal_ok(spec, eig, a)
        if ok:
            u = eig.e1 * a
            d = weak_defects(u, caseI_rhs(spec), w, spec.p)
            if d.max() <= DEFECT_TOL:
                return a, u
            worst = int(mesh.interior[np.argmax(d)])
        a *= 0.5
    raise StageError("subsolution", f"no admissible a above {A_FLOOR:g} (worst node {worst})")


def construct_supersolution(spec: CaseISpec, v0: Field, w: Weight, start: float = 1.0):
    """Smallest dyadic A >= ``start`` with lambda f(A |v0|_inf) <= A^{q+p-1}; upper = A v0.

    The scalar test is the printed condition rearranged; the node-wise
    super-solution defect is checked afterwards.
    """
    vmax = float(np.max(v0.values))
    expo = spec.q + spec.p - 1
    A = start
    while not spec.lam * float(spec.f(A * vmax)) <= A**expo:
        A *= 2.0
        if A > A_CAP:
            raise StageError("supersolution", f"A exceeded {A_CAP:g}; f violates the decay condition numerically")
    while A / 2 >= 2.0**-40 and spec.lam * float(spec.f(A / 2 * vmax)) <= (A / 2) ** expo:
        A /= 2.0
    u = v0 * A
    d = weak_defects(u, caseI_rhs(spec), w, spec.p)
    if d.min() < -DEFECT_TOL:
        raise StageError("supersolution", f"node-wise super-solution defect {d.min():.3e} < 0")
    return A, u


def order_pair(spec: CaseISpec, eig: EigenPair, v0: Field, w: Weight):
    """Sub/super pair with the ordering a e1 <= A v0 enforced by shrinking a."""
    a, lower = construct_subsolution(spec, eig, w)
    A, upper = construct_supersolution(spec, v0, w)
    while np.any(lower.values > upper.values):
        a *= 0.5
        if a < A_FLOOR:
            raise StageError("ordering", "could not order the sub- and super-solution")
        lower = eig.e1 * a
    return a, A, OrderInterval(lower, upper)


# ---------------------------------------------------------------------------
# minimisation over M


def minimize_over_interval(M: OrderInterval, spec: CaseISpec, w: Weight, tol: float = 1e-10, start: Field | None = None):
    """Minimise E_lambda over M by projected Newton descent from ``start`` (default: upper).

    Returns (u, info); info.energies is the monotone energy log.
    """
    space = space_for(M.lower.mesh, w)
    J = Functional(space, spec.p, caseI_load(spec))
    lo, hi = M.lower.values, M.upper.values
    u0 = (start if start is not None else M.upper).values
    u, info = minimize(J, u0, lo, hi, tol=tol, max_iter=500)
    if not info.converged:
        raise SolverError(f"interval minimisation hit the iteration cap (residual {info.residual:.3e})")
    if np.any(np.diff(info.energies) > 1e-12 * max(1.0, abs(info.energies[0]))):
        raise SolverError("energy increased during interval minimisation")
    return Field(u, M.lower.mesh), info


def solve_caseI(
    spec: CaseISpec,
    w: Weight,
    mesh: Mesh,
    tol: float = 1e-10,
    eig: EigenPair | None = None,
    v0: Field | None = None,
) -> CaseIReport:
    """Eigenpair, v0, sub/super pair, then the minimiser of E_lambda over M."""
    t0 = time.perf_counter()
    check = validate_f1(spec.f, spec.q, spec.p)
    if not check:
        raise StageError("validation", "; ".join(check.diagnostics))
    iters: dict[str, int] = {}
    try:
        if eig is None:
            eig = first_eigenpair(w, spec.p, mesh)
        iters["eigen"] = eig.iterations
    except SolverError as exc:
        raise StageError("eigen", str(exc)) from exc
    try:
        if v0 is None:
            v0 = solve_pure_singular(spec.q, w, spec.p, mesh)
    except SolverError as exc:
        raise StageError("v0", str(exc)) from exc
    a, A, M = order_pair(spec, eig, v0, w)
    rhs = caseI_rhs(spec)
    sub_d = weak_defects(M.lower, rhs, w, spec.p).max()
    sup_d = weak_defects(M.upper, rhs, w, spec.p).min()
    try:
        u, info = minimize_over_interval(M, spec, w, tol)
    except SolverError as exc:
        raise StageError("minimisation", str(exc)) from exc
    iters["minimisation"] = info.iterations
    res = weak_residual(u, rhs, w, spec.p)
    return CaseIReport(
        a_lambda=a,
        A_lambda=A,
        v0=v0,
        solution=u,
        energy=energy_caseI(u, spec, w),
        residual=res,
        interval=M,
        eigen=eig,
        sub_defect_max=float(sub_d),
        super_defect_min=float(sup_d),
        iterations=iters,
        energies=list(info.energies),
        seconds=time.perf_counter() - t0,
    )
