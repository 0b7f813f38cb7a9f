"""Concave-convex problem -Delta_{p,w} u = lambda u^{-q} + u^r: two solutions
through eps-regularisation, a ball minimiser and a mountain-pass point."""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse.linalg as spla

from .eigen import EigenPair, first_eigenpair
from .energy import CaseIISpec, caseII_functional, caseII_rhs
from .mesh import Field, Mesh, space_for, weak_residual
from .solvers import ARMIJO, SolverError, find_critical, solve_constant_load
from .weights import Weight, embedding_exponents, largest_admissible_s

log = logging.getLogger(__name__)

DEFAULT_SCHEDULE = tuple(2.0**-j for j in range(1, 21))
EMBED_SAFETY = 1.2
PATH_NODES = 41
SPHERE_SLACK = 0.05
IDENTITY_RTOL = 0.01
THETA_GROWTH = 0.05
BARRIER_TOL = 1e-8

CERTIFICATES = (
    "lambda_in_range",
    "sphere_geometry",
    "endpoint_below",
    "nu_negative",
    "zeta_above_rho",
    "separation_positive",
    "nonnegative",
    "barrier_domination",
    "residual_nu",
    "residual_zeta",
    "energy_identity_nu",
    "energy_identity_zeta",
    "theta_stable",
    "eps_monotone_nu",
    "eps_monotone_zeta",
    "path_max_monotone",
)
# failing these only warns: they probe the estimated constants, not the solutions
WARN_ONLY = {"lambda_in_range", "sphere_geometry"}


class LevelCollapse(SolverError):
    """The mountain-pass level fell below rho; the mesh or path is too coarse."""


# ---------------------------------------------------------------------------
# geometry


@dataclass
class MPGeometry:
    k: float
    C_embed: float
    l: float
    R: float
    rho: float
    Lambda: float
    T: float
    sup_singular: float = float("nan")
    samples: int = 0

    @property
    def Cl(self) -> float:
        return self.C_embed * self.l


def mp_radius_level(p: float, r: float, Cl: float, k: float) -> tuple[float, float]:
    """R = k((r+1)/(p Cl))^{1/(r+1-p)} and rho with
    2 rho = ((r+1)/(p Cl))^{p/(r+1-p)} (k^p/p - Cl k^{r+1}/p)."""
    if not 0 < k < 1:
        raise ValueError("k must lie in (0,1)")
    if Cl <= 0:
        raise ValueError("embedding constant must be positive")
    base = (r + 1) / (p * Cl)
    R = k * base ** (1 / (r + 1 - p))
    two_rho = base ** (p / (r + 1 - p)) * (k**p / p - Cl * k ** (r + 1) / p)
    if two_rho <= 0:
        k_crit = Cl ** (-1 / (r + 1 - p))
        raise ValueError(f"rho <= 0 for k = {k:g}; need k < {k_crit:.6g}")
    return R, two_rho / 2


def domain_factor(measure: float, p: float, r: float, n: int, s: float) -> float:
    """l = |Omega|^{1 - (r+1)/p_s*}; equals |Omega| when p_s* is infinite."""
    ex = embedding_exponents(p, s, n)
    if math.isfinite(ex.p_s_star) and r + 1 >= ex.p_s_star:
        raise ValueError(f"r must lie in the open interval (p-1, p_s*-1) = ({p - 1:g}, {ex.p_s_star - 1:g})")
    return measure ** (1 - (r + 1) / ex.p_s_star) if math.isfinite(ex.p_s_star) else measure


def _stiffness(space):
    idx = space.interior
    K = space.dirichlet_hessian(np.zeros(space.mesh.n_nodes), 2.0)[idx][:, idx]
    return K.tocsc()


def sample_unit_fields(space, p: float, rng: np.random.Generator, count: int, extra=()) -> list[np.ndarray]:
    """Fields with weighted p-seminorm 1: the ``extra`` fields, then smoothed random loads.

    Random fields are K^{-1}(m xi) with K the weighted stiffness matrix and xi
    Gaussian; every other draw uses |xi| so positive profiles are represented.
    """
    idx = space.interior
    solve = spla.factorized(_stiffness(space))
    out = []
    for v in extra:
        v = np.asarray(v, dtype=float)
        out.append(v / space.seminorm(v, p))
    while len(out) < count:
        xi = rng.standard_normal(idx.size)
        if len(out) % 2:
            xi = np.abs(xi)
        v = np.zeros(space.mesh.n_nodes)
        v[idx] = solve(space.lumped[idx] * xi)
        out.append(v / space.seminorm(v, p))
    return out[:count]


def estimate_embedding_constant(space, p: float, r: float, fields) -> float:
    """Cl ~ safety * max int |v|^{r+1} over unit-seminorm fields."""
    return EMBED_SAFETY * max(space.lumped_integral(np.abs(v) ** (r + 1)) for v in fields)


def mp_geometry(
    spec: CaseIISpec,
    w: Weight,
    mesh: Mesh,
    eig: EigenPair,
    k: float = 0.5,
    C_embed: float | None = None,
    seed: int = 0,
    samples: int = 500,
    s: float | None = None,
) -> MPGeometry:
    """Constants of the mountain-pass geometry on the given discretisation."""
    space = space_for(mesh, w)
    p, q, r = spec.p, spec.q, spec.r
    s = largest_admissible_s(w.with_p(p)) if s is None else s
    l = domain_factor(mesh.domain.measure, p, r, mesh.dim, s)
    torsion = solve_constant_load(space, p)
    fields = sample_unit_fields(space, p, np.random.default_rng(seed), samples, (eig.e1.values, torsion))
    if C_embed is None:
        C_embed = estimate_embedding_constant(space, p, r, fields) / l
    R, rho = mp_radius_level(p, r, C_embed * l, k)
    sup_sing = max(space.lumped_integral(np.abs(R * v) ** (1 - q)) / (1 - q) for v in fields)
    Lam = rho / sup_sing
    I0 = caseII_functional(space, spec.at(lam=0.0))
    e1 = eig.e1.values
    T = max(1.0, 2 * R / space.seminorm(e1, p))
    while not I0.value(T * e1) < -1:
        T *= 2
        if T > 1e12:
            raise SolverError("no endpoint T e1 with negative energy found")
    return MPGeometry(k, C_embed, l, R, rho, Lam, T, sup_sing, samples)


def sphere_scan(spec: CaseIISpec, geo: MPGeometry, w: Weight, mesh: Mesh, seed: int = 0, count: int = 200) -> float:
    """min over ``count`` sampled fields with seminorm R of I_{lambda,eps}."""
    space = space_for(mesh, w)
    J = caseII_functional(space, spec)
    fields = sample_unit_fields(space, spec.p, np.random.default_rng(seed + 1), count)
    return min(J.value(geo.R * v) for v in fields)


# ---------------------------------------------------------------------------
# barrier and the two branches


def barrier(spec: CaseIISpec, w: Weight, mesh: Mesh) -> Field:
    """xi solving -Delta_{p,w} xi = min{1, lambda / 2^q}."""
    if spec.lam <= 0:
        raise ValueError("lambda must be positive")
    C = min(1.0, spec.lam / 2**spec.q)
    xi = solve_constant_load(space_for(mesh, w), spec.p, C)
    if np.any(xi[mesh.interior] <= 0):
        raise SolverError("barrier is not positive")
    return Field(xi, mesh)


@dataclass
class BranchInfo:
    iterations: int = 0
    residual: float = float("inf")
    energies: list = field(default_factory=list)
    on_sphere: bool = False


def ball_minimizer(
    spec: CaseIISpec,
    geo: MPGeometry,
    w: Weight,
    mesh: Mesh,
    eig: EigenPair,
    tol: float = 1e-11,
    start: np.ndarray | None = None,
    max_iter: int = 300,
) -> tuple[Field, BranchInfo]:
    """Minimise I_{lambda,eps} over the ball of seminorm radius R.

    Newton directions (convexified when needed) with Armijo backtracking and
    radial projection onto the ball; a Newton polish on the gradient finishes
    once the residual is small and the iterate is strictly inside.
    """
    if spec.eps <= 0:
        raise ValueError("ball minimiser needs eps > 0")
    space = space_for(mesh, w)
    info = BranchInfo()
    if spec.lam == 0:
        return Field(np.zeros(mesh.n_nodes), mesh), BranchInfo(0, 0.0, [0.0])
    J = caseII_functional(space, spec)
    p, R, idx = spec.p, geo.R, space.interior

    def proj(v):
        nv = space.seminorm(v, p)
        return v * (R / nv) if nv > R else v

    if start is None:
        e1 = eig.e1.values
        u = e1 * (R / space.seminorm(e1, p))
        for _ in range(200):
            if J.value(u) < 0:
                break
            u = u / 2
        else:
            raise SolverError("no negative-energy start along t e1 (gradient sign error)")
    else:
        u = proj(np.asarray(start, dtype=float))
    E = J.value(u)
    info.energies.append(E)
    for it in range(max_iter):
        g = J.grad(u)
        res = J.residual(u, g)
        info.iterations, info.residual = it, res
        if res < tol:
            break
        if res < 1e-6 and space.seminorm(u, p) < (1 - 1e-6) * R:
            polished, pinfo = find_critical(J, u, tol=tol)
            if space.seminorm(polished, p) < R and J.value(polished) <= E + 1e-12 * max(1.0, abs(E)):
                u, E = polished, J.value(polished)
                info.residual = pinfo.residual
                info.energies.append(E)
                break
        for convexify in (False, True):
            d = np.zeros_like(u)
            d[idx] = spla.spsolve(J.hessian(u, convexify), -g[idx])
            if np.all(np.isfinite(d)) and np.dot(d, g) < 0:
                break
        else:
            raise SolverError("ball minimiser found no descent direction")
        step, accepted = 1.0, False
        for _ in range(60):
            trial = proj(u + step * d)
            Et = J.value(trial)
            if Et <= E + ARMIJO * np.dot(g, trial - u):
                accepted = True
                break
            step *= 0.5
        if not accepted:
            break
        u, E = trial, Et
        info.energies.append(E)
    info.on_sphere = space.seminorm(u, p) >= (1 - 1e-9) * R
    if not E < 0:
        raise SolverError(f"ball minimiser failed to reach negative energy (I = {E:.3e})")
    return Field(u, mesh), info


@dataclass
class PathInfo:
    iterations: int
    max_history: list
    t: np.ndarray
    values: np.ndarray
    residual: float


def _resample(path: np.ndarray, nodes: int, space, p: float) -> np.ndarray:
    """Piecewise-linear path resampled at ``nodes`` points equally spaced in seminorm arclength."""
    seg = np.array([space.seminorm(b - a, p) for a, b in zip(path[:-1], path[1:])])
    s = np.concatenate([[0.0], np.cumsum(seg)])
    target = np.linspace(0.0, s[-1], nodes)
    j = np.clip(np.searchsorted(s, target, side="right") - 1, 0, len(seg) - 1)
    frac = np.where(seg[j] > 0, (target - s[j]) / np.where(seg[j] > 0, seg[j], 1.0), 0.0)
    frac = np.clip(frac, 0.0, 1.0)
    return path[j] + frac[:, None] * (path[j + 1] - path[j])


def _arclength(path, space, p):
    seg = np.array([space.seminorm(b - a, p) for a, b in zip(path[:-1], path[1:])])
    s = np.concatenate([[0.0], np.cumsum(seg)])
    return s / s[-1]


def mountain_pass_search(
    spec: CaseIISpec,
    geo: MPGeometry,
    w: Weight,
    mesh: Mesh,
    eig: EigenPair,
    tol: float = 1e-11,
    via: np.ndarray | None = None,
    nodes: int = PATH_NODES,
    switch_tol: float = 1e-3,
    max_iter: int = 2000,
    level_floor: float | None = None,
    through: np.ndarray | None = None,
) -> tuple[Field, PathInfo]:
    """Deform a path from 0 to T e1 until its highest node is nearly critical.

    "Nearly critical" means the gradient's dual norm (in the weighted
    stiffness inner product) is below ``switch_tol``, or the path maximum has
    stopped decreasing.

    Each iteration takes an Armijo step, preconditioned by the weighted
    stiffness matrix, at the highest interior path node only; the path is then
    resampled by arclength unless that would raise its maximum.  The path
    maximum is therefore nonincreasing.  A Newton solve on the gradient
    polishes the final point, whose level must stay at or above
    ``level_floor`` (default rho).  The initial path is the polyline
    0 -> ``through`` -> ``via`` -> T e1, skipping anchors that are None.
    """
    space = space_for(mesh, w)
    J = caseII_functional(space, spec)
    p, idx = spec.p, space.interior
    end = geo.T * eig.e1.values
    anchors = [np.zeros(mesh.n_nodes)] + [np.asarray(a, dtype=float) for a in (through, via) if a is not None] + [end]
    P = _resample(np.array(anchors), nodes, space, p)
    vals = np.array([J.value(z) for z in P])
    if vals[0] > 0 or vals[-1] > 0:
        raise SolverError("mountain-pass endpoints must have non-positive energy")
    K = _stiffness(space)
    solve = spla.factorized(K)
    history = [float(vals.max())]
    res = np.inf
    it = 0
    for it in range(1, max_iter + 1):
        kmax = 1 + int(np.argmax(vals[1:-1]))
        z = P[kmax]
        g = J.grad(z)
        d = np.zeros_like(z)
        d[idx] = -solve(g[idx])
        res = math.sqrt(max(-np.dot(g, d), 0.0))  # dual norm of the gradient
        stalled = len(history) > 20 and history[-21] - history[-1] <= 1e-9 * max(1.0, abs(history[-1]))
        if res < switch_tol or stalled:
            break
        # drop the component along the path so the node descends across the ridge
        tau = P[kmax + 1] - P[kmax - 1]
        Ktau = np.zeros_like(z)
        Ktau[idx] = K @ tau[idx]
        if np.dot(tau, Ktau) > 0:
            d = d - (np.dot(d, Ktau) / np.dot(tau, Ktau)) * tau
        slope = float(np.dot(g, d))
        if slope >= 0:
            break
        # moves longer than the local spacing let the node hop across the ridge
        spacing = min(space.seminorm(P[kmax + 1] - z, p), space.seminorm(z - P[kmax - 1], p))
        step = min(1.0, spacing / max(space.seminorm(d, p), 1e-300))
        for _ in range(60):
            trial = z + step * d
            Et = J.value(trial)
            if Et <= vals[kmax] + ARMIJO * step * slope:
                break
            step *= 0.5
        else:
            break
        P[kmax], vals[kmax] = trial, Et
        Q = _resample(P, nodes, space, p)
        qv = np.array([J.value(x) for x in Q])
        if qv.max() <= vals.max():
            P, vals = Q, qv
        history.append(float(vals.max()))
    floor = geo.rho if level_floor is None else level_floor
    kmax = 1 + int(np.argmax(vals[1:-1]))
    if not vals[kmax] > floor or vals[kmax] < geo.rho and level_floor is None:
        raise LevelCollapse(f"path maximum {vals[kmax]:.4g} fell below {floor:.4g}; refine the mesh or path")
    zeta, pinfo = find_critical(J, P[kmax], tol=tol)
    level = J.value(zeta)
    if not pinfo.converged or not level > floor:
        raise LevelCollapse(f"critical point at level {level:.4g} (floor {floor:.4g}); refine the mesh or path")
    P[kmax] = zeta
    vals[kmax] = level
    return Field(zeta, mesh), PathInfo(it, history, _arclength(P, space, p), vals, pinfo.residual)


# ---------------------------------------------------------------------------
# eps -> 0


@dataclass
class EpsLevel:
    eps: float
    energy_nu: float
    energy_zeta: float
    norm_nu: float
    norm_zeta: float
    diff_nu: float
    diff_zeta: float
    min_nu_minus_xi: float
    min_zeta_minus_xi: float
    min_value: float
    residual_nu: float
    residual_zeta: float
    path_iterations: int
    path_max_monotone: bool
    nu_on_sphere: bool

    def record(self) -> dict:
        return dict(self.__dict__)


@dataclass
class TwoSolutions:
    nu: Field
    zeta: Field
    energies: tuple[float, float]
    Theta: float
    separation: float
    levels: list[EpsLevel]
    converged_nu: bool
    converged_zeta: bool
    path: PathInfo | None = None
    limit: bool = True


def _monotone_tail(diffs: list[float], count: int = 5) -> bool:
    tail = diffs[-count:]
    return len(tail) == count and all(b < a for a, b in zip(tail[:-1], tail[1:]))


def eps_continuation(
    spec: CaseIISpec,
    geo: MPGeometry,
    w: Weight,
    mesh: Mesh,
    eig: EigenPair,
    xi: Field,
    schedule=DEFAULT_SCHEDULE,
    tol: float = 1e-6,
    solve_tol: float = 1e-11,
    strict_rho: bool = True,
) -> TwoSolutions:
    """Track nu_eps and zeta_eps along a decreasing eps schedule, then pass to eps = 0.

    Each level is warm-started from the previous one.  With more than one
    level, a positivity-preserving Newton solve of the eps = 0 problem from
    the last level gives the limits; a single level is returned as is.  With
    ``strict_rho`` false (lambda not below the estimated Lambda) the
    mountain-pass level only has to exceed I(nu_eps) instead of rho.
    """
    schedule = [float(e) for e in schedule]
    if not schedule or any(e <= 0 for e in schedule) or any(b >= a for a, b in zip(schedule[:-1], schedule[1:])):
        raise ValueError("eps schedule must be positive and strictly decreasing")
    space = space_for(mesh, w)
    p = spec.p
    levels: list[EpsLevel] = []
    nu = zeta = None
    path = None
    for eps in schedule:
        s = spec.at(eps=eps)
        J = caseII_functional(space, s)
        nu_f, binfo = ball_minimizer(s, geo, w, mesh, eig, tol=solve_tol, start=nu)
        E_nu = J.value(nu_f.values)
        floor = None if strict_rho else E_nu + 1e-9 * max(1.0, abs(E_nu))
        zeta_f, path = mountain_pass_search(
            s, geo, w, mesh, eig, tol=solve_tol, via=zeta, level_floor=floor, through=nu_f.values
        )
        dn = space.seminorm(nu_f.values - nu, p) if nu is not None else float("nan")
        dz = space.seminorm(zeta_f.values - zeta, p) if zeta is not None else float("nan")
        nu, zeta = nu_f.values, zeta_f.values
        ii = mesh.interior
        levels.append(
            EpsLevel(
                eps=eps,
                energy_nu=J.value(nu),
                energy_zeta=J.value(zeta),
                norm_nu=space.seminorm(nu, p),
                norm_zeta=space.seminorm(zeta, p),
                diff_nu=dn,
                diff_zeta=dz,
                min_nu_minus_xi=float((nu - xi.values)[ii].min()),
                min_zeta_minus_xi=float((zeta - xi.values)[ii].min()),
                min_value=float(min(nu.min(), zeta.min())),
                residual_nu=J.residual(nu),
                residual_zeta=J.residual(zeta),
                path_iterations=path.iterations,
                path_max_monotone=bool(np.all(np.diff(path.max_history) <= 0)),
                nu_on_sphere=binfo.on_sphere,
            )
        )
        log.info("eps=%.3e I(nu)=%.6g I(zeta)=%.6g diffs %.2e %.2e", eps, levels[-1].energy_nu, levels[-1].energy_zeta, dn, dz)
    dnu = [lv.diff_nu for lv in levels[1:]]
    dze = [lv.diff_zeta for lv in levels[1:]]
    conv_nu = bool(dnu) and dnu[-1] < tol
    conv_ze = bool(dze) and dze[-1] < tol
    for name, diffs in (("nu", dnu), ("zeta", dze)):
        if len(diffs) >= 3 and diffs[-1] >= tol and not diffs[-1] < diffs[-3]:
            raise SolverError(f"Cauchy stall on the {name} branch (differences {diffs[-3:]})")
    limit = len(schedule) > 1
    if limit:
        J0 = caseII_functional(space, spec.at(eps=0.0))
        nu, ninfo = find_critical(J0, nu, tol=solve_tol, keep_positive=True)
        zeta, zinfo = find_critical(J0, zeta, tol=solve_tol, keep_positive=True)
        if not (ninfo.converged and zinfo.converged):
            raise SolverError("eps = 0 polish did not converge")
        E = (J0.value(nu), J0.value(zeta))
    else:
        E = (levels[-1].energy_nu, levels[-1].energy_zeta)
    theta = max(max(lv.norm_nu, lv.norm_zeta) for lv in levels)
    return TwoSolutions(
        nu=Field(nu, mesh),
        zeta=Field(zeta, mesh),
        energies=E,
        Theta=theta,
        separation=space.seminorm(zeta - nu, p),
        levels=levels,
        converged_nu=conv_nu,
        converged_zeta=conv_ze,
        path=path,
        limit=limit,
    )


# ---------------------------------------------------------------------------
# pipeline


def energy_identity_error(u: Field, spec: CaseIISpec, w: Weight) -> float:
    """Relative gap in int w|grad u|^p = lambda int u^{1-q} + int u^{r+1}."""
    space = space_for(u.mesh, w)
    v = np.maximum(u.values, 0.0)
    lhs = spec.p * space.dirichlet(u.values, spec.p)
    rhs = spec.lam * space.lumped_integral(v ** (1 - spec.q)) + space.lumped_integral(v ** (spec.r + 1))
    return abs(lhs - rhs) / max(abs(lhs), 1e-300)


@dataclass
class CaseIIReport:
    geometry: MPGeometry
    solutions: TwoSolutions
    barrier: Field
    eigen: EigenPair
    sphere_min: float
    residuals: tuple[float, float]
    identity_errors: tuple[float, float]
    certificates: dict
    stage_seconds: dict = field(default_factory=dict)

    @property
    def hard_failures(self) -> list[str]:
        return [k for k, v in self.certificates.items() if v == "fail"]

    def summary(self) -> dict:
        g, s = self.geometry, self.solutions
        return {
            "lambda1": self.eigen.lambda1,
            "k": g.k,
            "C_embed": g.C_embed,
            "l": g.l,
            "R": g.R,
            "rho": g.rho,
            "Lambda_est": g.Lambda,
            "T": g.T,
            "Theta_est": s.Theta,
            "energy_nu": s.energies[0],
            "energy_zeta": s.energies[1],
            "separation": s.separation,
            "sphere_min": self.sphere_min,
            "residual_nu": self.residuals[0],
            "residual_zeta": self.residuals[1],
            "identity_error_nu": self.identity_errors[0],
            "identity_error_zeta": self.identity_errors[1],
            "converged_nu": s.converged_nu,
            "converged_zeta": s.converged_zeta,
            "certificates": dict(self.certificates),
        }


def _flag(ok: bool, name: str, warn_only=WARN_ONLY) -> str:
    return "pass" if ok else ("warn" if name in warn_only else "fail")


def solve_caseII(
    spec: CaseIISpec,
    w: Weight,
    mesh: Mesh,
    k: float = 0.5,
    schedule=DEFAULT_SCHEDULE,
    seed: int = 0,
    residual_tol: float = 1e-5,
    cauchy_tol: float = 1e-6,
    eig: EigenPair | None = None,
    geo: MPGeometry | None = None,
) -> CaseIIReport:
    """Geometry, barrier and eps-continuation, with every certificate evaluated."""
    if spec.lam <= 0:
        raise ValueError("lambda must be positive")
    secs: dict[str, float] = {}
    t0 = time.perf_counter()
    eig = eig if eig is not None else first_eigenpair(w, spec.p, mesh)
    secs["eigen"] = time.perf_counter() - t0
    t0 = time.perf_counter()
    geo = geo if geo is not None else mp_geometry(spec, w, mesh, eig, k=k, seed=seed)
    in_range = spec.lam < geo.Lambda
    if not in_range:
        # the level-rho guarantee needs lambda < Lambda; only ask for a positive level
        log.warning("lambda = %g is not below the estimated Lambda = %g", spec.lam, geo.Lambda)
    first = spec.at(eps=float(schedule[0]))
    sphere_min = sphere_scan(first, geo, w, mesh, seed=seed)
    secs["geometry"] = time.perf_counter() - t0
    t0 = time.perf_counter()
    xi = barrier(spec, w, mesh)
    secs["barrier"] = time.perf_counter() - t0
    t0 = time.perf_counter()
    sol = eps_continuation(spec, geo, w, mesh, eig, xi, schedule, tol=cauchy_tol, strict_rho=in_range)
    secs["continuation"] = time.perf_counter() - t0
    final = spec if sol.limit else spec.at(eps=float(schedule[-1]))
    rhs = caseII_rhs(final)
    res = (weak_residual(sol.nu, rhs, w, spec.p), weak_residual(sol.zeta, rhs, w, spec.p))
    ident = (energy_identity_error(sol.nu, final, w), energy_identity_error(sol.zeta, final, w))
    ii = mesh.interior
    lv = sol.levels
    norms = [max(x.norm_nu, x.norm_zeta) for x in lv]
    early = max(norms[:-2]) if len(norms) > 2 else float("nan")
    end_I = caseII_functional(space_for(mesh, w), first).value(geo.T * eig.e1.values)
    checks = {
        "lambda_in_range": spec.lam < geo.Lambda,
        "sphere_geometry": sphere_min >= (1 - SPHERE_SLACK) * geo.rho,
        "endpoint_below": end_I < -1,
        "nu_negative": sol.energies[0] < 0 and all(x.energy_nu < 0 for x in lv),
        "zeta_above_rho": sol.energies[1] >= geo.rho and all(x.energy_zeta >= geo.rho for x in lv),
        "separation_positive": sol.separation > 0,
        "nonnegative": all(x.min_value >= 0 for x in lv) and sol.nu.values.min() >= 0 and sol.zeta.values.min() >= 0,
        "barrier_domination": all(min(x.min_nu_minus_xi, x.min_zeta_minus_xi) >= -BARRIER_TOL for x in lv)
        and float(min((sol.nu.values - xi.values)[ii].min(), (sol.zeta.values - xi.values)[ii].min())) >= -BARRIER_TOL,
        "residual_nu": res[0] <= residual_tol,
        "residual_zeta": res[1] <= residual_tol,
        "energy_identity_nu": ident[0] <= IDENTITY_RTOL,
        "energy_identity_zeta": ident[1] <= IDENTITY_RTOL,
        "theta_stable": bool(np.isfinite(early)) and max(norms) <= (1 + THETA_GROWTH) * early,
        "eps_monotone_nu": _monotone_tail([x.diff_nu for x in lv[1:]]),
        "eps_monotone_zeta": _monotone_tail([x.diff_zeta for x in lv[1:]]),
        "path_max_monotone": all(x.path_max_monotone for x in lv),
    }
    warn_only = WARN_ONLY if in_range else WARN_ONLY | {"zeta_above_rho"}
    certs = {name: _flag(bool(checks[name]), name, warn_only) for name in CERTIFICATES}
    return CaseIIReport(geo, sol, xi, eig, float(sphere_min), res, ident, certs, secs)
