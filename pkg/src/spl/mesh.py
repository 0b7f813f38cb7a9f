"""P1 simplicial discretisation of W_0^{1,p}(Omega, w).

Gradients of P1 fields are element-wise constant, so the weighted
p-Dirichlet integral on an element K reduces to |grad u_K|^p * int_K w.
Only those element weight integrals need quadrature; they are computed once
per (mesh, weight) pair and cached on a :class:`DiscreteSpace`.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp
from scipy.spatial import ConvexHull, Delaunay

from .domain import Domain
from .quadrature import TRI4_BARY, TRI4_W, gauss01, graded_rule, graded_triangle_rule
from .weights import Weight

GRAD_FLOOR = 1e-12  # delta_g: regularised kernel below this |grad u| for 1 < p < 2
HESS_REL_REG = 1e-4  # Hessian-only floor for p > 2, relative to max |grad u|


@dataclass(eq=False)
class Mesh:
    nodes: np.ndarray  # (N, d)
    elements: np.ndarray  # (E, d + 1)
    boundary_mask: np.ndarray  # (N,) bool
    diam: float
    domain: Domain | None = None
    _spaces: dict = field(default_factory=dict, repr=False)

    @property
    def dim(self) -> int:
        return self.nodes.shape[1]

    @property
    def n_nodes(self) -> int:
        return self.nodes.shape[0]

    @property
    def interior(self) -> np.ndarray:
        return np.flatnonzero(~self.boundary_mask)


@dataclass(eq=False)
class Field:
    """Nodal values of a P1 function on ``mesh``."""

    values: np.ndarray
    mesh: Mesh
    zero_boundary: bool = True

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.mesh.n_nodes,):
            raise ValueError(f"field has shape {self.values.shape}, mesh has {self.mesh.n_nodes} nodes")
        if self.zero_boundary and np.any(self.values[self.mesh.boundary_mask] != 0.0):
            raise ValueError("field flagged zero_boundary has non-zero boundary values")

    def __mul__(self, c: float) -> Field:
        return Field(c * self.values, self.mesh, self.zero_boundary)

    __rmul__ = __mul__


def _diameter(nodes: np.ndarray) -> float:
    if nodes.shape[1] == 1:
        return float(nodes.max() - nodes.min())
    hull = nodes[ConvexHull(nodes).vertices]
    diff = hull[:, None, :] - hull[None, :, :]
    return float(np.sqrt((diff**2).sum(-1)).max())


def build_mesh(domain: Domain, resolution: int) -> Mesh:
    """Uniform partition (1D) or structured triangulation (2D) of ``domain``."""
    if resolution < 2:
        raise ValueError("resolution must be at least 2")
    if domain.kind == "interval":
        a, b = domain.lower[0], domain.upper[0]
        x = np.linspace(a, b, resolution + 1)
        elements = np.stack([np.arange(resolution), np.arange(1, resolution + 1)], axis=1)
        boundary = np.zeros(resolution + 1, dtype=bool)
        boundary[[0, -1]] = True
        return Mesh(x[:, None], elements, boundary, b - a, domain)
    if domain.kind == "rectangle":
        (x0, y0), (x1, y1) = domain.lower, domain.upper
        m = resolution
        xs, ys = np.linspace(x0, x1, m + 1), np.linspace(y0, y1, m + 1)
        X, Y = np.meshgrid(xs, ys, indexing="ij")
        nodes = np.stack([X.ravel(), Y.ravel()], axis=1)
        idx = np.arange((m + 1) ** 2).reshape(m + 1, m + 1)
        a, b = idx[:-1, :-1].ravel(), idx[1:, :-1].ravel()
        c, d = idx[1:, 1:].ravel(), idx[:-1, 1:].ravel()
        elements = np.concatenate([np.stack([a, b, c], 1), np.stack([a, c, d], 1)])
        boundary = np.zeros_like(idx, dtype=bool)
        boundary[[0, -1], :] = True
        boundary[:, [0, -1]] = True
        return Mesh(nodes, elements, boundary.ravel(), _diameter(nodes), domain)
    if domain.kind == "disk":
        cx, cy = domain.center
        pts = [np.zeros((1, 2))]
        for k in range(1, resolution + 1):
            th = 2 * math.pi * np.arange(6 * k) / (6 * k)
            rad = domain.radius * k / resolution
            pts.append(np.stack([rad * np.cos(th), rad * np.sin(th)], axis=1))
        nodes = np.vstack(pts) + np.array([cx, cy])
        elements = Delaunay(nodes).simplices
        boundary = np.zeros(len(nodes), dtype=bool)
        boundary[-6 * resolution :] = True
        mesh = Mesh(nodes, elements, boundary, _diameter(nodes), domain)
        _check_nondegenerate(mesh)
        return mesh
    raise ValueError(f"unsupported domain kind for meshing: {domain.kind!r}")


def _geometry(mesh: Mesh):
    X = mesh.nodes[mesh.elements]  # (E, d+1, d)
    J = np.transpose(X[:, 1:, :] - X[:, :1, :], (0, 2, 1))  # columns are edges
    det = np.linalg.det(J)
    vol = np.abs(det) / math.factorial(mesh.dim)
    Jinv = np.linalg.inv(J)  # rows: gradients of barycentric coords 1..d
    grads = np.concatenate([-Jinv.sum(axis=1, keepdims=True), Jinv], axis=1)
    return vol, grads


def _check_nondegenerate(mesh: Mesh):
    X = mesh.nodes[mesh.elements]
    J = X[:, 1:, :] - X[:, :1, :]
    if np.any(np.abs(np.linalg.det(J)) <= 1e-14):
        raise ValueError("mesh has degenerate elements")


def element_rule(mesh: Mesh, singular=None, levels: int = 40):
    """Quadrature points/weights over the whole mesh, graded near ``singular``."""
    pts, wts = [], []
    for K in mesh.elements:
        X = mesh.nodes[K]
        if mesh.dim == 1:
            a, b = float(X[0, 0]), float(X[1, 0])
            sing = () if singular is None else (float(singular[0]),)
            x, w = graded_rule(a, b, sing, levels=levels, npts=3)
            pts.append(x[:, None])
            wts.append(w)
        else:
            if singular is not None and _near(X, singular):
                x, w = graded_triangle_rule(X, np.asarray(singular, float), levels=min(levels, 14))
            else:
                area = 0.5 * abs(np.linalg.det(X[1:] - X[0]))
                x, w = TRI4_BARY @ X, TRI4_W * area
            pts.append(x)
            wts.append(w)
    return np.vstack(pts), np.concatenate(wts)


def _near(X: np.ndarray, point) -> bool:
    t = np.vstack([X.T, np.ones(len(X))])
    lam = np.linalg.solve(t, np.append(point, 1.0))
    return bool(np.all(lam >= -1e-12))


def _element_weight_integrals(mesh: Mesh, weight: Weight, vol: np.ndarray) -> np.ndarray:
    """int_K w for every element K."""
    if weight.kind == "constant":
        return weight.value * vol
    sing = weight.singular_point
    out = np.empty(len(mesh.elements))
    if mesh.dim == 1:
        gx, gw = gauss01(3)
        X = mesh.nodes[mesh.elements][:, :, 0]
        a, b = X.min(axis=1), X.max(axis=1)
        h = b - a
        xq = a[:, None] + h[:, None] * gx[None, :]
        touch = np.zeros(len(a), dtype=bool) if sing is None else (a <= sing[0]) & (sing[0] <= b)
        regular = ~touch
        out[regular] = (h[regular, None] * gw * weight(xq[regular].reshape(-1, 1)).reshape(-1, 3)).sum(1)
        for k in np.flatnonzero(touch):
            x, w = graded_rule(a[k], b[k], (float(sing[0]),), levels=60, npts=3)
            out[k] = np.dot(w, weight(x[:, None]))
        return out
    X = mesh.nodes[mesh.elements]
    for k, Xk in enumerate(X):
        if sing is not None and _near(Xk, sing):
            x, w = graded_triangle_rule(Xk, sing, levels=14)
        else:
            x, w = TRI4_BARY @ Xk, TRI4_W * vol[k]
        out[k] = np.dot(w, weight(x))
    return out


class DiscreteSpace:
    """Precomputed element data for one (mesh, weight) pair."""

    def __init__(self, mesh: Mesh, weight: Weight):
        if weight.n != mesh.dim:
            raise ValueError(f"weight is {weight.n}D but mesh is {mesh.dim}D")
        self.mesh = mesh
        self.weight = weight
        self.vol, self.grads = _geometry(mesh)
        if np.any(self.vol <= 0):
            raise ValueError("mesh has degenerate elements")
        self.elem_w = _element_weight_integrals(mesh, weight, self.vol)
        d1 = mesh.dim + 1
        self.lumped = np.bincount(
            mesh.elements.ravel(), weights=np.repeat(self.vol / d1, d1), minlength=mesh.n_nodes
        )
        self.interior = mesh.interior
        self._hat_norms: dict[float, np.ndarray] = {}
        self._mass_ops: dict[bool, tuple] = {}
        rows = np.repeat(mesh.elements, d1, axis=1).ravel()
        cols = np.tile(mesh.elements, (1, d1)).ravel()
        self._coo = (rows, cols)

    # -- p-Dirichlet term -------------------------------------------------
    def elem_grad(self, u: np.ndarray) -> np.ndarray:
        return np.einsum("ekd,ek->ed", self.grads, u[self.mesh.elements])

    def dirichlet(self, u: np.ndarray, p: float) -> float:
        g = np.linalg.norm(self.elem_grad(u), axis=1)
        return float(np.dot(self.elem_w, g**p) / p)

    def seminorm(self, u: np.ndarray, p: float) -> float:
        g = np.linalg.norm(self.elem_grad(u), axis=1)
        return float(np.dot(self.elem_w, g**p) ** (1.0 / p))

    def _kernel(self, gnorm: np.ndarray, p: float) -> np.ndarray:
        if p >= 2:
            return gnorm ** (p - 2)
        k = np.empty_like(gnorm)
        big = gnorm >= GRAD_FLOOR
        k[big] = gnorm[big] ** (p - 2)
        k[~big] = (gnorm[~big] ** 2 + GRAD_FLOOR**2) ** ((p - 2) / 2)
        return k

    def flux(self, u: np.ndarray, p: float) -> np.ndarray:
        """a(u, phi_i) = int w |grad u|^{p-2} grad u . grad phi_i for every node i."""
        g = self.elem_grad(u)
        coef = (self.elem_w * self._kernel(np.linalg.norm(g, axis=1), p))[:, None] * g
        local = np.einsum("ed,ekd->ek", coef, self.grads)
        return np.bincount(self.mesh.elements.ravel(), weights=local.ravel(), minlength=self.mesh.n_nodes)

    def dirichlet_grad(self, u: np.ndarray, p: float) -> np.ndarray:
        out = self.flux(u, p)
        out[self.mesh.boundary_mask] = 0.0
        return out

    def dirichlet_hessian(self, u: np.ndarray, p: float) -> sp.csr_matrix:
        """Search-direction matrix for the p-Dirichlet energy (full node set).

        p >= 2: the exact Hessian, with the kernel floored relative to
        max |grad u| so it stays invertible where grad u vanishes.
        1 < p < 2: the Kacanov majoriser w |grad u|^{p-2} I, which is positive
        definite and avoids Newton's cycling at sign changes of grad u.
        Used only for search directions, never for residuals.
        """
        g = self.elem_grad(u)
        s = (g**2).sum(1)
        eye = np.eye(self.mesh.dim)
        if p == 2:
            H = np.broadcast_to(eye, (len(g), self.mesh.dim, self.mesh.dim))
        elif p < 2:
            H = ((s + GRAD_FLOOR**2) ** ((p - 2) / 2))[:, None, None] * eye
        else:
            gmax = math.sqrt(s.max()) if s.size else 0.0
            if gmax == 0.0:
                s, g = np.ones_like(s), np.zeros_like(g)
            else:
                s = s + (HESS_REL_REG * gmax) ** 2
            H = s[:, None, None] ** ((p - 2) / 2) * (
                eye + (p - 2) * np.einsum("ei,ej->eij", g, g) / s[:, None, None]
            )
        local = np.einsum("eid,edf,ejf->eij", self.grads, H, self.grads) * self.elem_w[:, None, None]
        n = self.mesh.n_nodes
        return sp.csr_matrix((local.ravel(), self._coo), shape=(n, n))

    def hat_norms(self, p: float) -> np.ndarray:
        """Weighted p-seminorm of every nodal basis function."""
        if p not in self._hat_norms:
            gn = np.linalg.norm(self.grads, axis=2) ** p * self.elem_w[:, None]
            tot = np.bincount(self.mesh.elements.ravel(), weights=gn.ravel(), minlength=self.mesh.n_nodes)
            self._hat_norms[p] = tot ** (1.0 / p)
        return self._hat_norms[p]

    # -- L^p mass via element quadrature (eigenvalue denominator) -----------
    def _mass_op(self, weighted: bool):
        if weighted not in self._mass_ops:
            mesh = self.mesh
            if mesh.dim == 1:
                gx, gw = gauss01(3)
                bary = np.stack([1 - gx, gx], axis=1)
            else:
                bary, gw = TRI4_BARY, TRI4_W
            nq = len(gw)
            E = len(mesh.elements)
            rows = np.repeat(np.arange(E * nq), mesh.dim + 1)
            cols = np.repeat(mesh.elements, nq, axis=0).ravel()
            vals = np.tile(bary.ravel(), E)
            B = sp.csr_matrix((vals, (rows, cols)), shape=(E * nq, mesh.n_nodes))
            qw = (self.vol[:, None] * gw[None, :]).ravel()
            if weighted:
                xq = np.einsum("qk,ekd->eqd", bary, mesh.nodes[mesh.elements]).reshape(-1, mesh.dim)
                qw = qw * self.weight(xq)
            self._mass_ops[weighted] = (B, qw)
        return self._mass_ops[weighted]

    def lp_mass(self, u: np.ndarray, p: float, weighted: bool = False) -> float:
        """int |u|^p (times w if ``weighted``) by element Gauss quadrature."""
        B, qw = self._mass_op(weighted)
        return float(np.dot(qw, np.abs(B @ u) ** p))

    def lp_mass_grad(self, u: np.ndarray, p: float, weighted: bool = False) -> np.ndarray:
        """(1/p) d/du of :meth:`lp_mass`, i.e. int |u|^{p-2} u phi_i."""
        B, qw = self._mass_op(weighted)
        uq = B @ u
        return B.T @ (qw * np.abs(uq) ** (p - 2) * uq)

    def lumped_integral(self, values: np.ndarray) -> float:
        return float(np.dot(self.lumped, values))


def space_for(mesh: Mesh, weight: Weight) -> DiscreteSpace:
    key = weight.key
    if key not in mesh._spaces:
        mesh._spaces[key] = DiscreteSpace(mesh, weight)
    return mesh._spaces[key]


# ---------------------------------------------------------------------------
# Field-level operations


def weighted_seminorm(u: Field, w: Weight, p: float) -> float:
    """(int_Omega w |grad u|^p)^{1/p}."""
    return space_for(u.mesh, w).seminorm(u.values, p)


def p_dirichlet_energy_and_gradient(u: Field, w: Weight, p: float):
    if p <= 1:
        raise ValueError("p must exceed 1")
    sp_ = space_for(u.mesh, w)
    return sp_.dirichlet(u.values, p), sp_.dirichlet_grad(u.values, p)


def weak_defects(u: Field, rhs, w: Weight, p: float) -> np.ndarray:
    """a(u, phi_i) - int g(u) phi_i at interior nodes (lumped load).

    ``rhs(values, coords)`` returns nodal values of g(u).  Interior entries
    only; a sub-solution has non-positive defects, a super-solution
    non-negative ones.
    """
    space = space_for(u.mesh, w)
    idx = space.interior
    load = np.asarray(rhs(u.values[idx], u.mesh.nodes[idx]), dtype=float)
    return space.flux(u.values, p)[idx] - space.lumped[idx] * load


def weak_residual(u: Field, rhs, w: Weight, p: float, singular: bool = True) -> float:
    """max_i |a(u, phi_i) - int g(u) phi_i| / (1 + ||phi_i||) over interior nodes."""
    idx = u.mesh.interior
    if singular:
        bad = idx[u.values[idx] <= 0]
        if bad.size:
            raise ValueError(f"singular right-hand side evaluated at non-positive node {int(bad[0])}")
    d = weak_defects(u, rhs, w, p)
    norms = space_for(u.mesh, w).hat_norms(p)[idx]
    return float(np.max(np.abs(d) / (1.0 + norms))) if d.size else 0.0


def compact_nodes(mesh: Mesh, shrink: float = 0.5) -> np.ndarray:
    """Interior nodes inside the domain shrunk homothetically by ``shrink``."""
    if mesh.domain is None:
        raise ValueError("mesh has no domain attached")
    inside = mesh.domain.shrunk(shrink).contains(mesh.nodes, tol=1e-12)
    return np.flatnonzero(inside & ~mesh.boundary_mask)


def monotonicity_gap(x: np.ndarray, y: np.ndarray, p: float) -> np.ndarray:
    """<|x|^{p-2} x - |y|^{p-2} y, x - y> row-wise."""
    x, y = np.atleast_2d(x), np.atleast_2d(y)
    nx = np.linalg.norm(x, axis=1, keepdims=True)
    ny = np.linalg.norm(y, axis=1, keepdims=True)
    with np.errstate(divide="ignore", invalid="ignore"):
        ax = np.where(nx > 0, nx ** (p - 2), 0.0) * x
        ay = np.where(ny > 0, ny ** (p - 2), 0.0) * y
    return ((ax - ay) * (x - y)).sum(axis=1)


def monotonicity_lower_shape(x: np.ndarray, y: np.ndarray, p: float) -> np.ndarray:
    """|x-y|^p for p >= 2, |x-y|^2 / (|x|+|y|)^{2-p} for 1 < p < 2."""
    x, y = np.atleast_2d(x), np.atleast_2d(y)
    dxy = np.linalg.norm(x - y, axis=1)
    if p >= 2:
        return dxy**p
    s = np.linalg.norm(x, axis=1) + np.linalg.norm(y, axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(s > 0, dxy**2 / s ** (2 - p), 0.0)


# ---------------------------------------------------------------------------
# CSV export


def field_to_csv(path, mesh: Mesh, **columns: np.ndarray) -> Path:
    path = Path(path)
    coords = ["x", "y", "z"][: mesh.dim]
    with path.open("w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["node", *coords, *columns])
        for i in range(mesh.n_nodes):
            wr.writerow([i, *(f"{c:.17g}" for c in mesh.nodes[i]), *(f"{columns[k][i]:.17g}" for k in columns)])
    return path


def mesh_to_csv(directory, mesh: Mesh) -> tuple[Path, Path]:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    nodes = field_to_csv(directory / "nodes.csv", mesh, boundary=mesh.boundary_mask.astype(float))
    elems = directory / "elements.csv"
    with elems.open("w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow([f"v{k}" for k in range(mesh.elements.shape[1])])
        wr.writerows(mesh.elements.tolist())
    return nodes, elems
