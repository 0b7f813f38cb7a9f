"""One test per acceptance criterion, each printing a PASS/FAIL line at the stated tolerances."""

from __future__ import annotations

import math
import time

import numpy as np
import pytest

from spl.case1 import solve_caseI
from spl.case2 import mp_geometry, solve_caseII
from spl.domain import Domain
from spl.eigen import first_eigenpair
from spl.energy import CaseISpec, CaseIISpec, Nonlinearity, energy_caseI, energy_caseII, gradient_caseI, gradient_caseII
from spl.mesh import Field, build_mesh, compact_nodes, monotonicity_gap, space_for, weighted_seminorm
from spl.solvers import solve_constant_load
from spl.weights import (
    BallSampling,
    Weight,
    as_membership,
    estimate_ap_constant,
    power_weight_ap_admissible,
)

AFFINE = Nonlinearity("affine", c0=1.0, c1=1.0)


def test_criterion_1_torsion(report_criterion):
    mesh = build_mesh(Domain.interval(-1, 1), 512)
    x = mesh.nodes[:, 0]
    errs, secs = {}, {}
    for p in (2.0, 3.0):
        t0 = time.perf_counter()
        u = solve_constant_load(space_for(mesh, Weight.constant(1.0, 1, p)), p)
        secs[p] = time.perf_counter() - t0
        errs[p] = float(np.max(np.abs(u - (p - 1) / p * (1 - np.abs(x) ** (p / (p - 1))))))
    ok = errs[2.0] <= 1e-10 and errs[3.0] <= 1e-3 and max(secs.values()) < 5
    report_criterion(1, ok, f"sup errors p=2 {errs[2.0]:.2e} (nodal exact), p=3 {errs[3.0]:.2e}; max time {max(secs.values()):.2f}s")
    assert ok


def test_criterion_2_eigenpair(report_criterion):
    mesh = build_mesh(Domain.interval(0, 1), 256)
    t0 = time.perf_counter()
    eig = first_eigenpair(Weight.constant(1.0, 1, 2.0), 2.0, mesh)
    secs = time.perf_counter() - t0
    rel = abs(eig.lambda1 - math.pi**2) / math.pi**2
    e = eig.e1.values
    ok = rel <= 5e-3 and np.all(e[mesh.interior] > 0) and e.max() == 1.0 and secs < 10
    report_criterion(2, ok, f"lambda1 = {eig.lambda1:.6f} (rel err {rel:.2e}), min interior e1 {e[mesh.interior].min():.2e}, sup {e.max()}, {secs:.2f}s")
    assert ok


def test_criterion_3_weight_toolkit(report_criterion):
    ap = [
        estimate_ap_constant(Weight.constant(c, n, 2.0), dom, BallSampling(9, 6))
        for c in (1.0, 3.7)
        for n, dom in ((1, Domain.interval(-1, 1)), (2, Domain.rectangle(0, 1, 0, 1)))
    ]
    ap_ok = max(abs(a - 1.0) for a in ap) <= 4 * np.finfo(float).eps
    grid_ok = True
    for n in (1, 2, 3):
        for p in (1.5, 2.0, 3.0):
            lo, hi = -n, n * (p - 1)
            for alpha, expect in ((lo, False), (lo + 1e-9, True), (hi - 1e-9, True), (hi, False), (lo - 0.5, False), (hi + 0.5, False), (0.0, True)):
                grid_ok &= power_weight_ap_admissible(alpha, n, p) == expect
    div = as_membership(Weight.power(2.0, 3, 2.0), 2.0, Domain.ball(3))
    grows = (not div.member) and all(b > a for a, b in zip(div.refinements, div.refinements[1:]))
    ok = ap_ok and grid_ok and grows
    report_criterion(
        3, ok,
        f"A_p of constants max |c-1| = {max(abs(a - 1) for a in ap):.1e}; boundary grid {'ok' if grid_ok else 'mismatch'}; "
        f"divergent A_s sequence {tuple(round(v, 2) for v in div.refinements)}",
    )
    assert ok


def _fd_direction(energy, u, v, h=1e-6):
    return (energy(u + h * v) - energy(u - h * v)) / (2 * h)


def test_criterion_4_gradient_suite(report_criterion):
    t0 = time.perf_counter()
    mesh = build_mesh(Domain.interval(-1, 1), 64)
    rng = np.random.default_rng(2024)
    worst = {"dirichlet": 0.0, "E_lambda": 0.0, "I_lambda_eps": 0.0}
    for p in (1.5, 2.0, 3.0):
        w = Weight.power(0.5, 1, p)
        space = space_for(mesh, w)
        s1 = CaseISpec(p, 0.5, 1.3, AFFINE)
        s2 = CaseIISpec(p, 0.5, p + 1.0, 0.7, 0.05)
        for _ in range(20):
            u = 0.5 + rng.random(mesh.n_nodes)
            u[mesh.boundary_mask] = 0
            v = rng.normal(size=mesh.n_nodes)
            v[mesh.boundary_mask] = 0
            checks = {
                "dirichlet": (space.dirichlet_grad(u, p), lambda z: space.dirichlet(z, p)),
                "E_lambda": (gradient_caseI(Field(u, mesh), s1, w), lambda z: energy_caseI(Field(z, mesh), s1, w)),
                "I_lambda_eps": (gradient_caseII(Field(u, mesh), s2, w), lambda z: energy_caseII(Field(z, mesh), s2, w)),
            }
            for name, (g, E) in checks.items():
                fd = _fd_direction(E, u, v)
                worst[name] = max(worst[name], abs(np.dot(g, v) - fd) / abs(fd))
    secs = time.perf_counter() - t0
    ok = max(worst.values()) <= 1e-5 and secs < 30
    report_criterion(4, ok, "max relative FD errors " + ", ".join(f"{k} {v:.1e}" for k, v in worst.items()) + f"; {secs:.1f}s")
    assert ok


def _case1_check(w, residual_tol, label):
    mesh = build_mesh(Domain.interval(-1, 1), 512)
    out = []
    for lam in (0.1, 1.0, 10.0):
        t0 = time.perf_counter()
        rep = solve_caseI(CaseISpec(2.0, 0.5, lam, AFFINE), w, mesh)
        secs = time.perf_counter() - t0
        M, u = rep.interval, rep.solution.values
        ok = (
            bool(np.all(M.lower.values <= u) and np.all(u <= M.upper.values))
            and rep.sub_defect_max <= 1e-8
            and rep.super_defect_min >= -1e-8
            and rep.residual <= residual_tol
            and rep.c_K > 0
            and u[compact_nodes(mesh)].min() >= rep.c_K
            and secs < 60
        )
        out.append((lam, ok, rep.residual, rep.c_K, secs))
    detail = "; ".join(f"lambda={lam:g}: residual {r:.1e}, c_K {c:.3f}, {s:.2f}s" for lam, _, r, c, s in out)
    return all(o[1] for o in out), f"{label} {detail}"


def test_criterion_5_case1(report_criterion):
    ok, detail = _case1_check(Weight.constant(1.0, 1, 2.0), 1e-6, "w=1")
    report_criterion(5, ok, detail)
    assert ok


@pytest.fixture(scope="module")
def case2_const():
    return _case2_run(Weight.constant(1.0, 1, 2.0))


def _case2_run(w):
    mesh = build_mesh(Domain.interval(-1, 1), 512)
    t0 = time.perf_counter()
    eig = first_eigenpair(w, 2.0, mesh)
    geo = mp_geometry(CaseIISpec(2.0, 0.5, 3.0, 1.0), w, mesh, eig)
    rep = solve_caseII(CaseIISpec(2.0, 0.5, 3.0, geo.Lambda / 10), w, mesh, eig=eig, geo=geo)
    return rep, w, time.perf_counter() - t0


def _case2_check(rep, w, secs, residual_tol):
    sol, xi = rep.solutions, rep.barrier.values
    ii = sol.nu.mesh.interior
    Enu, Eze = sol.energies
    ok = (
        Enu < 0 < rep.geometry.rho <= Eze
        and sol.separation > 0
        and bool(np.all(sol.nu.values[ii] >= xi[ii] - 1e-8) and np.all(sol.zeta.values[ii] >= xi[ii] - 1e-8))
        and max(rep.residuals) <= residual_tol
        and max(rep.identity_errors) <= 0.01
        and secs < 300
    )
    detail = (
        f"I(nu0) = {Enu:.4g} < 0 < rho = {rep.geometry.rho:.4g} <= I(zeta0) = {Eze:.4g}, separation {sol.separation:.3g}, "
        f"residuals {rep.residuals[0]:.1e}/{rep.residuals[1]:.1e}, identity {max(rep.identity_errors):.1e}, {secs:.1f}s"
    )
    return ok, detail


def test_criterion_6_case2(report_criterion, case2_const):
    rep, w, secs = case2_const
    ok, detail = _case2_check(rep, w, secs, 1e-5)
    report_criterion(6, ok, detail)
    assert ok


def test_criterion_7_eps_continuation(report_criterion, case2_const):
    rep, _, _ = case2_const
    lv = rep.solutions.levels
    tails = {name: [getattr(x, f"diff_{name}") for x in lv][-5:] for name in ("nu", "zeta")}
    ok = all(len(t) == 5 and all(b < a for a, b in zip(t, t[1:])) for t in tails.values())
    report_criterion(7, ok, "last 5 differences " + "; ".join(f"{k}: " + ", ".join(f"{d:.2e}" for d in t) for k, t in tails.items()))
    assert ok


def test_criterion_8_algebraic_inequality(report_criterion):
    rng = np.random.default_rng(8)
    worst_neg, zero_ok, strict_ok, count = math.inf, True, True, 0
    for n in (1, 2, 3):
        x = rng.normal(size=(10**4, n)) * rng.uniform(0.01, 10, size=(10**4, 1))
        y = rng.normal(size=(10**4, n)) * rng.uniform(0.01, 10, size=(10**4, 1))
        for p in (1.5, 2.0, 3.0, 4.0):
            gap = monotonicity_gap(x, y, p)
            worst_neg = min(worst_neg, float(gap.min()))
            strict_ok &= bool(np.all(gap > 0))
            zero_ok &= bool(np.all(np.abs(monotonicity_gap(x, x, p)) <= 1e-12))
            count += len(gap)
    ok = worst_neg >= -1e-12 and strict_ok and zero_ok
    report_criterion(8, ok, f"{count} pairs: min gap {worst_neg:.2e} (x != y all strictly positive: {strict_ok}); x = y gives 0: {zero_ok}")
    assert ok


def test_criterion_9_weighted(report_criterion):
    w = Weight.power(0.5, 1, 2.0)
    ok5, d5 = _case1_check(w, 1e-4, "w=|x|^0.5")
    rep, _, secs = _case2_run(w)
    ok6, d6 = _case2_check(rep, w, secs, 1e-4)
    hard = rep.hard_failures
    ok = ok5 and ok6 and not hard
    report_criterion(9, ok, f"case I: {d5} | case II: {d6}; hard certificate failures {hard or 'none'}")
    assert ok
