from __future__ import annotations

import numpy as np
import pytest
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from spl.case1 import (
    A_FLOOR,
    OrderInterval,
    StageError,
    construct_subsolution,
    construct_supersolution,
    minimize_over_interval,
    order_pair,
    solve_caseI,
    solve_pure_singular,
)
from spl.domain import Domain
from spl.eigen import first_eigenpair
from spl.energy import CaseISpec, GenericNonlinearity, Nonlinearity, caseI_rhs, energy_caseI
from spl.mesh import Field, build_mesh, compact_nodes, weak_defects
from spl.weights import Weight

W1 = Weight.constant(1.0, n=1, p=2.0)
AFFINE = Nonlinearity("affine", c0=1.0, c1=1.0)
ONE = Nonlinearity("affine", c0=1.0, c1=0.0)


@pytest.fixture(scope="module")
def bench():
    m = build_mesh(Domain.interval(-1, 1), 512)
    eig = first_eigenpair(W1, 2.0, m)
    v0 = solve_pure_singular(0.5, W1, 2.0, m)
    return m, eig, v0


def _fd_singular_oracle(n=10**4, q=0.5):
    """Newton on the 3-point scheme for -v'' = v^{-q} on (-1,1), n interior nodes."""
    h = 2.0 / (n + 1)
    x = -1 + h * np.arange(1, n + 1)
    A = sp.diags([-np.ones(n - 1), 2 * np.ones(n), -np.ones(n - 1)], [-1, 0, 1], format="csc") / h**2
    v = 0.5 * (1 - x**2) + 0.1
    for _ in range(100):
        F = A @ v - v**-q
        dv = spla.spsolve((A + sp.diags(q * v ** (-q - 1))).tocsc(), -F)
        t = 1.0
        while np.any(v + t * dv <= 0):
            t *= 0.5
        v = v + t * dv
        if np.max(np.abs(dv)) < 1e-13:
            break
    return x, v


def test_v0_even_symmetry(bench):
    m, _, v0 = bench
    assert np.max(np.abs(v0.values - v0.values[::-1])) <= 1e-10


def test_v0_power_weight_symmetry():
    m = build_mesh(Domain.interval(-1, 1), 128)
    w = Weight.power(0.5, 1, 2.0)
    v0 = solve_pure_singular(0.5, w, 2.0, m)
    assert np.max(np.abs(v0.values - v0.values[::-1])) <= 1e-10


def test_v0_monotone_continuation():
    m = build_mesh(Domain.interval(-1, 1), 128)
    hist: list = []
    v0 = solve_pure_singular(0.5, W1, 2.0, m, history=hist)
    assert len(hist) >= 5
    for (e1, a), (e2, b) in zip(hist, hist[1:]):
        assert e2 < e1
        assert np.all(b >= a - 1e-12)
    assert np.all(v0.values >= hist[-1][1] - 1e-10)


def test_v0_matches_fine_grid_oracle(bench):
    m, _, v0 = bench
    x, v = _fd_singular_oracle()
    ours = np.interp(x, m.nodes[:, 0], v0.values)
    assert np.max(np.abs(ours - v)) <= 1e-3
    assert np.all(v0.values[m.interior] > 0)


def test_subsolution_closed_form_f_one(bench):
    m, eig, _ = bench
    p, q = 2.0, 0.5
    for lam in (1e-3, 0.1, 1.0, 10.0):
        spec = CaseISpec(p, q, lam, ONE)
        a, lower = construct_subsolution(spec, eig, W1)
        bound = min(1.0, (lam / eig.lambda1) ** (1 / (p - 1 + q)))
        # brute-force scan of the dyadic grid against the rearranged inequality
        grid = 2.0 ** -np.arange(0, 41)
        ok = [g for g in grid if g <= bound]
        assert a == ok[0]
        assert lower.values.max() == pytest.approx(a)
        assert weak_defects(lower, caseI_rhs(spec), W1, p).max() <= 1e-8


def test_subsolution_monotone_in_lambda(bench):
    m, eig, _ = bench
    prev = 0.0
    for lam in 2.0 ** np.arange(-8, 6):
        a, _ = construct_subsolution(CaseISpec(2.0, 0.5, float(lam), AFFINE), eig, W1)
        assert a >= prev
        prev = a


def test_supersolution_closed_form_f_one(bench):
    m, _, v0 = bench
    for lam in (0.01, 1.0, 7.0, 100.0):
        spec = CaseISpec(2.0, 0.5, lam, ONE)
        A, upper = construct_supersolution(spec, v0, W1)
        target = lam ** (1 / 1.5)
        assert A >= target and A / 2 < target
        assert A == 2.0 ** np.round(np.log2(A))
        assert upper.values.max() == A * v0.values.max()
        assert weak_defects(upper, caseI_rhs(spec), W1, 2.0).min() >= -1e-8


def test_ordering_repair(bench):
    m, eig, v0 = bench
    spec = CaseISpec(2.0, 0.5, 1e-4, ONE)
    a, A, M = order_pair(spec, eig, v0, W1)
    assert np.all(M.lower.values <= M.upper.values)
    assert a >= A_FLOOR and M.c_K > 0


def test_order_interval_rejects_bad_bounds():
    m = build_mesh(Domain.interval(-1, 1), 8)
    lo = Field(np.r_[0, np.ones(7), 0], m)
    with pytest.raises(ValueError, match="node"):
        OrderInterval(lo, lo * 0.5)


def test_degenerate_interval_returns_field(bench):
    m, eig, _ = bench
    spec = CaseISpec(2.0, 0.5, 1.0, AFFINE)
    u0 = eig.e1 * 0.3
    u, _ = minimize_over_interval(OrderInterval(u0, u0), spec, W1)
    assert np.array_equal(u.values, u0.values)


def test_benchmark_interval_minimiser(bench):
    m, eig, v0 = bench
    spec = CaseISpec(2.0, 0.5, 1.0, AFFINE)
    rep = solve_caseI(spec, W1, m, eig=eig, v0=v0)
    M, u = rep.interval, rep.solution
    assert M.contains(u)
    assert rep.residual <= 1e-6
    idx = m.interior
    inside = np.mean((u.values[idx] > M.lower.values[idx]) & (u.values[idx] < M.upper.values[idx]))
    assert inside >= 0.9
    assert rep.energy <= energy_caseI(M.lower, spec, W1) and rep.energy <= energy_caseI(M.upper, spec, W1)
    assert np.all(np.diff(rep.energies) <= 1e-12 * abs(rep.energies[0]))
    assert rep.sub_defect_max <= 1e-8 and rep.super_defect_min >= -1e-8
    assert u.values[compact_nodes(m)].min() >= rep.c_K > 0
    assert set(rep.certificates().values()) == {"pass"}
    # idempotence
    again, _ = minimize_over_interval(M, spec, W1, start=u)
    assert np.max(np.abs(again.values - u.values)) < 1e-10


def test_benchmark_against_refined_mesh(bench):
    m, _, _ = bench
    spec = CaseISpec(2.0, 0.5, 1.0, AFFINE)
    coarse = solve_caseI(spec, W1, m).solution
    fine_m = build_mesh(Domain.interval(-1, 1), 4096)
    fine = solve_caseI(spec, W1, fine_m).solution
    diff = np.interp(fine_m.nodes[:, 0], m.nodes[:, 0], coarse.values) - fine.values
    assert np.max(np.abs(diff)) <= 1e-3


@pytest.mark.parametrize("lam", [0.1, 1.0, 10.0])
@pytest.mark.parametrize("w", [W1, Weight.power(0.5, 1, 2.0)], ids=["const", "power"])
def test_lambda_sweep(lam, w):
    m = build_mesh(Domain.interval(-1, 1), 256)
    rep = solve_caseI(CaseISpec(2.0, 0.5, lam, AFFINE), w, m)
    assert set(rep.certificates().values()) == {"pass"}


def test_other_p_and_power_shift():
    m = build_mesh(Domain.interval(-1, 1), 128)
    for p, f in [(3.0, Nonlinearity("power_shift", 1.0, beta=1.2)), (1.6, AFFINE)]:
        w = Weight.constant(1.0, 1, p)
        rep = solve_caseI(CaseISpec(p, 0.5, 1.0, f), w, m)
        assert rep.residual <= 1e-6 and rep.interval.contains(rep.solution)


def test_invalid_f_rejected_before_solving():
    m = build_mesh(Domain.interval(-1, 1), 16)
    spec = CaseISpec(2.0, 0.5, 1.0, GenericNonlinearity(lambda t: t))
    with pytest.raises(StageError) as exc:
        solve_caseI(spec, W1, m)
    assert exc.value.stage == "validation" and "f(0)" in str(exc.value)
