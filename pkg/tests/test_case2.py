from __future__ import annotations

import math

import numpy as np
import pytest

from spl.case2 import (
    CERTIFICATES,
    ball_minimizer,
    barrier,
    domain_factor,
    eps_continuation,
    mountain_pass_search,
    mp_geometry,
    mp_radius_level,
    solve_caseII,
    sphere_scan,
)
from spl.domain import Domain
from spl.eigen import first_eigenpair
from spl.energy import CaseIISpec, caseII_functional, energy_caseII
from spl.mesh import Field, build_mesh, space_for, weighted_seminorm
from spl.solvers import solve_constant_load
from spl.weights import Weight

W1 = Weight.constant(1.0, n=1, p=2.0)


@pytest.fixture(scope="module")
def setup():
    m = build_mesh(Domain.interval(-1, 1), 256)
    eig = first_eigenpair(W1, 2.0, m)
    geo = mp_geometry(CaseIISpec(2.0, 0.5, 3.0, 1.0), W1, m, eig)
    return m, eig, geo


@pytest.fixture(scope="module")
def bench(setup):
    m, eig, geo = setup
    spec = CaseIISpec(2.0, 0.5, 3.0, 0.1 * geo.Lambda)
    return spec, solve_caseII(spec, W1, m, eig=eig, geo=geo)


def test_radius_level_example():
    R, rho = mp_radius_level(2.0, 3.0, 1.0, 0.5)
    assert R == pytest.approx(0.5 * math.sqrt(2), rel=1e-15)
    assert rho == pytest.approx(0.09375, rel=1e-15)


def test_rho_vanishes_at_critical_k():
    Cl, p, r = 8.0, 2.0, 3.0
    k_crit = Cl ** (-1 / (r + 1 - p))
    rhos = [mp_radius_level(p, r, Cl, k_crit * (1 - d))[1] for d in (1e-1, 1e-2, 1e-3, 1e-4)]
    assert all(b < a for a, b in zip(rhos, rhos[1:])) and rhos[-1] < 2e-3 * rhos[0]
    with pytest.raises(ValueError, match=f"{k_crit:.6g}"):
        mp_radius_level(p, r, Cl, k_crit * 1.01)
    with pytest.raises(ValueError, match="k must"):
        mp_radius_level(p, r, 1.0, 1.0)


def test_domain_factor():
    assert domain_factor(2.0, 2.0, 3.0, 1, 1e6) == 2.0  # p_s* infinite in 1D
    assert domain_factor(2.0, 2.0, 1.2, 3, 2.0) == pytest.approx(2.0 ** (1 - 2.2 / 2.4))
    with pytest.raises(ValueError, match="p_s\\*-1"):
        domain_factor(2.0, 2.0, 1.5, 3, 2.0)


def test_geometry_invariants(setup):
    m, eig, geo = setup
    assert geo.rho > 0 and geo.Lambda > 0 and geo.T * weighted_seminorm(eig.e1, W1, 2.0) > geo.R
    R, rho = mp_radius_level(2.0, 3.0, geo.Cl, geo.k)
    assert (R, rho) == (geo.R, geo.rho)
    # the embedding constant bounds every sampled ratio with the 1.2 margin
    space = space_for(m, W1)
    rng = np.random.default_rng(7)
    for _ in range(50):
        v = rng.normal(size=m.n_nodes)
        v[m.boundary_mask] = 0
        v /= space.seminorm(v, 2.0)
        assert space.lumped_integral(np.abs(v) ** 4) <= geo.Cl
    for lam in (1e-3, 0.5, 5.0):
        s = CaseIISpec(2.0, 0.5, 3.0, lam, 0.1)
        assert energy_caseII(Field(geo.T * eig.e1.values, m), s, W1) < -1


def test_barrier_constant_and_homogeneity(setup):
    m, _, _ = setup
    space = space_for(m, W1)
    xi = barrier(CaseIISpec(2.0, 0.5, 3.0, 1.0), W1, m)
    assert np.allclose(xi.values, 2**-0.5 * solve_constant_load(space, 2.0), atol=1e-12)
    w3 = Weight.constant(1.0, 1, 3.0)
    sat = barrier(CaseIISpec(3.0, 0.5, 3.0, 5.0), w3, m)
    assert np.allclose(sat.values, solve_constant_load(space_for(m, w3), 3.0), atol=1e-10)
    small = barrier(CaseIISpec(3.0, 0.5, 3.0, 0.1), w3, m)
    C = 0.1 / 2**0.5
    assert np.allclose(small.values, C ** 0.5 * sat.values, atol=1e-9)


def test_ball_minimizer_lambda_zero(setup):
    m, eig, geo = setup
    spec = CaseIISpec(2.0, 0.5, 3.0, 0.0, 0.1)
    nu, _ = ball_minimizer(spec, geo, W1, m, eig)
    assert np.all(nu.values == 0)
    # brute-force line scan along t e1 inside the ball
    J = caseII_functional(space_for(m, W1), spec)
    tmax = geo.R / weighted_seminorm(eig.e1, W1, 2.0)
    vals = [J.value(t * eig.e1.values) for t in np.linspace(0, tmax, 201)]
    assert min(vals) == 0.0 and vals[0] == 0.0


def test_ball_minimizer_requires_eps(setup):
    m, eig, geo = setup
    with pytest.raises(ValueError):
        ball_minimizer(CaseIISpec(2.0, 0.5, 3.0, 0.01, 0.0), geo, W1, m, eig)


def test_ball_minimizer_and_mountain_pass_at_fixed_eps(setup):
    m, eig, geo = setup
    spec = CaseIISpec(2.0, 0.5, 3.0, 0.1 * geo.Lambda, 0.25)
    nu, _ = ball_minimizer(spec, geo, W1, m, eig)
    assert energy_caseII(nu, spec, W1) < 0 and np.all(nu.values >= 0)
    assert weighted_seminorm(nu, W1, 2.0) <= geo.R * (1 + 1e-12)
    zeta, info = mountain_pass_search(spec, geo, W1, m, eig)
    assert energy_caseII(zeta, spec, W1) >= geo.rho
    assert info.residual <= 1e-6
    assert all(b <= a + 1e-12 for a, b in zip(info.max_history, info.max_history[1:]))


def test_sphere_scan_respects_rho_below_lambda(setup):
    m, _, geo = setup
    s = CaseIISpec(2.0, 0.5, 3.0, 0.5 * geo.Lambda, 0.5)
    assert sphere_scan(s, geo, W1, m) >= 0.95 * geo.rho


def test_sphere_scan_fails_well_above_lambda(setup):
    m, _, geo = setup
    s = CaseIISpec(2.0, 0.5, 3.0, 20 * geo.Lambda, 2.0**-20)
    assert sphere_scan(s, geo, W1, m) < 0.95 * geo.rho


def test_schedule_length_one(setup):
    m, eig, geo = setup
    spec = CaseIISpec(2.0, 0.5, 3.0, 0.1 * geo.Lambda)
    xi = barrier(spec, W1, m)
    sol = eps_continuation(spec, geo, W1, m, eig, xi, schedule=[0.5])
    assert not sol.limit and not sol.converged_nu and not sol.converged_zeta
    assert len(sol.levels) == 1
    assert sol.energies[0] == pytest.approx(energy_caseII(sol.nu, spec.at(eps=0.5), W1))


def test_schedule_validation(setup):
    m, eig, geo = setup
    spec = CaseIISpec(2.0, 0.5, 3.0, 0.01)
    with pytest.raises(ValueError):
        eps_continuation(spec, geo, W1, m, eig, barrier(spec, W1, m), schedule=[0.1, 0.5])


def test_benchmark_two_solutions(bench):
    spec, rep = bench
    sol = rep.solutions
    assert tuple(rep.certificates) == CERTIFICATES
    assert set(rep.certificates.values()) == {"pass"}
    assert sol.energies[0] < 0 < rep.geometry.rho <= sol.energies[1]
    assert sol.separation >= 0.1 * weighted_seminorm(sol.zeta, W1, 2.0)
    assert max(rep.residuals) <= 1e-5 and max(rep.identity_errors) <= 0.01
    assert sol.limit
    # differences shrink like eps; the flags report the 1e-6 Cauchy test honestly
    last = sol.levels[-1]
    assert sol.converged_nu == (last.diff_nu < 1e-6)
    assert sol.converged_zeta == (last.diff_zeta < 1e-6)
    ratios = [b.diff_nu / a.diff_nu for a, b in zip(sol.levels[-6:-1], sol.levels[-5:])]
    assert all(0.4 < r_ < 0.6 for r_ in ratios)
    assert np.all(sol.nu.values >= rep.barrier.values - 1e-8)
    assert np.all(sol.zeta.values >= rep.barrier.values - 1e-8)
    for lv in sol.levels:
        assert lv.energy_nu < 0 < rep.geometry.rho <= lv.energy_zeta
        assert lv.min_value >= 0


def test_large_lambda_warns_not_fails(setup):
    m, eig, geo = setup
    spec = CaseIISpec(2.0, 0.5, 3.0, 2 * geo.Lambda)
    rep = solve_caseII(spec, W1, m, eig=eig, geo=geo)
    assert rep.certificates["lambda_in_range"] == "warn"
    assert not rep.hard_failures


def test_power_weight_run():
    m = build_mesh(Domain.interval(-1, 1), 256)
    w = Weight.power(0.5, 1, 2.0)
    eig = first_eigenpair(w, 2.0, m)
    geo = mp_geometry(CaseIISpec(2.0, 0.5, 3.0, 1.0), w, m, eig)
    rep = solve_caseII(CaseIISpec(2.0, 0.5, 3.0, 0.1 * geo.Lambda), w, m, eig=eig, geo=geo)
    assert not rep.hard_failures


def test_lambda_must_be_positive(setup):
    m, _, _ = setup
    with pytest.raises(ValueError):
        solve_caseII(CaseIISpec(2.0, 0.5, 3.0, 0.0), W1, m)
