from __future__ import annotations

import math

import numpy as np
import pytest
import scipy.linalg as sla

from spl.domain import Domain
from spl.eigen import eigen_residual, first_eigenpair, rayleigh_quotient
from spl.mesh import build_mesh, compact_nodes, space_for
from spl.weights import Weight


def _dense_p2_oracle(n, length=1.0):
    """Smallest eigenvalue of the P1 stiffness/consistent-mass pencil, assembled here."""
    h = length / n
    K = (np.diag(np.full(n - 1, 2.0)) - np.diag(np.ones(n - 2), 1) - np.diag(np.ones(n - 2), -1)) / h
    M = (np.diag(np.full(n - 1, 4.0)) + np.diag(np.ones(n - 2), 1) + np.diag(np.ones(n - 2), -1)) * h / 6
    return sla.eigh(K, M, eigvals_only=True, subset_by_index=[0, 0])[0]


@pytest.fixture(scope="module")
def unit_p2():
    m = build_mesh(Domain.interval(0, 1), 256)
    return m, first_eigenpair(Weight.constant(1.0, 1, 2.0), 2.0, m)


def test_pi_squared_and_dense_oracle(unit_p2):
    m, eig = unit_p2
    assert eig.lambda1 == pytest.approx(math.pi**2, rel=5e-3)
    assert eig.lambda1 == pytest.approx(_dense_p2_oracle(256), rel=1e-8)
    x = m.nodes[:, 0]
    assert np.max(np.abs(eig.e1.values - np.sin(math.pi * x))) < 1e-4


def test_normalisation_and_positivity(unit_p2):
    m, eig = unit_p2
    e = eig.e1.values
    assert e.max() == 1.0
    assert np.all(e[m.interior] > 0)
    assert e[compact_nodes(m)].min() > 0.5
    assert eig.residual < 1e-6


@pytest.mark.parametrize("p", [3.0, 1.5])
def test_domain_scaling(p):
    w = Weight.constant(1.0, 1, p)
    l1 = first_eigenpair(w, p, build_mesh(Domain.interval(0, 1), 128)).lambda1
    l2 = first_eigenpair(w, p, build_mesh(Domain.interval(0, 2), 128)).lambda1
    assert l2 == pytest.approx(l1 / 2**p, rel=0.01)


@pytest.mark.parametrize("w", [Weight.constant(1.0, 1, 3.0), Weight.power(0.5, 1, 3.0)])
def test_minimality_over_random_fields(w, rng):
    m = build_mesh(Domain.interval(-1, 1), 64)
    eig = first_eigenpair(w, 3.0, m)
    space = space_for(m, w)
    R1 = rayleigh_quotient(space, eig.e1.values, 3.0)
    assert R1 == pytest.approx(eig.lambda1, rel=1e-12)
    for _ in range(100):
        v = rng.normal(size=m.n_nodes)
        v[m.boundary_mask] = 0
        assert rayleigh_quotient(space, v, 3.0) >= R1
        assert rayleigh_quotient(space, np.abs(v), 3.0) <= rayleigh_quotient(space, v, 3.0) * (1 + 1e-12)


@pytest.mark.parametrize("p", [2.0, 3.0])
def test_refinement_decreases_lambda(p):
    w = Weight.power(0.5, 1, p)
    lams = [first_eigenpair(w, p, build_mesh(Domain.interval(-1, 1), n)).lambda1 for n in (16, 32, 64, 128)]
    assert all(b < a for a, b in zip(lams, lams[1:]))


def test_weighted_mass_option():
    m = build_mesh(Domain.interval(-1, 1), 64)
    w = Weight.power(0.5, 1, 2.0)
    a = first_eigenpair(w, 2.0, m)
    b = first_eigenpair(w, 2.0, m, weighted_mass=True)
    assert b.weighted_mass and not a.weighted_mass
    assert b.lambda1 != pytest.approx(a.lambda1, rel=1e-3)
    assert eigen_residual(space_for(m, w), b.e1.values, b.lambda1, 2.0, True) < 1e-6


def test_disk_p2_close_to_bessel_zero():
    m = build_mesh(Domain.disk(0, 0, 1), 24)
    eig = first_eigenpair(Weight.constant(1.0, 2, 2.0), 2.0, m)
    assert eig.lambda1 == pytest.approx(2.404825557695773**2, rel=0.02)


def test_bad_tol_and_exports(tmp_path):
    m = build_mesh(Domain.interval(0, 1), 8)
    w = Weight.constant(1.0, 1, 2.0)
    with pytest.raises(ValueError):
        first_eigenpair(w, 2.0, m, tol=0.0)
    eig = first_eigenpair(w, 2.0, m)
    assert eig.to_csv(tmp_path / "e1.csv").read_text().startswith("node,x,e1")
    import json

    rec = json.loads(eig.to_json(tmp_path / "e.json").read_text())
    assert set(rec) == {"lambda1", "iterations", "residual"}
