import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_antisymmetric
from groupoidgen import groupoid as G
from groupoidgen.genfunc import GenFunc, RadiusWarning, build_genfunc, cbh_genfunc, constant_genfunc
from groupoidgen.poisson import MultiPoly, PoissonStructure, eval_bivector
from groupoidgen.report import fit_slope, halving_sweep

EPS = 0.5
seeds = st.integers(0, 2 ** 32 - 1)


def _constant(seed):
    rng = np.random.default_rng(seed)
    S = constant_genfunc(PoissonStructure.constant(random_antisymmetric(rng)), 3)
    p = rng.uniform(-1, 1, (3, 3)) * S.radius / 4
    x = rng.uniform(-1, 1, 3)
    return S, rng, p, x


def test_unit_laws_exact(so3, weights_n3):
    x = np.array([0.3, -0.7, 1.1])
    z = np.zeros(3)
    for S in (cbh_genfunc(so3, 3), build_genfunc(so3, 3, weights_n3)):
        assert np.array_equal(G.source(S, EPS, z, x), x)
        assert np.array_equal(G.target(S, EPS, z, x), x)


@settings(max_examples=25, deadline=None)
@given(seeds)
def test_constant_maps_are_translations(seed):
    S, rng, p, x = _constant(seed)
    A = S.terms[0]
    alpha = np.array([[A.terms.get(tuple(int(k == i) for k in range(3)) + tuple(int(k == j) for k in range(3)) + (0, 0, 0), 0.0)
                       for j in range(3)] for i in range(3)])
    assert np.allclose(G.source(S, EPS, p[0], x), x - EPS * alpha @ p[0], atol=1e-15)
    assert np.allclose(G.target(S, EPS, p[0], x), x + EPS * alpha @ p[0], atol=1e-15)
    assert np.allclose(G.induced_bivector(S, EPS, x), 2 * EPS * alpha)
    assert G.nondegeneracy(S, EPS, p[0], x) == pytest.approx(1.0, abs=1e-15)


@settings(max_examples=25, deadline=None)
@given(seeds)
def test_constant_identities_hold_exactly(seed):
    S, rng, p, x = _constant(seed)
    q = G.local_inverse_Q(S, EPS, p[0], x)
    assert np.allclose(G.source(S, EPS, p[0], q), x, atol=1e-15)
    qt = G.Q_tilde(S, EPS, p[0], x)
    assert np.allclose(G.target(S, EPS, p[0], qt), x, atol=1e-15)
    assert G.sga_residual(S, EPS, *p, x) <= 1e-10
    assert G.sgs_residual(S, EPS, p[0], x) == 0.0
    assert G.lie_residuals(S, EPS, [G.PhasePoint(p[0], x), G.PhasePoint(p[1], x)]).max() <= 1e-10


def test_zero_structure_is_trivial():
    S = constant_genfunc(PoissonStructure.zero(3), 2)
    p = np.array([1e-3, 2e-3, -1e-3])
    x = np.ones(3)
    sol = G.solve_associativity(S, EPS, p, p, p, x)
    assert np.array_equal(sol.xbar, x) and np.array_equal(sol.pbar, 2 * p)
    assert G.sga_residual(S, EPS, p, p, p, x) == 0.0
    assert G.lie_residuals(S, EPS, [G.PhasePoint(p, x)]).max() == 0.0


def test_induced_bivector_of_cbh_series(so3):
    S = cbh_genfunc(so3, 3)
    rng = np.random.default_rng(4)
    for x in rng.uniform(-1, 1, (20, 3)):
        assert np.allclose(G.induced_bivector(S, EPS, x), 2 * EPS * eval_bivector(so3, x), atol=1e-15)


def test_nondegeneracy_tends_to_one(so3):
    S = cbh_genfunc(so3, 3)
    x = np.array([0.2, 0.5, -0.4])
    u = np.array([1.0, 2.0, 2.0]) / 3
    dets = [G.nondegeneracy(S, EPS, t * u, x) for t in halving_sweep(S.radius / 2, 6)]
    assert G.nondegeneracy(S, EPS, np.zeros(3), x) == 1.0
    assert np.all(np.diff(np.abs(np.array(dets) - 1)) <= 0)


@pytest.mark.parametrize("fn", ["Q", "Qt"])
def test_inverse_identities_scale_with_order(so3, fn):
    S = cbh_genfunc(so3, 3)
    rng = np.random.default_rng(5)
    u = G.random_directions(rng, 1, 3)[0]
    x = rng.uniform(-1, 1, 3)
    norms = halving_sweep(S.radius / 2)
    res = []
    for t in norms:
        if fn == "Q":
            q = G.local_inverse_Q(S, EPS, t * u, x)
            res.append(np.max(np.abs(G.source(S, EPS, t * u, q) - x)))
        else:
            q = G.Q_tilde(S, EPS, t * u, x)
            res.append(np.max(np.abs(G.target(S, EPS, t * u, q) - x)))
    assert fit_slope(norms, res).slope >= S.order + 0.5


def test_singular_jacobian_detected():
    # s_0 = x_0 (1 - 2 eps p_0) degenerates at p_0 = 1 / (2 eps)
    D = 9
    term = MultiPoly(D, {(1, 0, 0, 1, 0, 0, 1, 0, 0): -2.0})
    S = GenFunc(3, 1, [term], [MultiPoly.zero(D)], 1.0, (0.0, 0.0, 0.0))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RadiusWarning)
        with pytest.raises(G.SingularJacobianError):
            G.local_inverse_Q(S, EPS, np.array([1.0, 0, 0]), np.array([1.0, 0, 0]))


def test_associativity_iteration_limit(so3):
    S = cbh_genfunc(so3, 3)
    a, b, c = np.eye(3) * S.radius / 4
    with pytest.raises(G.ConvergenceError):
        G.solve_associativity(S, EPS, a, b, c, np.array([0.3, -0.2, 0.9]), max_iter=1)


def test_exact_and_float_residuals_agree(so3):
    S = cbh_genfunc(so3, 3)
    p = np.array([1.0, -0.5, 0.25]) * S.radius / 2
    exact = G.sga_residual(S, EPS, p, p[::-1], -p, np.ones(3))
    approx = G.sga_residual(S, EPS, p, p[::-1], -p, np.ones(3), exact=False)
    assert abs(exact - approx) <= 1e-15


def test_phase_point_and_chart():
    with pytest.raises(ValueError):
        G.PhasePoint(np.zeros(2), np.zeros(3))
    chart = G.Chart(np.full(3, -1.0), np.full(3, 1.0))
    S = constant_genfunc(PoissonStructure.zero(3), 1)
    G.source(S, EPS, np.zeros(3), np.zeros(3), chart=chart)
    with pytest.raises(G.OutOfChartError):
        G.target(S, EPS, np.zeros(3), np.full(3, 2.0), chart=chart)
