import csv

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_antisymmetric
from groupoidgen import flows as F
from groupoidgen import groupoid as G
from groupoidgen.genfunc import cbh_genfunc, constant_genfunc
from groupoidgen.poisson import MultiPoly, PoissonStructure

EPS = 0.5


def test_casimir_conserved(so3):
    rng = np.random.default_rng(0)
    for _ in range(5):
        x0 = rng.uniform(-1, 1, 3)
        tr = F.poisson_flow(so3, EPS, rng.standard_normal(3), x0, steps=256)
        c = np.sum(tr.states ** 2, axis=1)
        assert np.max(np.abs(c - c[0])) <= 1e-10


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_pairing_with_p_conserved(seed):
    rng = np.random.default_rng(seed)
    for ps in (PoissonStructure.so3(), PoissonStructure.constant(random_antisymmetric(rng))):
        p = rng.standard_normal(3)
        tr = F.poisson_flow(ps, EPS, p, rng.uniform(-1, 1, 3), steps=256)
        pair = tr.states @ p
        assert np.max(np.abs(pair - pair[0])) <= 1e-10


def test_rk4_fourth_order(so3):
    p = np.array([0.8, -1.1, 0.5])
    x0 = np.array([0.3, 0.9, -0.4])
    ref = F.poisson_flow(so3, EPS, p, x0, steps=4096).end
    errs = [np.linalg.norm(F.poisson_flow(so3, EPS, p, x0, steps=k).end - ref) for k in (8, 16, 32)]
    for a, b in zip(errs, errs[1:]):
        assert 16 * 0.7 <= a / b <= 16 * 1.3


def test_simpson_exact_for_cubics():
    t = np.linspace(0, 1, 9)
    ys = (t ** 3 - 2 * t)[:, None]
    assert F._simpson(ys, 1 / 8)[0] == pytest.approx(0.25 - 1.0, abs=1e-15)
    with pytest.raises(ValueError):
        F._simpson(ys[:-1], 1 / 7)


def test_symmetric_Q_constant_closed_form(constant_ps):
    S = constant_genfunc(constant_ps, 1)
    p = np.array([1.0, -2.0, 0.5]) * S.radius / 4
    x = np.array([0.4, 0.1, -0.3])
    q_flow = F.karasev_Q(constant_ps, EPS, p, x)
    assert np.allclose(q_flow, G.local_inverse_Q(S, EPS, p, x), atol=1e-16)


def test_symmetric_source_inverts_Q(so3):
    p = np.array([0.2, -0.1, 0.3])
    q = np.array([0.5, 0.2, -0.6])
    x = F.symmetric_source(so3, EPS, p, q, steps=64)
    assert np.allclose(F.karasev_Q(so3, EPS, p, x, steps=64), q, atol=1e-13)


def test_exp_map_is_identity(so3):
    S = cbh_genfunc(so3, 3)
    x0 = np.array([0.5, -0.3, 0.8])
    pbar = np.array([1.0, 2.0, -1.0]) * S.radius / 6
    assert F.exp_map(S, EPS, x0, pbar).error <= 1e-15
    sym = F.exp_map(None, EPS, x0, pbar, steps=8, solution="symmetric", ps=so3, flow_steps=32)
    assert sym.error <= 1e-12
    with pytest.raises(ValueError):
        F.exp_map(S, EPS, x0, pbar, solution="other")


def test_constant_hamiltonian_is_stationary(so3):
    S = cbh_genfunc(so3, 3)
    start = G.PhasePoint(np.full(3, 1e-3), np.array([0.1, 0.2, 0.3]))
    res = F.hamiltonian_lift(S, EPS, MultiPoly.constant(3, 2.5), start, steps=16, ps=so3)
    assert np.all(res.trajectory.states == res.trajectory.states[0])
    assert res.source_drift == 0.0 and res.projection_mismatch == 0.0


def test_constant_linear_lift(constant_ps):
    S = constant_genfunc(constant_ps, 1)
    start = G.PhasePoint(np.array([1.0, 0, -1.0]) * S.radius / 4, np.array([0.2, -0.5, 0.1]))
    f = MultiPoly.variable(3, 0, 1e-3) + MultiPoly.variable(3, 2, -2e-3)
    res = F.hamiltonian_lift(S, EPS, f, start, steps=32, ps=constant_ps)
    assert res.source_drift <= 1e-12
    assert res.projection_mismatch <= 1e-12


def test_endpoint_report_constant(constant_ps):
    S = constant_genfunc(constant_ps, 1)
    rep = F.endpoint_check(S, constant_ps, EPS, G.PhasePoint(np.array([1.0, 2.0, 0]) * S.radius / 4, np.zeros(3)))
    assert rep.max() <= 1e-12


def test_bounding_box(so3):
    with pytest.raises(G.OutOfChartError):
        F.poisson_flow(so3, EPS, np.array([50.0, 0, 0]), np.array([0, 1.0, 0]), steps=16, box=1e-3)


def test_trajectory_csv(tmp_path, so3):
    tr = F.poisson_flow(so3, EPS, np.ones(3), np.array([1.0, 0, 0]), steps=4)
    path = tmp_path / "t.csv"
    tr.to_csv(path)
    rows = list(csv.reader(path.open()))
    assert rows[0] == ["t", "x0", "x1", "x2"]
    assert len(rows) == 6
    assert np.allclose([float(v) for v in rows[-1][1:]], tr.end)


def test_rk4_validation():
    with pytest.raises(ValueError):
        F.rk4(lambda y: y, np.ones(1), 1.0, 0)
    with pytest.raises(FloatingPointError), np.errstate(over="ignore", invalid="ignore"):
        F.rk4(lambda y: y ** 2 * 1e300, np.ones(1), 1.0, 4)
