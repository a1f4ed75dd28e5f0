import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_antisymmetric
from groupoidgen.poisson import (DimensionError, MultiPoly, PoissonStructure, analyticity_bound,
                                 eval_bivector, eval_bivector_batch, jacobi_residual,
                                 partial_derivative)

D = 3
exponents = st.tuples(*[st.integers(0, 3)] * D)
coeffs = st.floats(-5, 5, allow_nan=False, allow_infinity=False)
polys = st.dictionaries(exponents, coeffs, max_size=6).map(lambda t: MultiPoly(D, t))
points = st.lists(st.floats(-2, 2, allow_nan=False), min_size=D, max_size=D).map(np.array)


def _naive(p: MultiPoly, x):
    return sum(c * np.prod([xi ** e for xi, e in zip(x, exp)]) for exp, c in p.terms.items())


@settings(max_examples=80, deadline=None)
@given(polys, polys, points)
def test_arithmetic_matches_evaluation(a, b, x):
    scale = 1 + abs(_naive(a, x)) * (1 + abs(_naive(b, x)))
    assert (a + b)(x) == pytest.approx(_naive(a, x) + _naive(b, x), abs=1e-9 * scale)
    assert (a * b)(x) == pytest.approx(_naive(a, x) * _naive(b, x), abs=1e-9 * scale)
    assert (a - a).is_zero()


@settings(max_examples=60, deadline=None)
@given(polys, points, st.integers(0, D - 1))
def test_derivative_against_finite_difference(p, x, axis):
    h = 1e-6
    e = np.zeros(D)
    e[axis] = h
    fd = (_naive(p, x + e) - _naive(p, x - e)) / (2 * h)
    assert partial_derivative(p, axis)(x) == pytest.approx(fd, rel=1e-5, abs=1e-5)


def test_batch_and_single_evaluation_agree():
    rng = np.random.default_rng(0)
    p = MultiPoly(D, {(1, 2, 0): 2.0, (0, 0, 3): -1.5, (0, 0, 0): 0.25})
    X = rng.standard_normal((10, D))
    assert np.allclose(p(X), [p(x) for x in X])


def test_embed_and_exact_evaluation():
    p = MultiPoly(2, {(1, 1): 3})
    q = p.embed(4, 1)
    assert q.terms == {(0, 1, 1, 0): 3}
    from fractions import Fraction
    assert p.evaluate_exact([Fraction(1, 3), Fraction(1, 2)]) == Fraction(1, 2)


def test_dimension_mismatch():
    with pytest.raises(DimensionError):
        MultiPoly(2, {(1, 0): 1}) + MultiPoly(3, {(1, 0, 0): 1})


def test_json_round_trip(tmp_path):
    ps = PoissonStructure.so3()
    path = tmp_path / "p.json"
    path.write_text(json.dumps(ps.to_json()))
    assert PoissonStructure.load(path) == ps


def test_so3_bivector():
    B = eval_bivector(PoissonStructure.so3(), [1.0, 0.0, 0.0])
    assert np.array_equal(B, [[0, 0, 0], [0, 0, 1], [0, -1, 0]])


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_constant_structures_are_poisson(seed):
    a = random_antisymmetric(np.random.default_rng(seed), 4)
    ps = PoissonStructure.constant(a)
    assert jacobi_residual(ps) == 0
    assert np.allclose(eval_bivector_batch(ps, np.zeros((2, 4))), a)


def test_jacobi_violation_rejected():
    with pytest.raises(ValueError, match="Jacobi"):
        PoissonStructure.from_upper(3, {(0, 1): MultiPoly.variable(3, 0), (1, 2): MultiPoly.variable(3, 1)})


def test_antisymmetry_enforced():
    with pytest.raises(ValueError):
        PoissonStructure.constant([[0, 1], [1, 0]])


def test_analyticity_bound_examples():
    assert analyticity_bound(PoissonStructure.so3(), [1, 1, 1]) == 1.0
    assert analyticity_bound(PoissonStructure.so3(), [4, 0, 0]) == 4.0
    assert analyticity_bound(PoissonStructure.constant([[0, 3], [-3, 0]]), [0, 0]) == 3.0
    assert analyticity_bound(PoissonStructure.zero(2), [0, 0]) == 1.0
