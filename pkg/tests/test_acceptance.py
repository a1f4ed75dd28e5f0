"""One test per acceptance criterion; each prints a single PASS/FLAG/FAIL line.

Order-scaling criteria on so(3) use the closed-form series: Monte-Carlo noise
in S_2 and S_3 dominates truncation residuals at these momenta.  Criterion 4
ties the Monte-Carlo series to that closed form within 3 sigma.
"""
import time
import warnings

import numpy as np
import pytest

import conftest
from conftest import random_antisymmetric
from groupoidgen import flows, groupoid, suites
from groupoidgen.genfunc import (RadiusWarning, build_genfunc, cbh_genfunc, constant_genfunc,
                                 eval_genfunc, grad_genfunc)
from groupoidgen.graphs import count_bound, enumerate_trees
from groupoidgen.poisson import PoissonStructure
from groupoidgen.report import FAIL, FLAG, PASS
from test_graphs import _brute_force

EPS = 0.5
N = 3


def record(k: int, status: str, text: str):
    line = f"criterion {k:2d} [{status.upper()}] {text}"
    conftest.ACCEPTANCE_LINES.append(line)
    print(line)
    assert status != FAIL, line


def worst(*statuses):
    for s in (FAIL, FLAG):
        if s in statuses:
            return s
    return PASS


@pytest.fixture(scope="module")
def cloud():
    S = cbh_genfunc(PoissonStructure.so3(), N)
    return suites.make_cloud(3, 8, 0.5, seed=2024, radius=S.radius)


@pytest.fixture(scope="module")
def const_ps():
    return PoissonStructure.constant(random_antisymmetric(np.random.default_rng(11), scale=0.5))


@pytest.fixture(scope="module")
def const_cloud(const_ps):
    S = constant_genfunc(const_ps, N)
    return suites.make_cloud(3, 8, 0.5, seed=7, radius=S.radius)


def _status(recs):
    return worst(*(r.status for r in recs))


def _summary(recs):
    return "; ".join(f"{r.name}={r.value:.3g} ({r.target})" for r in recs)


def test_c01_tree_enumeration():
    t0 = time.perf_counter()
    ok = len(enumerate_trees(1)) == 2 and len(_brute_force(1)) == 2
    counts = []
    for n in range(1, 5):
        got = [g.edges for g in enumerate_trees(n)]
        ok &= got == _brute_force(n) and len(got) <= count_bound(n)
        counts.append(len(got))
    elapsed = time.perf_counter() - t0
    ok &= elapsed < 60
    record(1, PASS if ok else FAIL, f"counts n=1..4 {counts} equal the brute-force oracle, {elapsed:.1f}s")


def test_c02_weight_bound(weights_n3):
    recs = suites.verify_weights(weights_n3)
    n_trees = len(weights_n3.records)
    elapsed = weights_n3.elapsed
    status = _status(recs) if elapsed < 600 else FAIL
    record(2, status, f"{n_trees} trees at 1e6 samples, max |W|/4^n = {recs[0].value:.4f}, "
                      f"estimation {elapsed:.1f}s")


def test_c03_constant_exactness(const_ps, weights_n3):
    S = build_genfunc(const_ps, N, weights_n3)
    higher_zero = S.terms[1].is_zero() and S.terms[2].is_zero()
    z = suites.coefficient_z(S, constant_genfunc(const_ps, N))
    status = PASS if higher_zero and z <= 3 else FAIL
    record(3, status, f"S2 = S3 = 0 exactly: {higher_zero}; S1 max deviation {z:.2f} sigma")


def test_c04_cbh_cross_check(so3, weights_n3):
    S = build_genfunc(so3, 2, weights_n3)
    ref = cbh_genfunc(so3, 2)
    z = suites.coefficient_z(S, ref)
    # the first-order closed form is <x, [p1, p2]> / 2 with [a, b] = 2 a x b
    rng = np.random.default_rng(0)
    p1, p2, x = rng.standard_normal((3, 3))
    half_bracket = x @ np.cross(p1, p2)
    first = ref.terms[0](ref.stack(p1, p2, x))
    ok = z <= 3 and abs(first - half_bracket) <= 1e-12 * (1 + abs(half_bracket))
    record(4, PASS if ok else FAIL, f"Monte-Carlo S1, S2 vs CBH: max {z:.2f} sigma; "
                                    "order-1 term equals <x,[p1,p2]>/2")


def test_c05_sgs(so3, weights_n3, cloud, const_ps, const_cloud):
    recs = suites.verify_sgs(cbh_genfunc(so3, N), EPS, cloud, "slope")
    recs_mc = suites.verify_sgs(build_genfunc(so3, N, weights_n3), EPS, cloud, "slope")
    recs_c = suites.verify_sgs(constant_genfunc(const_ps, N), EPS, const_cloud)
    all_recs = recs + recs_mc + recs_c
    record(5, _status(all_recs), f"so(3) closed form: {_summary(recs)}; so(3) Monte-Carlo: {_summary(recs_mc)}")


def test_c06_sga(so3, weights_n3, cloud, const_ps, const_cloud):
    zero = suites.verify_sga(constant_genfunc(PoissonStructure.zero(3), N), EPS, const_cloud, "absolute")
    const = suites.verify_sga(constant_genfunc(const_ps, N), EPS, const_cloud, "absolute")
    lin = suites.verify_sga(cbh_genfunc(so3, N), EPS, cloud, "slope")
    mc = suites.verify_sga(build_genfunc(so3, N, weights_n3), EPS, cloud, "slope")
    record(6, _status(zero + const + lin),
           f"zero {zero[0].value:.2g}, constant {const[0].value:.2g} (<= 1e-10); so(3) slope {lin[0].value} "
           f"(>= {N + 1.5}); Monte-Carlo series slope {mc[0].value} for reference")


def test_c07_lie(so3, cloud, const_ps, const_cloud):
    const = suites.verify_lie(constant_genfunc(const_ps, N), EPS, const_cloud, "absolute")
    lin = suites.verify_lie(cbh_genfunc(so3, N), EPS, cloud, "slope")
    record(7, _status(const + lin), f"constant {const[0].value:.2g} (<= 1e-10); so(3) slope {lin[0].value} "
                                    f"(>= {N + 0.5}; the bracket of a truncated series decays like |p|^N)")


def test_c08_endpoints(so3, cloud, const_ps, const_cloud):
    const = suites.verify_endpoints(constant_genfunc(const_ps, N), const_ps, EPS, const_cloud, 256, "absolute")
    lin = suites.verify_endpoints(cbh_genfunc(so3, N), so3, EPS, cloud, 256, "slope")
    record(8, _status(const + lin), f"constant {const[0].value:.2g} (<= 1e-12); so(3) slope {lin[0].value} "
                                    f"(>= {N + 0.5})")


def test_c09_comparison(so3, cloud, const_ps, const_cloud):
    const = suites.verify_comparison(constant_genfunc(const_ps, N), const_ps, EPS, const_cloud, 256, "absolute")
    lin = suites.verify_comparison(cbh_genfunc(so3, N), so3, EPS, cloud, 256, "slope")
    record(9, _status(const + lin), f"constant {const[0].value:.2g} (<= 1e-12); so(3) slope {lin[0].value} "
                                    f"(>= {N + 1})")


def test_c10_conserved_quantities(so3, cloud, const_ps, const_cloud):
    const = suites.verify_lift(constant_genfunc(const_ps, N), const_ps, EPS, const_cloud, 128, "absolute")
    lin = suites.verify_lift(cbh_genfunc(so3, N), so3, EPS, cloud, 128, "slope")
    record(10, _status(const + lin), f"constant drift {const[0].value:.2g} (<= 1e-10); so(3) drift / "
                                     f"truncation scale {lin[0].value:.3g} (<= 1)")


def test_c11_gradient_oracle(so3, weights_n3):
    S = build_genfunc(so3, N, weights_n3)
    rng = np.random.default_rng(123)
    h = 1e-5
    worst_rel = 0.0
    for _ in range(100):
        p1, p2 = groupoid.random_directions(rng, 2, 3) * rng.uniform(0, S.radius / 2, (2, 1))
        x = rng.uniform(-1, 1, 3)
        for which in ("p1", "p2", "x"):
            g = grad_genfunc(S, EPS, p1, p2, x, which)
            fd = np.empty(3)
            for a in range(3):
                args_p = {"p1": p1.copy(), "p2": p2.copy(), "x": x.copy()}
                args_m = {k: v.copy() for k, v in args_p.items()}
                args_p[which][a] += h
                args_m[which][a] -= h
                with warnings.catch_warnings():
                    warnings.simplefilter("ignore", RadiusWarning)
                    fd[a] = (eval_genfunc(S, EPS, **args_p) - eval_genfunc(S, EPS, **args_m)) / (2 * h)
            worst_rel = max(worst_rel, np.max(np.abs(g - fd)) / np.max(np.abs(g)))
    record(11, PASS if worst_rel <= 1e-6 else FAIL, f"max relative gradient error {worst_rel:.2e} "
                                                     "on 100 points (<= 1e-6)")


def test_c12_casimir(so3):
    rng = np.random.default_rng(12)
    drift = 0.0
    for _ in range(10):
        x0 = rng.uniform(-1, 1, 3)
        tr = flows.poisson_flow(so3, EPS, rng.standard_normal(3), x0, steps=256)
        c = np.sum(tr.states ** 2, axis=1)
        drift = max(drift, float(np.max(np.abs(c - c[0]))))
    record(12, PASS if drift <= 1e-10 else FAIL, f"max |x|^2 drift {drift:.2e} at 256 steps (<= 1e-10)")
