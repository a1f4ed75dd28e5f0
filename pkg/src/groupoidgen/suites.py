"""Verification suites producing :class:`CheckRecord` lists, plus point clouds.

Each suite runs in one of two modes.  ``absolute`` compares residuals against
fixed tolerances and is meant for series that are exact (zero or constant
structures).  ``slope`` sweeps ``|p|`` over four halvings and fits the decay
order, because a truncated series satisfies the identities only order by order.
``auto`` picks ``absolute`` when ``S`` does not depend on ``x`` beyond the base term.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace
from fractions import Fraction
from typing import Callable, Sequence

import numpy as np

from . import flows, groupoid
from .genfunc import GenFunc, block, cbh_genfunc, constant_genfunc
from .poisson import MultiPoly, PoissonStructure, analyticity_bound, eval_bivector
from .report import (FAIL, PASS, CheckRecord, Timer, fit_slope, halving_sweep, slope_status,
                     tol_status)
from .weights import WeightTable

TOL = {"sgs": 1e-12, "sga": 1e-10, "lie": 1e-10, "endpoints": 1e-12, "comparison": 1e-12, "lift": 1e-10}
# slope targets as offsets from the truncation order N
SLOPE_OFFSET = {"sgs": 1.5, "sga": 1.5, "lie": 0.5, "endpoints": 0.5, "comparison": 1.0}
SWEEP_DIRECTIONS = 3


# -- point clouds -------------------------------------------------------------------

@dataclass
class Cloud:
    dimension: int
    radius: float
    radius_fraction: float
    seed: int
    P: np.ndarray
    X: np.ndarray

    def __len__(self):
        return len(self.P)

    def points(self) -> list[groupoid.PhasePoint]:
        return [groupoid.PhasePoint(p, x) for p, x in zip(self.P, self.X)]

    def to_json(self) -> dict:
        return {"dimension": self.dimension, "radius": self.radius,
                "radius_fraction": self.radius_fraction, "seed": self.seed,
                "points": [{"p": [float(v) for v in p], "x": [float(v) for v in x]}
                           for p, x in zip(self.P, self.X)]}

    @classmethod
    def from_json(cls, obj: dict) -> "Cloud":
        d = int(obj["dimension"])
        pts = obj.get("points", [])
        P = np.array([pt["p"] for pt in pts], float).reshape(-1, d)
        X = np.array([pt["x"] for pt in pts], float).reshape(-1, d)
        return cls(d, float(obj["radius"]), float(obj["radius_fraction"]), int(obj["seed"]), P, X)

    def dump(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_json(), fh, indent=1, sort_keys=True)
            fh.write("\n")

    @classmethod
    def load(cls, path) -> "Cloud":
        with open(path) as fh:
            return cls.from_json(json.load(fh))

    def centroid(self) -> np.ndarray:
        return self.X.mean(axis=0) if len(self) else np.zeros(self.dimension)


def make_cloud(d: int, count: int, radius_fraction: float, seed: int, radius: float,
               center: Sequence[float] | None = None, spread: float = 1.0) -> Cloud:
    """Deterministic samples with ``|p| <= radius_fraction * radius`` and ``x`` in a box."""
    if not 0 < radius_fraction <= 1:
        raise ValueError("radius_fraction must lie in (0, 1]")
    if count < 0:
        raise ValueError("count must be non-negative")
    rng = np.random.default_rng(seed)
    u = groupoid.random_directions(rng, count, d) if count else np.zeros((0, d))
    # uniform in the ball: radial part ~ U^(1/d)
    rad = radius_fraction * radius * rng.random(count) ** (1.0 / d)
    c = np.zeros(d) if center is None else np.asarray(center, float)
    X = c + spread * rng.uniform(-1, 1, (count, d))
    return Cloud(d, radius, radius_fraction, seed, u * rad[:, None], X)


# -- helpers --------------------------------------------------------------------------

def is_x_independent(S: GenFunc) -> bool:
    xs = list(block("x", S.dimension))
    return all(max((P.degree_in(xs) or {0})) == 0 for P in S.terms)


def _mode(S: GenFunc, mode: str) -> str:
    if mode == "auto":
        return "absolute" if is_x_independent(S) else "slope"
    if mode not in ("absolute", "slope"):
        raise ValueError(f"unknown mode {mode!r}")
    return mode


def _directions(cloud: Cloud, k: int = SWEEP_DIRECTIONS):
    if len(cloud) == 0:
        raise ValueError("point cloud is empty")
    out = []
    for i in range(min(k, len(cloud))):
        p = cloud.P[i]
        n = np.linalg.norm(p)
        out.append((p / n if n > 0 else np.eye(cloud.dimension)[0], cloud.X[i]))
    return out


def sweep_start(S: GenFunc, cloud: Cloud) -> float:
    return cloud.radius_fraction * S.radius


def _slope_record(name, S, cloud, fn: Callable[[np.ndarray, np.ndarray, float], float], offset):
    """Residual at each halving scale is the max over the sweep directions."""
    r0 = sweep_start(S, cloud)
    dirs = _directions(cloud)
    norms = halving_sweep(r0)
    with Timer() as tm:
        res = [max(fn(u, x, t) for u, x in dirs) for t in norms]
    fit = fit_slope(norms, res)
    target = S.order + offset
    fit_val = round(fit.slope, 2) if not fit.exact else fit.slope
    status = PASS if fit.exact else slope_status(_rounded(fit), target)
    return CheckRecord(f"{name}.slope", fit_val, f">= {target}", status, tm.elapsed,
                       {"fit": fit.to_json()})


def _rounded(fit):
    # four-point fits of exactly scaling quantities land a hair off the integer
    return replace(fit, slope=round(fit.slope, 2))


def _abs_record(name, values: Sequence[float], tol: float, elapsed: float) -> CheckRecord:
    v = float(max(values)) if len(values) else 0.0
    return CheckRecord(f"{name}.max_residual", v, f"<= {tol:g}", tol_status(v, tol), elapsed)


# -- suites --------------------------------------------------------------------------

def verify_sgs(S: GenFunc, eps: float, cloud: Cloud, mode: str = "auto") -> list[CheckRecord]:
    mode = _mode(S, mode)
    out = []
    with Timer() as tm:
        unit = 0.0
        for p, x in zip(cloud.P, cloud.X):
            z = np.zeros_like(p)
            for v in (S.stack(p, z, x), S.stack(z, p, x)):
                e = Fraction(eps)
                pt = [Fraction(float(c)) for c in v]
                val = sum((e ** n * P.evaluate_exact(pt) for n, P in enumerate(S.terms, start=1)), Fraction(0))
                unit = max(unit, abs(float(val)))
    out.append(CheckRecord("sgs.unit", unit, "== 0", tol_status(unit, 0.0), tm.elapsed))
    if mode == "absolute":
        with Timer() as tm:
            vals = [groupoid.sgs_residual(S, eps, p, x) for p, x in zip(cloud.P, cloud.X)]
        out.append(_abs_record("sgs.inverse", vals, TOL["sgs"], tm.elapsed))
    else:
        out.append(_slope_record("sgs.inverse", S, cloud,
                                 lambda u, x, t: groupoid.sgs_residual(S, eps, t * u, x),
                                 SLOPE_OFFSET["sgs"]))
    return out


def _triples(cloud: Cloud):
    k = len(cloud)
    for i in range(k):
        yield cloud.P[i], cloud.P[(i + 1) % k], cloud.P[(i + 2) % k], cloud.X[i]


def verify_sga(S: GenFunc, eps: float, cloud: Cloud, mode: str = "auto") -> list[CheckRecord]:
    mode = _mode(S, mode)
    if mode == "absolute":
        with Timer() as tm:
            vals = [groupoid.sga_residual(S, eps, a, b, c, x) for a, b, c, x in _triples(cloud)]
        return [_abs_record("sga", vals, TOL["sga"], tm.elapsed)]
    # three independent directions per base point
    rng = np.random.default_rng(cloud.seed)
    extra = {tuple(x): groupoid.random_directions(rng, 2, S.dimension) for x in cloud.X[:SWEEP_DIRECTIONS]}

    def fn(u, x, t):
        v, w = extra[tuple(x)]
        return groupoid.sga_residual(S, eps, t * u, t * v, t * w, x)
    return [_slope_record("sga", S, cloud, fn, SLOPE_OFFSET["sga"])]


def verify_lie(S: GenFunc, eps: float, cloud: Cloud, mode: str = "auto") -> list[CheckRecord]:
    mode = _mode(S, mode)
    if mode == "absolute":
        with Timer() as tm:
            r = groupoid.lie_residuals(S, eps, (cloud.P, cloud.X))
        return [_abs_record("lie", [r.max()], TOL["lie"], tm.elapsed)]
    return [_slope_record("lie", S, cloud,
                          lambda u, x, t: groupoid.lie_residuals(S, eps, ((t * u)[None], x[None])).max(),
                          SLOPE_OFFSET["lie"])]


def verify_endpoints(S: GenFunc, ps: PoissonStructure, eps: float, cloud: Cloud, steps: int = 256,
                     mode: str = "auto") -> list[CheckRecord]:
    mode = _mode(S, mode)
    if mode == "absolute":
        with Timer() as tm:
            vals = [flows.endpoint_check(S, ps, eps, pt, steps).max() for pt in cloud.points()]
        return [_abs_record("endpoints", vals, TOL["endpoints"], tm.elapsed)]
    return [_slope_record("endpoints", S, cloud,
                          lambda u, x, t: flows.endpoint_check(S, ps, eps, groupoid.PhasePoint(t * u, x), steps).max(),
                          SLOPE_OFFSET["endpoints"])]


def verify_comparison(S: GenFunc, ps: PoissonStructure, eps: float, cloud: Cloud, steps: int = 256,
                      mode: str = "auto") -> list[CheckRecord]:
    mode = _mode(S, mode)
    if mode == "absolute":
        with Timer() as tm:
            vals = [flows.comparison_check(S, ps, eps, p, x, steps) for p, x in zip(cloud.P, cloud.X)]
        return [_abs_record("comparison", vals, TOL["comparison"], tm.elapsed)]
    return [_slope_record("comparison", S, cloud,
                          lambda u, x, t: flows.comparison_check(S, ps, eps, t * u, x, steps),
                          SLOPE_OFFSET["comparison"])]


def linear_hamiltonian(c: Sequence[float]) -> MultiPoly:
    d = len(c)
    f = MultiPoly.zero(d)
    for i, ci in enumerate(c):
        if ci:
            f = f + MultiPoly.variable(d, i, float(ci))
    return f


def truncation_scale(order: int, p_max: float, grad_f: float, duration: float = 1.0) -> float:
    """Size of the source drift allowed by an order-``N`` series.

    The Lie defect ``{s, t}`` of the truncated series is ``O(|p|^N)``, and the
    drift of ``s`` is its contraction with ``grad f`` integrated over time.
    """
    return duration * grad_f * p_max ** order


def verify_lift(S: GenFunc, ps: PoissonStructure, eps: float, cloud: Cloud, steps: int = 128,
                mode: str = "auto", c: Sequence[float] | None = None) -> list[CheckRecord]:
    """Hamiltonian lift of ``f = <c, x>``.

    In slope mode ``c`` defaults to ``t * e_1`` at sweep scale ``t``, which keeps
    ``|p(t)|`` of the order of the starting covector.
    """
    mode = _mode(S, mode)
    d = S.dimension
    if mode == "absolute":
        with Timer() as tm:
            cc = np.eye(d)[0] * sweep_start(S, cloud) if c is None else np.asarray(c, float)
            f = linear_hamiltonian(cc)
            res = [flows.hamiltonian_lift(S, eps, f, pt, steps, ps=ps) for pt in cloud.points()]
        drift = [r.source_drift for r in res]
        proj = [r.projection_mismatch for r in res]
        return [_abs_record("lift.source_drift", drift, TOL["lift"], tm.elapsed),
                _abs_record("lift.projection", proj, TOL["lift"], 0.0)]
    ratios, details = [], []
    with Timer() as tm:
        for t in halving_sweep(sweep_start(S, cloud)):
            cc = np.eye(d)[0] * t if c is None else np.asarray(c, float)
            f = linear_hamiltonian(cc)
            for u, x in _directions(cloud):
                r = flows.hamiltonian_lift(S, eps, f, groupoid.PhasePoint(t * u, x), steps, ps=ps)
                pmax = float(np.max(np.linalg.norm(r.trajectory.deviations[:, :d], axis=1)))
                tau = truncation_scale(S.order, pmax, float(np.max(np.abs(cc))))
                ratios.append(max(r.source_drift, r.projection_mismatch) / tau)
                details.append({"t": t, "drift": r.source_drift, "projection": r.projection_mismatch,
                                "scale": tau})
    v = float(max(ratios))
    return [CheckRecord("lift.drift_over_truncation_scale", v, "<= 1", tol_status(v, 1.0), tm.elapsed,
                        {"sweep": details})]


# -- weight-dependent checks -------------------------------------------------------------

def verify_weights(table: WeightTable) -> list[CheckRecord]:
    worst, bad = 0.0, 0
    with Timer() as tm:
        for rec in table.records.values():
            n = int(rec["graph"]["n"])
            worst = max(worst, abs(rec["value"]) / 4 ** n)
            bad += abs(rec["value"]) > 4 ** n + 3 * rec["std_error"]
    return [CheckRecord("weights.bound", worst, "|W| / 4^n <= 1 (+3 sigma)", PASS if bad == 0 else FAIL,
                        tm.elapsed)]


def closed_form(ps: PoissonStructure, N: int, base_point=None) -> GenFunc | None:
    """Closed-form series for constant or linear structures; ``None`` otherwise."""
    deg = ps.degree()
    if deg <= 0:
        S = constant_genfunc(ps, N)
        if base_point is not None:
            S.base_point = tuple(float(v) for v in base_point)
            S.M = analyticity_bound(ps, base_point)
        return S
    if deg == 1 and N <= 4:
        return cbh_genfunc(ps, N, base_point)
    return None


def coefficient_z(S: GenFunc, ref: GenFunc) -> float:
    """Largest ``|c - c_ref| / sigma`` over all coefficients; exact terms must agree to 1e-12."""
    worst = 0.0
    for P, Sig, R in zip(S.terms, S.sigma, ref.terms):
        keys = set(P.terms) | set(R.terms)
        for e in keys:
            diff = abs(float(P.terms.get(e, 0.0)) - float(R.terms.get(e, 0.0)))
            sig = float(Sig.terms.get(e, 0.0))
            if sig > 0:
                worst = max(worst, diff / sig)
            elif diff > 1e-12:
                return math.inf
    return worst


def verify_closed_form(S: GenFunc, ps: PoissonStructure) -> list[CheckRecord]:
    with Timer() as tm:
        ref = closed_form(ps, S.order, S.base_point)
        if ref is None:
            return []
        z = coefficient_z(S, ref)
    return [CheckRecord("genfunc.closed_form", z, "<= 3 sigma", tol_status(z, 3.0), tm.elapsed)]


def verify_induced_bivector(S: GenFunc, ps: PoissonStructure, eps: float, count: int = 20,
                            seed: int = 0, spread: float = 1.0) -> list[CheckRecord]:
    """``2 grad_p1 grad_p2 S(0, 0, x)`` against ``2 eps alpha(x)`` at random ``x``."""
    d = S.dimension
    rng = np.random.default_rng(seed)
    X = np.asarray(S.base_point) + spread * rng.uniform(-1, 1, (count, d))
    worst = 0.0
    with Timer() as tm:
        B = groupoid.induced_bivector(S, eps, X)
        sig = S.sigma[0]
        for k, x in enumerate(X):
            ref = 2 * eps * eval_bivector(ps, x)
            v = S.stack(np.zeros(d), np.zeros(d), np.abs(x))
            for i, a in enumerate(block("p1", d)):
                for j, b in enumerate(block("p2", d)):
                    # coefficient errors add up at most linearly in |x^beta|
                    s = 2 * eps * float(sig.derivative(a).derivative(b)(v))
                    diff = abs(B[k, i, j] - ref[i, j])
                    if s > 0:
                        worst = max(worst, diff / s)
                    elif diff > 1e-12:
                        worst = math.inf
    return [CheckRecord("genfunc.induced_bivector", worst, "<= 3 sigma", tol_status(worst, 3.0), tm.elapsed)]
