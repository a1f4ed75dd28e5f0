"""Tree symbols and the truncated universal generating function.

Polynomials here live in ``3d`` variables ordered ``(p1, p2, x)``: indices
``0..d-1`` are the components of ``p1``, ``d..2d-1`` those of ``p2`` and
``2d..3d-1`` the base coordinates.
"""
from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
from typing import Sequence

import numpy as np

from .graphs import GROUND1, GROUND2, GraphError, KGraph, canonical_form, enumerate_trees
from .poisson import MultiPoly, PoissonStructure, analyticity_bound
from .weights import WeightTable


class MissingWeightError(KeyError):
    pass


class RadiusWarning(UserWarning):
    pass


P1, P2, X = "p1", "p2", "x"


def block(which: str, d: int) -> range:
    offsets = {P1: 0, P2: d, X: 2 * d}
    if which not in offsets:
        raise ValueError(f"unknown variable block {which!r}")
    return range(offsets[which], offsets[which] + d)


@dataclass(frozen=True)
class Symbol:
    poly: MultiPoly
    n: int

    def p_degrees(self, d: int) -> set[int]:
        return self.poly.degree_in(range(2 * d))


def _topological(g: KGraph) -> list[int]:
    indeg = {k: 0 for k in range(1, g.n + 1)}
    for _, t in g.aerial_edges():
        indeg[t] += 1
    ready = sorted(k for k, v in indeg.items() if v == 0)
    order = []
    while ready:
        k = ready.pop(0)
        order.append(k)
        for t in g.targets(k):
            if t > 0:
                indeg[t] -= 1
                if indeg[t] == 0:
                    ready.append(t)
    if len(order) != g.n:
        raise GraphError("skeleton has a directed cycle")
    return order


def tree_symbol(g: KGraph, ps: PoissonStructure) -> Symbol:
    """Polynomial ``B_Gamma(p1, p2, x)`` of a tree.

    Vertex ``k`` carries ``alpha^{i_k j_k}``, where ``i_k``/``j_k`` are the
    indices of its first/second edge.  An edge into another aerial vertex
    differentiates that vertex's factor along its index; an edge into ground
    ``1``/``2`` multiplies by the matching component of ``p1``/``p2``.
    """
    d = ps.dimension
    D = 3 * d
    order = _topological(g)
    incoming: dict[int, list[tuple[int, int]]] = {k: [] for k in range(1, g.n + 1)}
    for k in range(1, g.n + 1):
        for e, t in enumerate(g.targets(k)):
            if t > 0:
                incoming[t].append((k, e))

    deriv_cache: dict = {}

    def factor(i: int, j: int, axes: tuple[int, ...]) -> MultiPoly:
        key = (i, j, axes)
        if key not in deriv_cache:
            if axes:
                p = factor(i, j, axes[:-1]).derivative(2 * d + axes[-1])
            else:
                p = ps.bivector[i][j].embed(D, 2 * d)
            deriv_cache[key] = p
        return deriv_cache[key]

    pvars = {GROUND1: [MultiPoly.variable(D, a) for a in range(d)],
             GROUND2: [MultiPoly.variable(D, d + a) for a in range(d)]}
    # slot indices chosen so far, keyed by (vertex, edge slot)
    idx: dict[tuple[int, int], int] = {}
    total = MultiPoly.zero(D)

    def rec(pos: int, acc: MultiPoly):
        nonlocal total
        if pos == len(order):
            total = total + acc
            return
        k = order[pos]
        axes = tuple(sorted(idx[slot] for slot in incoming[k]))
        t1, t2 = g.targets(k)
        for i in range(d):
            for j in range(d):
                f = factor(i, j, axes)
                if f.is_zero():
                    continue
                term = acc * f
                if t1 < 0:
                    term = term * pvars[t1][i]
                if t2 < 0:
                    term = term * pvars[t2][j]
                idx[(k, 0)], idx[(k, 1)] = i, j
                rec(pos + 1, term)

    rec(0, MultiPoly.constant(D, 1))
    return Symbol(total, g.n)


def convergence_radius_for(M: float) -> float:
    return 1.0 / (64.0 * math.e * M * M)


@dataclass
class GenFunc:
    """``S = <p1 + p2, x> + sum_n eps^n S_n`` truncated at order ``N``."""

    dimension: int
    order: int
    terms: list[MultiPoly]
    sigma: list[MultiPoly]
    M: float
    base_point: tuple[float, ...]
    source: str = "kontsevich"
    _deriv: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def radius(self) -> float:
        return convergence_radius_for(self.M)

    @cached_property
    def base_term(self) -> MultiPoly:
        d = self.dimension
        D = 3 * d
        out = MultiPoly.zero(D)
        for a in range(d):
            e = [0] * D
            e[a] = 1
            e[2 * d + a] = 1
            out = out + MultiPoly(D, {tuple(e): 1})
            e = [0] * D
            e[d + a] = 1
            e[2 * d + a] = 1
            out = out + MultiPoly(D, {tuple(e): 1})
        return out

    def polys(self) -> list[MultiPoly]:
        """Base term followed by ``S_1 .. S_N``."""
        return [self.base_term, *self.terms]

    def derivative_poly(self, n: int, axes: tuple[int, ...]) -> MultiPoly:
        """``d^axes S_n`` with ``n = 0`` the base term; cached."""
        axes = tuple(sorted(axes))
        key = (n, axes)
        if key not in self._deriv:
            p = self.polys()[n] if not axes else self.derivative_poly(n, axes[:-1]).derivative(axes[-1])
            self._deriv[key] = p
        return self._deriv[key]

    def eval_derivative(self, axes: tuple[int, ...], eps: float, v: np.ndarray, start: int = 0):
        """Evaluate ``d^axes S`` at stacked point(s) ``v`` of length ``3d``.

        ``start=1`` drops the base term, which lets callers work with
        displacements from ``x`` without cancellation.
        """
        tot = 0.0
        for n in range(start, self.order + 1):
            p = self.derivative_poly(n, axes)
            if not p.is_zero():
                tot = tot + eps ** n * p(v)
        return tot

    def eval_exact(self, eps, v: Sequence) -> Fraction:
        """``S`` in rational arithmetic at a float point, coefficients taken as exact."""
        e = Fraction(eps)
        pt = [Fraction(float(c)) for c in v]
        return sum((e ** n * p.evaluate_exact(pt) for n, p in enumerate(self.polys())), Fraction(0))

    def stack(self, p1, p2, x) -> np.ndarray:
        return np.concatenate([np.asarray(p1, float), np.asarray(p2, float), np.asarray(x, float)], axis=-1)

    def to_json(self) -> dict:
        orders = []
        for n, (p, s) in enumerate(zip(self.terms, self.sigma), start=1):
            rows = []
            for exp, c in sorted(p.terms.items()):
                rows.append({"exponents": list(exp), "coeff": float(c),
                             "std_error": float(s.terms.get(exp, 0.0))})
            orders.append({"n": n, "terms": rows})
        return {"dimension": self.dimension, "order": self.order, "M": self.M,
                "radius": self.radius, "base_point": list(self.base_point),
                "source": self.source, "orders": orders}

    @classmethod
    def from_json(cls, obj: dict) -> "GenFunc":
        d = int(obj["dimension"])
        D = 3 * d
        terms, sigma = [], []
        for o in sorted(obj["orders"], key=lambda o: o["n"]):
            terms.append(MultiPoly(D, {tuple(t["exponents"]): t["coeff"] for t in o["terms"]}))
            sigma.append(MultiPoly(D, {tuple(t["exponents"]): t.get("std_error", 0.0) for t in o["terms"]}))
        return cls(d, int(obj["order"]), terms, sigma, float(obj["M"]),
                   tuple(obj.get("base_point", [0.0] * d)), obj.get("source", "kontsevich"))

    def dump(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_json(), fh, indent=1, sort_keys=True)

    @classmethod
    def load(cls, path) -> "GenFunc":
        with open(path) as fh:
            return cls.from_json(json.load(fh))


def _check_ground_edges(g: KGraph):
    grounds = {t for _, t in g.ground_edges()}
    if grounds != {GROUND1, GROUND2}:
        raise GraphError(f"tree {g.key()} misses a ground vertex; enumeration bug")


def build_genfunc(ps: PoissonStructure, N: int, weights: WeightTable,
                  base_point: Sequence[float] | None = None) -> GenFunc:
    """Assemble ``S_n = (1/n!) sum_Gamma W_Gamma B_Gamma`` for ``n <= N``.

    Coefficient standard errors treat trees of one symmetry class as fully
    correlated and distinct classes as independent.
    """
    if N < 1:
        raise ValueError("truncation order must be positive")
    d = ps.dimension
    D = 3 * d
    if base_point is None:
        base_point = np.zeros(d)
    M = analyticity_bound(ps, base_point)
    terms, sigma = [], []
    for n in range(1, N + 1):
        per_class: dict[KGraph, MultiPoly] = {}
        total = MultiPoly.zero(D)
        for g in enumerate_trees(n):
            _check_ground_edges(g)
            if g not in weights:
                raise MissingWeightError(f"no weight for tree {g.key()}")
            est = weights.get(g)
            sym = tree_symbol(g, ps).poly
            if sym.is_zero():
                continue
            total = total + sym * (est.value / math.factorial(n))
            rep, sign = canonical_form(g)
            # d S_n / d w_class, scaled by the class standard error
            contrib = sym * (sign * est.std_error / math.factorial(n))
            per_class[rep] = per_class.get(rep, MultiPoly.zero(D)) + contrib
        var: dict = {}
        for poly in per_class.values():
            for e, c in poly.terms.items():
                var[e] = var.get(e, 0.0) + float(c) ** 2
        terms.append(total.map_coeffs(float))
        sigma.append(MultiPoly(D, {e: math.sqrt(v) for e, v in var.items()}))
    return GenFunc(d, N, terms, sigma, M, tuple(float(v) for v in base_point))


# --- closed form for linear structures --------------------------------------

# Dynkin-ordered BCH terms through degree 5, as (coefficient, nested word).
# A word ``"XY"`` means [X, Y], ``"XXY"`` means [X, [X, Y]], and so on.
_BCH = {
    2: [(Fraction(1, 2), "XY")],
    3: [(Fraction(1, 12), "XXY"), (Fraction(1, 12), "YYX")],
    4: [(Fraction(-1, 24), "YXXY")],
    5: [(Fraction(-1, 720), "YYYYX"), (Fraction(-1, 720), "XXXXY"),
        (Fraction(1, 360), "XYYYX"), (Fraction(1, 360), "YXXXY"),
        (Fraction(1, 120), "YXYXY"), (Fraction(1, 120), "XYXYX")],
}


def structure_constants(ps: PoissonStructure):
    """``c[i][j][k]`` with ``alpha^{ij}(x) = sum_k c[i][j][k] x^k``; rejects non-linear input."""
    d = ps.dimension
    c = [[[0] * d for _ in range(d)] for _ in range(d)]
    for i in range(d):
        for j in range(d):
            for exp, coef in ps.bivector[i][j].terms.items():
                if sum(exp) != 1:
                    raise ValueError("closed form available only for linear bivectors")
                c[i][j][exp.index(1)] = coef
    return c


def cbh_genfunc(ps: PoissonStructure, N: int, base_point: Sequence[float] | None = None) -> GenFunc:
    """``<x, CBH(eps p1, eps p2)> / eps`` for a linear bivector, truncated at order ``N``.

    The bracket is normalized as ``[a, b]_k = 2 c^{ij}_k a_i b_j`` so that the
    first-order term equals ``alpha^{ij}(x) p1_i p2_j``.
    """
    if not 1 <= N <= 4:
        raise ValueError("closed-form CBH terms are tabulated for 1 <= N <= 4")
    d = ps.dimension
    D = 3 * d
    c = structure_constants(ps)
    Xv = [MultiPoly.variable(D, a) for a in range(d)]
    Yv = [MultiPoly.variable(D, d + a) for a in range(d)]

    def bracket(A, B):
        out = []
        for k in range(d):
            acc = MultiPoly.zero(D)
            for i in range(d):
                for j in range(d):
                    if c[i][j][k]:
                        acc = acc + (A[i] * B[j]) * (2 * c[i][j][k])
            out.append(acc)
        return out

    def word(w):
        vec = Xv if w[-1] == "X" else Yv
        for ch in reversed(w[:-1]):
            vec = bracket(Xv if ch == "X" else Yv, vec)
        return vec

    terms, sigma = [], []
    for n in range(1, N + 1):
        acc = [MultiPoly.zero(D) for _ in range(d)]
        for coef, w in _BCH[n + 1]:
            vec = word(w)
            acc = [a + v * coef for a, v in zip(acc, vec)]
        s = MultiPoly.zero(D)
        for k in range(d):
            s = s + acc[k] * MultiPoly.variable(D, 2 * d + k)
        terms.append(s)
        sigma.append(MultiPoly.zero(D))
    if base_point is None:
        base_point = np.zeros(d)
    M = analyticity_bound(ps, base_point)
    return GenFunc(d, N, terms, sigma, M, tuple(float(v) for v in base_point), source="cbh")


def constant_genfunc(ps: PoissonStructure, N: int = 1) -> GenFunc:
    """``<p1 + p2, x> + eps alpha^{ij} p1_i p2_j`` for a constant bivector."""
    d = ps.dimension
    D = 3 * d
    s = MultiPoly.zero(D)
    for i in range(d):
        for j in range(d):
            p = ps.bivector[i][j]
            if p.degree() > 0:
                raise ValueError("bivector is not constant")
            if not p.is_zero():
                s = s + MultiPoly.variable(D, i) * MultiPoly.variable(D, d + j) * p.terms[(0,) * d]
    terms = [s] + [MultiPoly.zero(D) for _ in range(N - 1)]
    return GenFunc(d, N, terms, [MultiPoly.zero(D) for _ in range(N)],
                   analyticity_bound(ps, np.zeros(d)), tuple([0.0] * d), source="constant")


# --- evaluation ------------------------------------------------------------

def _check_args(S: GenFunc, eps: float, *vecs):
    if not 0 <= eps < 1:
        raise ValueError("eps must lie in [0, 1)")
    for v in vecs:
        a = np.asarray(v, dtype=float)
        if a.shape[-1] != S.dimension:
            raise ValueError(f"argument has {a.shape[-1]} components, expected {S.dimension}")
        if not np.all(np.isfinite(a)):
            raise ValueError("non-finite argument")
    for v in vecs[:2]:
        if np.max(np.linalg.norm(np.atleast_2d(v), axis=-1)) > S.radius:
            warnings.warn("momentum outside the guaranteed convergence ball", RadiusWarning, stacklevel=3)


def eval_genfunc(S: GenFunc, eps: float, p1, p2, x):
    _check_args(S, eps, p1, p2, x)
    return S.eval_derivative((), eps, S.stack(p1, p2, x))


def grad_genfunc(S: GenFunc, eps: float, p1, p2, x, which: str) -> np.ndarray:
    _check_args(S, eps, p1, p2, x)
    v = S.stack(p1, p2, x)
    return np.stack([np.broadcast_to(S.eval_derivative((a,), eps, v), v.shape[:-1])
                     for a in block(which, S.dimension)], axis=-1)


def hess_genfunc(S: GenFunc, eps: float, p1, p2, x, which1: str, which2: str) -> np.ndarray:
    """Mixed second derivatives ``d^2 S / d which1_a d which2_b``, shaped ``(..., d, d)``."""
    v = S.stack(p1, p2, x)
    d = S.dimension
    out = np.empty(v.shape[:-1] + (d, d))
    for ia, a in enumerate(block(which1, d)):
        for ib, b in enumerate(block(which2, d)):
            out[..., ia, ib] = S.eval_derivative((a, b), eps, v)
    return out


def convergence_radius(S: GenFunc) -> float:
    return S.radius
