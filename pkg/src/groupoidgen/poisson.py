"""Sparse multivariate polynomials and polynomial Poisson bivectors."""
from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from numbers import Number
from typing import Iterable, Mapping, Sequence

import numpy as np

Exponent = tuple[int, ...]


# exact for rational coefficients; float round-off allowance otherwise
JACOBI_TOL = 1e-12


class DimensionError(ValueError):
    pass


class MultiPoly:
    """Polynomial in ``dimension`` variables stored as ``{exponent: coeff}``.

    Coefficients may be ints, Fractions or floats; arithmetic stays exact as
    long as the inputs are exact.  Zero coefficients are never stored.
    """

    __slots__ = ("dimension", "terms", "_compiled")

    def __init__(self, dimension: int, terms: Mapping[Sequence[int], Number] | None = None):
        if dimension < 1:
            raise DimensionError("dimension must be positive")
        self.dimension = dimension
        clean: dict[Exponent, Number] = {}
        for exp, c in (terms or {}).items():
            exp = tuple(int(e) for e in exp)
            if len(exp) != dimension:
                raise DimensionError(f"exponent {exp} has length != {dimension}")
            if any(e < 0 for e in exp):
                raise ValueError(f"negative exponent in {exp}")
            if c != 0:
                clean[exp] = clean.get(exp, 0) + c
                if clean[exp] == 0:
                    del clean[exp]
        self.terms = clean
        self._compiled = None

    # -- constructors ---------------------------------------------------------
    @classmethod
    def zero(cls, dimension: int) -> "MultiPoly":
        return cls(dimension)

    @classmethod
    def constant(cls, dimension: int, c: Number) -> "MultiPoly":
        return cls(dimension, {(0,) * dimension: c})

    @classmethod
    def variable(cls, dimension: int, axis: int, coeff: Number = 1) -> "MultiPoly":
        exp = [0] * dimension
        exp[axis] = 1
        return cls(dimension, {tuple(exp): coeff})

    @classmethod
    def _raw(cls, dimension: int, terms: dict) -> "MultiPoly":
        # trusted fast path: terms already pruned and validated
        obj = cls.__new__(cls)
        obj.dimension = dimension
        obj.terms = terms
        obj._compiled = None
        return obj

    # -- arithmetic -----------------------------------------------------------
    def _check(self, other: "MultiPoly"):
        if other.dimension != self.dimension:
            raise DimensionError(f"dimension mismatch: {self.dimension} vs {other.dimension}")

    def __add__(self, other):
        if isinstance(other, Number):
            other = MultiPoly.constant(self.dimension, other)
        self._check(other)
        out = dict(self.terms)
        for exp, c in other.terms.items():
            v = out.get(exp, 0) + c
            if v == 0:
                out.pop(exp, None)
            else:
                out[exp] = v
        return MultiPoly._raw(self.dimension, out)

    __radd__ = __add__

    def __neg__(self):
        return MultiPoly._raw(self.dimension, {e: -c for e, c in self.terms.items()})

    def __sub__(self, other):
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, Number):
            if other == 0:
                return MultiPoly.zero(self.dimension)
            return MultiPoly._raw(self.dimension, {e: c * other for e, c in self.terms.items()})
        self._check(other)
        out: dict[Exponent, Number] = {}
        for e1, c1 in self.terms.items():
            for e2, c2 in other.terms.items():
                e = tuple(a + b for a, b in zip(e1, e2))
                out[e] = out.get(e, 0) + c1 * c2
        return MultiPoly._raw(self.dimension, {e: c for e, c in out.items() if c != 0})

    __rmul__ = __mul__

    def __eq__(self, other):
        if isinstance(other, Number):
            other = MultiPoly.constant(self.dimension, other)
        if not isinstance(other, MultiPoly):
            return NotImplemented
        return self.dimension == other.dimension and self.terms == other.terms

    def __hash__(self):
        return hash((self.dimension, frozenset(self.terms.items())))

    def __repr__(self):
        if not self.terms:
            return f"MultiPoly({self.dimension}, 0)"
        parts = []
        for exp, c in sorted(self.terms.items()):
            mono = "*".join(f"v{i}^{e}" if e > 1 else f"v{i}" for i, e in enumerate(exp) if e)
            parts.append(f"{c}" + (f"*{mono}" if mono else ""))
        return f"MultiPoly({self.dimension}, " + " + ".join(parts) + ")"

    # -- queries --------------------------------------------------------------
    def is_zero(self) -> bool:
        return not self.terms

    def degree(self) -> int:
        return max((sum(e) for e in self.terms), default=0)

    def degree_in(self, axes: Iterable[int]) -> set[int]:
        axes = list(axes)
        return {sum(e[a] for a in axes) for e in self.terms}

    def max_abs_coeff(self) -> float:
        return max((abs(float(c)) for c in self.terms.values()), default=0.0)

    def derivative(self, axis: int) -> "MultiPoly":
        if not 0 <= axis < self.dimension:
            raise DimensionError(f"axis {axis} out of range for dimension {self.dimension}")
        out = {}
        for exp, c in self.terms.items():
            k = exp[axis]
            if k:
                e = list(exp)
                e[axis] = k - 1
                out[tuple(e)] = c * k
        return MultiPoly._raw(self.dimension, out)

    def map_coeffs(self, fn) -> "MultiPoly":
        return MultiPoly(self.dimension, {e: fn(c) for e, c in self.terms.items()})

    def embed(self, dimension: int, offset: int) -> "MultiPoly":
        """Re-express in a larger variable space, shifting variables by ``offset``."""
        if offset + self.dimension > dimension:
            raise DimensionError("embedding does not fit")
        out = {}
        for exp, c in self.terms.items():
            e = [0] * dimension
            e[offset:offset + self.dimension] = exp
            out[tuple(e)] = c
        return MultiPoly._raw(dimension, out)

    def substitute_scale(self, scales: Sequence[Number]) -> "MultiPoly":
        """Scale variable ``i`` by ``scales[i]``."""
        out = {}
        for exp, c in self.terms.items():
            f = c
            for s, e in zip(scales, exp):
                if e:
                    f = f * s ** e
            if f != 0:
                out[exp] = f
        return MultiPoly._raw(self.dimension, out)

    # -- evaluation -----------------------------------------------------------
    def _compile(self):
        if self._compiled is None:
            if self.terms:
                E = np.array(list(self.terms.keys()), dtype=np.int64)
                c = np.array([float(v) for v in self.terms.values()])
            else:
                E = np.zeros((0, self.dimension), dtype=np.int64)
                c = np.zeros(0)
            self._compiled = (E, c)
        return self._compiled

    def __call__(self, point) -> float | np.ndarray:
        """Evaluate at one point (shape ``(dim,)``) or a batch (``(m, dim)``)."""
        pt = np.asarray(point, dtype=float)
        if pt.shape[-1] != self.dimension:
            raise DimensionError(f"point has {pt.shape[-1]} coordinates, expected {self.dimension}")
        E, c = self._compile()
        batch = pt.reshape(-1, self.dimension)
        if len(c) == 0:
            vals = np.zeros(len(batch))
        else:
            vals = np.prod(batch[:, None, :] ** E[None, :, :], axis=2) @ c
        return float(vals[0]) if pt.ndim == 1 else vals

    def evaluate_exact(self, point: Sequence[Number]):
        tot = 0
        for exp, c in self.terms.items():
            # float coefficients are exact binary rationals; keep them so
            m = Fraction(c) if isinstance(c, float) else c
            for v, e in zip(point, exp):
                if e:
                    m = m * v ** e
            tot += m
        return tot

    # -- serialization ----------------------------------------------------------
    def to_json(self) -> list[dict]:
        return [{"exponents": list(e), "coeff": _coeff_to_json(c)}
                for e, c in sorted(self.terms.items())]

    @classmethod
    def from_json(cls, dimension: int, terms: list[dict]) -> "MultiPoly":
        return cls(dimension, _accumulate((tuple(t["exponents"]), t["coeff"]) for t in terms))


def _accumulate(pairs):
    out: dict = {}
    for e, c in pairs:
        out[e] = out.get(e, 0) + c
    return out


def _coeff_to_json(c):
    if isinstance(c, Fraction):
        return float(c) if c.denominator != 1 else int(c)
    return c if isinstance(c, int) else float(c)


def partial_derivative(p: MultiPoly, axis: int) -> MultiPoly:
    return p.derivative(axis)


# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PoissonStructure:
    """Polynomial bivector ``alpha^{ij}(x)`` on a chart of ``R^d``."""

    dimension: int
    bivector: tuple[tuple[MultiPoly, ...], ...]
    name: str = field(default="", compare=False)

    def __post_init__(self):
        d = self.dimension
        if len(self.bivector) != d or any(len(row) != d for row in self.bivector):
            raise DimensionError("bivector must be a d x d matrix")
        for i in range(d):
            for j in range(d):
                if self.bivector[i][j].dimension != d:
                    raise DimensionError(f"entry ({i},{j}) lives in the wrong dimension")
                if self.bivector[i][j] != -self.bivector[j][i]:
                    raise ValueError(f"bivector is not antisymmetric at ({i},{j})")
        res = jacobi_residual(self)
        if res > JACOBI_TOL:
            raise ValueError(f"bivector violates the Jacobi identity (residual {res:.3g})")

    def entry(self, i: int, j: int) -> MultiPoly:
        return self.bivector[i][j]

    def degree(self) -> int:
        return max(self.bivector[i][j].degree() for i in range(self.dimension)
                   for j in range(self.dimension))

    def is_zero(self) -> bool:
        return all(e.is_zero() for row in self.bivector for e in row)

    # -- constructors ---------------------------------------------------------
    @classmethod
    def from_upper(cls, dimension: int, upper: Mapping[tuple[int, int], MultiPoly], name="") -> "PoissonStructure":
        d = dimension
        mat = [[MultiPoly.zero(d) for _ in range(d)] for _ in range(d)]
        for (i, j), p in upper.items():
            if not (0 <= i < j < d):
                raise ValueError(f"upper-triangle entry ({i},{j}) must satisfy i < j < d")
            mat[i][j] = mat[i][j] + p
        for i in range(d):
            for j in range(i + 1, d):
                mat[j][i] = -mat[i][j]
        return cls(d, tuple(tuple(r) for r in mat), name)

    @classmethod
    def zero(cls, dimension: int) -> "PoissonStructure":
        return cls.from_upper(dimension, {}, name="zero")

    @classmethod
    def constant(cls, matrix) -> "PoissonStructure":
        d = len(matrix)
        upper = {(i, j): MultiPoly.constant(d, matrix[i][j])
                 for i in range(d) for j in range(i + 1, d) if matrix[i][j] != 0}
        ps = cls.from_upper(d, upper, name="constant")
        for i in range(d):
            for j in range(d):
                if matrix[i][j] != -matrix[j][i]:
                    raise ValueError("constant bivector must be antisymmetric")
        return ps

    @classmethod
    def linear(cls, structure_constants) -> "PoissonStructure":
        """``alpha^{ij}(x) = sum_k c[i][j][k] x^k``."""
        c = structure_constants
        d = len(c)
        upper = {}
        for i in range(d):
            for j in range(i + 1, d):
                p = MultiPoly(d, {tuple(int(a == k) for a in range(d)): c[i][j][k]
                                  for k in range(d) if c[i][j][k] != 0})
                if not p.is_zero():
                    upper[(i, j)] = p
        return cls.from_upper(d, upper, name="linear")

    @classmethod
    def so3(cls) -> "PoissonStructure":
        eps = [[[_levi_civita(i, j, k) for k in range(3)] for j in range(3)] for i in range(3)]
        ps = cls.linear(eps)
        return cls(3, ps.bivector, "so3")

    # -- JSON -----------------------------------------------------------------
    def to_json(self) -> dict:
        d = self.dimension
        return {
            "dimension": d,
            "bivector": [{"i": i, "j": j, "terms": self.bivector[i][j].to_json()}
                         for i in range(d) for j in range(i + 1, d)
                         if not self.bivector[i][j].is_zero()],
        }

    @classmethod
    def from_json(cls, obj: dict) -> "PoissonStructure":
        d = int(obj["dimension"])
        upper: dict = {}
        for ent in obj.get("bivector", []):
            i, j = int(ent["i"]), int(ent["j"])
            p = MultiPoly.from_json(d, ent.get("terms", []))
            if i > j:
                i, j, p = j, i, -p
            upper[(i, j)] = upper.get((i, j), MultiPoly.zero(d)) + p
        return cls.from_upper(d, upper, name=obj.get("name", ""))

    @classmethod
    def load(cls, path) -> "PoissonStructure":
        with open(path) as fh:
            return cls.from_json(json.load(fh))


def _levi_civita(i, j, k) -> int:
    if len({i, j, k}) < 3:
        return 0
    return 1 if (i, j, k) in ((0, 1, 2), (1, 2, 0), (2, 0, 1)) else -1


def eval_bivector(ps: PoissonStructure, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape != (ps.dimension,):
        raise DimensionError(f"point must have {ps.dimension} coordinates")
    d = ps.dimension
    out = np.zeros((d, d))
    for i in range(d):
        for j in range(i + 1, d):
            out[i, j] = ps.bivector[i][j](x)
            out[j, i] = -out[i, j]
    return out


def eval_bivector_batch(ps: PoissonStructure, xs: np.ndarray) -> np.ndarray:
    """Vectorized ``eval_bivector`` for points of shape ``(m, d)``."""
    xs = np.atleast_2d(np.asarray(xs, dtype=float))
    d = ps.dimension
    out = np.zeros((len(xs), d, d))
    for i in range(d):
        for j in range(i + 1, d):
            v = ps.bivector[i][j](xs)
            out[:, i, j] = v
            out[:, j, i] = -v
    return out


def jacobiator(ps: PoissonStructure, i: int, j: int, k: int) -> MultiPoly:
    a = ps.bivector
    tot = MultiPoly.zero(ps.dimension)
    for l in range(ps.dimension):
        tot = tot + a[l][k] * a[i][j].derivative(l)
        tot = tot + a[l][i] * a[j][k].derivative(l)
        tot = tot + a[l][j] * a[k][i].derivative(l)
    return tot


def jacobi_residual(ps: PoissonStructure) -> float:
    """Largest absolute coefficient of any Jacobiator polynomial."""
    d = ps.dimension
    worst = 0.0
    for i, j, k in itertools.combinations(range(d), 3):
        worst = max(worst, jacobiator(ps, i, j, k).max_abs_coeff())
    return worst


def multi_indices(d: int, order: int):
    """All ``beta`` in ``N^d`` with ``|beta| == order``."""
    for combo in itertools.combinations_with_replacement(range(d), order):
        beta = [0] * d
        for a in combo:
            beta[a] += 1
        yield tuple(beta)


def analyticity_bound(ps: PoissonStructure, x, max_order: int | None = None) -> float:
    """Smallest ``M >= 1`` with ``|d^beta alpha^{ij}(x)| <= M^(|beta|+1)`` for ``|beta| <= max_order``."""
    d = ps.dimension
    x = np.asarray(x, dtype=float)
    if x.shape != (d,):
        raise DimensionError(f"point must have {d} coordinates")
    if max_order is None:
        max_order = ps.degree()
    M = 1.0
    for i in range(d):
        for j in range(i + 1, d):
            derivs = {(0,) * d: ps.bivector[i][j]}
            for order in range(max_order + 1):
                nxt = {}
                for beta, p in derivs.items():
                    if p.is_zero():
                        continue
                    v = abs(p(x))
                    if v > 0:
                        M = max(M, v ** (1.0 / (order + 1)))
                    for a in range(d):
                        b = list(beta)
                        b[a] += 1
                        b = tuple(b)
                        if b not in nxt:
                            nxt[b] = p.derivative(a)
                derivs = nxt
    return M
