"""Groupoid maps built from a generating function and the identities they satisfy.

Conventions.  ``s(p, x) = grad_p2 S(p, 0, x)`` and ``t(p, x) = grad_p1 S(0, p, x)``.
The induced bivector is ``B(x) = 2 grad_p1 grad_p2 S(0, 0, x)``, which equals
``2 eps alpha(x)`` for any series built from ``alpha``.  The canonical bracket on
``T*U`` is taken as

    {f, g} = sum_u  df/dx^u dg/dp_u - df/dp_u dg/dx^u,

with which ``{s^i, s^j} = B^ij(s)`` and ``{t^i, t^j} = -B^ij(t)``.

Most quantities are evaluated as displacements from the base point ``x``,
using the part of ``S`` beyond ``<p1 + p2, x>``.  This keeps identities whose
residual is far below ``|x| * 1e-16`` measurable.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .genfunc import GenFunc, _check_args, block

NEWTON_TOL = 1e-14
MAX_ITER = 100


class OutOfChartError(ValueError):
    pass


class ConvergenceError(RuntimeError):
    pass


class SingularJacobianError(ArithmeticError):
    pass


@dataclass(frozen=True)
class PhasePoint:
    p: np.ndarray
    q: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "p", np.asarray(self.p, float))
        object.__setattr__(self, "q", np.asarray(self.q, float))
        if self.p.shape != self.q.shape:
            raise ValueError("p and q must have the same shape")


@dataclass(frozen=True)
class Chart:
    """Axis-aligned box standing in for the coordinate chart ``U``."""
    lower: np.ndarray
    upper: np.ndarray

    def check(self, x):
        x = np.asarray(x)
        if np.any(x < self.lower) or np.any(x > self.upper):
            raise OutOfChartError(f"point {x} leaves the chart")


# -- low-level derivative evaluation -------------------------------------------

def _grad(S: GenFunc, eps, p1, p2, x, which: str, start: int = 0) -> np.ndarray:
    v = S.stack(p1, p2, x)
    return np.stack([np.broadcast_to(S.eval_derivative((a,), eps, v, start), v.shape[:-1])
                     for a in block(which, S.dimension)], axis=-1)


def _hess(S: GenFunc, eps, p1, p2, x, w1: str, w2: str) -> np.ndarray:
    v = S.stack(p1, p2, x)
    d = S.dimension
    out = np.empty(v.shape[:-1] + (d, d))
    for ia, a in enumerate(block(w1, d)):
        for ib, b in enumerate(block(w2, d)):
            out[..., ia, ib] = S.eval_derivative((a, b), eps, v)
    return out


def source_disp(S: GenFunc, eps, p, x) -> np.ndarray:
    """``s(p, x) - x``."""
    p = np.asarray(p, float)
    return _grad(S, eps, p, np.zeros_like(p), x, "p2", start=1)


def target_disp(S: GenFunc, eps, p, x) -> np.ndarray:
    """``t(p, x) - x``."""
    p = np.asarray(p, float)
    return _grad(S, eps, np.zeros_like(p), p, x, "p1", start=1)


def source(S: GenFunc, eps: float, p, x, chart: Chart | None = None) -> np.ndarray:
    _check_args(S, eps, p, p, x)
    out = np.asarray(x, float) + source_disp(S, eps, p, x)
    if chart is not None:
        chart.check(out)
    return out


def target(S: GenFunc, eps: float, p, x, chart: Chart | None = None) -> np.ndarray:
    _check_args(S, eps, p, p, x)
    out = np.asarray(x, float) + target_disp(S, eps, p, x)
    if chart is not None:
        chart.check(out)
    return out


def induced_bivector(S: GenFunc, eps: float, x) -> np.ndarray:
    """``2 grad_p1 grad_p2 S(0, 0, x)``, shaped ``(..., d, d)``."""
    x = np.asarray(x, float)
    z = np.zeros_like(x)
    return 2.0 * _hess(S, eps, z, z, x, "p1", "p2")


def nondegeneracy(S: GenFunc, eps: float, p, x) -> float:
    """``det d s / d x`` at ``(p, x)``; ``s(p, .)`` is a local diffeomorphism iff nonzero."""
    p = np.asarray(p, float)
    J = _hess(S, eps, p, np.zeros_like(p), x, "x", "p2")
    return float(np.linalg.det(J))


def _check_nondegenerate(S, eps, p, x, tol=1e-8):
    det = nondegeneracy(S, eps, p, x)
    if abs(det) < tol:
        raise SingularJacobianError(f"d s/d x is singular (det = {det:.3g})")


def local_inverse_Q(S: GenFunc, eps: float, p, x) -> np.ndarray:
    """``Q(p, x) = grad_p2 S(-p, p, x)``; then ``s(p, Q(p, x)) = x`` to truncation order."""
    _check_args(S, eps, p, p, x)
    p = np.asarray(p, float)
    _check_nondegenerate(S, eps, p, x)
    return np.asarray(x, float) + Q_disp(S, eps, p, x)


def Q_disp(S: GenFunc, eps, p, x) -> np.ndarray:
    p = np.asarray(p, float)
    return _grad(S, eps, -p, p, x, "p2", start=1)


def Q_tilde(S: GenFunc, eps: float, p, x) -> np.ndarray:
    """``grad_p1 S(p, -p, x)``; then ``t(p, Q_tilde(p, x)) = x``."""
    _check_args(S, eps, p, p, x)
    return np.asarray(x, float) + Qt_disp(S, eps, p, x)


def Qt_disp(S: GenFunc, eps, p, x) -> np.ndarray:
    p = np.asarray(p, float)
    return _grad(S, eps, p, -p, x, "p1", start=1)


# -- symmetry -----------------------------------------------------------------

def sgs_residual(S: GenFunc, eps: float, p, x, exact: bool = True) -> float:
    """``|S(p, -p, x)|``.  The base term cancels identically and is left out."""
    p = np.asarray(p, float)
    v = S.stack(p, -p, x)
    if exact:
        from fractions import Fraction
        e = Fraction(eps)
        pt = [Fraction(float(c)) for c in v]
        val = sum((e ** n * P.evaluate_exact(pt) for n, P in enumerate(S.terms, start=1)), Fraction(0))
        return abs(float(val))
    return float(abs(S.eval_derivative((), eps, v, start=1)))


# -- associativity ------------------------------------------------------------

@dataclass
class AssocSolution:
    xbar: np.ndarray
    pbar: np.ndarray
    xtil: np.ndarray
    ptil: np.ndarray
    iterations: int


def _solve_pair(S: GenFunc, eps, x, a, b, c, left: bool, tol: float, max_iter: int):
    """Solve one side of the associativity system.

    ``left``:  xb = grad_p1 S(pb, c, x),  pb = grad_x S(a, b, xb).
    right:     xt = grad_p2 S(a, pt, x),  pt = grad_x S(b, c, xt).
    Unknowns are kept as displacements ``(xb - x, pb - (a + b))``.
    """
    d = S.dimension
    x = np.asarray(x, float)
    p0 = a + b if left else b + c

    def F(dx, dp):
        xb, pb = x + dx, p0 + dp
        if left:
            fx = _grad(S, eps, pb, c, x, "p1", start=1)
            fp = _grad(S, eps, a, b, xb, "x", start=1)
        else:
            fx = _grad(S, eps, a, pb, x, "p2", start=1)
            fp = _grad(S, eps, b, c, xb, "x", start=1)
        return fx, fp

    dx = np.zeros(d)
    dp = np.zeros(d)
    # damped fixed-point sweeps, seeded at the zero-structure solution
    it = 0
    for it in range(1, max_iter + 1):
        fx, fp = F(dx, dp)
        step = max(np.max(np.abs(fx - dx)), np.max(np.abs(fp - dp)))
        dx = dx + 0.5 * (fx - dx)
        dp = dp + 0.5 * (fp - dp)
        if step <= 1e-8 * (1 + np.max(np.abs(x))):
            break
    else:
        raise ConvergenceError("associativity fixed point did not converge")
    # Newton polish on G(dx, dp) = (dx - fx, dp - fp)
    for _ in range(20):
        xb, pb = x + dx, p0 + dp
        fx, fp = F(dx, dp)
        G = np.concatenate([dx - fx, dp - fp])
        if left:
            Hpp = _hess(S, eps, pb, c, x, "p1", "p1")
            Hxx = _hess(S, eps, a, b, xb, "x", "x")
        else:
            Hpp = _hess(S, eps, a, pb, x, "p2", "p2")
            Hxx = _hess(S, eps, b, c, xb, "x", "x")
        J = np.block([[np.eye(d), -Hpp], [-Hxx, np.eye(d)]])
        delta = np.linalg.solve(J, -G)
        dx, dp = dx + delta[:d], dp + delta[d:]
        if np.max(np.abs(delta)) <= NEWTON_TOL * max(1.0, np.max(np.abs(dx)), np.max(np.abs(dp))):
            break
    fx, fp = F(dx, dp)
    if max(np.max(np.abs(dx - fx)), np.max(np.abs(dp - fp))) > tol:
        raise ConvergenceError("associativity Newton polish did not converge")
    return x + dx, p0 + dp, it


def solve_associativity(S: GenFunc, eps: float, p1, p2, p3, x,
                        tol: float = 1e-12, max_iter: int = MAX_ITER) -> AssocSolution:
    a, b, c = (np.asarray(v, float) for v in (p1, p2, p3))
    _check_args(S, eps, a, b, x)
    xb, pb, i1 = _solve_pair(S, eps, x, a, b, c, True, tol, max_iter)
    xt, pt, i2 = _solve_pair(S, eps, x, a, b, c, False, tol, max_iter)
    return AssocSolution(xb, pb, xt, pt, max(i1, i2))


def sga_residual(S: GenFunc, eps: float, p1, p2, p3, x, exact: bool = True) -> float:
    """Difference of the two sides of the associativity identity.

    Both sides are stationary in the auxiliary unknowns, so solve errors enter
    quadratically; with ``exact=True`` the final combination is evaluated in
    rational arithmetic.
    """
    sol = solve_associativity(S, eps, p1, p2, p3, x)
    a, b, c = (np.asarray(v, float) for v in (p1, p2, p3))
    x = np.asarray(x, float)
    if exact:
        from fractions import Fraction

        def val(u, v, y):
            return S.eval_exact(eps, S.stack(u, v, y))

        def dot(u, v):
            return sum(Fraction(float(s)) * Fraction(float(t)) for s, t in zip(u, v))
    else:
        def val(u, v, y):
            return float(S.eval_derivative((), eps, S.stack(u, v, y)))

        def dot(u, v):
            return float(np.dot(u, v))

    lhs = val(a, b, sol.xbar) + val(sol.pbar, c, x) - dot(sol.xbar, sol.pbar)
    rhs = val(b, c, sol.xtil) + val(a, sol.ptil, x) - dot(sol.xtil, sol.ptil)
    return abs(float(lhs - rhs))


# -- Lie property ---------------------------------------------------------------

@dataclass
class LieResiduals:
    ss: float
    tt: float
    st: float

    def max(self) -> float:
        return max(self.ss, self.tt, self.st)


def _bracket(Fx, Fp, Gx, Gp):
    # Fx[..., i, u] = d f^i / d x^u
    return Fx @ np.swapaxes(Gp, -1, -2) - Fp @ np.swapaxes(Gx, -1, -2)


def lie_residuals(S: GenFunc, eps: float, sample: Sequence[PhasePoint] | tuple) -> LieResiduals:
    """Max over the sample of the three Lie-property residuals.

    ``sample`` is a sequence of :class:`PhasePoint` or a pair of ``(k, d)`` arrays.
    """
    if isinstance(sample, tuple) and len(sample) == 2 and not isinstance(sample[0], PhasePoint):
        P, X = (np.atleast_2d(np.asarray(a, float)) for a in sample)
    else:
        P = np.array([pt.p for pt in sample])
        X = np.array([pt.q for pt in sample])
    _check_args(S, eps, P, P, X)
    Z = np.zeros_like(P)
    # d s^j / d(.) : transpose of the mixed Hessians
    Sp = np.swapaxes(_hess(S, eps, P, Z, X, "p1", "p2"), -1, -2)
    Sx = np.swapaxes(_hess(S, eps, P, Z, X, "x", "p2"), -1, -2)
    Tp = np.swapaxes(_hess(S, eps, Z, P, X, "p2", "p1"), -1, -2)
    Tx = np.swapaxes(_hess(S, eps, Z, P, X, "x", "p1"), -1, -2)
    sv = X + source_disp(S, eps, P, X)
    tv = X + target_disp(S, eps, P, X)
    ss = _bracket(Sx, Sp, Sx, Sp) - induced_bivector(S, eps, sv)
    tt = _bracket(Tx, Tp, Tx, Tp) + induced_bivector(S, eps, tv)
    st = _bracket(Sx, Sp, Tx, Tp)
    return LieResiduals(float(np.max(np.abs(ss))), float(np.max(np.abs(tt))), float(np.max(np.abs(st))))


def random_directions(rng: np.random.Generator, k: int, d: int) -> np.ndarray:
    v = rng.standard_normal((k, d))
    return v / np.linalg.norm(v, axis=1, keepdims=True)
