"""Poisson flows, the symmetric solution of the Lie system and the Hamiltonian lift.

The Poisson flow of a covector ``p`` is ``xdot = B(x) p`` with
``B = 2 eps alpha``.  Integrations run in deviation form (``x = x0 + y``),
which keeps the small displacements accurate to relative precision.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .genfunc import GenFunc, _check_args
from .groupoid import (ConvergenceError, OutOfChartError, PhasePoint, Q_disp, Qt_disp, _hess,
                       source_disp, target_disp)
from .poisson import MultiPoly, PoissonStructure, eval_bivector_batch

FD_STEP = 1e-6


@dataclass
class Trajectory:
    times: np.ndarray
    origin: np.ndarray
    deviations: np.ndarray
    labels: list[str] = field(default_factory=list)

    @property
    def states(self) -> np.ndarray:
        return self.origin + self.deviations

    @property
    def end(self) -> np.ndarray:
        return self.states[-1]

    def to_csv(self, path):
        cols = self.labels or [f"y{i}" for i in range(self.deviations.shape[1])]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", *cols])
            for t, row in zip(self.times, self.states):
                w.writerow([repr(float(t)), *(repr(float(v)) for v in row)])


def rk4(rhs: Callable[[np.ndarray], np.ndarray], y0: np.ndarray, duration: float, steps: int) -> np.ndarray:
    """Fixed-step classical Runge-Kutta for an autonomous system; returns all states."""
    if steps < 1:
        raise ValueError("steps must be positive")
    h = duration / steps
    ys = np.empty((steps + 1,) + np.shape(y0))
    ys[0] = y = np.asarray(y0, float)
    for k in range(steps):
        k1 = rhs(y)
        k2 = rhs(y + 0.5 * h * k1)
        k3 = rhs(y + 0.5 * h * k2)
        k4 = rhs(y + h * k3)
        y = y + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        if not np.all(np.isfinite(y)):
            raise FloatingPointError("integration produced non-finite values")
        ys[k + 1] = y
    return ys


def _bivector(ps: PoissonStructure, eps: float, x) -> np.ndarray:
    x = np.asarray(x, float)
    return 2.0 * eps * eval_bivector_batch(ps, x.reshape(-1, ps.dimension)).reshape(x.shape + (x.shape[-1],))


def poisson_flow(ps: PoissonStructure, eps: float, p, x0, steps: int = 256,
                 duration: float = 1.0, box: float | None = None) -> Trajectory:
    """Integrate ``xdot = B(x) p`` from ``x0``; ``box`` bounds ``|x - x0|_inf``."""
    p = np.asarray(p, float)
    x0 = np.asarray(x0, float)

    def rhs(y):
        if box is not None and np.max(np.abs(y)) > box:
            raise OutOfChartError("Poisson flow left the bounding box")
        return _bivector(ps, eps, x0 + y) @ p

    ys = rk4(rhs, np.zeros_like(x0), duration, steps)
    return Trajectory(np.linspace(0, duration, steps + 1), x0, ys,
                      [f"x{i}" for i in range(len(x0))])


def _simpson(ys: np.ndarray, h: float) -> np.ndarray:
    if (len(ys) - 1) % 2:
        raise ValueError("Simpson's rule needs an even number of steps")
    w = np.ones(len(ys))
    w[1:-1:2] = 4
    w[2:-1:2] = 2
    return (h / 3.0) * np.tensordot(w, ys, axes=1)


def symmetric_Q_disp(ps: PoissonStructure, eps: float, p, x, steps: int = 256) -> np.ndarray:
    """``Q'(p, x) - x``: the time average of the flow displacement."""
    tr = poisson_flow(ps, eps, p, x, steps)
    return _simpson(tr.deviations, 1.0 / steps)


def karasev_Q(ps: PoissonStructure, eps: float, p, x, steps: int = 256) -> np.ndarray:
    """``Q'(p, x) = int_0^1 x(t) dt`` along the Poisson flow of ``p`` from ``x``."""
    return np.asarray(x, float) + symmetric_Q_disp(ps, eps, p, x, steps)


def _fd_jacobian(fn, x, h=FD_STEP):
    cols = []
    for u in range(len(x)):
        e = np.zeros(len(x))
        e[u] = h
        cols.append((fn(x + e) - fn(x - e)) / (2 * h))
    return np.stack(cols, axis=1)


def symmetric_source_disp(ps: PoissonStructure, eps: float, p, q, steps: int = 256,
                          guess=None, tol: float = 1e-13, max_iter: int = 50) -> np.ndarray:
    """``z = s'(p, q) - q`` where ``Q'(p, q + z) = q``, by damped Newton."""
    q = np.asarray(q, float)

    def G(z):
        return z + symmetric_Q_disp(ps, eps, p, q + z, steps)

    z = -symmetric_Q_disp(ps, eps, p, q, steps) if guess is None else np.asarray(guess, float) - q
    g = G(z)
    for _ in range(max_iter):
        J = _fd_jacobian(lambda zz: G(zz), z)
        delta = np.linalg.solve(J, -g)
        lam = 1.0
        while True:
            z_new = z + lam * delta
            g_new = G(z_new)
            if np.linalg.norm(g_new) <= np.linalg.norm(g) or lam < 1e-3:
                break
            lam *= 0.5
        small = np.max(np.abs(lam * delta)) <= 1e-15 * max(1.0, np.max(np.abs(z)))
        z, g = z_new, g_new
        if small or np.max(np.abs(g)) == 0.0:
            break
    if np.max(np.abs(g)) > tol:
        raise ConvergenceError(f"symmetric source solve stalled at residual {np.max(np.abs(g)):.3g}")
    return z


def symmetric_source(ps: PoissonStructure, eps: float, p, q, steps: int = 256, guess=None) -> np.ndarray:
    return np.asarray(q, float) + symmetric_source_disp(ps, eps, p, q, steps, guess)


# -- checks against the generating function -------------------------------------

@dataclass
class EndpointReport:
    mismatch: float       # |x(1) - t(p, q)| along the flow from s(p, q)
    q_from_start: float   # |Q(p, x(0)) - q|
    q_from_end: float     # |Q_tilde(p, x(1)) - q|
    lift_mismatch: float  # |(p(1), q(1)) - (p, q)| for the linear lift from (0, s(p, q))

    def max(self) -> float:
        return max(self.mismatch, self.q_from_start, self.q_from_end, self.lift_mismatch)


def endpoint_check(S: GenFunc, ps: PoissonStructure, eps: float, pt: PhasePoint,
                   steps: int = 256) -> EndpointReport:
    p, q = pt.p, pt.q
    _check_args(S, eps, p, p, q)
    y0 = source_disp(S, eps, p, q)
    ys = rk4(lambda y: _bivector(ps, eps, q + y) @ p, y0, 1.0, steps)
    y1 = ys[-1]
    mism = np.max(np.abs(y1 - target_disp(S, eps, p, q)))
    qs = np.max(np.abs(y0 + Q_disp(S, eps, p, q + y0)))
    qe = np.max(np.abs(y1 + Qt_disp(S, eps, p, q + y1)))
    lin = MultiPoly.zero(S.dimension)
    for i, c in enumerate(p):
        lin = lin + MultiPoly.variable(S.dimension, i, float(c))
    lift = _lift_states(S, eps, lin, np.zeros_like(p), q, y0, steps, 1.0)
    P, DQ = lift[-1]
    lm = max(np.max(np.abs(P - p)), np.max(np.abs(DQ)))
    return EndpointReport(float(mism), float(qs), float(qe), float(lm))


def comparison_check(S: GenFunc, ps: PoissonStructure, eps: float, p, x, steps: int = 256) -> float:
    """``|Q(p, x) - Q'(p, x)|`` between the series solution and the symmetric one."""
    _check_args(S, eps, p, p, x)
    return float(np.max(np.abs(Q_disp(S, eps, p, x) - symmetric_Q_disp(ps, eps, p, x, steps))))


@dataclass
class ExpMapResult:
    p_end: np.ndarray
    pbar: np.ndarray
    path: np.ndarray

    @property
    def error(self) -> float:
        return float(np.max(np.abs(self.p_end - self.pbar)))


def _target_q_jacobian(S: GenFunc, eps, p, q) -> np.ndarray:
    # Tq[i, u] = d t^i / d q^u
    return np.swapaxes(_hess(S, eps, np.zeros_like(p), p, q, "x", "p1"), -1, -2)


def exp_map(S: GenFunc | None, eps: float, x0, pbar, steps: int = 32, solution: str = "genfunc",
            ps: PoissonStructure | None = None, flow_steps: int = 128) -> ExpMapResult:
    """Integrate ``pdot = (d t / d q)^T pbar`` along ``q = Q(p, x0)`` from ``p = 0``.

    ``solution="genfunc"`` uses the maps of ``S``; ``"symmetric"`` uses the symmetric
    solution of ``ps``, whose target Jacobian is the inverse of ``d Q'(-p, .)/dx``
    at the flow endpoint.
    """
    x0 = np.asarray(x0, float)
    pbar = np.asarray(pbar, float)
    if solution == "genfunc":
        if S is None:
            raise ValueError("the genfunc solution needs S")

        def rhs(p):
            q = x0 + Q_disp(S, eps, p, x0)
            return _target_q_jacobian(S, eps, p, q).T @ pbar
    elif solution == "symmetric":
        if ps is None:
            raise ValueError("the symmetric solution needs a Poisson structure")

        def rhs(p):
            q = x0 + symmetric_Q_disp(ps, eps, p, x0, flow_steps)
            x1 = poisson_flow(ps, eps, p, x0, flow_steps).end
            x1 = q + symmetric_source_disp(ps, eps, -p, q, flow_steps, guess=x1)
            J = np.eye(len(x0)) + _fd_jacobian(lambda x: symmetric_Q_disp(ps, eps, -p, x, flow_steps), x1)
            return np.linalg.solve(J, np.eye(len(x0))).T @ pbar
    else:
        raise ValueError(f"unknown solution {solution!r}")
    path = rk4(rhs, np.zeros_like(pbar), 1.0, steps)
    return ExpMapResult(path[-1], pbar, path)


# -- Hamiltonian lift -------------------------------------------------------------

def _lift_states(S: GenFunc, eps, f: MultiPoly, p0, q0, dq0, steps, duration):
    """RK4 for ``H = -f(t(p, q))``; state is ``(p, q - q0)``."""
    d = S.dimension
    grad_f = [f.derivative(i) for i in range(d)]

    def rhs(y):
        p, dq = y
        q = q0 + dq
        t = q + target_disp(S, eps, p, q)
        g = np.array([float(gi(t)) for gi in grad_f])
        Tp = np.swapaxes(_hess(S, eps, np.zeros_like(p), p, q, "p2", "p1"), -1, -2)
        Tq = _target_q_jacobian(S, eps, p, q)
        return np.stack([Tq.T @ g, -Tp.T @ g])

    return rk4(rhs, np.stack([np.asarray(p0, float), np.asarray(dq0, float)]), duration, steps)


@dataclass
class LiftResult:
    trajectory: Trajectory
    source_drift: float
    projection_mismatch: float | None


def hamiltonian_lift(S: GenFunc, eps: float, f: MultiPoly, start: PhasePoint, steps: int = 128,
                     duration: float = 1.0, ps: PoissonStructure | None = None) -> LiftResult:
    """Lift the Hamiltonian ``f`` on ``U`` to ``H = -f o t``.

    Reports the drift of ``s`` and, when ``ps`` is given, the distance between
    ``t(p(t), q(t))`` and an independent Poisson flow ``xdot = B(x) grad f(x)``.
    """
    d = S.dimension
    p0, q0 = start.p, start.q
    _check_args(S, eps, p0, p0, q0)
    ys = _lift_states(S, eps, f, p0, q0, np.zeros(d), steps, duration)
    P, DQ = ys[:, 0], ys[:, 1]
    s0 = source_disp(S, eps, p0, q0)
    drift = np.max(np.abs(DQ + source_disp(S, eps, P, q0 + DQ) - s0))
    times = np.linspace(0, duration, steps + 1)
    traj = Trajectory(times, np.concatenate([np.zeros(d), q0]), np.concatenate([P, DQ], axis=1),
                      [f"p{i}" for i in range(d)] + [f"q{i}" for i in range(d)])
    mism = None
    if ps is not None:
        grad_f = [f.derivative(i) for i in range(d)]
        t0 = target_disp(S, eps, p0, q0)
        t_path = DQ + target_disp(S, eps, P, q0 + DQ)  # t(p(t), q(t)) - q0

        def rhs(y):
            x = q0 + y
            return _bivector(ps, eps, x) @ np.array([float(g(x)) for g in grad_f])

        ref = rk4(rhs, t0, duration, steps)
        mism = float(np.max(np.abs(t_path - ref)))
    return LiftResult(traj, float(drift), mism)
