"""Monte-Carlo evaluation of Kontsevich tree weights.

The weight of a tree is

    W = (2 pi)^(-2n) * integral over H^n of det(d psi),

where ``psi`` sends a configuration of aerial points to the 2n harmonic angles
of its edges.  Ground vertices are pinned at 0 and 1 and the product
orientation ``dx1 dy1 ... dxn dyn`` is used.

Sampling is sequential along the undirected skeleton: the root point is drawn
from a mixture concentrated near the two ground points and with a ``|z|^-3``
tail, each other point is drawn around its skeleton parent at the parent's
height scale.  This matches the singular behaviour of the integrand near the
boundary strata, so the estimator has finite variance.
"""
from __future__ import annotations

import hashlib
import json
import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy.optimize import least_squares

from .graphs import GROUND1, GROUND2, KGraph, canonical_form

log = logging.getLogger(__name__)

GROUND_POSITIONS = {GROUND1: 0.0, GROUND2: 1.0}
COLLISION_CUTOFF = 1e-9
MAX_DISCARD_FRACTION = 0.01
MIN_SAMPLES = 10_000
CHUNK = 50_000

# mixture weights and scales of the proposal
_ROOT_NEAR = 0.35        # each of the two ground points
_ROOT_RADIUS = 2.0
_TAIL_RADIUS = 1.0
_CHILD_LOCAL = 0.7       # share of the parent-centred component for children


class WeightError(RuntimeError):
    pass


@dataclass(frozen=True)
class HPoint:
    re: float
    im: float

    def __post_init__(self):
        if not self.im > 0:
            raise ValueError("HPoint must lie in the open upper half-plane")

    def __complex__(self):
        return complex(self.re, self.im)


def _as_point(w) -> complex:
    if isinstance(w, (int, np.integer)) and int(w) in GROUND_POSITIONS:
        return complex(GROUND_POSITIONS[int(w)])
    return complex(w)


def harmonic_angle(z, w) -> float:
    """``arg((w - z) / (w - conj z))`` reduced to ``[0, 2 pi)``.

    ``w`` may be an upper half-plane point or one of ``GROUND1``/``GROUND2``.
    """
    z = complex(z)
    if not z.imag > 0:
        raise ValueError("z must lie in the upper half-plane")
    w = _as_point(w)
    if abs(w - z) == 0:
        raise ValueError("harmonic angle undefined for coincident points")
    return float(np.angle((w - z) / (w - z.conjugate())) % (2 * np.pi))


def angle_gradient(z: np.ndarray, w: np.ndarray):
    """Partials of the harmonic angle w.r.t. (Re z, Im z, Re w, Im w)."""
    iu = 1.0 / (w - z)
    iv = 1.0 / (w - np.conj(z))
    return (-iu.imag + iv.imag, -iu.real - iv.real,
            iu.imag - iv.imag, iu.real - iv.real)


# --- proposal ---------------------------------------------------------------

def _root_density(z: np.ndarray) -> np.ndarray:
    out = np.zeros(z.shape)
    upper = z.imag > 0
    for c in (0.0, 1.0):
        r = np.abs(z - c)
        m = upper & (r < _ROOT_RADIUS)
        out[m] += _ROOT_NEAR / (np.pi * _ROOT_RADIUS * r[m])
    r = np.abs(z - 0.5)
    m = upper & (r >= _TAIL_RADIUS)
    out[m] += (1 - 2 * _ROOT_NEAR) * _TAIL_RADIUS / (np.pi * r[m] ** 3)
    return out


def _root_sample(rng: np.random.Generator, m: int) -> np.ndarray:
    u = rng.random(m)
    r01 = rng.random(m)
    th = np.pi * rng.random(m)
    near0 = u < _ROOT_NEAR
    near1 = (u >= _ROOT_NEAR) & (u < 2 * _ROOT_NEAR)
    tail = ~(near0 | near1)
    r = np.where(tail, _TAIL_RADIUS / (1.0 - r01), _ROOT_RADIUS * r01)
    centre = np.where(near1, 1.0, np.where(near0, 0.0, 0.5))
    return centre + r * np.exp(1j * th)


def _child_density(z: np.ndarray, zp: np.ndarray) -> np.ndarray:
    h = zp.imag
    r = np.maximum(np.abs(z - zp), 1e-300)
    rho = r / h
    pr = np.where(rho < 1, 0.5, 0.5 / rho ** 2) / h
    return _CHILD_LOCAL * pr / (2 * np.pi * r) + (1 - _CHILD_LOCAL) * _root_density(z)


def _child_sample(rng: np.random.Generator, zp: np.ndarray) -> np.ndarray:
    m = len(zp)
    u = rng.random(m)
    r01 = rng.random(m)
    th = 2 * np.pi * rng.random(m)
    fallback = _root_sample(rng, m)
    inner = u < _CHILD_LOCAL / 2
    outer = (u >= _CHILD_LOCAL / 2) & (u < _CHILD_LOCAL)
    rho = np.where(inner, r01, 1.0 / (1.0 - r01))
    local = zp + zp.imag * rho * np.exp(1j * th)
    return np.where(inner | outer, local, fallback)


def _skeleton_bfs(g: KGraph) -> list[tuple[int, int | None]]:
    adj = {k: set() for k in range(1, g.n + 1)}
    for a, b in g.aerial_edges():
        adj[a].add(b)
        adj[b].add(a)
    order: list[tuple[int, int | None]] = []
    seen: set[int] = set()
    for root in range(1, g.n + 1):
        if root in seen:
            continue
        # forests get one independent root per component
        queue = [(root, None)]
        seen.add(root)
        while queue:
            k, par = queue.pop(0)
            order.append((k, par))
            for w in sorted(adj[k]):
                if w not in seen:
                    seen.add(w)
                    queue.append((w, k))
    return order


def _integrand_chunk(g: KGraph, m: int, rng: np.random.Generator):
    """Return (sum f, sum f^2, number discarded) over ``m`` proposal draws."""
    n = g.n
    Z = np.empty((n, m), dtype=complex)
    dens = np.ones(m)
    for k, par in _skeleton_bfs(g):
        if par is None:
            Z[k - 1] = _root_sample(rng, m)
            dens *= _root_density(Z[k - 1])
        else:
            Z[k - 1] = _child_sample(rng, Z[par - 1])
            dens *= _child_density(Z[k - 1], Z[par - 1])
    upper = (Z.imag > 0).all(axis=0)

    # collisions among aerial points and with the ground points
    collide = np.zeros(m, dtype=bool)
    for a in range(n):
        collide |= np.abs(Z[a]) < COLLISION_CUTOFF
        collide |= np.abs(Z[a] - 1.0) < COLLISION_CUTOFF
        for b in range(a + 1, n):
            collide |= np.abs(Z[a] - Z[b]) < COLLISION_CUTOFF
    live = upper & ~collide
    Zl = Z[:, live]
    ml = Zl.shape[1]

    J = np.zeros((ml, 2 * n, 2 * n))
    for k in range(1, n + 1):
        for e, t in enumerate(g.targets(k)):
            row = 2 * (k - 1) + e
            w = np.full(ml, GROUND_POSITIONS[t], dtype=complex) if t < 0 else Zl[t - 1]
            dzx, dzy, dwx, dwy = angle_gradient(Zl[k - 1], w)
            J[:, row, 2 * (k - 1)] += dzx
            J[:, row, 2 * (k - 1) + 1] += dzy
            if t > 0:
                J[:, row, 2 * (t - 1)] += dwx
                J[:, row, 2 * (t - 1) + 1] += dwy
    with np.errstate(all="ignore"):
        f = np.linalg.det(J) / dens[live] / (2 * np.pi) ** (2 * n)
    finite = np.isfinite(f)
    f = f[finite]
    discarded = int(collide.sum() + (~finite).sum())
    return float(f.sum()), float((f * f).sum()), discarded


@dataclass(frozen=True)
class WeightEstimate:
    value: float
    std_error: float
    samples: int
    graph: KGraph
    discarded: int = 0
    seed: int | None = None

    def within_bound(self, slack: float = 3.0) -> bool:
        return abs(self.value) <= 4.0 ** self.graph.n + slack * self.std_error


def _chunk_seeds(seed: int, samples: int) -> list[tuple[np.random.SeedSequence, int]]:
    n_chunks = max(1, math.ceil(samples / CHUNK))
    sizes = [CHUNK] * (n_chunks - 1) + [samples - CHUNK * (n_chunks - 1)]
    return list(zip(np.random.SeedSequence(seed).spawn(n_chunks), sizes))


def weight_mc(g: KGraph, samples: int, seed: int, workers: int = 1) -> WeightEstimate:
    """Importance-sampled estimate of the weight of ``g``.

    The sample budget is split into fixed-size chunks with sub-seeds spawned
    from ``seed``; the result does not depend on ``workers``.
    """
    if samples < MIN_SAMPLES:
        raise ValueError(f"weight_mc needs at least {MIN_SAMPLES} samples")
    jobs = _chunk_seeds(seed, samples)

    def run(job):
        ss, size = job
        return _integrand_chunk(g, size, np.random.default_rng(ss))

    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            parts = list(pool.map(run, jobs))
    else:
        parts = [run(j) for j in jobs]
    s1 = sum(p[0] for p in parts)
    s2 = sum(p[1] for p in parts)
    discarded = sum(p[2] for p in parts)
    if discarded > MAX_DISCARD_FRACTION * samples:
        raise WeightError(f"{discarded} of {samples} samples were non-finite or collided")
    kept = samples - discarded
    mean = s1 / kept
    var = max(s2 / kept - mean * mean, 0.0)
    return WeightEstimate(mean, math.sqrt(var / kept), samples, g, discarded, seed)


# --- fiber count -------------------------------------------------------------

def psi(g: KGraph, zs: Sequence[complex]) -> np.ndarray:
    """The angle map of ``g`` at configuration ``zs``."""
    out = []
    for k in range(1, g.n + 1):
        for t in g.targets(k):
            out.append(harmonic_angle(zs[k - 1], t if t < 0 else zs[t - 1]))
    return np.array(out)


@dataclass
class FiberReport:
    graph: KGraph
    trials: int
    max_fiber: int
    counts: list[int]
    failed_trials: int
    bound: int = field(init=False)

    def __post_init__(self):
        self.bound = 4 ** self.graph.n

    @property
    def ok(self) -> bool:
        return self.max_fiber <= self.bound


def fiber_bound_check(g: KGraph, trials: int, seed: int, starts: int = 200) -> FiberReport:
    """Count preimages of random angle vectors by multi-start root finding."""
    if g.n > 2:
        raise ValueError("fiber counting is only supported for n <= 2")
    rng = np.random.default_rng(seed)
    counts, failed = [], 0
    for _ in range(trials):
        # angle vectors drawn as images of random configurations keep fibers non-empty
        z0 = [_root_sample(rng, 1)[0] for _ in range(g.n)]
        target = psi(g, z0)
        roots = _fiber_roots(g, target, rng, starts)
        if not roots:
            failed += 1
        counts.append(len(roots))
    return FiberReport(g, trials, max(counts, default=0), counts, failed)


def _fiber_roots(g: KGraph, target: np.ndarray, rng, starts: int) -> list[np.ndarray]:
    n = g.n

    def resid(v):
        zs = v[0::2] + 1j * np.exp(v[1::2])
        try:
            a = psi(g, zs)
        except ValueError:
            return np.full(2 * n, 10.0)
        d = a - target
        return np.arctan2(np.sin(d), np.cos(d))

    roots: list[np.ndarray] = []
    for _ in range(starts):
        zs = _root_sample(rng, n)
        v0 = np.empty(2 * n)
        v0[0::2] = zs.real
        v0[1::2] = np.log(zs.imag)
        sol = least_squares(resid, v0, xtol=1e-14, ftol=1e-14, gtol=1e-14, max_nfev=400)
        if np.max(np.abs(sol.fun)) > 1e-9:
            continue
        z = sol.x[0::2] + 1j * np.exp(sol.x[1::2])
        if any(np.max(np.abs(z - r)) < 1e-6 * (1 + np.max(np.abs(z))) for r in roots):
            continue
        roots.append(z)
    return roots


# --- weight tables and the on-disk cache ------------------------------------

def cache_dir() -> Path:
    env = os.environ.get("GROUPOIDGEN_CACHE_DIR")
    return Path(env) if env else Path.home() / ".cache" / "groupoidgen"


def _checksum(rec: dict) -> str:
    body = {k: v for k, v in rec.items() if k != "checksum"}
    return hashlib.sha256(json.dumps(body, sort_keys=True).encode()).hexdigest()


class CacheIntegrityError(ValueError):
    pass


@dataclass
class WeightTable:
    """Weights keyed by graph serialization."""

    records: dict[str, dict] = field(default_factory=dict)

    def __contains__(self, g: KGraph) -> bool:
        return g.key() in self.records

    def get(self, g: KGraph) -> WeightEstimate:
        try:
            r = self.records[g.key()]
        except KeyError:
            raise KeyError(f"no weight recorded for graph {g.key()}") from None
        return WeightEstimate(r["value"], r["std_error"], r["samples"], g,
                              r.get("discarded", 0), r.get("seed"))

    def add(self, est: WeightEstimate, klass: str | None = None):
        rec = {
            "graph": est.graph.to_json(),
            "samples": est.samples,
            "seed": est.seed,
            "value": est.value,
            "std_error": est.std_error,
            "discarded": est.discarded,
        }
        if klass is not None:
            rec["class"] = klass
        rec["checksum"] = _checksum(rec)
        self.records[est.graph.key()] = rec

    def dump(self, path):
        with open(path, "w") as fh:
            for key in sorted(self.records):
                fh.write(json.dumps(self.records[key], sort_keys=True) + "\n")

    @classmethod
    def load(cls, path) -> "WeightTable":
        table = cls()
        with open(path) as fh:
            for lineno, line in enumerate(fh, start=1):
                line = line.strip()
                if not line:
                    continue
                rec = json.loads(line)
                if rec.get("checksum") != _checksum(rec):
                    raise CacheIntegrityError(f"{path}:{lineno}: checksum mismatch")
                g = KGraph.from_json(rec["graph"])
                table.records[g.key()] = rec
        return table


def _class_seed(seed: int, klass: KGraph) -> int:
    h = hashlib.sha256(klass.key().encode()).digest()
    return int(np.random.SeedSequence([seed, int.from_bytes(h[:8], "little")]).generate_state(1)[0])


def _cache_path(klass: KGraph, samples: int, seed: int) -> Path:
    h = hashlib.sha256(f"{klass.key()}|{samples}|{seed}".encode()).hexdigest()[:24]
    return cache_dir() / f"w_{h}.jsonl"


def compute_weight_table(trees: Iterable[KGraph], samples: int, seed: int,
                         workers: int = 1, use_cache: bool = True) -> WeightTable:
    """Estimate weights for ``trees``, one Monte-Carlo run per symmetry class.

    Trees related by relabeling, edge swaps or the ground reflection share a
    single estimate (with the appropriate sign); classes with an odd
    automorphism are exactly zero.
    """
    table = WeightTable()
    class_est: dict[KGraph, WeightEstimate] = {}
    for g in trees:
        rep, sign = canonical_form(g)
        if rep not in class_est:
            class_est[rep] = _class_weight(rep, sign, samples, seed, workers, use_cache)
        est = class_est[rep]
        s = 0 if sign == 0 else sign
        table.add(WeightEstimate(s * est.value, est.std_error * abs(s), samples, g,
                                 est.discarded, seed), klass=rep.key())
    return table


def _class_weight(rep: KGraph, sign: int, samples: int, seed: int, workers: int,
                  use_cache: bool) -> WeightEstimate:
    if sign == 0:
        return WeightEstimate(0.0, 0.0, samples, rep, 0, seed)
    path = _cache_path(rep, samples, seed)
    if use_cache and path.exists():
        try:
            return WeightTable.load(path).get(rep)
        except (CacheIntegrityError, KeyError, json.JSONDecodeError) as exc:
            log.warning("ignoring corrupt weight cache %s: %s", path, exc)
    est = weight_mc(rep, samples, _class_seed(seed, rep), workers)
    est = WeightEstimate(est.value, est.std_error, samples, rep, est.discarded, seed)
    if use_cache:
        path.parent.mkdir(parents=True, exist_ok=True)
        t = WeightTable()
        t.add(est)
        t.dump(path)
    return est
