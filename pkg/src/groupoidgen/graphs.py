"""Kontsevich graphs of type (n, 2) and the trees T_{n,2}.

Aerial vertices are labeled ``1..n``; the two ground vertices are encoded as
``GROUND1 = -1`` and ``GROUND2 = -2``.  A graph stores, for each aerial vertex
``k``, the ordered pair ``(gamma1(k), gamma2(k))`` of its edge targets.
"""
from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass
from enum import Enum
from typing import Iterator, Sequence

GROUND1 = -1
GROUND2 = -2
GROUNDS = (GROUND1, GROUND2)

_MAX_LOG_FLOAT = math.log(1.7976931348623157e308)


class GraphError(ValueError):
    pass


@dataclass(frozen=True, order=True)
class KGraph:
    n: int
    edges: tuple[tuple[int, int], ...]

    def __post_init__(self):
        if self.n < 1:
            raise GraphError("a Kontsevich graph needs at least one aerial vertex")
        if len(self.edges) != self.n:
            raise GraphError(f"expected {self.n} edge pairs, got {len(self.edges)}")
        for k, (a, b) in enumerate(self.edges, start=1):
            for t in (a, b):
                if t not in GROUNDS and not 1 <= t <= self.n:
                    raise GraphError(f"vertex {k}: target {t} out of range")
            if a == k or b == k:
                raise GraphError(f"vertex {k} has a self-edge")
            if a == b:
                raise GraphError(f"vertex {k} has two edges to the same target {a}")

    @property
    def gamma1(self) -> tuple[int, ...]:
        return tuple(e[0] for e in self.edges)

    @property
    def gamma2(self) -> tuple[int, ...]:
        return tuple(e[1] for e in self.edges)

    def targets(self, k: int) -> tuple[int, int]:
        return self.edges[k - 1]

    def aerial_edges(self) -> list[tuple[int, int]]:
        """Directed aerial-to-aerial edges ``(source, target)``."""
        return [(k, t) for k, pair in enumerate(self.edges, start=1)
                for t in pair if t > 0]

    def ground_edges(self) -> list[tuple[int, int]]:
        return [(k, t) for k, pair in enumerate(self.edges, start=1)
                for t in pair if t < 0]

    def in_degree(self, k: int) -> int:
        return sum(1 for _, t in self.aerial_edges() if t == k)

    def is_tree(self) -> bool:
        return _skeleton_components(self) == 1 and len(self.aerial_edges()) == self.n - 1

    def is_forest(self) -> bool:
        return len(self.aerial_edges()) == self.n - _skeleton_components(self)

    def to_json(self) -> dict:
        return {"n": self.n, "edges": [list(e) for e in self.edges]}

    @classmethod
    def from_json(cls, obj: dict) -> "KGraph":
        return cls(int(obj["n"]), tuple((int(a), int(b)) for a, b in obj["edges"]))

    def key(self) -> str:
        """Compact stable serialization, used as a cache key."""
        return json.dumps(self.to_json(), separators=(",", ":"))


def _skeleton_components(g: KGraph) -> int:
    parent = list(range(g.n + 1))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    comps = g.n
    for k, t in g.aerial_edges():
        ra, rb = find(k), find(t)
        if ra != rb:
            parent[ra] = rb
            comps -= 1
    return comps


def _sort_key(g: KGraph):
    return (g.gamma1, g.gamma2)


def enumerate_trees(n: int, forest: bool = False) -> list[KGraph]:
    """All labeled graphs of type (n, 2) whose aerial skeleton is a spanning tree.

    With ``forest=True`` disconnected acyclic skeletons are kept as well.
    Output is sorted lexicographically by ``(gamma1, gamma2)``.
    """
    if n < 1:
        raise GraphError("n must be a positive integer")
    out = [KGraph(n, edges) for edges in _backtrack(n, forest)]
    out.sort(key=_sort_key)
    return out


def _backtrack(n: int, forest: bool) -> Iterator[tuple[tuple[int, int], ...]]:
    # union-find with undo, so cycle pruning happens as edges are placed
    parent = list(range(n + 1))

    def find(a):
        while parent[a] != a:
            a = parent[a]
        return a

    pairs = {
        k: [(a, b) for a in (*GROUNDS, *range(1, n + 1))
            for b in (*GROUNDS, *range(1, n + 1)) if a != b and a != k and b != k]
        for k in range(1, n + 1)
    }
    chosen: list[tuple[int, int]] = []

    def rec(k: int, n_aerial: int):
        if k > n:
            if forest or n_aerial == n - 1:
                yield tuple(chosen)
            return
        # remaining vertices can add at most 2 aerial edges each
        for pair in pairs[k]:
            undo = []
            ok = True
            for t in pair:
                if t < 0:
                    continue
                ra, rb = find(k), find(t)
                if ra == rb:
                    ok = False
                    break
                parent[ra] = rb
                undo.append(ra)
            added = sum(1 for t in pair if t > 0)
            if ok and (forest or n_aerial + added <= n - 1):
                chosen.append(pair)
                yield from rec(k + 1, n_aerial + added)
                chosen.pop()
            for ra in reversed(undo):
                parent[ra] = ra

    yield from rec(1, 0)


def count_bound(n: int) -> float:
    """The crude estimate ``(16e)^n n!`` on the number of trees."""
    if n < 1:
        raise GraphError("n must be a positive integer")
    log_val = n * math.log(16 * math.e) + math.lgamma(n + 1)
    if log_val > _MAX_LOG_FLOAT:
        raise OverflowError(f"(16e)^n n! is not representable as a float for n={n}")
    return (16 * math.e) ** n * math.factorial(n)


class TerminalKind(Enum):
    TYPE1 = 1
    TYPE2 = 2
    GROUNDED = 0


@dataclass(frozen=True)
class TerminalClass:
    vertex: int
    kind: TerminalKind


def terminal_vertices(g: KGraph) -> list[TerminalClass]:
    incoming = {t for _, t in g.aerial_edges()}
    out = []
    for k in range(1, g.n + 1):
        if k in incoming:
            continue
        n_aerial = sum(1 for t in g.targets(k) if t > 0)
        out.append(TerminalClass(k, TerminalKind(n_aerial) if n_aerial else TerminalKind.GROUNDED))
    return out


@dataclass(frozen=True)
class Decomposition:
    """Result of removing one terminal vertex from a tree.

    ``parts[i]`` is a relabeled tree; ``labels[i][j]`` is the original label of
    its vertex ``j + 1``.
    """
    vertex: int
    kind: TerminalKind
    removed_edges: tuple[int, int]
    parts: tuple[KGraph, ...]
    labels: tuple[tuple[int, ...], ...]


def _restrict(g: KGraph, verts: Sequence[int]) -> KGraph:
    relabel = {v: i for i, v in enumerate(verts, start=1)}
    edges = []
    for v in verts:
        edges.append(tuple(relabel[t] if t > 0 else t for t in g.targets(v)))
    return KGraph(len(verts), tuple(edges))


def decompose(g: KGraph) -> Decomposition:
    """Remove a terminal vertex, preferring type 1, and split what remains."""
    if g.n < 2:
        raise GraphError("a graph with one aerial vertex cannot be decomposed")
    if not g.is_tree():
        raise GraphError("decompose expects a Kontsevich tree")
    terms = terminal_vertices(g)
    type1 = [t for t in terms if t.kind is TerminalKind.TYPE1]
    chosen = type1[0] if type1 else next(t for t in terms if t.kind is TerminalKind.TYPE2)
    v = chosen.vertex
    rest = [k for k in range(1, g.n + 1) if k != v]
    # connected components of the skeleton without v
    adj = {k: set() for k in rest}
    for a, b in g.aerial_edges():
        if a != v and b != v:
            adj[a].add(b)
            adj[b].add(a)
    seen: set[int] = set()
    comps = []
    for k in rest:
        if k in seen:
            continue
        stack, comp = [k], []
        seen.add(k)
        while stack:
            u = stack.pop()
            comp.append(u)
            for w in adj[u]:
                if w not in seen:
                    seen.add(w)
                    stack.append(w)
        comps.append(tuple(sorted(comp)))
    parts = tuple(_restrict(g, c) for c in comps)
    return Decomposition(v, chosen.kind, g.targets(v), parts, tuple(comps))


def recompose(n: int, dec: Decomposition) -> KGraph:
    """Inverse of :func:`decompose`."""
    edges: dict[int, tuple[int, int]] = {dec.vertex: dec.removed_edges}
    for part, labels in zip(dec.parts, dec.labels):
        for j, pair in enumerate(part.edges):
            edges[labels[j]] = tuple(labels[t - 1] if t > 0 else t for t in pair)
    return KGraph(n, tuple(edges[k] for k in range(1, n + 1)))


# --- symmetry classes -------------------------------------------------------
#
# The weight integral is invariant under relabeling aerial vertices, changes
# sign when the two edges of one vertex are swapped, and picks up (-1)^n under
# the reflection z -> 1 - conj(z), which exchanges the two ground vertices.

def canonical_form(g: KGraph) -> tuple[KGraph, int]:
    """Return ``(representative, sign)`` with ``W_g = sign * W_representative``.

    ``sign`` is 0 when an odd automorphism forces the weight to vanish.
    """
    best = None
    best_sign = 1
    odd = False
    for swap_ground in (False, True):
        gsign = (-1) ** g.n if swap_ground else 1
        for perm in itertools.permutations(range(1, g.n + 1)):
            # perm[i] is the new label of old vertex i+1
            new_edges: list = [None] * g.n
            sign = gsign
            for old in range(1, g.n + 1):
                a, b = g.targets(old)
                a, b = (_map_target(t, perm, swap_ground) for t in (a, b))
                if _target_order(a) > _target_order(b):
                    a, b = b, a
                    sign = -sign
                new_edges[perm[old - 1] - 1] = (a, b)
            cand = tuple(new_edges)
            if best is None or cand < best:
                best, best_sign, odd = cand, sign, False
            elif cand == best and sign != best_sign:
                odd = True
    return KGraph(g.n, best), 0 if odd else best_sign


def _map_target(t: int, perm: Sequence[int], swap_ground: bool) -> int:
    if t > 0:
        return perm[t - 1]
    if swap_ground:
        return GROUND2 if t == GROUND1 else GROUND1
    return t


def _target_order(t: int) -> int:
    return {GROUND1: -2, GROUND2: -1}.get(t, t)


def trees_to_json(trees: Sequence[KGraph]) -> list[dict]:
    return [t.to_json() for t in trees]


def trees_from_json(obj) -> list[KGraph]:
    if isinstance(obj, dict) and "trees" in obj:
        obj = obj["trees"]
    if isinstance(obj, dict):
        obj = [obj]
    return [KGraph.from_json(o) for o in obj]
