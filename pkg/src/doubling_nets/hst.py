"""Coarse scaffolding: separating balls, a low-quality spanner and a 3n^2 HST.

The pipeline is

    separating_ball -> empty_ring -> build_low_quality_spanner -> mst_to_hst

and :func:`build_coarse_hst` composes it.  The resulting tree distorts
distances by at most ``3 n^2`` and is what the approximate greedy
permutation uses to find split events.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .metric import MetricView
from .tree_index import LcaIndex, children_lists, preorder

__all__ = [
    "Hst",
    "SeparatingBall",
    "SpannerTrace",
    "WeightedGraph",
    "build_coarse_hst",
    "build_low_quality_spanner",
    "empty_ring",
    "minimum_spanning_tree",
    "mst_to_hst",
    "separating_ball",
]

CLIQUE_CUTOFF = 8


@dataclass(frozen=True)
class WeightedGraph:
    """Undirected graph on ``n`` point ids; ``edges[k] = (i, j)`` with ``i < j``."""

    n: int
    edges: np.ndarray
    weights: np.ndarray

    @property
    def edge_count(self) -> int:
        return int(self.edges.shape[0])

    def total_weight(self) -> float:
        return float(np.sum(self.weights))


@dataclass(frozen=True)
class SeparatingBall:
    center: int
    r: float
    inner_count: int
    outer_count: int
    rounds_used: int
    delta: float
    samples: int


@dataclass
class SpannerTrace:
    """Diagnostics gathered while building the low-quality spanner."""

    depth: int = 0
    balls: list[SeparatingBall] = field(default_factory=list)
    # the ids each ball was drawn from, aligned with ``balls``
    subsets: list[np.ndarray] = field(default_factory=list)


# ----------------------------------------------------------------------
# separating ball


def _attempt(view: MetricView, ids: np.ndarray, pos: int, need: int):
    d = view.distances_from(int(ids[pos]), ids)
    r = float(np.partition(d, need - 1)[need - 1])
    inner = int(np.count_nonzero(d <= r))
    outer = int(np.count_nonzero(d <= 2 * r))
    return d, r, inner, outer


def _separating_ball(view: MetricView, ids: np.ndarray, rng: np.random.Generator,
                     lambda_hint: int | None):
    m = ids.size
    if m < 2:
        raise ValueError("a separating ball needs at least two points")
    samples = 0
    if lambda_hint is not None:
        if lambda_hint < 1:
            raise ValueError("lambda_hint must be positive")
        need = max(1, math.ceil(m / (2 * lambda_hint ** 3)))
        cap = 8 * lambda_hint ** 3 + 64
        while samples < cap:
            samples += 1
            pos = int(rng.integers(m))
            d, r, inner, outer = _attempt(view, ids, pos, need)
            if 2 * outer <= m:
                return SeparatingBall(int(ids[pos]), r, inner, m - outer, 1,
                                      float(lambda_hint), samples), d
        raise ValueError(f"no separating ball after {cap} samples; lambda_hint is too small")
    i = 0
    while True:
        i += 1
        delta = 2 ** i
        need = max(1, math.ceil(m / (2 * delta ** 3)))
        for _ in range(2 ** (3 * i)):
            samples += 1
            pos = int(rng.integers(m))
            d, r, inner, outer = _attempt(view, ids, pos, need)
            if 2 * outer <= m:
                return SeparatingBall(int(ids[pos]), r, inner, m - outer, i,
                                      float(delta), samples), d


def separating_ball(view: MetricView, seed: int, lambda_hint: int | None = None) -> SeparatingBall:
    """A ball holding many points whose doubled ball holds at most half.

    Without ``lambda_hint`` the doubling constant is guessed as ``2^i`` for
    ``i = 1, 2, ...`` with ``2^(3i)`` random centers tried per guess.  The
    loop always stops once ``2 * 8^i >= n`` because the ball then shrinks to
    its center.
    """
    if view.n < 2:
        raise ValueError("a separating ball needs at least two points")
    rng = np.random.default_rng(seed)
    ball, _ = _separating_ball(view, np.arange(view.n), rng, lambda_hint)
    return ball


# ----------------------------------------------------------------------
# empty ring


def _shrink_below(a: float, gap: float, b: float) -> float:
    """Largest convenient ``h <= gap`` with ``a + h < b`` in floating point."""
    h = gap
    step = float(np.spacing(b))
    while a + h >= b:
        h = gap - step
        step *= 2
    return h


def _widest_gap(d: np.ndarray, r: float, buckets: int) -> tuple[float, float, bool] | None:
    """Widest gap ``(a, b)`` between distances in the band ``(r, 2r]``.

    ``a`` is ``r`` or a distance in the band; ``b`` is a distance in the band
    (flag ``True``) or ``2r``.  Only the extreme values per bucket matter, so
    the sweep is linear; it is exact whenever the widest gap exceeds one
    bucket width.  ``None`` when the band holds no distance.
    """
    band = d[(d > r) & (d <= 2 * r)]
    if band.size == 0:
        return None
    width = r / buckets
    idx = np.minimum(((band - r) / width).astype(np.int64), buckets - 1)
    lo = np.full(buckets, np.inf)
    hi = np.full(buckets, -np.inf)
    np.minimum.at(lo, idx, band)
    np.maximum.at(hi, idx, band)
    occupied = np.flatnonzero(np.isfinite(lo))
    starts = np.concatenate(([r], hi[occupied]))
    ends = np.concatenate((lo[occupied], [2 * r]))
    k = int(np.argmax(ends - starts))
    return float(starts[k]), float(ends[k]), k < occupied.size


def _empty_ring(d: np.ndarray, r: float) -> tuple[float, float]:
    gap = _widest_gap(d, r, 2 * d.size)
    if gap is None:
        return r, r
    a, b, b_is_point = gap
    if not b_is_point:
        return a, b - a
    return a, _shrink_below(a, b - a, b)


def empty_ring(view: MetricView, center: int, r: float) -> tuple[float, float]:
    """Find ``r <= r' <= 2r`` and a width ``h`` leaving ``(r', r' + h]`` empty.

    The band ``[r, 2r]`` is cut into ``2n`` equal buckets; only the minimum
    and maximum distance in each bucket matter, so the widest gap between
    consecutive occupied buckets is found in linear time.  Pigeonhole gives
    ``h >= r / n``.  When the band holds no point the whole band is
    returned, ``h = r``.
    """
    if not r > 0:
        raise ValueError("empty_ring needs r > 0")
    d = view.distances_from(center, np.arange(view.n))
    return _empty_ring(d, r)


# ----------------------------------------------------------------------
# low-quality spanner


def _low_quality_spanner(view: MetricView, seed: int, lambda_hint: int | None = None,
                         trace: SpannerTrace | None = None) -> WeightedGraph:
    rng = np.random.default_rng(seed)
    n = view.n
    us: list[np.ndarray] = []
    vs: list[np.ndarray] = []
    ws: list[np.ndarray] = []
    stack: list[tuple[np.ndarray, int]] = [(np.arange(n, dtype=np.int64), 1)]
    deepest = 0
    while stack:
        ids, depth = stack.pop()
        deepest = max(deepest, depth)
        m = ids.size
        if m <= 1:
            continue
        if m <= CLIQUE_CUTOFF:
            for a in range(m - 1):
                rest = ids[a + 1:]
                us.append(np.full(rest.size, ids[a]))
                vs.append(rest)
                ws.append(view.distances_from(int(ids[a]), rest))
            continue
        ball, d = _separating_ball(view, ids, rng, lambda_hint)
        if trace is not None:
            trace.balls.append(ball)
            trace.subsets.append(ids)
        others = ids != ball.center
        us.append(np.full(int(np.count_nonzero(others)), ball.center))
        vs.append(ids[others])
        ws.append(d[others])
        if ball.r > 0:
            r_in, _ = _empty_ring(d, ball.r)
        else:
            r_in = 0.0
        inside = d <= r_in
        stack.append((ids[~inside], depth + 1))
        stack.append((ids[inside], depth + 1))
    if trace is not None:
        trace.depth = deepest
    if not us:
        return WeightedGraph(n, np.zeros((0, 2), dtype=np.int64), np.zeros(0))
    u = np.concatenate(us)
    v = np.concatenate(vs)
    w = np.concatenate(ws)
    lo = np.minimum(u, v)
    hi = np.maximum(u, v)
    _, first = np.unique(lo * n + hi, return_index=True)
    edges = np.stack([lo[first], hi[first]], axis=1)
    return WeightedGraph(n, edges, w[first].astype(float))


def build_low_quality_spanner(view: MetricView, seed: int, lambda_hint: int | None = None,
                              trace: SpannerTrace | None = None) -> WeightedGraph:
    """Connected graph whose shortest paths stretch distances by at most ``3n``.

    Each subproblem of more than eight points finds a separating ball,
    widens it to an empty ring, adds a star from the ball's center to every
    point of the subproblem and recurses on the inside and the outside.
    Small subproblems become cliques.
    """
    return _low_quality_spanner(view, seed, lambda_hint, trace)


# ----------------------------------------------------------------------
# HST


class Hst:
    """Binary ultrametric tree; node ``i < n`` is the leaf of point ``i``.

    Internal nodes are numbered ``n .. 2n-2`` in merge order; ``delta`` is
    zero exactly at leaves and ``rep`` is a point id.
    """

    def __init__(self, n: int, left: np.ndarray, right: np.ndarray, delta: np.ndarray,
                 rep: np.ndarray) -> None:
        self.n = n
        self.left = left
        self.right = right
        self.delta = delta
        self.rep = rep
        size = left.size
        self.parent = np.full(size, -1, dtype=np.int64)
        internal = np.flatnonzero(left >= 0)
        self.parent[left[internal]] = internal
        self.parent[right[internal]] = internal
        self.root = int(size - 1)
        self.kids = children_lists(self.parent)
        order = preorder(self.root, self.kids)
        self.preorder_index = np.empty(size, dtype=np.int64)
        self.preorder_index[order] = np.arange(size)
        self._lca = LcaIndex(self.root, self.kids)
        for a in (self.left, self.right, self.delta, self.rep, self.parent, self.preorder_index):
            a.setflags(write=False)

    @property
    def size(self) -> int:
        return int(self.left.size)

    def is_leaf(self, u: int) -> bool:
        return bool(self.left[u] < 0)

    def children(self, u: int) -> list[int]:
        return list(self.kids[u])

    def lca(self, u: int, v: int) -> int:
        return self._lca.lca(u, v)

    def distance(self, x: int, y: int) -> float:
        """Tree distance between points ``x`` and ``y``."""
        return float(self.delta[self._lca.lca(x, y)])

    def leaves_under(self, u: int) -> np.ndarray:
        out = []
        stack = [u]
        while stack:
            v = stack.pop()
            if self.left[v] < 0:
                out.append(v)
            else:
                stack.extend(self.kids[v])
        return np.sort(np.asarray(out, dtype=np.int64))

    def to_json(self) -> str:
        nodes = [
            {"id": u, "delta": float(self.delta[u]), "rep": int(self.rep[u]),
             "children": [int(c) for c in self.kids[u]]}
            for u in range(self.size)
        ]
        return json.dumps({"n": self.n, "root": self.root, "nodes": nodes})


def _find(parent: list[int], x: int) -> int:
    while parent[x] != x:
        parent[x] = parent[parent[x]]
        x = parent[x]
    return x


def mst_to_hst(graph: WeightedGraph) -> Hst:
    """Kruskal merge tree labeled ``(n - 1) * w`` for each merging edge ``w``.

    Edges are sorted by ``(weight, min id, max id)``.  The merged node's
    left child is the component holding the edge's smaller endpoint and its
    representative is the smaller of the two child representatives.
    """
    n = graph.n
    size = 2 * n - 1
    left = np.full(size, -1, dtype=np.int64)
    right = np.full(size, -1, dtype=np.int64)
    delta = np.zeros(size)
    rep = np.empty(size, dtype=np.int64)
    rep[:n] = np.arange(n)
    uf = list(range(n))
    node_of = list(range(n))
    order = np.lexsort((graph.edges[:, 1], graph.edges[:, 0], graph.weights)) if graph.edge_count else []
    nxt = n
    for k in order:
        i, j = int(graph.edges[k, 0]), int(graph.edges[k, 1])
        a, b = _find(uf, i), _find(uf, j)
        if a == b:
            continue
        na, nb = node_of[a], node_of[b]
        left[nxt], right[nxt] = na, nb
        delta[nxt] = (n - 1) * float(graph.weights[k])
        rep[nxt] = min(rep[na], rep[nb])
        uf[b] = a
        node_of[a] = nxt
        nxt += 1
        if nxt == size:
            break
    if nxt != size:
        raise ValueError("graph is disconnected")
    return Hst(n, left, right, delta, rep)


def minimum_spanning_tree(graph: WeightedGraph) -> WeightedGraph:
    """Kruskal with ties broken by ``(min id, max id)``; raises when disconnected."""
    n = graph.n
    uf = list(range(n))
    order = np.lexsort((graph.edges[:, 1], graph.edges[:, 0], graph.weights)) if graph.edge_count else []
    keep: list[int] = []
    for k in order:
        a, b = _find(uf, int(graph.edges[k, 0])), _find(uf, int(graph.edges[k, 1]))
        if a == b:
            continue
        uf[b] = a
        keep.append(int(k))
        if len(keep) == n - 1:
            break
    if len(keep) != n - 1:
        raise ValueError("graph is disconnected")
    idx = np.asarray(keep, dtype=np.int64)
    return WeightedGraph(n, graph.edges[idx].reshape(-1, 2), graph.weights[idx])


def build_coarse_hst(view: MetricView, seed: int, lambda_hint: int | None = None) -> Hst:
    """HST over the view with ``d <= d_H <= 3 n^2 d`` for every pair."""
    if view.n < 1:
        raise ValueError("need at least one point")
    return mst_to_hst(build_low_quality_spanner(view, seed, lambda_hint))
