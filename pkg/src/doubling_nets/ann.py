"""Approximate nearest neighbor search.

A query runs in three stages:

1. a ring separator tree gives a point within ``2n`` times the nearest
   neighbor distance;
2. that point's net-tree ancestor at the level of ``16`` times this distance
   is located;
3. a frontier descent from the ancestor's rel list refines the answer to a
   ``(1 + eps)`` approximation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .hst import _separating_ball, _widest_gap
from .metric import MetricView, QueryPoint, require_distinct
from .net_tree import (
    COVER_FACTOR,
    LEAF_LEVEL,
    TOP_LEVEL,
    NetTree,
    build_net_tree,
    ceil_log_tau,
    level_ancestor,
    tau_pow,
)

__all__ = ["AnnIndex", "AnnTrace", "RingSeparatorTree", "ann_query", "ann_query_trace",
           "build_ann_index", "build_ring_tree", "coarse_ann", "descend_ann", "verify_ring_tree"]

_FILTER_SLACK = 1e-9


# ----------------------------------------------------------------------
# ring separator tree


@dataclass(frozen=True)
class RingSeparatorTree:
    """Binary tree of balls whose boundary rings hold no point.

    Node ``v`` either is a leaf holding the point ``pivot[v]`` (``inner[v]``
    is ``-1``) or splits its points into ``b(pivot[v], radius[v])`` (the
    ``inner`` child) and the rest (the ``outer`` child).  The ring of
    relative half-width ``1 / 2n`` around ``radius[v]`` is empty.
    """

    n: int
    pivot: np.ndarray
    radius: np.ndarray
    inner: np.ndarray
    outer: np.ndarray

    root = 0

    @property
    def size(self) -> int:
        return int(self.pivot.size)

    def is_leaf(self, v: int) -> bool:
        return bool(self.inner[v] < 0)

    def height(self) -> int:
        best = 0
        stack = [(0, 0)]
        while stack:
            v, h = stack.pop()
            best = max(best, h)
            if not self.is_leaf(v):
                stack.append((int(self.inner[v]), h + 1))
                stack.append((int(self.outer[v]), h + 1))
        return best

    def points_under(self, v: int) -> np.ndarray:
        out = []
        stack = [v]
        while stack:
            w = stack.pop()
            if self.is_leaf(w):
                out.append(int(self.pivot[w]))
            else:
                stack.extend((int(self.inner[w]), int(self.outer[w])))
        return np.asarray(sorted(out), dtype=np.int64)


def _ring_radius(d: np.ndarray, r: float, n: int) -> float:
    """A radius whose ring ``((1 - 1/2n) r', (1 + 1/2n) r']`` avoids ``d``."""
    if r == 0:
        # the ball is its center alone; halfway to the nearest other point works
        return float(d[d > 0].min()) / 2
    gap = _widest_gap(d, r, 2 * n)
    if gap is None:
        a, b = r, 2 * r
    else:
        a, b, _ = gap
    # at most half the points lie in the band, so b - a >= 2r/n > (a + b)/2n
    return (a + b) / 2


def build_ring_tree(view: MetricView, seed: int, lambda_hint: int | None = None) -> RingSeparatorTree:
    """Ring separator tree over all points of ``view``.

    Each node draws a separating ball ``b(p, r)`` and moves its radius to
    the middle of the widest empty gap in ``(r, 2r]``.
    """
    n = view.n
    if n < 1:
        raise ValueError("need at least one point")
    rng = np.random.default_rng(seed)
    pivot: list[int] = []
    radius: list[float] = []
    inner: list[int] = []
    outer: list[int] = []

    def new_node() -> int:
        pivot.append(-1)
        radius.append(math.nan)
        inner.append(-1)
        outer.append(-1)
        return len(pivot) - 1

    stack = [(new_node(), np.arange(n, dtype=np.int64))]
    while stack:
        v, ids = stack.pop()
        if ids.size == 1:
            pivot[v] = int(ids[0])
            continue
        ball, d = _separating_ball(view, ids, rng, lambda_hint)
        rv = _ring_radius(d, ball.r, n)
        pivot[v] = ball.center
        radius[v] = rv
        a = new_node()
        b = new_node()
        inner[v] = a
        outer[v] = b
        inside = d <= rv
        stack.append((b, ids[~inside]))
        stack.append((a, ids[inside]))
    return RingSeparatorTree(
        n=n,
        pivot=np.asarray(pivot, dtype=np.int64),
        radius=np.asarray(radius, dtype=float),
        inner=np.asarray(inner, dtype=np.int64),
        outer=np.asarray(outer, dtype=np.int64),
    )


def verify_ring_tree(tree: RingSeparatorTree, view: MetricView) -> list[str]:
    """Brute-force check of every node; returns the violations found."""
    problems: list[str] = []
    half = 1 / (2 * tree.n)
    stack = [(0, np.arange(tree.n, dtype=np.int64))]
    seen = 0
    while stack:
        v, ids = stack.pop()
        if tree.is_leaf(v):
            seen += 1
            if ids.size != 1 or int(ids[0]) != int(tree.pivot[v]):
                problems.append(f"leaf {v} holds {ids.tolist()}, expected its pivot only")
            continue
        p = int(tree.pivot[v])
        rv = float(tree.radius[v])
        d = view.distances_from(p, ids)
        inside = ids[d <= rv]
        if not np.array_equal(np.sort(inside), tree.points_under(int(tree.inner[v]))):
            problems.append(f"node {v}: inner subtree is not the ball around its pivot")
        ring = (d > (1 - half) * rv) & (d <= (1 + half) * rv)
        if ring.any():
            problems.append(f"node {v}: ring around radius {rv} holds {ids[ring].tolist()}")
        if not 1 <= inside.size <= ids.size / 2:
            problems.append(f"node {v}: inner size {inside.size} of {ids.size}")
        stack.append((int(tree.inner[v]), inside))
        stack.append((int(tree.outer[v]), ids[d > rv]))
    if seen != tree.n:
        problems.append(f"{seen} leaves for {tree.n} points")
    return problems


def _coarse(tree: RingSeparatorTree, view: MetricView, q: QueryPoint) -> tuple[int, float]:
    best, best_d = -1, math.inf
    v = 0
    while True:
        p = int(tree.pivot[v])
        dp = view.query_distance(q, p)
        if (dp, p) < (best_d, best):
            best, best_d = p, dp
        if tree.is_leaf(v):
            return best, best_d
        v = int(tree.inner[v]) if dp <= tree.radius[v] else int(tree.outer[v])


def coarse_ann(tree: RingSeparatorTree, view: MetricView, q: QueryPoint) -> int:
    """A point within ``2n`` times the nearest neighbor distance of ``q``.

    Descends into the inner child whenever ``q`` lies in the node's ball and
    returns the closest pivot met on the way.
    """
    return _coarse(tree, view, q)[0]


# ----------------------------------------------------------------------
# net-tree descent


def _brute_nearest(view: MetricView, q: QueryPoint) -> tuple[set[int], float]:
    d = view.query_distances(q, np.arange(view.n))
    best = float(d.min())
    return set(np.flatnonzero(d == best).tolist()), best


def _descend(tree: NetTree, view: MetricView, q: QueryPoint, u: int, eps: float,
             check: bool, trace: list[int] | None) -> tuple[int, float]:
    level, rep, pdist = tree.level, tree.rep, tree.pdist
    dist: dict[int, float] = {}
    slack = 1 + _FILTER_SLACK

    def cover(w: int) -> float:
        return COVER_FACTOR * tau_pow(int(level[w]))

    def admit(cands: list[tuple[float, int]], best_d: float) -> list[int]:
        # measure in order of the lower bound on d(q, rep); skip vertices whose
        # whole covering ball lies beyond the best point seen so far
        kept = []
        for lb, w in sorted(cands):
            p = int(rep[w])
            if p not in dist:
                if lb > (best_d + cover(w)) * slack:
                    continue
                dist[p] = view.query_distance(q, p)
            best_d = min(best_d, dist[p])
            kept.append(w)
        return kept

    nearest: set[int] = set()
    if check:
        nearest, _ = _brute_nearest(view, q)
    ru = int(rep[u])
    dist[ru] = view.query_distance(q, ru)
    du = dist[ru]
    frontier = admit([(abs(du - dw), int(w)) for w, dw in zip(tree.rel[u], tree.rel_dist[u].tolist())],
                     du)
    while True:
        best_d, best = min((dist[int(rep[w])], int(rep[w])) for w in frontier)
        # drop vertices that cannot hold a point closer than the best rep
        frontier = [w for w in frontier if dist[int(rep[w])] <= (best_d + cover(w)) * slack]
        if trace is not None:
            trace.append(len(frontier))
        if check:
            under = set()
            for w in frontier:
                under.update(tree.points_under(w).tolist())
            if not nearest & under:
                raise AssertionError("descent frontier lost every nearest neighbor")
        if best_d == 0:
            return best, best_d
        reach = max(cover(w) for w in frontier)
        # every point under the frontier is at least best_d - reach from q, and
        # best_d <= (1 + eps)(best_d - reach) once best_d >= (1/eps + 1) reach
        if reach == 0 or best_d >= (1 / eps + 2) * reach:
            return best, best_d
        top = max(int(level[w]) for w in frontier)
        cands: list[tuple[float, int]] = []
        for w in frontier:
            if level[w] == top:
                dw = dist[int(rep[w])]
                cands.extend((abs(dw - pdist[c]), c) for c in tree.kids[w])
            else:
                cands.append((dist[int(rep[w])], w))
        frontier = admit(cands, best_d)


def descend_ann(tree: NetTree, view: MetricView, q: QueryPoint, u: int, eps: float,
                *, check: bool = False) -> int:
    """``(1 + eps)``-approximate nearest neighbor by descending from ``rel(u)``.

    Correct whenever the nearest neighbor lies in ``P_u`` or ``q`` is within
    ``5 tau^level(u)`` of ``rep_u``; this is a trust contract.  With
    ``check`` every frontier is compared against a brute-force scan.
    """
    if not eps > 0:
        raise ValueError("eps must be positive")
    return _descend(tree, view, q, u, eps, check, None)[0]


# ----------------------------------------------------------------------
# composite index


@dataclass(frozen=True)
class AnnIndex:
    tree: NetTree
    ring: RingSeparatorTree
    view: MetricView


@dataclass
class AnnTrace:
    """How one query was answered."""

    answer: int
    distance: float
    coarse: int
    coarse_distance: float
    start: int = -1
    # "a": q is near rep_u; "b": the nearest neighbor is under u
    case: str = ""
    frontier_sizes: list[int] = field(default_factory=list)
    calls: int = 0


def build_ann_index(view: MetricView, seed: int, lambda_hint: int | None = None,
                    tree: NetTree | None = None) -> AnnIndex:
    require_distinct(view)
    if tree is None:
        tree = build_net_tree(view, seed, lambda_hint)
    elif tree.view is not view:
        raise ValueError("net-tree was built over a different view")
    ring = build_ring_tree(view, seed + 1, lambda_hint)
    return AnnIndex(tree, ring, view)


def ann_query_trace(index: AnnIndex, q: QueryPoint, eps: float, *, check: bool = False) -> AnnTrace:
    if not eps > 0:
        raise ValueError("eps must be positive")
    view, tree = index.view, index.tree
    before = view.calls
    p1, d1 = _coarse(index.ring, view, q)
    out = AnnTrace(answer=p1, distance=d1, coarse=p1, coarse_distance=d1)
    if d1 > 0:
        u = level_ancestor(tree, p1, ceil_log_tau(16 * d1))
        lu = int(tree.level[u])
        lp = int(tree.parent_level[u])
        if lp == TOP_LEVEL or lu == LEAF_LEVEL:
            out.case = "b"
        else:
            out.case = "a" if 2.5 * tau_pow(lu) >= tau_pow(lp - 1) / 16 else "b"
        out.start = u
        out.answer, out.distance = _descend(tree, view, q, u, eps, check, out.frontier_sizes)
    out.calls = view.calls - before
    return out


def ann_query(index: AnnIndex, q: QueryPoint, eps: float) -> int:
    """A stored point within ``(1 + eps)`` times the nearest distance to ``q``."""
    return ann_query_trace(index, q, eps).answer
