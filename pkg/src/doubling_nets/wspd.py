"""Well-separated pair decompositions over a net-tree, and what they give.

:func:`build_wspd` splits pairs of net-tree vertices top-down until both
sides are small compared with the distance between their representatives.
The pairs then yield a ``(1 + eps)``-spanner, exact all nearest neighbors
and an approximate minimum spanning tree.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import shortest_path

from .hst import WeightedGraph, minimum_spanning_tree
from .metric import MetricView, require_distinct
from .net_tree import COVER_FACTOR, NetTree, build_net_tree, tau_pow

__all__ = ["SPANNER_SHRINK", "SpannerGraph", "WspdPairs", "WspdReport", "all_nearest_neighbors",
           "approx_mst", "build_spanner", "build_wspd", "dump_wspd", "max_stretch", "verify_wspd"]

# stop splitting once 8 * COVER * tau^level(u) <= eps * d(rep_u, rep_v)
_STOP_FACTOR = 8 * COVER_FACTOR
# the spanner uses a (SPANNER_SHRINK / eps)-WSPD
SPANNER_SHRINK = 16


@dataclass
class WspdPairs:
    """Pairs ``(u[k], v[k])`` of net-tree vertices.

    ``dist[k]`` is ``d(rep_u, rep_v)``.  ``charges[w]`` counts the output
    pairs produced right after splitting ``w``.
    """

    tree: NetTree
    eps: float
    u: np.ndarray
    v: np.ndarray
    dist: np.ndarray
    charges: np.ndarray
    _index: set[tuple[int, int]] = field(default_factory=set, repr=False)

    def __post_init__(self) -> None:
        if not self._index:
            self._index = {(min(a, b), max(a, b)) for a, b in zip(self.u.tolist(), self.v.tolist())}

    def __len__(self) -> int:
        return int(self.u.size)

    def contains(self, a: int, b: int) -> bool:
        return (min(a, b), max(a, b)) in self._index


def _check_eps(eps: float) -> None:
    if not 0 < eps <= 1:
        raise ValueError("eps must lie in (0, 1]")


def build_wspd(tree: NetTree, view: MetricView, eps: float) -> WspdPairs:
    """``1/eps``-WSPD whose pairs are net-tree vertices.

    Within a pair the side with the higher level is split; on equal levels
    the vertex created first is split.  A vertex paired with itself is
    expanded into all pairs of its children, each child also paired with
    itself, so no pair occurs twice.
    """
    _check_eps(eps)
    level, rep, kids = tree.level, tree.rep, tree.kids
    memo: dict[tuple[int, int], float] = {}

    def rep_dist(a: int, b: int) -> float:
        key = (a, b) if a < b else (b, a)
        d = memo.get(key)
        if d is None:
            d = view.distance(a, b)
            memo[key] = d
        return d

    out_u: list[int] = []
    out_v: list[int] = []
    out_d: list[float] = []
    charges = np.zeros(tree.size, dtype=np.int64)
    # entries (a, b, issuer): issuer is the vertex split to create this call
    stack: list[tuple[int, int, int]] = [(tree.root, tree.root, -1)]
    while stack:
        a, b, issuer = stack.pop()
        if a == b:
            children = kids[a]
            for i, c in enumerate(children):
                stack.append((c, c, a))
                stack.extend((c, e, a) for e in children[i + 1:])
            continue
        if level[a] < level[b] or (level[a] == level[b] and b < a):
            a, b = b, a
        d = rep_dist(int(rep[a]), int(rep[b]))
        if _STOP_FACTOR * tau_pow(int(level[a])) <= eps * d:
            out_u.append(a)
            out_v.append(b)
            out_d.append(d)
            if issuer >= 0:
                charges[issuer] += 1
            continue
        stack.extend((c, b, a) for c in kids[a])
    return WspdPairs(tree, eps, np.asarray(out_u, dtype=np.int64), np.asarray(out_v, dtype=np.int64),
                     np.asarray(out_d, dtype=float), charges)


@dataclass
class WspdReport:
    ok: bool = True
    first_violation: str = ""
    violations: int = 0
    pairs_checked: int = 0

    def fail(self, message: str) -> None:
        if self.ok:
            self.first_violation = message
        self.ok = False
        self.violations += 1


def verify_wspd(pairs: WspdPairs, view: MetricView) -> WspdReport:
    """Exhaustive check of disjointness, coverage, separation and rep accuracy.

    Coverage is over unordered pairs of distinct points.  For every pair
    ``(P_u, P_v)`` the check also asserts ``max diam <= eps d(rep_u, rep_v)``
    and ``d(rep_u, rep_v) <= (1 + eps) d(x, y)`` for all covered ``(x, y)``.
    """
    tree = pairs.tree
    eps = pairs.eps
    D = view.full_matrix()
    n = view.n
    covered = np.zeros((n, n), dtype=np.int64)
    rep = WspdReport()
    for a, b in zip(pairs.u.tolist(), pairs.v.tolist()):
        rep.pairs_checked += 1
        pa = tree.points_under(a)
        pb = tree.points_under(b)
        if np.intersect1d(pa, pb).size:
            rep.fail(f"pair ({a}, {b}): the two sides overlap")
            continue
        cross = D[np.ix_(pa, pb)]
        covered[np.ix_(pa, pb)] += 1
        covered[np.ix_(pb, pa)] += 1
        diam = max(D[np.ix_(pa, pa)].max(), D[np.ix_(pb, pb)].max())
        gap = cross.min()
        if gap < diam / eps:
            rep.fail(f"pair ({a}, {b}): separation {gap} below {diam} / {eps}")
        dr = D[tree.rep[a], tree.rep[b]]
        if diam > eps * dr:
            rep.fail(f"pair ({a}, {b}): diameter {diam} exceeds eps * rep distance {dr}")
        if dr > (1 + eps) * cross.min():
            rep.fail(f"pair ({a}, {b}): rep distance {dr} overstates a covered pair")
    off = ~np.eye(n, dtype=bool)
    missing = np.argwhere((covered == 0) & off)
    if missing.size:
        i, j = missing[0]
        rep.fail(f"points {i} and {j} are not covered")
    return rep


def dump_wspd(pairs: WspdPairs) -> str:
    """One line per pair: ``u v rep_u rep_v distance``."""
    rep = pairs.tree.rep
    lines = [f"{a} {b} {rep[a]} {rep[b]} {d!r}"
             for a, b, d in zip(pairs.u.tolist(), pairs.v.tolist(), pairs.dist.tolist())]
    return "\n".join(lines) + ("\n" if lines else "")


@dataclass(frozen=True)
class SpannerGraph:
    graph: WeightedGraph
    eps: float
    pairs: WspdPairs


def build_spanner(view: MetricView, eps: float, seed: int, tree: NetTree | None = None) -> SpannerGraph:
    """``(1 + eps)``-spanner: one edge between the reps of each WSPD pair.

    The decomposition is built at ``eps / 16``.  Every rep pair is covered
    by its own WSPD pair only, so edges are distinct.
    """
    _check_eps(eps)
    if tree is None:
        tree = build_net_tree(view, seed)
    pairs = build_wspd(tree, view, eps / SPANNER_SHRINK)
    ends = np.stack([tree.rep[pairs.u], tree.rep[pairs.v]], axis=1) if len(pairs) else \
        np.empty((0, 2), dtype=np.int64)
    ends = np.sort(ends, axis=1)
    order = np.lexsort((ends[:, 1], ends[:, 0]))
    graph = WeightedGraph(view.n, ends[order], pairs.dist[order])
    return SpannerGraph(graph, eps, pairs)


def max_stretch(graph: WeightedGraph, view: MetricView) -> tuple[float, tuple[int, int]]:
    """Largest ``d_G(x, y) / d(x, y)`` over all pairs, with a witness pair.

    All-pairs shortest paths are quadratic in memory; this is an audit.
    """
    n = view.n
    if n < 2:
        return 1.0, (0, 0)
    e = graph.edges
    adj = coo_matrix((graph.weights, (e[:, 0], e[:, 1])), shape=(n, n)).tocsr()
    sp = shortest_path(adj, method="D", directed=False)
    D = view.full_matrix()
    iu = np.triu_indices(n, 1)
    ratio = sp[iu] / D[iu]
    k = int(np.argmax(ratio))
    return float(ratio[k]), (int(iu[0][k]), int(iu[1][k]))


def all_nearest_neighbors(view: MetricView, seed: int, tree: NetTree | None = None) -> list[tuple[int, int]]:
    """Exact nearest neighbor of every point, ties to the smaller id.

    In a 4-WSPD the pair covering a point and its nearest neighbor has that
    point alone on one side, so scanning the pairs with a leaf side finds
    every nearest neighbor.
    """
    n = view.n
    if n < 2:
        raise ValueError("need at least two points")
    require_distinct(view)
    if tree is None:
        tree = build_net_tree(view, seed)
    pairs = build_wspd(tree, view, 0.25)
    best_d = np.full(n, np.inf)
    best = np.full(n, -1, dtype=np.int64)

    def scan(leaf: int, other: int) -> None:
        p = int(tree.rep[leaf])
        cand = tree.points_under(other)
        d = view.distances_from(p, cand)
        k = int(np.lexsort((cand, d))[0])
        if (d[k], cand[k]) < (best_d[p], best[p]):
            best_d[p] = d[k]
            best[p] = cand[k]

    for a, b in zip(pairs.u.tolist(), pairs.v.tolist()):
        if tree.is_leaf(a):
            scan(a, b)
        if tree.is_leaf(b):
            scan(b, a)
    return [(p, int(best[p])) for p in range(n)]


def approx_mst(view: MetricView, eps: float, seed: int) -> WeightedGraph:
    """Exact MST of the ``(1 + eps)``-spanner; weight within ``1 + eps`` of optimal."""
    _check_eps(eps)
    if view.n == 1:
        return WeightedGraph(1, np.empty((0, 2), dtype=np.int64), np.empty(0))
    return minimum_spanning_tree(build_spanner(view, eps, seed).graph)
