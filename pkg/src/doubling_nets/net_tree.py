"""Net-trees: one tree whose levels are nets of the point set at every scale.

Every vertex ``v`` has an integer level ``level[v]`` (leaves sit at a
reserved minimal integer standing for minus infinity), a representative
point ``rep[v]`` inherited from one of its children, and a list ``rel[v]``
of nearby vertices of similar level.  With ``TAU = 11``:

* covering: every point under ``v`` is within ``2.2 * TAU**level[v]`` of
  ``rep[v]``;
* packing: every point within ``0.3 * TAU**(level[parent] - 1)`` of
  ``rep[v]`` is under ``v``;
* ``rel[u]`` holds exactly the vertices ``v`` with
  ``level[v] <= level[u] < level[parent(v)]`` and
  ``d(rep[u], rep[v]) <= 13 * TAU**level[u]``.

Points are inserted in (approximate) greedy order.  Point ``p_k`` becomes a
leaf; its level-``l`` parent is found through the previous center
``c_{p_k}`` where ``l = ceil(log_TAU rbar_{k-1})``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .greedy import GreedySequence, net_permutation
from .hst import build_coarse_hst
from .metric import MetricView, QueryPoint
from .tree_index import DepthAncestorIndex, LcaIndex, preorder

__all__ = [
    "COVER_FACTOR",
    "DontKnow",
    "LEAF_LEVEL",
    "NetTree",
    "PACK_FACTOR",
    "REL_FACTOR",
    "RESTRICTED_WINDOW",
    "TAU",
    "TOP_LEVEL",
    "VerificationReport",
    "build_net_tree",
    "ceil_log_tau",
    "level_ancestor",
    "net_at_level",
    "range_query",
    "restricted_level_ancestor",
    "tau_pow",
    "tree_lca",
    "verify_net_tree",
]

TAU = 11
COVER_FACTOR = 2 * TAU / (TAU - 1)
PACK_FACTOR = (TAU - 5) / (2 * (TAU - 1))
REL_FACTOR = 13
CHILD_FACTOR = 2
RESTRICTED_WINDOW = 6
_BOUND_SLACK = 1e-9

LEAF_LEVEL = -(2 ** 62)
TOP_LEVEL = 2 ** 62


def tau_pow(level: int) -> float:
    """``TAU ** level``; zero at the leaf level and infinity above the root."""
    if level <= LEAF_LEVEL:
        return 0.0
    if level >= TOP_LEVEL:
        return math.inf
    return float(TAU) ** level


def ceil_log_tau(x: float) -> int:
    """The integer ``l`` with ``TAU**(l-1) < x <= TAU**l``."""
    if not x > 0:
        raise ValueError("logarithm of a nonpositive number")
    if math.isinf(x):
        return TOP_LEVEL
    l = math.ceil(math.log(x, TAU))
    while tau_pow(l) < x:
        l += 1
    while tau_pow(l - 1) >= x:
        l -= 1
    return l


def floor_log_tau(x: float) -> int:
    """The integer ``l`` with ``TAU**l <= x < TAU**(l+1)``."""
    if not x > 0:
        raise ValueError("logarithm of a nonpositive number")
    l = math.floor(math.log(x, TAU))
    while tau_pow(l) > x:
        l -= 1
    while tau_pow(l + 1) <= x:
        l += 1
    return l


class _DontKnow:
    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self) -> str:
        return "DontKnow"


DontKnow = _DontKnow()


class NetTree:
    """A finished net-tree with its query indices.  Read-only after build."""

    def __init__(self, view: MetricView, level: list[int], rep: list[int], parent: list[int],
                 kids: list[list[int]], rel: list[dict[int, float]], leaf_of: list[int], root: int,
                 pdist: list[float] | None = None) -> None:
        self.view = view
        self.n = view.n
        self.level = np.asarray(level, dtype=np.int64)
        self.rep = np.asarray(rep, dtype=np.int64)
        self.parent = np.asarray(parent, dtype=np.int64)
        self.kids = kids
        self.rel = [sorted(r) for r in rel]
        # d(rep_u, rep_w) for w in rel[u], aligned with rel[u]
        self.rel_dist = [np.asarray([r[w] for w in members], dtype=float)
                         for r, members in zip(rel, self.rel)]
        # d(rep of parent, rep_v); 0 at the root
        self.pdist = np.zeros(len(level)) if pdist is None else np.asarray(pdist, dtype=float)
        self.leaf_of = np.asarray(leaf_of, dtype=np.int64)
        self.root = root
        self.parent_level = np.where(self.parent >= 0, self.level[np.maximum(self.parent, 0)],
                                     TOP_LEVEL)
        self._lca = LcaIndex(root, kids)
        self.depth = self._lca.depth
        self._ancestors = DepthAncestorIndex(root, self.parent, kids, self.depth)
        order = preorder(root, kids)
        is_leaf = self.level == LEAF_LEVEL
        leaf_seq = [v for v in order if is_leaf[v]]
        self.leaf_points = self.rep[np.asarray(leaf_seq, dtype=np.int64)]
        rank = np.zeros(self.size + 1, dtype=np.int64)
        marks = np.zeros(self.size, dtype=np.int64)
        marks[np.asarray(leaf_seq, dtype=np.int64)] = 1
        # leaves in preorder; a vertex spans a contiguous run of them
        pos = np.empty(self.size, dtype=np.int64)
        pos[np.asarray(order, dtype=np.int64)] = np.arange(self.size)
        rank[1:] = np.cumsum(marks[np.asarray(order, dtype=np.int64)])
        self._leaf_lo = np.empty(self.size, dtype=np.int64)
        self._leaf_hi = np.empty(self.size, dtype=np.int64)
        sub = self._subtree_sizes(order)
        self._leaf_lo[:] = rank[pos]
        self._leaf_hi[:] = rank[pos + sub]
        self.window = RESTRICTED_WINDOW * math.log2(max(self.n, 2))
        for a in (self.level, self.rep, self.parent, self.leaf_of, self.parent_level, self.pdist):
            a.setflags(write=False)

    def _subtree_sizes(self, order: list[int]) -> np.ndarray:
        sub = np.ones(self.size, dtype=np.int64)
        for v in reversed(order):
            p = self.parent[v]
            if p >= 0:
                sub[p] += sub[v]
        return sub

    # -- basic accessors -------------------------------------------------
    @property
    def size(self) -> int:
        return int(self.level.size)

    def is_leaf(self, v: int) -> bool:
        return bool(self.level[v] == LEAF_LEVEL)

    def children(self, v: int) -> list[int]:
        return self.kids[v]

    def points_under(self, v: int) -> np.ndarray:
        return self.leaf_points[self._leaf_lo[v]:self._leaf_hi[v]]

    def leaf_range(self, v: int) -> tuple[int, int]:
        """Slice of :attr:`leaf_points` holding the points under ``v``."""
        return int(self._leaf_lo[v]), int(self._leaf_hi[v])

    def covering_radius(self, v: int) -> float:
        return COVER_FACTOR * tau_pow(int(self.level[v]))

    def is_ancestor(self, a: int, v: int) -> bool:
        return self._lca.is_ancestor(a, v)

    def ancestor_at_depth(self, v: int, d: int) -> int:
        return self._ancestors.ancestor_at_depth(v, d)

    def max_degree(self) -> int:
        return max(len(k) for k in self.kids)

    def level_histogram(self) -> dict[int, int]:
        internal = self.level[self.level != LEAF_LEVEL]
        vals, counts = np.unique(internal, return_counts=True)
        return {int(a): int(b) for a, b in zip(vals, counts)}

    def to_json(self) -> str:
        def lvl(x: int):
            return None if x == LEAF_LEVEL else int(x)

        verts = [
            {"id": v, "level": lvl(int(self.level[v])), "rep": int(self.rep[v]),
             "parent": int(self.parent[v]), "children": list(self.kids[v]), "rel": self.rel[v]}
            for v in range(self.size)
        ]
        return json.dumps({"n": self.n, "root": self.root, "tau": TAU, "vertices": verts})


# ----------------------------------------------------------------------
# construction


class _Builder:
    """Incremental construction state.

    Besides the tree itself the builder keeps ``pdist[v] = d(rep[parent], rep[v])``
    and, inside each rel list, the distance between the two representatives.
    These let the Rel update skip a vertex whenever the triangle inequality
    already rules it out.
    """

    def __init__(self, view: MetricView, check: bool) -> None:
        self.view = view
        self.check = check
        self.level: list[int] = []
        self.rep: list[int] = []
        self.parent: list[int] = []
        # level of each vertex's parent, TOP_LEVEL at the root
        self.plev: list[int] = []
        self.kids: list[list[int]] = []
        self.rel: list[dict[int, float]] = []
        self.pdist: list[float] = []
        self.maxpd: list[float] = []
        self.maxpd_inner: list[float] = []
        self.leaf_of = [-1] * view.n
        self.root = -1
        self._memo: dict[int, float] = {}

    def dist(self, a: int, b: int) -> float:
        # a point can represent vertices on several levels, so pairs recur
        key = a * self.view.n + b if a < b else b * self.view.n + a
        d = self._memo.get(key)
        if d is None:
            d = self.view.distance(a, b)
            self._memo[key] = d
        return d

    def new_vertex(self, level: int, rep: int) -> int:
        v = len(self.level)
        self.level.append(level)
        self.rep.append(rep)
        self.parent.append(-1)
        self.plev.append(TOP_LEVEL)
        self.kids.append([])
        self.rel.append({v: 0.0})
        self.pdist.append(0.0)
        self.maxpd.append(0.0)
        self.maxpd_inner.append(-math.inf)
        return v

    def parent_level(self, v: int) -> int:
        return self.plev[v]

    def set_parent(self, child: int, par: int) -> None:
        self.parent[child] = par
        self.plev[child] = self.level[par]

    def attach(self, child: int, par: int, d: float) -> None:
        self.set_parent(child, par)
        self.kids[par].append(child)
        self.pdist[child] = d
        self.maxpd[par] = max(self.maxpd[par], d)
        if self.level[child] != LEAF_LEVEL:
            self.maxpd_inner[par] = max(self.maxpd_inner[par], d)

    def fresh_rel(self, u: int) -> dict[int, float]:
        """``rel[u]`` with entries made stale by splicing removed."""
        lu = self.level[u]
        rel = self.rel[u]
        level, plev = self.level, self.plev
        stale = [w for w in rel if not (level[w] <= lu < plev[w])]
        for w in stale:
            del rel[w]
        return rel

    def update_rel(self, x: int, cache: dict[int, float]) -> None:
        """Add ``x`` to its neighbours' rel lists and fill ``rel[x]``.

        ``cache`` maps point ids to their known distance from ``rep[x]``.
        """
        y = self.parent[x]
        if y < 0:
            return
        lx = self.level[x]
        lpx = self.parent_level(x)
        rx = self.rep[x]
        dyx = self.pdist[x]
        level, rep, kids, pdist, plev = self.level, self.rep, self.kids, self.pdist, self.plev
        rel_x = self.rel[x]
        slack = 1 + _BOUND_SLACK

        def exact(point: int) -> float:
            d = cache.get(point)
            if d is None:
                d = self.dist(point, rx)
                cache[point] = d
            return d

        thr_x = REL_FACTOR * tau_pow(lx)

        def reach(u: int) -> float:
            # largest distance at which u could still enter rel(x) or take x; -1 if neither
            lu = level[u]
            r = -1.0
            if lu <= lx < plev[u]:
                r = thr_x
            if lx <= lu < lpx:
                r = max(r, REL_FACTOR * tau_pow(lu))
            return r

        # members of rel(y) with a long parent edge can themselves belong to rel(x)
        x_is_leaf = lx == LEAF_LEVEL
        work: list[tuple[int, float]] = []
        for z, dyz in self.fresh_rel(y).items():
            lbz = abs(dyz - dyx)
            ubz = dyz + dyx
            work.append((z, lbz))
            lz = level[z]
            if lz == LEAF_LEVEL:
                continue
            # leaves never take a leaf; children sit below level[z]
            spread = self.maxpd_inner[z] if x_is_leaf else self.maxpd[z]
            if lbz - spread > REL_FACTOR * tau_pow(max(lx, lz - 1)) * slack:
                continue
            if any(max(lbz - pdist[c], pdist[c] - ubz) <= reach(c) * slack for c in kids[z]):
                dz = exact(rep[z])
                work.extend((c, abs(dz - pdist[c])) for c in kids[z])
        seen = {x}
        while work:
            u, lb = work.pop()
            if u in seen:
                continue
            seen.add(u)
            r = reach(u)
            if r < 0 or lb > r * slack:
                continue
            lu = level[u]
            u_for_x = lu <= lx < plev[u]
            x_for_u = lx <= lu < lpx
            thr_u = REL_FACTOR * tau_pow(lu)
            d = exact(rep[u])
            if u_for_x and d <= thr_x:
                rel_x[u] = d
            if x_for_u and d <= thr_u:
                self.rel[u][x] = d
                work.extend((c, abs(d - pdist[c])) for c in kids[u])

    def insert_first(self, p: int) -> None:
        v = self.new_vertex(LEAF_LEVEL, p)
        self.leaf_of[p] = v
        self.root = v

    def _nearest_rel_rep(self, p: int, u_hat: int, cache: dict[int, float]) -> int:
        d0 = self.dist(p, self.rep[u_hat])
        cache[self.rep[u_hat]] = d0
        cands = sorted((abs(d - d0), self.rep[w]) for w, d in self.fresh_rel(u_hat).items())
        best_d, best = math.inf, -1
        for lb, r in cands:
            if lb > best_d * (1 + _BOUND_SLACK):
                break
            d = cache.get(r)
            if d is None:
                d = self.dist(p, r)
                cache[r] = d
            if (d, r) < (best_d, best):
                best_d, best = d, r
        return best

    def insert(self, p: int, served_by: int, l: int, earlier: np.ndarray | None) -> None:
        cache: dict[int, float] = {p: 0.0}
        c_leaf = self.leaf_of[served_by]
        u_hat = self.parent[c_leaf]
        if u_hat < 0 or self.level[u_hat] > l:
            q = served_by
        else:
            q = self._nearest_rel_rep(p, u_hat, cache)
        if earlier is not None:
            self._check_q(p, q, earlier)
        q_leaf = self.leaf_of[q]
        u = self.parent[q_leaf]
        leaf = self.new_vertex(LEAF_LEVEL, p)
        self.leaf_of[p] = leaf
        dq = cache.get(q)
        if dq is None:
            dq = self.dist(p, q)
            cache[q] = dq
        if u < 0 or self.level[u] > l:
            v = self.new_vertex(l, q)
            if u < 0:
                self.root = v
            else:
                self.kids[u][self.kids[u].index(q_leaf)] = v
                self.set_parent(v, u)
                self.pdist[v] = self.pdist[q_leaf]
                self.maxpd_inner[u] = max(self.maxpd_inner[u], self.pdist[v])
            self.set_parent(q_leaf, v)
            self.pdist[q_leaf] = 0.0
            self.kids[v].append(q_leaf)
            self.attach(leaf, v, dq)
            self.update_rel(v, {q: 0.0, p: dq})
        else:
            if self.level[u] != l:
                raise AssertionError("insertion parent fell below the target level")
            du = cache.get(self.rep[u])
            if du is None:
                du = self.dist(p, self.rep[u])
                cache[self.rep[u]] = du
            self.attach(leaf, u, du)
        self.update_rel(leaf, cache)

    def _check_q(self, p: int, q: int, earlier: np.ndarray) -> None:
        d = self.view.distances_from(p, earlier)
        if self.view.distance(p, q) != float(d.min()):
            raise AssertionError(f"inserting {p}: chose {q}, not a nearest earlier center")


def _build_from_sequence(view: MetricView, seq: GreedySequence, check: bool = False) -> NetTree:
    b = _Builder(view, check)
    order = seq.order.tolist()
    b.insert_first(order[0])
    rbar = seq.prefix_min_radii()
    levels = [ceil_log_tau(float(r)) if r > 0 else LEAF_LEVEL for r in rbar]
    for k in range(2, len(order) + 1):
        l = levels[k - 2]
        earlier = None
        if check:
            # centers of the previous phase: p_1 .. p_h, h the last index with rbar_{h-1} > TAU**l
            h = max(j for j in range(1, k) if j == 1 or tau_pow(l) < rbar[j - 2])
            earlier = np.asarray(order[:h], dtype=np.int64)
        b.insert(order[k - 1], int(seq.prev_center[k - 1]), l, earlier)
    return NetTree(view, b.level, b.rep, b.parent, b.kids, [b.fresh_rel(u) for u in range(len(b.level))],
                   b.leaf_of, b.root, b.pdist)


def build_net_tree(view: MetricView, seed: int, lambda_hint: int | None = None, *,
                   sequence: GreedySequence | None = None, check: bool = False) -> NetTree:
    """Net-tree of the view.

    The default pipeline builds a coarse HST, runs the approximate greedy
    permutation over it and inserts points in that order.  Pass
    ``sequence`` to insert along a precomputed permutation instead.  With
    ``check`` every insertion's parent search is compared against a
    brute-force nearest-center scan.
    """
    if view.n < 1:
        raise ValueError("need at least one point")
    if sequence is None:
        hst = build_coarse_hst(view, seed, lambda_hint)
        sequence = net_permutation(view, hst)
    return _build_from_sequence(view, sequence, check)


# ----------------------------------------------------------------------
# queries


def net_at_level(tree: NetTree, l: int) -> np.ndarray:
    """Sorted representatives of vertices with ``level < l <= parent level``."""
    mask = (tree.level < l) & (l <= tree.parent_level)
    return np.sort(tree.rep[mask])


def _seek(tree: NetTree, leaf: int, l: int, lo: int, hi: int) -> int:
    # smallest depth in [lo, hi] whose ancestor has level <= l
    while lo < hi:
        mid = (lo + hi) // 2
        if tree.level[tree.ancestor_at_depth(leaf, mid)] <= l:
            hi = mid
        else:
            lo = mid + 1
    return tree.ancestor_at_depth(leaf, lo)


def level_ancestor(tree: NetTree, x: int, l: int) -> int:
    """The ancestor ``y`` of point ``x`` with ``level[y] <= l < parent level``."""
    leaf = int(tree.leaf_of[x])
    return _seek(tree, leaf, l, 0, int(tree.depth[leaf]))


def restricted_level_ancestor(tree: NetTree, x: int, z: int, l: int):
    """:func:`level_ancestor` for levels close below an ancestor ``z`` of ``x``.

    Returns :data:`DontKnow` unless ``level[z] - 6 log2 n <= l <= level[z]``.
    Inside that window the answer lies within ``6 log2 n + 1`` depths below
    ``z`` because levels strictly drop along every downward path, so the
    binary search takes ``O(log log n)`` steps.
    """
    leaf = int(tree.leaf_of[x])
    if not tree.is_ancestor(z, leaf):
        raise ValueError(f"vertex {z} is not an ancestor of point {x}")
    lz = int(tree.level[z])
    if lz == LEAF_LEVEL or l > lz or l < lz - tree.window:
        return DontKnow
    dz = int(tree.depth[z])
    hi = min(int(tree.depth[leaf]), dz + int(tree.window) + 1)
    return _seek(tree, leaf, l, dz, hi)


def tree_lca(tree: NetTree, u: int, v: int) -> int:
    return tree._lca.lca(u, v)


def range_query(tree: NetTree, q: QueryPoint, radius: float, start: list[int] | None = None,
                view: MetricView | None = None) -> np.ndarray:
    """Sorted points within ``radius`` of ``q`` under the ``start`` vertices.

    Subtrees whose covering ball cannot meet the query ball are skipped.
    """
    view = view if view is not None else tree.view
    frontier = [tree.root] if start is None else list(start)
    found: list[int] = []
    while frontier:
        d = view.query_distances(q, tree.rep[np.asarray(frontier, dtype=np.int64)])
        nxt: list[int] = []
        for v, dv in zip(frontier, d.tolist()):
            cover = tree.covering_radius(v)
            if dv > radius + cover:
                continue
            if tree.level[v] == LEAF_LEVEL:
                if dv <= radius:
                    found.append(int(tree.rep[v]))
            elif dv + cover <= radius:
                found.extend(tree.points_under(v).tolist())
            else:
                nxt.extend(tree.kids[v])
        frontier = nxt
    return np.asarray(sorted(set(found)), dtype=np.int64)


# ----------------------------------------------------------------------
# verification


@dataclass
class VerificationReport:
    ok: bool = True
    violations: list[str] = field(default_factory=list)
    checks: dict[str, bool] = field(default_factory=dict)

    def fail(self, kind: str, message: str) -> None:
        self.ok = False
        self.checks[kind] = False
        if len(self.violations) < 50:
            self.violations.append(f"{kind}: {message}")


def verify_net_tree(tree: NetTree, view: MetricView | None = None) -> VerificationReport:
    """Brute-force check of every net-tree property.  Quadratic; for tests."""
    view = view if view is not None else tree.view
    rep = VerificationReport()
    for kind in ("bijection", "levels", "degree", "inheritance", "child_distance", "covering",
                 "packing", "rel", "stored_distances", "net_separation", "net_covering"):
        rep.checks[kind] = True
    n = view.n
    D = view.full_matrix()
    level = tree.level
    size = tree.size
    leaves = np.flatnonzero(level == LEAF_LEVEL)
    if sorted(tree.rep[leaves].tolist()) != list(range(n)) or leaves.size != n:
        rep.fail("bijection", "leaves do not match points one to one")
    for v in range(size):
        kids = tree.kids[v]
        p = int(tree.parent[v])
        if p >= 0 and not level[v] < level[p]:
            rep.fail("levels", f"vertex {v} level {level[v]} not below parent {p}")
        if level[v] != LEAF_LEVEL:
            if len(kids) < 2:
                rep.fail("degree", f"internal vertex {v} has {len(kids)} children")
            if int(tree.rep[v]) not in {int(tree.rep[c]) for c in kids}:
                rep.fail("inheritance", f"rep of {v} not among its children's reps")
            bound = CHILD_FACTOR * tau_pow(int(level[v]))
            for c in kids:
                if D[tree.rep[v], tree.rep[c]] > bound:
                    rep.fail("child_distance", f"child {c} of {v} too far")
        under = tree.points_under(v)
        r = int(tree.rep[v])
        if D[r, under].max(initial=0.0) > tree.covering_radius(v):
            rep.fail("covering", f"vertex {v} leaves a point outside its covering ball")
        if p >= 0 and tree.pdist[v] != D[tree.rep[p], r]:
            rep.fail("stored_distances", f"parent distance of {v} is stale")
        if p >= 0:
            radius = PACK_FACTOR * tau_pow(int(level[p]) - 1)
            inside = np.zeros(n, dtype=bool)
            inside[under] = True
            stray = np.flatnonzero((D[r] <= radius) & ~inside)
            if stray.size:
                rep.fail("packing", f"point {stray[0]} near rep of {v} lies outside it")
    plevel = tree.parent_level
    reps = tree.rep
    for u in range(size):
        lu = int(level[u])
        mask = (level <= lu) & (lu < plevel) & (D[reps[u], reps] <= REL_FACTOR * tau_pow(lu))
        want = np.flatnonzero(mask).tolist()
        if want != tree.rel[u]:
            rep.fail("rel", f"rel of {u} differs from its definition")
        elif not np.array_equal(tree.rel_dist[u], D[reps[u], reps[want]]):
            rep.fail("stored_distances", f"rel distances of {u} are stale")
    internal_levels = sorted(set(level[level != LEAF_LEVEL].tolist()))
    if internal_levels:
        for l in range(internal_levels[0], internal_levels[-1] + 2):
            net = net_at_level(tree, l)
            if net.size > 1:
                sub = D[np.ix_(net, net)]
                np.fill_diagonal(sub, np.inf)
                if sub.min() < tau_pow(l - 1) / 4:
                    rep.fail("net_separation", f"net at level {l} is not separated")
            if D[:, net].min(axis=1).max() > 4 * tau_pow(l):
                rep.fail("net_covering", f"net at level {l} does not cover")
    return rep
