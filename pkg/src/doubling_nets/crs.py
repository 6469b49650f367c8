"""Compact representation of a metric: approximate distances from small tables.

Two layers cooperate.

* The *coarse* layer answers within a constant factor.  A coarse HST is
  pruned twice so that every internal vertex's child representatives have
  polynomial spread; each such set gets a snowflake embedding into
  ``l_inf`` (:func:`build_assouad`) whose squared distances approximate the
  metric.
* The *boost* layer turns the coarse estimate into a ``(1 + eps)``
  answer.  It seeds a pair of net-tree ancestors of ``x`` and ``y`` a few
  levels below the scale of the estimate and climbs until the pair is a
  member of an ``eps``-WSPD, whose stored rep distance is returned.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .greedy import greedy_permutation
from .hst import Hst, build_coarse_hst
from .metric import DuplicatePoints, MetricView, require_distinct
from .net_tree import (
    COVER_FACTOR,
    LEAF_LEVEL,
    TAU,
    DontKnow,
    NetTree,
    build_net_tree,
    ceil_log_tau,
    floor_log_tau,
    level_ancestor,
    restricted_level_ancestor,
)
from .tree_index import DepthAncestorIndex, LcaIndex, children_lists
from .wspd import WspdPairs, build_wspd

__all__ = ["ASSOUAD_KAPPA", "BOOTSTRAP_EPS", "AssouadEmbedding", "CrsIndex", "CrsTrace",
           "SpreadTooLarge", "assouad_kappa", "assouad_distortion", "build_assouad", "build_crs",
           "coarse_estimate", "crs_query", "crs_query_trace", "k_set", "ladder_bound",
           "naive_ladder_pairs", "spread_limit"]

BOOTSTRAP_EPS = 0.1

# worst distortion max(query/d, d/query) seen by the calibration battery
# (tests/test_crs.py::test_kappa_table_covers_battery), plus 20% headroom
ASSOUAD_KAPPA = {
    0.05: 1.2 * 1.1132,
    0.1: 1.2 * 1.2847,
    0.25: 1.2 * 1.6820,
    0.5: 1.2 * 2.8766,
    1.0: 1.2 * 15.7634,
}


# the climb starts this many levels below the scale of eps * eta
_SEED_DROP = 2


class SpreadTooLarge(ValueError):
    pass


def spread_limit(n: int, eps: float) -> float:
    return 3 * (n / eps) ** 12


def assouad_kappa(eps: float) -> float:
    """Frozen distortion bound, taken from the next calibrated ``eps`` up."""
    for e in sorted(ASSOUAD_KAPPA):
        if eps <= e:
            return ASSOUAD_KAPPA[e]
    raise ValueError(f"no calibrated distortion for eps = {eps}")


# ----------------------------------------------------------------------
# snowflake embedding


@dataclass
class AssouadEmbedding:
    """Sparse vectors ``phi(x)`` with ``||phi(x) - phi(y)||_inf^2 ~ d(x, y)``.

    Scale ``l`` (radius ``(1 + eps)^l``) writes into row ``l mod rows``;
    ``cols`` is the largest number of colors any scale used.  Entry
    ``keys[x][k] = row * cols + color`` carries ``vals[x][k]``.
    """

    eps: float
    n: int
    rows: int
    cols: int
    l_min: int
    l_max: int
    keys: list[np.ndarray]
    vals: list[np.ndarray]

    def query(self, i: int, j: int) -> float:
        if i == j:
            return 0.0
        ki, vi, kj, vj = self.keys[i], self.vals[i], self.keys[j], self.vals[j]
        if ki.size == 0 or kj.size == 0:
            rest = vi if kj.size == 0 else vj
            return float(np.abs(rest).max()) ** 2 if rest.size else 0.0
        # keys are sorted; match the entries of j against those of i
        pos = np.minimum(np.searchsorted(ki, kj), ki.size - 1)
        hit = ki[pos] == kj
        diff = vj - np.where(hit, vi[pos], 0.0)
        alone = np.ones(ki.size, dtype=bool)
        alone[pos[hit]] = False
        best = max(float(np.abs(diff).max()), float(np.abs(vi[alone]).max()) if alone.any() else 0.0)
        return best * best

    def dense(self, i: int) -> np.ndarray:
        out = np.zeros(self.rows * max(self.cols, 1))
        out[self.keys[i]] = self.vals[i]
        return out


def _row_count(eps: float) -> int:
    # scales sharing a row differ by (1 + eps)^rows; the floor keeps that gap wide near eps = 1
    return max(8, math.ceil(8 / eps * math.log(1 / eps)))


class _NetBalls:
    """Ball searches restricted to a greedy prefix, one numpy pass per tree level.

    The tree is built from the greedy order, so a vertex's rep has the
    smallest rank under it and a subtree whose rep has rank ``>= k`` holds
    no point of the prefix.
    """

    def __init__(self, tree: NetTree, rank: np.ndarray) -> None:
        self.tree = tree
        self.rep = tree.rep
        lv = tree.level
        leaf = lv == LEAF_LEVEL
        self.leaf = leaf
        self.cover = np.where(leaf, 0.0, COVER_FACTOR * np.power(float(TAU), np.where(leaf, 0, lv)))
        counts = np.asarray([len(c) for c in tree.kids], dtype=np.int64)
        self.ptr = np.concatenate([[0], np.cumsum(counts)])
        self.flat = np.asarray([c for cs in tree.kids for c in cs], dtype=np.int64)
        self.rep_rank = rank[tree.rep]

    def query(self, xs: np.ndarray, radius: float, k: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Pairs ``(x, w, d(x, w))`` with ``x`` in ``xs``, rank of ``w`` below ``k`` and ``d <= radius``.

        Sorted by ``x``, then ``w``.
        """
        view = self.tree.view
        src = np.asarray(xs, dtype=np.int64)
        ver = np.full(src.size, self.tree.root, dtype=np.int64)
        out_x: list[np.ndarray] = []
        out_w: list[np.ndarray] = []
        out_d: list[np.ndarray] = []
        while src.size:
            d = view.pair_distances(src, self.rep[ver])
            alive = d <= radius + self.cover[ver]
            src, ver, d = src[alive], ver[alive], d[alive]
            leaf = self.leaf[ver]
            hit = leaf & (d <= radius)
            out_x.append(src[hit])
            out_w.append(self.rep[ver[hit]])
            out_d.append(d[hit])
            inner = ~leaf
            src, ver = src[inner], ver[inner]
            starts = self.ptr[ver]
            sizes = self.ptr[ver + 1] - starts
            pos = np.repeat(starts - np.cumsum(sizes) + sizes, sizes) + np.arange(int(sizes.sum()))
            src = np.repeat(src, sizes)
            ver = self.flat[pos]
            keep = self.rep_rank[ver] < k
            src, ver = src[keep], ver[keep]
        x = np.concatenate(out_x)
        w = np.concatenate(out_w)
        dd = np.concatenate(out_d)
        order = np.lexsort((w, x))
        return x[order], w[order], dd[order]


def build_assouad(view: MetricView, eps: float, seed: int, *, spread_n: int | None = None) -> AssouadEmbedding:
    """Snowflake embedding of ``(P, sqrt(d))`` into sparse ``l_inf`` vectors.

    For each scale ``r = (1 + eps)^l`` the net is the shortest greedy prefix
    covering within ``eps r``; it is greedily colored so that net points
    within ``4 r`` differ, and ``phi^(r)_i(x) = max(0, r - d(x, C_i))``.
    Distances to color classes are exact, taken from a range query.
    ``spread_n`` is the point count used in the spread precondition.
    """
    if not 0 < eps <= 1:
        raise ValueError("eps must lie in (0, 1]")
    n = view.n
    rows = _row_count(eps)
    empty = [np.empty(0, dtype=np.int64) for _ in range(n)]
    if n == 1:
        return AssouadEmbedding(eps, 1, rows, 0, 0, 0, empty, [np.empty(0) for _ in range(n)])
    seq = greedy_permutation(view)
    closest = float(seq.radii[: n - 1].min())
    if closest == 0:
        raise DuplicatePoints("input contains duplicate points")
    far = float(seq.radii[0])  # the diameter lies in [far, 2 far]
    limit = spread_limit(spread_n if spread_n is not None else n, eps)
    if 2 * far / closest > limit:
        diam = max(float(view.distances_from(i, np.arange(n)).max()) for i in range(n))
        if diam / closest > limit:
            raise SpreadTooLarge(f"spread {diam / closest:.3g} exceeds {limit:.3g}")
    base = math.log1p(eps)
    l_min = math.floor(math.log(closest) / base) - 1
    l_max = math.ceil(math.log(2 * far) / base) + 1
    tree = build_net_tree(view, seed, sequence=seq)
    rbar = seq.prefix_min_radii()
    order = seq.order
    rank = seq.position()
    balls = _NetBalls(tree, rank)
    acc: list[dict[int, float]] = [{} for _ in range(n)]
    # per scale, record colors; the column count is fixed afterwards
    entries: list[tuple[int, list[tuple[int, int, float]]]] = []
    cols = 0
    for l in range(l_min, l_max + 1):
        r = math.exp(l * base)
        k = int(np.searchsorted(-rbar, -eps * r, side="left")) + 1
        k = min(k, n)
        color = np.full(n, -1, dtype=np.int64)
        net = order[:k]
        px, pw, _ = balls.query(net, 4 * r, k)
        cut = np.searchsorted(px, np.arange(n + 1))
        for p in net.tolist():
            nb = pw[cut[p]:cut[p + 1]]
            used = set(color[nb][color[nb] >= 0].tolist())
            c = 0
            while c in used:
                c += 1
            color[p] = c
        cols = max(cols, int(color.max()) + 1)
        x, w, d = balls.query(np.arange(n), r, k)
        keep = d < r
        x, c, d = x[keep], color[w[keep]], d[keep]
        # nearest member of each color class: sort by (x, color, d), keep first
        o = np.lexsort((d, c, x))
        x, c, d = x[o], c[o], d[o]
        first = np.ones(x.size, dtype=bool)
        first[1:] = (x[1:] != x[:-1]) | (c[1:] != c[:-1])
        scale = list(zip(x[first].tolist(), c[first].tolist(), ((r - d[first]) / math.sqrt(r)).tolist()))
        entries.append((l % rows, scale))
    for row, scale in entries:
        for x, c, v in scale:
            key = row * cols + c
            acc[x][key] = acc[x].get(key, 0.0) + v
    keys = [np.asarray(sorted(a), dtype=np.int64) for a in acc]
    vals = [np.asarray([a[k] for k in sorted(a)], dtype=float) for a in acc]
    return AssouadEmbedding(eps, n, rows, cols, l_min, l_max, keys, vals)


def assouad_distortion(emb: AssouadEmbedding, view: MetricView) -> float:
    """Worst ``max(query / d, d / query)`` over all pairs (exhaustive)."""
    worst = 1.0
    for i in range(view.n):
        d = view.distances_from(i, np.arange(i + 1, view.n))
        for j, dij in zip(range(i + 1, view.n), d.tolist()):
            q = emb.query(i, j)
            worst = max(worst, q / dij, dij / q if q > 0 else math.inf)
    return worst


# ----------------------------------------------------------------------
# coarse layer


@dataclass
class _PrunedHst:
    """HST restricted to retained vertices, with embeddings of child reps."""

    ids: np.ndarray  # H vertex of each local vertex
    parent: np.ndarray
    local_of: dict[int, int]
    lca: LcaIndex
    ancestors: DepthAncestorIndex
    # local vertex -> (embedding of its children's reps, child -> row in it)
    embeddings: dict[int, tuple[AssouadEmbedding, dict[int, int]]]
    max_child_spread: float = 0.0


def _retained(hst: Hst, offset: int, modulus: int) -> np.ndarray:
    keep = np.zeros(hst.size, dtype=bool)
    keep[: hst.n] = True
    keep[hst.root] = True
    parent = hst.parent
    for u in range(hst.n, hst.size):
        if u == hst.root:
            continue
        lo = float(hst.delta[u])
        hi = float(hst.delta[parent[u]])
        # smallest b = 2^(offset + t * modulus) with b >= lo; keep when b < hi
        t = math.ceil((math.log2(lo) - offset) / modulus)
        while 2.0 ** (offset + (t - 1) * modulus) >= lo:
            t -= 1
        while 2.0 ** (offset + t * modulus) < lo:
            t += 1
        keep[u] = 2.0 ** (offset + t * modulus) < hi
    return keep


def _prune(hst: Hst, view: MetricView, offset: int, modulus: int, eps0: float, seed: int) -> _PrunedHst:
    keep = _retained(hst, offset, modulus)
    ids = np.flatnonzero(keep)
    local_of = {int(u): i for i, u in enumerate(ids.tolist())}
    parent = np.full(ids.size, -1, dtype=np.int64)
    hp = hst.parent
    for i, u in enumerate(ids.tolist()):
        w = int(hp[u])
        while w >= 0 and not keep[w]:
            w = int(hp[w])
        if w >= 0:
            parent[i] = local_of[w]
    kids = children_lists(parent)
    root = local_of[hst.root]
    lca = LcaIndex(root, kids)
    anc = DepthAncestorIndex(root, parent, kids, lca.depth)
    embeddings = {}
    worst = 0.0
    for i, ch in enumerate(kids):
        if not ch:
            continue
        reps = hst.rep[ids[np.asarray(ch)]]
        sub = view.subset(reps.tolist())
        emb = build_assouad(sub, eps0, seed + i, spread_n=view.n)
        embeddings[i] = (emb, {c: k for k, c in enumerate(ch)})
        if len(ch) > 1:
            D = np.array([sub.distances_from(a, np.arange(sub.n)) for a in range(sub.n)])
            worst = max(worst, float(D.max() / D[D > 0].min()))
    return _PrunedHst(ids, parent, local_of, lca, anc, embeddings, worst)


# ----------------------------------------------------------------------
# boost layer


def k_set(tree: NetTree, view: MetricView, center: int, delta: float) -> list[int]:
    """Net-tree vertices crossing level ``log_tau delta`` within ``4 delta`` of ``center``.

    That is, ``level(x) < log_tau(delta) <= level(parent(x))`` and
    ``d(rep_x, center) <= 4 delta``.  Found by a top-down walk that drops
    subtrees whose covering ball misses the search ball.
    """
    top = ceil_log_tau(delta)
    # integer levels l with l < log_tau(delta) are those l <= top - 1
    cross = top - 1
    radius = 4 * delta
    q = view.point_as_query(center)
    found: list[int] = []
    frontier = [tree.root]
    while frontier:
        d = view.query_distances(q, tree.rep[np.asarray(frontier, dtype=np.int64)])
        nxt: list[int] = []
        for w, dw in zip(frontier, d.tolist()):
            if dw > radius + tree.covering_radius(w):
                continue
            if tree.level[w] <= cross:
                if dw <= radius and tree.parent_level[w] > cross:
                    found.append(int(w))
                continue
            nxt.extend(tree.kids[w])
        frontier = nxt
    return sorted(found)


def ladder_bound(kappa_bar: float) -> int:
    """Documented cap on climb steps for a bootstrap factor ``kappa_bar``."""
    return 2 * (math.ceil(math.log(kappa_bar) / math.log(TAU)) + 4)


@dataclass
class CrsIndex:
    view: MetricView
    eps: float
    eps0: float
    hst: Hst
    hst_lca: LcaIndex
    pruned: tuple[_PrunedHst, _PrunedHst]
    kappa_a: float
    kappa_bar: float
    tree: NetTree
    pairs: WspdPairs
    pair_dist: dict[tuple[int, int], float]
    k_sets: dict[int, list[int]]


@dataclass
class CrsTrace:
    value: float
    coarse: float = 0.0
    eta: float = 0.0
    layer: int = -1  # which pruned HST answered the coarse query
    seed_pair: tuple[int, int] = (-1, -1)
    pair: tuple[int, int] = (-1, -1)
    steps: int = 0
    restarted: bool = False
    visited: list[tuple[int, int]] = field(default_factory=list)


def build_crs(view: MetricView, eps: float, seed: int) -> CrsIndex:
    """Build both layers; the coarse layer runs at ``eps0 = 0.1``."""
    if not 0 < eps <= 1:
        raise ValueError("eps must lie in (0, 1]")
    require_distinct(view)
    n = view.n
    eps0 = BOOTSTRAP_EPS
    hst = build_coarse_hst(view, seed)
    scale = math.log2(1 / eps0) + math.log2(max(n, 2))
    modulus = math.ceil(10 * scale)
    offsets = (0, math.ceil(5 * scale))
    pruned = tuple(_prune(hst, view, a, modulus, eps0, seed + 7 * k) for k, a in enumerate(offsets))
    kappa_a = assouad_kappa(eps0)
    # eta = coarse / (kappa_a (1 + eps0)) keeps d / kappa_bar <= eta <= d
    kappa_bar = (kappa_a * (1 + eps0)) ** 2
    tree = build_net_tree(view, seed)
    pairs = build_wspd(tree, view, eps)
    pair_dist = {(min(a, b), max(a, b)): d
                 for a, b, d in zip(pairs.u.tolist(), pairs.v.tolist(), pairs.dist.tolist())}
    k_sets = {u: k_set(tree, view, int(hst.rep[u]), float(hst.delta[u]))
              for u in range(n, hst.size)}
    kids = [hst.children(u) for u in range(hst.size)]
    return CrsIndex(view, eps, eps0, hst, LcaIndex(hst.root, kids), pruned, kappa_a, kappa_bar,
                    tree, pairs, pair_dist, k_sets)


def coarse_estimate(index: CrsIndex, x: int, y: int) -> tuple[float, int]:
    """Constant-factor estimate of ``d(x, y)`` and the pruned HST that gave it."""
    if x == y:
        return 0.0, -1
    hst = index.hst
    top = float(hst.delta[index.hst_lca.lca(x, y)])
    ratio = (index.view.n / index.eps0) ** 5
    best = None
    for k, ph in enumerate(index.pruned):
        lx, ly = ph.local_of[x], ph.local_of[y]
        u = ph.lca.lca(lx, ly)
        du = int(ph.lca.depth[u])
        cx = ph.ancestors.ancestor_at_depth(lx, du + 1)
        cy = ph.ancestors.ancestor_at_depth(ly, du + 1)
        spread = max(float(hst.delta[ph.ids[cx]]), float(hst.delta[ph.ids[cy]]))
        cand = (spread > top / ratio, spread, k, u, cx, cy)
        if best is None or cand[:2] < best[:2]:
            best = cand
    _, _, k, u, cx, cy = best
    emb, row = index.pruned[k].embeddings[u]
    return emb.query(row[cx], row[cy]), k


def _climb(index: CrsIndex, u: int, v: int, trace: CrsTrace | None) -> tuple[int, int, int] | None:
    tree = index.tree
    parent, plevel = tree.parent, tree.parent_level
    steps = 0
    while (min(u, v), max(u, v)) not in index.pair_dist:
        if trace is not None:
            trace.visited.append((u, v))
        if u == v or tree.is_ancestor(u, v) or tree.is_ancestor(v, u):
            return None
        pu, pv = int(parent[u]), int(parent[v])
        # undo the generation order: the later split was of the lower parent,
        # and on equal levels of the parent that comes later in creation order
        if plevel[u] < plevel[v] or (plevel[u] == plevel[v] and pv < pu):
            u = pu
        else:
            v = pv
        steps += 1
    if trace is not None:
        trace.visited.append((u, v))
    return u, v, steps


def _seed(index: CrsIndex, x: int, z: int, level: int) -> int:
    tree = index.tree
    leaf = int(tree.leaf_of[x])
    anchor = next((w for w in index.k_sets[z] if tree.is_ancestor(w, leaf)), -1)
    if anchor < 0:
        raise AssertionError(f"no member of K_{z} is an ancestor of point {x}")
    got = restricted_level_ancestor(tree, x, anchor, level)
    return level_ancestor(tree, x, level) if got is DontKnow else got


def crs_query_trace(index: CrsIndex, x: int, y: int, *, record: bool = False) -> CrsTrace:
    if x == y:
        return CrsTrace(0.0)
    tree = index.tree
    coarse, layer = coarse_estimate(index, x, y)
    eta = coarse / (index.kappa_a * (1 + index.eps0))
    out = CrsTrace(0.0, coarse=coarse, eta=eta, layer=layer)
    z = index.hst_lca.lca(x, y)
    level = floor_log_tau(index.eps * eta) - _SEED_DROP
    u0, v0 = _seed(index, x, z, level), _seed(index, y, z, level)
    out.seed_pair = (u0, v0)
    got = _climb(index, u0, v0, out if record else None)
    if got is None:
        # the seed was not below the covering pair; leaves always are
        out.restarted = True
        got = _climb(index, int(tree.leaf_of[x]), int(tree.leaf_of[y]), out if record else None)
        if got is None:
            raise AssertionError(f"no WSPD pair covers points {x} and {y}")
    u, v, out.steps = got
    out.pair = (u, v)
    out.value = index.pair_dist[(min(u, v), max(u, v))]
    return out


def crs_query(index: CrsIndex, x: int, y: int) -> float:
    """``d(rep_u, rep_v)`` for the WSPD pair covering ``x`` and ``y``."""
    return crs_query_trace(index, x, y).value


def naive_ladder_pairs(tree: NetTree, u0: int, v0: int, top: tuple[int, int]) -> set[tuple[int, int]]:
    """Ancestor pairs of ``(u0, v0)`` up to ``top`` that the generation order visits."""
    def chain(w: int, stop: int) -> list[int]:
        out = [w]
        while w != stop:
            w = int(tree.parent[w])
            out.append(w)
        return out

    level, parent, plevel = tree.level, tree.parent, tree.parent_level

    def visits(s: int, t: int) -> bool:
        # the split order reaches (s, t) with level(s) <= level(t)
        if level[t] < plevel[s]:
            return True
        return bool(level[s] < level[t] == plevel[s] and int(parent[s]) <= t)

    got = set()
    for a in chain(u0, top[0]):
        for b in chain(v0, top[1]):
            s, t = (a, b) if level[a] <= level[b] else (b, a)
            if level[a] == level[b]:
                ok = visits(a, b) and visits(b, a)
            else:
                ok = visits(s, t)
            if ok:
                got.add((a, b))
    return got

