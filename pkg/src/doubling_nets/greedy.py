"""Greedy (farthest-point) permutations with friends lists.

Two entry points share one engine:

* :func:`greedy_permutation` is the exact greedy order; every point is in
  play from the start.
* :func:`net_permutation` lets HST nodes enter play one split at a time, so
  the running time does not depend on the spread.  The order is only
  approximately greedy: radii are off by at most a ``1 +/- n^-2`` factor.

Friends lists
-------------
Execution is cut into phases; a phase opens when the current radius has
halved since the previous opening radius ``rho``.  During a phase each
center lists every center within ``4 rho`` of it.  A center created in the
phase finds its friends through the center that served it when the phase
opened (its *anchor*): every such friend is either on the anchor's list, or
was itself created in this phase from an anchor on that list.  Entries
farther than ``4 rho_prev`` are trimmed lazily.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass

import numpy as np

from .hst import Hst
from .metric import MetricView

__all__ = ["FRIEND_FACTOR", "GreedySequence", "greedy_permutation", "k_center",
           "net_permutation"]

FRIEND_FACTOR = 4.0
_PRUNE_SLACK = 1e-9


@dataclass(frozen=True)
class GreedySequence:
    """A greedy order ``p_1 .. p_n``.

    ``radii[k - 1]`` is the distance from ``p_{k+1}`` to its nearest center
    among ``p_1 .. p_k`` at the moment it was picked (the last entry is 0).
    ``prev_center[k]`` is that nearest center for ``p_{k+1}`` (``-1`` for the
    first point).
    """

    order: np.ndarray
    radii: np.ndarray
    prev_center: np.ndarray
    exact: bool
    max_friends: int = 0

    @property
    def n(self) -> int:
        return int(self.order.size)

    def prefix_min_radii(self) -> np.ndarray:
        """``rbar[k - 1] = min(r_1 .. r_k)``."""
        return np.minimum.accumulate(self.radii) if self.radii.size else self.radii

    def position(self) -> np.ndarray:
        """``position()[p]`` is the 0-based index of point ``p`` in the order."""
        pos = np.empty(self.n, dtype=np.int64)
        pos[self.order] = np.arange(self.n)
        return pos


class _Engine:
    def __init__(self, view: MetricView, first: int, check: bool = False) -> None:
        n = view.n
        self.view = view
        self.n = n
        self.check = check
        self.alpha = np.full(n, np.inf)
        self.center = np.full(n, -1, dtype=np.int64)
        self.is_center = np.zeros(n, dtype=bool)
        self.rank = np.full(n, -1, dtype=np.int64)
        self.clusters: dict[int, set[int]] = {}
        self.friends: dict[int, dict[int, float]] = {}
        self.trimmed: dict[int, int] = {}
        self.spawned: dict[tuple[int, int], list[int]] = {}
        self.stamp = np.full(n, -1, dtype=np.int64)
        self.anchor_at = np.full(n, -1, dtype=np.int64)
        self.phase = 0
        self.rho = math.inf
        self.rho_prev = math.inf
        self.heap: list[tuple[float, int]] = []
        self.order: list[int] = []
        self.radii: list[float] = []
        self.prev: list[int] = []
        self.max_friends = 0
        self._make_center(first, -1)

    # -- bookkeeping -----------------------------------------------------
    def _anchor(self, x: int) -> int:
        if self.stamp[x] == self.phase:
            return int(self.anchor_at[x])
        return int(self.center[x])

    def _assign(self, x: int, c: int, d: float) -> None:
        old = int(self.center[x])
        if old >= 0:
            if self.stamp[x] < self.phase:
                self.stamp[x] = self.phase
                self.anchor_at[x] = old
            self.clusters[old].discard(x)
        self.center[x] = c
        self.alpha[x] = d
        if c != x:
            self.clusters[c].add(x)
            heapq.heappush(self.heap, (-d, x))

    def _friends_of(self, c: int) -> dict[int, float]:
        lst = self.friends[c]
        if self.trimmed[c] < self.phase:
            limit = FRIEND_FACTOR * self.rho_prev
            for b in [b for b, d in lst.items() if d > limit]:
                del lst[b]
            self.trimmed[c] = self.phase
        return lst

    def _make_center(self, p: int, served_by: int) -> None:
        self.order.append(p)
        self.prev.append(served_by)
        self.rank[p] = len(self.order) - 1
        self.is_center[p] = True
        self.clusters[p] = set()
        self.friends[p] = {p: 0.0}
        self.trimmed[p] = self.phase
        if served_by < 0:
            self.center[p] = p
            self.alpha[p] = 0.0
            return
        anchor = self._anchor(p)
        self._assign(p, p, 0.0)
        cand: set[int] = set()
        for s in self._friends_of(anchor):
            cand.add(s)
            cand.update(self.spawned.get((s, self.phase), ()))
        cand.discard(p)
        self.spawned.setdefault((anchor, self.phase), []).append(p)
        if cand:
            ids = np.fromiter(cand, dtype=np.int64, count=len(cand))
            d = self.view.distances_from(p, ids)
            limit = FRIEND_FACTOR * self.rho
            mine = self.friends[p]
            for b, db in zip(ids[d <= limit].tolist(), d[d <= limit].tolist()):
                mine[b] = db
                self.friends[b][p] = db
            self.max_friends = max(self.max_friends, len(mine))
        if self.check:
            self._check_friends(p)
        self._update_alpha(p)

    def _update_alpha(self, p: int) -> None:
        alpha = self.alpha
        for s, dsp in list(self.friends[p].items()):
            mem = self.clusters[s]
            if not mem or s == p:
                continue
            arr = np.fromiter(mem, dtype=np.int64, count=len(mem))
            near = arr[dsp <= 2 * alpha[arr] * (1 + _PRUNE_SLACK)]
            if near.size == 0:
                continue
            d = self.view.distances_from(p, near)
            better = d < alpha[near]
            for x, dx in zip(near[better].tolist(), d[better].tolist()):
                self._assign(x, p, dx)

    def _check_friends(self, p: int) -> None:
        centers = np.asarray(self.order, dtype=np.int64)
        d = self.view.distances_from(p, centers)
        need = set(centers[d <= FRIEND_FACTOR * self.rho].tolist())
        missing = need - set(self.friends[p])
        if missing:
            raise AssertionError(f"friends list of {p} misses {sorted(missing)}")

    # -- point activation ------------------------------------------------
    def activate(self, w: int, via: int) -> None:
        """Bring point ``w`` into play; ``via`` is an active point next to it."""
        c = int(self.center[via])
        lst = self._friends_of(c)
        ids = np.fromiter(lst, dtype=np.int64, count=len(lst))
        d = self.view.distances_from(w, ids)
        best = min(range(ids.size), key=lambda i: (d[i], self.rank[ids[i]]))
        self.stamp[w] = self.phase
        self.anchor_at[w] = self._anchor(via)
        self.center[w] = -1
        self._assign(w, int(ids[best]), float(d[best]))

    # -- main step ---------------------------------------------------------
    def top_alpha(self) -> float:
        heap = self.heap
        while heap:
            neg, x = heap[0]
            if self.is_center[x] or -neg != self.alpha[x]:
                heapq.heappop(heap)
                continue
            return -neg
        return -math.inf

    def extract(self) -> None:
        neg, p = heapq.heappop(self.heap)
        r = -neg
        if r <= self.rho / 2:
            self.phase += 1
            self.rho_prev = self.rho
            self.rho = r
        self.radii.append(r)
        self._make_center(p, int(self.center[p]))

    def result(self, exact: bool) -> GreedySequence:
        radii = self.radii + [0.0]
        return GreedySequence(
            order=np.asarray(self.order, dtype=np.int64),
            radii=np.asarray(radii[: self.n], dtype=float),
            prev_center=np.asarray(self.prev, dtype=np.int64),
            exact=exact,
            max_friends=self.max_friends,
        )


def greedy_permutation(view: MetricView, *, check: bool = False) -> GreedySequence:
    """Exact greedy permutation starting from point 0.

    Ties between equally far points go to the smaller id; a point keeps its
    current center when a new center is exactly as close.  With ``check``
    every new center's friends list is compared against a brute-force scan.
    """
    n = view.n
    if n < 1:
        raise ValueError("need at least one point")
    eng = _Engine(view, 0, check)
    if n > 1:
        rest = np.arange(1, n)
        d = view.distances_from(0, rest)
        for x, dx in zip(rest.tolist(), d.tolist()):
            eng.center[x] = 0
            eng.alpha[x] = dx
            eng.clusters[0].add(x)
        eng.heap = [(-dx, x) for x, dx in zip(rest.tolist(), d.tolist())]
        heapq.heapify(eng.heap)
    while len(eng.order) < n:
        eng.top_alpha()
        eng.extract()
    return eng.result(exact=True)


def net_permutation(view: MetricView, hst: Hst, *, check: bool = False) -> GreedySequence:
    """Approximate greedy permutation driven by HST split events.

    Only representatives of the current HST frontier are in play.  A
    frontier node ``v`` is split once ``delta_v * n^4`` reaches the largest
    pending radius (ties split first, then smaller preorder index).  The
    child that shares ``v``'s representative keeps its state; the other
    child's representative enters play with its nearest center found on the
    friends list of the center serving ``rep_v``.
    """
    n = view.n
    if hst.n != n:
        raise ValueError("hst was built over a different point set")
    root = hst.root
    eng = _Engine(view, int(hst.rep[root]), check)
    scale = float(n) ** 4
    nodes: list[tuple[float, int, int]] = []

    def push(v: int) -> None:
        if hst.left[v] >= 0:
            heapq.heappush(nodes, (-float(hst.delta[v]) * scale, int(hst.preorder_index[v]), v))

    push(root)
    while len(eng.order) < n:
        top = eng.top_alpha()
        if nodes and -nodes[0][0] >= top:
            _, _, v = heapq.heappop(nodes)
            rv = int(hst.rep[v])
            for c in hst.kids[v]:
                rc = int(hst.rep[c])
                if rc != rv:
                    eng.activate(rc, rv)
                push(c)
            continue
        eng.extract()
    return eng.result(exact=False)


def k_center(seq: GreedySequence, k: int) -> tuple[list[int], float]:
    """First ``k`` points of the order and their covering radius."""
    n = seq.n
    if not 1 <= k <= n:
        raise ValueError(f"k must lie in [1, {n}]")
    radius = float(seq.radii[k - 1])
    if not seq.exact:
        radius *= 1 + n ** -2.0
    return [int(p) for p in seq.order[:k]], radius
