"""Static rooted-tree indices: constant-time LCA and level ancestors.

Both indices are built once from a parent array and are read-only
afterwards.

* :class:`LcaIndex` is the Euler tour plus a sparse table of depth minima.
* :class:`DepthAncestorIndex` answers "ancestor of ``v`` at depth ``d``"
  with jump pointers and ladders over a long-path decomposition.
"""

from __future__ import annotations

import numpy as np

__all__ = ["DepthAncestorIndex", "LcaIndex", "children_lists", "preorder"]


def children_lists(parent: np.ndarray) -> list[list[int]]:
    kids: list[list[int]] = [[] for _ in range(len(parent))]
    for v, p in enumerate(parent.tolist()):
        if p >= 0:
            kids[p].append(v)
    return kids


def preorder(root: int, kids: list[list[int]]) -> list[int]:
    order = []
    stack = [root]
    while stack:
        v = stack.pop()
        order.append(v)
        stack.extend(reversed(kids[v]))
    return order


class LcaIndex:
    def __init__(self, root: int, kids: list[list[int]]) -> None:
        size = len(kids)
        euler: list[int] = []
        depth_of = [0] * size
        first = [-1] * size
        last = [-1] * size
        stack: list[tuple[int, int]] = [(root, 0)]
        while stack:
            v, i = stack.pop()
            if i == 0:
                first[v] = len(euler)
            euler.append(v)
            if i < len(kids[v]):
                stack.append((v, i + 1))
                c = kids[v][i]
                depth_of[c] = depth_of[v] + 1
                stack.append((c, 0))
            else:
                last[v] = len(euler) - 1
        self.euler = np.asarray(euler, dtype=np.int64)
        self.first = np.asarray(first, dtype=np.int64)
        self.last = np.asarray(last, dtype=np.int64)
        self.depth = np.asarray(depth_of, dtype=np.int64)
        d = self.depth[self.euler]
        table = [np.arange(d.size, dtype=np.int64)]
        span = 1
        while 2 * span <= d.size:
            prev = table[-1]
            left = prev[: d.size - 2 * span + 1]
            right = prev[span : span + left.size]
            table.append(np.where(d[left] <= d[right], left, right))
            span *= 2
        self._table = table
        self._d = d

    def lca(self, u: int, v: int) -> int:
        a = int(self.first[u])
        b = int(self.first[v])
        if a > b:
            a, b = b, a
        k = (b - a + 1).bit_length() - 1
        row = self._table[k]
        i = int(row[a])
        j = int(row[b - (1 << k) + 1])
        return int(self.euler[i if self._d[i] <= self._d[j] else j])

    def is_ancestor(self, a: int, v: int) -> bool:
        """True when ``a`` is ``v`` or one of its ancestors."""
        return bool(self.first[a] <= self.first[v] and self.last[v] <= self.last[a])


class DepthAncestorIndex:
    def __init__(self, root: int, parent: np.ndarray, kids: list[list[int]], depth: np.ndarray) -> None:
        size = len(kids)
        self.depth = depth
        par = np.asarray(parent, dtype=np.int64)
        jumps = [par.copy()]
        while True:
            prev = jumps[-1]
            nxt = np.where(prev >= 0, prev[np.maximum(prev, 0)], -1)
            if np.all(nxt < 0):
                break
            jumps.append(nxt)
        self._jumps = [j.tolist() for j in jumps]
        order = preorder(root, kids)
        height = [0] * size
        long_child = [-1] * size
        for v in reversed(order):
            best = -1
            for c in kids[v]:
                if best < 0 or height[c] > height[best]:
                    best = c
            if best >= 0:
                height[v] = height[best] + 1
                long_child[v] = best
        self._ladder_of = [0] * size
        self._pos = [0] * size
        self._ladders: list[list[int]] = []
        parent_list = par.tolist()
        for v in order:
            if v != root and long_child[parent_list[v]] == v:
                continue
            path = []
            w = v
            while w >= 0:
                path.append(w)
                w = long_child[w]
            above = []
            w = parent_list[v]
            while w >= 0 and len(above) < len(path):
                above.append(w)
                w = parent_list[w]
            ladder = above[::-1] + path
            lid = len(self._ladders)
            self._ladders.append(ladder)
            off = len(above)
            for i, w in enumerate(path):
                self._ladder_of[w] = lid
                self._pos[w] = off + i

    def ancestor_at_depth(self, v: int, d: int) -> int:
        k = int(self.depth[v]) - d
        if k < 0:
            raise ValueError("target depth below the vertex")
        if k == 0:
            return v
        j = k.bit_length() - 1
        u = self._jumps[j][v]
        rest = k - (1 << j)
        ladder = self._ladders[self._ladder_of[u]]
        return ladder[self._pos[u] - rest]
