"""Finite metric spaces with an instrumented distance oracle.

Every structure in this package talks to its point set only through a
:class:`MetricView`.  A view counts each distance evaluation so that
construction costs can be measured as oracle calls rather than wall time.
"""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

__all__ = [
    "AxiomReport",
    "CallCounter",
    "DedupMap",
    "DuplicatePoints",
    "MetricView",
    "QueryPoint",
    "SpreadStats",
    "ball",
    "check_metric_axioms",
    "dedup",
    "distance",
    "spread_stats",
]

REL_TOL = 1e-9
# squared coordinate differences stay finite below this magnitude
MAX_COORD = 1e150


class DuplicatePoints(ValueError):
    """Two distinct ids sit at distance zero."""


class CallCounter:
    """Monotone, lock-protected count of distance evaluations."""

    def __init__(self) -> None:
        self._value = 0
        self._lock = threading.Lock()

    def add(self, k: int) -> None:
        with self._lock:
            self._value += k

    @property
    def value(self) -> int:
        return self._value


class QueryPoint:
    """A point of the ambient space that is not necessarily stored.

    For coordinate backends this wraps a coordinate vector.  For matrix
    backends it wraps the row of distances from the query to every stored
    point.
    """

    __slots__ = ("coords", "row")

    def __init__(self, coords: Sequence[float] | None = None, row: Sequence[float] | None = None):
        if (coords is None) == (row is None):
            raise ValueError("give exactly one of coords or row")
        self.coords = None if coords is None else np.asarray(coords, dtype=float)
        self.row = None if row is None else np.asarray(row, dtype=float)


class MetricView:
    """Immutable finite metric with a counting distance oracle.

    Parameters
    ----------
    coords:
        ``n x D`` array of Euclidean coordinates.
    matrix:
        ``n x n`` array of pairwise distances.

    Exactly one backend must be supplied.  Euclidean distances are summed
    coordinate by coordinate in a fixed order, so the single-pair and the
    batched paths return bit-identical values and ``d(i, j) == d(j, i)``.
    """

    def __init__(
        self,
        coords: np.ndarray | Sequence[Sequence[float]] | None = None,
        matrix: np.ndarray | Sequence[Sequence[float]] | None = None,
        *,
        counter: CallCounter | None = None,
    ) -> None:
        if (coords is None) == (matrix is None):
            raise ValueError("give exactly one of coords or matrix")
        self.counter = counter if counter is not None else CallCounter()
        if coords is not None:
            arr = np.array(coords, dtype=float)
            if arr.ndim == 1:
                arr = arr.reshape(-1, 1)
            if arr.ndim != 2:
                raise ValueError("coords must be two dimensional")
            if not np.all(np.isfinite(arr)) or (arr.size and np.abs(arr).max() > MAX_COORD):
                raise ValueError(f"coordinates must be finite with magnitude at most {MAX_COORD:g}")
            self.kind = "euclidean"
            self.coords: np.ndarray | None = arr
            self.matrix: np.ndarray | None = None
            self.n = arr.shape[0]
            self._cols = [np.ascontiguousarray(arr[:, k]) for k in range(arr.shape[1])]
            self._rows = arr.tolist()
        else:
            mat = np.array(matrix, dtype=float)
            if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
                raise ValueError("matrix must be square")
            if np.any(mat < 0) or not np.all(np.isfinite(mat)):
                raise ValueError("matrix entries must be finite and nonnegative")
            self.kind = "matrix"
            self.coords = None
            self.matrix = mat
            self.n = mat.shape[0]
            self._cols = []
            self._rows = []
        self._freeze()

    def _freeze(self) -> None:
        if self.coords is not None:
            self.coords.setflags(write=False)
        if self.matrix is not None:
            self.matrix.setflags(write=False)

    # ------------------------------------------------------------------
    @property
    def calls(self) -> int:
        return self.counter.value

    def _check(self, i: int) -> None:
        if not 0 <= i < self.n:
            raise IndexError(f"point id {i} out of range [0, {self.n})")

    def distance(self, i: int, j: int) -> float:
        self._check(i)
        self._check(j)
        self.counter.add(1)
        if self.matrix is not None:
            return float(self.matrix[i, j])
        a = self._rows[i]
        b = self._rows[j]
        s = 0.0
        for x, y in zip(a, b):
            t = x - y
            s += t * t
        return math.sqrt(s)

    def distances_from(self, i: int, js: np.ndarray | Sequence[int]) -> np.ndarray:
        """Distances from ``i`` to every id in ``js`` (counted per pair)."""
        self._check(i)
        idx = np.asarray(js, dtype=np.int64)
        if idx.size and (idx.min() < 0 or idx.max() >= self.n):
            raise IndexError("point id out of range")
        self.counter.add(int(idx.size))
        if self.matrix is not None:
            return self.matrix[i, idx].astype(float, copy=True)
        acc = np.zeros(idx.size)
        for col in self._cols:
            t = col[idx] - col[i]
            acc += t * t
        return np.sqrt(acc)

    def pair_distances(self, ii: np.ndarray, jj: np.ndarray) -> np.ndarray:
        """Elementwise ``d(ii[k], jj[k])`` (counted per pair)."""
        a = np.asarray(ii, dtype=np.int64)
        b = np.asarray(jj, dtype=np.int64)
        if a.shape != b.shape:
            raise ValueError("id arrays must have equal shapes")
        if a.size and (min(a.min(), b.min()) < 0 or max(a.max(), b.max()) >= self.n):
            raise IndexError("point id out of range")
        self.counter.add(int(a.size))
        if self.matrix is not None:
            return self.matrix[a, b].astype(float, copy=True)
        acc = np.zeros(a.size)
        for col in self._cols:
            t = col[b] - col[a]
            acc += t * t
        return np.sqrt(acc)

    def query_distances(self, q: QueryPoint, js: np.ndarray | Sequence[int]) -> np.ndarray:
        """Distances from an ambient query point to stored ids ``js``."""
        idx = np.asarray(js, dtype=np.int64)
        self.counter.add(int(idx.size))
        if self.matrix is not None:
            if q.row is None:
                raise ValueError("matrix backend needs a query row of distances")
            if q.row.shape[0] != self.n:
                raise ValueError("query row length must equal n")
            return q.row[idx].astype(float, copy=True)
        if q.coords is None:
            raise ValueError("coordinate backend needs query coordinates")
        if q.coords.shape[0] != len(self._cols):
            raise ValueError("query dimension mismatch")
        acc = np.zeros(idx.size)
        for k, col in enumerate(self._cols):
            t = col[idx] - q.coords[k]
            acc += t * t
        return np.sqrt(acc)

    def query_distance(self, q: QueryPoint, j: int) -> float:
        return float(self.query_distances(q, [j])[0])

    def point_as_query(self, i: int) -> QueryPoint:
        """The stored point ``i`` wrapped as a query (no oracle calls)."""
        self._check(i)
        if self.matrix is not None:
            return QueryPoint(row=self.matrix[i])
        return QueryPoint(coords=self.coords[i])

    def subset(self, ids: Sequence[int]) -> MetricView:
        """Sub-metric on ``ids`` (renumbered densely) sharing this counter."""
        idx = np.asarray(ids, dtype=np.int64)
        if self.matrix is not None:
            return MetricView(matrix=self.matrix[np.ix_(idx, idx)], counter=self.counter)
        return MetricView(coords=self.coords[idx], counter=self.counter)

    def full_matrix(self) -> np.ndarray:
        """All ``n^2`` distances (``n`` batched rows, every pair counted)."""
        out = np.empty((self.n, self.n))
        everything = np.arange(self.n)
        for i in range(self.n):
            out[i] = self.distances_from(i, everything)
        return out


def distance(view: MetricView, i: int, j: int) -> float:
    return view.distance(i, j)


def ball(view: MetricView, center: int, r: float) -> np.ndarray:
    """Sorted ids of the closed ball of radius ``r`` around ``center``."""
    view._check(center)
    if r < 0:
        raise ValueError("radius must be nonnegative")
    if math.isinf(r):
        return np.arange(view.n)
    d = view.distances_from(center, np.arange(view.n))
    return np.flatnonzero(d <= r)


@dataclass(frozen=True)
class SpreadStats:
    diameter: float
    min_positive_distance: float
    spread: float


def spread_stats(view: MetricView) -> SpreadStats:
    """Exact diameter, closest pair and their ratio by a quadratic scan."""
    if view.n < 2:
        raise ValueError("spread needs at least two points")
    diam = 0.0
    closest = math.inf
    for i in range(view.n - 1):
        d = view.distances_from(i, np.arange(i + 1, view.n))
        if np.any(d == 0):
            j = i + 1 + int(np.flatnonzero(d == 0)[0])
            raise DuplicatePoints(f"points {i} and {j} coincide")
        diam = max(diam, float(d.max()))
        closest = min(closest, float(d.min()))
    return SpreadStats(diam, closest, diam / closest)


@dataclass(frozen=True)
class AxiomReport:
    ok: bool
    violation: str | None = None
    witness: tuple[int, ...] | None = None


def check_metric_axioms(view: MetricView, sample_count: int, seed: int) -> AxiomReport:
    """Look for identity, symmetry or triangle violations.

    When ``n^3 <= sample_count`` every ordered triple is inspected in
    lexicographic order; otherwise ``sample_count`` pairs and triples are
    drawn with ``numpy.random.default_rng(seed)``.
    """
    if sample_count < 0:
        raise ValueError("sample_count must be nonnegative")
    n = view.n
    if n == 0:
        return AxiomReport(True)
    if n ** 3 <= sample_count:
        rng = None
        pairs: Iterable[tuple[int, int]] = ((i, j) for i in range(n) for j in range(n))
        triples: Iterable[tuple[int, int, int]] = (
            (i, j, k) for i in range(n) for j in range(n) for k in range(n)
        )
    else:
        rng = np.random.default_rng(seed)
        pr = rng.integers(0, n, size=(sample_count, 2))
        tr = rng.integers(0, n, size=(sample_count, 3))
        pairs = (tuple(map(int, p)) for p in pr)
        triples = (tuple(map(int, t)) for t in tr)
    for i, j in pairs:
        if i == j:
            if view.distance(i, i) != 0:
                return AxiomReport(False, "identity", (i,))
            continue
        if view.distance(i, j) != view.distance(j, i):
            return AxiomReport(False, "symmetry", (min(i, j), max(i, j)))
    for i, j, k in triples:
        if len({i, j, k}) < 3:
            continue
        direct = view.distance(i, k)
        detour = view.distance(i, j) + view.distance(j, k)
        if direct > detour * (1 + REL_TOL):
            return AxiomReport(False, "triangle", (i, j, k))
    return AxiomReport(True)


@dataclass(frozen=True)
class DedupMap:
    """``retained[i]`` is the id, in the deduplicated view, of original point ``i``."""

    retained: np.ndarray
    kept: np.ndarray

    def to_original(self, new_id: int) -> int:
        return int(self.kept[new_id])


def dedup(view: MetricView) -> tuple[MetricView, DedupMap]:
    """Drop exact duplicates, keeping the first occurrence of each point."""
    n = view.n
    if view.coords is not None:
        _, first, inverse = np.unique(view.coords, axis=0, return_index=True, return_inverse=True)
        inverse = inverse.reshape(-1)
        order = np.argsort(first, kind="stable")
        kept = first[order]
        rank = np.empty_like(order)
        rank[order] = np.arange(order.size)
        retained = rank[inverse]
        return MetricView(coords=view.coords[kept]), DedupMap(retained, kept)
    mat = view.matrix
    retained = np.full(n, -1, dtype=np.int64)
    kept: list[int] = []
    for i in range(n):
        if retained[i] >= 0:
            continue
        retained[i] = len(kept)
        same = np.flatnonzero(mat[i] == 0)
        for j in same:
            if j > i and retained[j] < 0:
                retained[j] = len(kept)
        kept.append(i)
    kept_arr = np.asarray(kept, dtype=np.int64)
    return MetricView(matrix=mat[np.ix_(kept_arr, kept_arr)]), DedupMap(retained, kept_arr)


def require_distinct(view: MetricView) -> None:
    """Raise :class:`DuplicatePoints` if two ids coincide."""
    if view.coords is not None:
        uniq = np.unique(view.coords, axis=0)
        if uniq.shape[0] != view.n:
            raise DuplicatePoints("input contains duplicate points")
    else:
        off = view.matrix + np.eye(view.n)
        if np.any(off == 0):
            i, j = np.argwhere(off == 0)[0]
            raise DuplicatePoints(f"points {i} and {j} coincide")
