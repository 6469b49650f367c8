"""Lipschitz constants of maps between finite metric spaces.

* :func:`lipschitz_exact` scans every pair.
* :func:`lipschitz_1d` uses the fact that on the line the constant is
  attained by two consecutive points.
* :func:`lipschitz_1d_pointwise` gives every point its own constant from
  tangents to the convex hulls of the graph points on either side.
* :func:`lipschitz_wspd` inspects one pair of representatives per WSPD pair.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .metric import DuplicatePoints, MetricView, check_metric_axioms, require_distinct
from .net_tree import NetTree, build_net_tree
from .wspd import build_wspd

__all__ = ["LipschitzResult", "MappingView", "lipschitz_1d", "lipschitz_1d_pointwise",
           "lipschitz_exact", "lipschitz_wspd"]

_AXIOM_SAMPLES = 2000


@dataclass(frozen=True)
class MappingView:
    """A map ``f`` given by the codomain distances ``rho(f(i), f(j))`` of domain ids."""

    domain: MetricView
    codomain: MetricView

    def __post_init__(self) -> None:
        if self.domain.n != self.codomain.n:
            raise ValueError("domain and codomain must index the same ids")
        if self.codomain.matrix is not None:
            report = check_metric_axioms(self.codomain, _AXIOM_SAMPLES, 0)
            if not report.ok:
                raise ValueError(f"codomain violates the {report.violation} axiom at {report.witness}")

    @classmethod
    def from_arrays(cls, domain: np.ndarray, values: np.ndarray) -> MappingView:
        """Euclidean domain and codomain; ``values`` may be one or more columns."""
        return cls(MetricView(coords=domain), MetricView(coords=values))

    @property
    def n(self) -> int:
        return self.domain.n

    def ratio(self, i: int, j: int) -> float:
        return self.codomain.distance(i, j) / self.domain.distance(i, j)


@dataclass(frozen=True)
class LipschitzResult:
    value: float
    witness: tuple[int, int]


def lipschitz_exact(m: MappingView) -> LipschitzResult:
    """Largest ratio over all pairs; ties go to the first pair in lexicographic order."""
    n = m.n
    if n < 2:
        raise ValueError("need at least two points")
    require_distinct(m.domain)
    best, witness = -1.0, (0, 1)
    for i in range(n - 1):
        rest = np.arange(i + 1, n)
        r = m.codomain.distances_from(i, rest) / m.domain.distances_from(i, rest)
        k = int(np.argmax(r))
        if r[k] > best:
            best, witness = float(r[k]), (i, i + 1 + k)
    return LipschitzResult(best, witness)


def _sorted_line(points: np.ndarray) -> np.ndarray:
    x = np.asarray(points, dtype=float).reshape(-1)
    if x.size < 2:
        raise ValueError("need at least two points")
    order = np.argsort(x, kind="stable")
    if np.any(np.diff(x[order]) == 0):
        raise DuplicatePoints("points must be distinct")
    return order


def lipschitz_1d(points: np.ndarray, codomain: MetricView) -> LipschitzResult:
    """Constant of a map on points of the line, from consecutive pairs only.

    ``codomain`` is indexed by the positions in ``points``, which need not
    be sorted.  The witness is reported as a pair of those positions.
    """
    x = np.asarray(points, dtype=float).reshape(-1)
    if codomain.n != x.size:
        raise ValueError("codomain must index the same ids as points")
    order = _sorted_line(x)
    dom = MetricView(coords=x)
    a, b = order[:-1], order[1:]
    r = codomain.pair_distances(a, b) / dom.pair_distances(a, b)
    k = int(np.argmax(r))
    i, j = int(a[k]), int(b[k])
    return LipschitzResult(float(r[k]), (min(i, j), max(i, j)))


def _cross(ox: float, oy: float, ax: float, ay: float, bx: float, by: float) -> float:
    return (ax - ox) * (by - oy) - (ay - oy) * (bx - ox)


def _left_slopes(x: np.ndarray, f: np.ndarray) -> np.ndarray:
    """For each ``k``, ``max_{j < k} (f[k] - f[j]) / |x[k] - x[j]|``; ``x`` strictly monotone.

    The maximum is attained on the lower hull of the earlier graph points.
    The hull is kept as an insert-only monotone chain; a point dropped from
    it never matters again, since later hulls contain the current one.
    """
    n = x.size
    out = np.full(n, -math.inf)
    hx: list[float] = []
    hy: list[float] = []
    for k in range(n):
        px, py = float(x[k]), float(f[k])
        if hx:
            # first hull vertex whose outgoing edge passes above the query point
            lo, hi = 0, len(hx) - 1
            while lo < hi:
                mid = (lo + hi) // 2
                if _cross(hx[mid], hy[mid], hx[mid + 1], hy[mid + 1], px, py) > 0:
                    lo = mid + 1
                else:
                    hi = mid
            best = -math.inf
            # neighbors guard the rounding in the orientation test
            for t in (lo - 1, lo, lo + 1):
                if 0 <= t < len(hx):
                    best = max(best, (py - hy[t]) / abs(px - hx[t]))
            out[k] = best
        while len(hx) >= 2 and _cross(hx[-2], hy[-2], hx[-1], hy[-1], px, py) <= 0:
            hx.pop()
            hy.pop()
        hx.append(px)
        hy.append(py)
    return out


def lipschitz_1d_pointwise(points: np.ndarray, values: np.ndarray) -> np.ndarray:
    """``max_{y != p} |f(p) - f(y)| / |p - y|`` for every point ``p``, in input order.

    Four hull sweeps cover both sides of ``p`` and both signs of the slope:
    the right side is the left side of the mirrored line.
    """
    x = np.asarray(points, dtype=float).reshape(-1)
    f = np.asarray(values, dtype=float).reshape(-1)
    if f.size != x.size:
        raise ValueError("points and values differ in length")
    order = _sorted_line(x)
    xs, fs = x[order], f[order]
    left = np.maximum(_left_slopes(xs, fs), _left_slopes(xs, -fs))
    right = np.maximum(_left_slopes(-xs[::-1], fs[::-1]), _left_slopes(-xs[::-1], -fs[::-1]))[::-1]
    out = np.empty(x.size)
    out[order] = np.maximum(left, right)
    return out


def lipschitz_wspd(m: MappingView, eps: float, seed: int, tree: NetTree | None = None) -> LipschitzResult:
    """Lower bound ``K`` with ``K <= K_exact <= (1 + 2 eps) / (1 - 2 eps) K``.

    Takes the largest rep-pair ratio over an ``eps / 2``-WSPD: for a pair
    with side diameters at most ``delta`` times the rep distance, every
    covered ratio is at most ``K / (1 - 4 delta)``.
    """
    if not 0 < eps < 0.25:
        raise ValueError("eps must lie in (0, 1/4)")
    if m.n < 2:
        raise ValueError("need at least two points")
    require_distinct(m.domain)
    if tree is None:
        tree = build_net_tree(m.domain, seed)
    pairs = build_wspd(tree, m.domain, eps / 2)
    a = tree.rep[pairs.u]
    b = tree.rep[pairs.v]
    r = m.codomain.pair_distances(a, b) / pairs.dist
    k = int(np.argmax(r))
    i, j = int(a[k]), int(b[k])
    return LipschitzResult(float(r[k]), (min(i, j), max(i, j)))
