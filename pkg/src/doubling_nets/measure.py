"""A doubling probability measure read off a net-tree.

Mass flows from the root down: every child of ``u`` that does not share
``u``'s representative receives ``p_u / gamma``, and the child that does
share it keeps the rest.  ``gamma`` is the largest out-degree, so the
representative child keeps at least ``p_u / gamma``.  Masses are also kept
in log space because deep trees drive them below the float range.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .metric import MetricView
from .net_tree import NetTree

__all__ = ["RATIO_EXPONENT", "DoublingMeasure", "DoublingRatioReport", "build_doubling_measure",
           "doubling_ratio_bound", "dump_measure", "measure_doubling_ratio"]

# worst log_gamma of the sampled doubling ratio on the calibration battery
# (tests/test_measure.py::test_ratio_bound_covers_battery) was 2.23; 20% headroom
RATIO_EXPONENT = 2.7


def doubling_ratio_bound(gamma: int) -> float:
    """Frozen bound on the sampled doubling ratio of a measure with max degree ``gamma``."""
    return float(max(gamma, 2)) ** RATIO_EXPONENT


@dataclass(frozen=True)
class DoublingMeasure:
    """``mu[p]`` per point and ``mass[u]`` per net-tree vertex.

    ``log_mu`` and ``log_mass`` are natural logarithms of the same values
    and stay finite where the plain floats underflow.
    """

    gamma: int
    mu: np.ndarray
    log_mu: np.ndarray
    mass: np.ndarray
    log_mass: np.ndarray

    def total_log_mass(self) -> float:
        return float(np.logaddexp.reduce(self.log_mu))


def build_doubling_measure(tree: NetTree) -> DoublingMeasure:
    gamma = max(tree.max_degree(), 1)
    size = tree.size
    mass = np.zeros(size)
    log_mass = np.zeros(size)
    mass[tree.root] = 1.0
    share = 1.0 / gamma
    log_share = -math.log(gamma)
    stack = [tree.root]
    while stack:
        u = stack.pop()
        kids = tree.kids[u]
        if not kids:
            continue
        pu, lu = mass[u], log_mass[u]
        others = [c for c in kids if tree.rep[c] != tree.rep[u]]
        (keeper,) = [c for c in kids if tree.rep[c] == tree.rep[u]]
        for c in others:
            mass[c] = pu * share
            log_mass[c] = lu + log_share
        # the keeper absorbs the rounding: the exact child sum lands within one ulp of p_u
        mass[keeper] = pu - math.fsum(mass[others])
        log_mass[keeper] = lu + math.log1p(-len(others) / gamma)
        stack.extend(kids)
    leaves = tree.leaf_of
    mu = mass[leaves].copy()
    log_mu = log_mass[leaves].copy()
    for a in (mu, log_mu, mass, log_mass):
        a.setflags(write=False)
    return DoublingMeasure(gamma, mu, log_mu, mass, log_mass)


@dataclass(frozen=True)
class DoublingRatioReport:
    """Largest ``mu(b(x, 2r)) / mu(b(x, r))`` over the sampled radii."""

    ratio: float
    point: int
    radius: float
    radii: np.ndarray  # radii[x] are the radii sampled around point x


def measure_doubling_ratio(view: MetricView, m: DoublingMeasure, radii_per_point: int,
                           seed: int) -> DoublingRatioReport:
    """Exhaustive ball sums at radii drawn log-uniformly in ``[closest / 2, diameter]``.

    Sums are taken in log space, so the ratio is exact up to rounding even
    when the masses underflow.
    """
    if radii_per_point < 1:
        raise ValueError("radii_per_point must be at least 1")
    n = view.n
    rng = np.random.default_rng(seed)
    if n == 1:
        radii = np.ones((1, radii_per_point))
        return DoublingRatioReport(1.0, 0, 1.0, radii)
    D = view.full_matrix()
    off = D[~np.eye(n, dtype=bool)]
    lo = float(off.min()) / 2
    hi = float(off.max())
    radii = np.exp(rng.uniform(math.log(lo), math.log(hi), size=(n, radii_per_point)))
    best = (1.0, 0, float(radii[0, 0]))
    for x in range(n):
        row = D[x]
        order = np.argsort(row, kind="stable")
        sorted_d = row[order]
        # prefix log-sums of mu in distance order from x
        prefix = np.logaddexp.accumulate(m.log_mu[order])
        for r in radii[x].tolist():
            k1 = int(np.searchsorted(sorted_d, r, side="right"))
            k2 = int(np.searchsorted(sorted_d, 2 * r, side="right"))
            ratio = math.exp(prefix[k2 - 1] - prefix[k1 - 1])
            if ratio > best[0]:
                best = (ratio, x, r)
    return DoublingRatioReport(best[0], best[1], best[2], radii)


def dump_measure(m: DoublingMeasure) -> str:
    """One line per point: ``id mu``."""
    return "".join(f"{i} {v!r}\n" for i, v in enumerate(m.mu.tolist()))
