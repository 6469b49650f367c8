"""Doubling-dimension estimate from the largest out-degree of a net-tree.

The tree is built without a doubling-constant hint, so every separating
ball comes from the escalation loop that guesses ``2^i`` for
``i = 1, 2, ...``.  The estimate is ordinal: it tracks the dimension up to a
constant factor.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .greedy import net_permutation
from .hst import SpannerTrace, build_low_quality_spanner, mst_to_hst
from .metric import MetricView
from .net_tree import NetTree, build_net_tree

__all__ = ["DimEstimate", "estimate_dim", "recount_balls"]


@dataclass(frozen=True)
class DimEstimate:
    """``lambda_t`` is the largest out-degree; ``dim`` is its base-2 log.

    ``escalation[k] = (i, samples)`` for the ``k``-th separating ball: the
    guess ``2^i`` that succeeded and the centers sampled in total.
    """

    lambda_t: int
    dim: float
    escalation: list[tuple[int, int]]
    tree: NetTree
    trace: SpannerTrace


def estimate_dim(view: MetricView, seed: int) -> DimEstimate:
    """Build the net-tree along the unhinted pipeline and read off its degree.

    The tree equals ``build_net_tree(view, seed)``; the pipeline is spelled
    out here only to keep the separating-ball trace.
    """
    if view.n < 1:
        raise ValueError("need at least one point")
    trace = SpannerTrace()
    hst = mst_to_hst(build_low_quality_spanner(view, seed, None, trace))
    tree = build_net_tree(view, seed, sequence=net_permutation(view, hst))
    lam = max(tree.max_degree(), 1)
    escalation = [(b.rounds_used, b.samples) for b in trace.balls]
    return DimEstimate(lam, math.log2(lam), escalation, tree, trace)


def recount_balls(view: MetricView, est: DimEstimate) -> list[str]:
    """Brute-force recount of each ball's success conditions; returns the failures.

    A ball ``b(c, r)`` drawn from ``m`` points under the guess ``delta``
    must hold at least ``m / (2 delta^3)`` of them while ``b(c, 2r)`` holds
    at most ``m / 2``.
    """
    problems = []
    for k, (ball, ids) in enumerate(zip(est.trace.balls, est.trace.subsets)):
        m = ids.size
        d = np.asarray([view.distance(ball.center, int(p)) for p in ids.tolist()])
        inner = int(np.count_nonzero(d <= ball.r))
        doubled = int(np.count_nonzero(d <= 2 * ball.r))
        need = max(1, math.ceil(m / (2 * ball.delta ** 3)))
        if inner < need:
            problems.append(f"ball {k}: {inner} points inside, {need} needed")
        if 2 * doubled > m:
            problems.append(f"ball {k}: doubled ball holds {doubled} of {m}")
        if inner != ball.inner_count:
            problems.append(f"ball {k}: recorded {ball.inner_count} inside, recount {inner}")
    return problems
