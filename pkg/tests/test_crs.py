from __future__ import annotations

import itertools

import numpy as np
import pytest

from doubling_nets.crs import (
    ASSOUAD_KAPPA,
    SpreadTooLarge,
    assouad_distortion,
    assouad_kappa,
    build_assouad,
    build_crs,
    coarse_estimate,
    crs_query,
    crs_query_trace,
    k_set,
    ladder_bound,
    naive_ladder_pairs,
    spread_limit,
)
from doubling_nets.metric import DuplicatePoints, MetricView
from doubling_nets.net_tree import level_ancestor

from oracles import distance_matrix


def calibration_battery() -> dict[str, MetricView]:
    """The fixed instances the frozen distortion table was measured on."""
    g = np.random.default_rng(2024)
    clusters = np.concatenate([c + 0.01 * g.standard_normal((20, 2)) for c in g.random((5, 2)) * 10])
    return {
        "line": MetricView(coords=g.random((80, 1))),
        "plane": MetricView(coords=g.random((100, 2))),
        "space": MetricView(coords=g.random((100, 3))),
        "clusters": MetricView(coords=clusters),
        "exp_line": MetricView(coords=1.5 ** np.arange(40.0)),
        "four": MetricView(coords=[0, 1, 1e9, 1e9 + 1.0]),
        "two": MetricView(coords=[0, 1.0]),
    }


def smallest_level_at_least(delta: float) -> int:
    t = 0
    while 11.0 ** t < delta:
        t += 1
    while 11.0 ** (t - 1) >= delta:
        t -= 1
    return t


def brute_k_set(tree, D: np.ndarray, center: int, delta: float) -> list[int]:
    top = smallest_level_at_least(delta)
    out = []
    for w in range(tree.size):
        if tree.level[w] < top <= tree.parent_level[w] and D[tree.rep[w], center] <= 4 * delta:
            out.append(w)
    return out


@pytest.mark.parametrize("eps", sorted(ASSOUAD_KAPPA))
def test_kappa_table_covers_battery(eps):
    kappa = ASSOUAD_KAPPA[eps]
    ran = 0
    for name, view in calibration_battery().items():
        try:
            emb = build_assouad(view, eps, 0)
        except SpreadTooLarge:
            continue
        ran += 1
        assert assouad_distortion(emb, view) <= kappa, name
    assert ran >= 6


def test_kappa_lookup_rounds_up():
    assert assouad_kappa(0.1) == ASSOUAD_KAPPA[0.1]
    assert assouad_kappa(0.3) == ASSOUAD_KAPPA[0.5]
    with pytest.raises(ValueError):
        assouad_kappa(2.0)


def test_assouad_single_point():
    emb = build_assouad(MetricView(coords=[[1.0, 2.0]]), 0.5, 0)
    assert not emb.dense(0).any()
    assert emb.query(0, 0) == 0


def test_assouad_two_points():
    emb = build_assouad(MetricView(coords=[[0.0], [1.0]]), 0.5, 0)
    k = assouad_kappa(0.5)
    assert 1 / k <= emb.query(0, 1) <= k


@pytest.mark.parametrize("seed", range(3))
def test_assouad_random_planar(seed):
    view = MetricView(coords=np.random.default_rng(100 + seed).random((100, 2)))
    emb = build_assouad(view, 0.5, seed)
    assert assouad_distortion(emb, view) <= assouad_kappa(0.5)
    vecs = {emb.dense(i).tobytes() for i in range(view.n)}
    assert len(vecs) == view.n


def test_assouad_sparse_query_matches_dense():
    view = MetricView(coords=np.random.default_rng(5).random((40, 2)))
    emb = build_assouad(view, 0.25, 0)
    for i, j in itertools.combinations(range(40), 2):
        dense = float(np.abs(emb.dense(i) - emb.dense(j)).max()) ** 2
        assert emb.query(i, j) == dense


def test_assouad_spread_precondition():
    view = MetricView(coords=[0.0, 1.0, 1e30])
    assert 1e30 > spread_limit(3, 0.5)
    with pytest.raises(SpreadTooLarge):
        build_assouad(view, 0.5, 0)


def test_crs_identity_and_two_points():
    view = MetricView(coords=[[0.0], [3.0]])
    index = build_crs(view, 0.1, 0)
    assert crs_query(index, 1, 1) == 0
    assert 3 / 1.1 <= crs_query(index, 0, 1) <= 3 * 1.1


def test_crs_spread_stress_set():
    view = MetricView(coords=[0.0, 1.0, 1e9, 1e9 + 1])
    index = build_crs(view, 0.1, 0)
    D = distance_matrix(view)
    for i, j in itertools.combinations(range(4), 2):
        q = crs_query(index, i, j)
        assert D[i, j] / 1.1 <= q <= 1.1 * D[i, j]


def test_crs_all_pairs_with_step_bound():
    view = MetricView(coords=np.random.default_rng(6).random((200, 2)))
    index = build_crs(view, 0.1, 0)
    D = distance_matrix(view)
    bound = ladder_bound(index.kappa_bar)
    n = view.n
    for i, j in itertools.combinations(range(n), 2):
        tr = crs_query_trace(index, i, j)
        assert D[i, j] / 1.1 <= tr.value <= 1.1 * D[i, j]
        assert tr.steps <= bound
        # the rescaled coarse estimate is one-sided, as the climb's seeding needs
        assert D[i, j] / index.kappa_bar <= tr.eta <= D[i, j]
        assert crs_query(index, j, i) == pytest.approx(tr.value, rel=0.21)


def test_crs_coarse_layer_within_3n_squared():
    view = MetricView(coords=np.random.default_rng(7).random((120, 3)))
    index = build_crs(view, 0.1, 0)
    D = distance_matrix(view)
    cap = 3 * view.n ** 2
    for i, j in itertools.combinations(range(view.n), 2):
        c, layer = coarse_estimate(index, i, j)
        assert layer in (0, 1)
        assert max(c / D[i, j], D[i, j] / c) <= cap


def test_k_sets_match_brute_force_and_are_complete():
    view = MetricView(coords=np.random.default_rng(8).random((100, 2)))
    index = build_crs(view, 0.1, 0)
    tree, hst = index.tree, index.hst
    D = distance_matrix(view)
    for z in range(hst.n, hst.size):
        delta = float(hst.delta[z])
        center = int(hst.rep[z])
        assert index.k_sets[z] == brute_k_set(tree, D, center, delta)
        assert k_set(tree, view, center, delta) == index.k_sets[z]
        below = smallest_level_at_least(delta) - 1
        members = set(index.k_sets[z])
        for x in hst.leaves_under(z).tolist():
            assert level_ancestor(tree, x, below) in members


def test_pruned_child_rep_spread():
    for n, seed in ((100, 9), (60, 10)):
        view = MetricView(coords=np.random.default_rng(seed).random((n, 2)) ** 4)
        index = build_crs(view, 0.1, 0)
        limit = spread_limit(n, index.eps0)
        for ph in index.pruned:
            assert ph.max_child_spread <= limit


def test_ladder_visits_exactly_the_naive_pairs():
    view = MetricView(coords=np.random.default_rng(11).random((90, 2)))
    index = build_crs(view, 0.5, 0)
    checked = 0
    for i, j in itertools.combinations(range(view.n), 2):
        tr = crs_query_trace(index, i, j, record=True)
        if tr.restarted:
            continue
        u0, v0 = tr.seed_pair
        assert set(tr.visited) == naive_ladder_pairs(index.tree, u0, v0, tr.pair)
        checked += 1
    assert checked > 0.9 * view.n * (view.n - 1) / 2


def test_crs_exponential_line():
    view = MetricView(coords=1.7 ** np.arange(45.0))
    index = build_crs(view, 0.1, 0)
    D = distance_matrix(view)
    for i, j in itertools.combinations(range(view.n), 2):
        q = crs_query(index, i, j)
        assert D[i, j] / 1.1 <= q <= 1.1 * D[i, j]


def test_crs_validation():
    with pytest.raises(ValueError):
        build_crs(MetricView(coords=[[0.0], [1.0]]), 0.0, 0)
    with pytest.raises(DuplicatePoints):
        build_crs(MetricView(coords=[[0.0], [0.0]]), 0.1, 0)
