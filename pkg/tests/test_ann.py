from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from doubling_nets.ann import (
    ann_query,
    ann_query_trace,
    build_ann_index,
    build_ring_tree,
    coarse_ann,
    descend_ann,
    verify_ring_tree,
)
from doubling_nets.metric import DuplicatePoints, MetricView, QueryPoint
from doubling_nets.net_tree import build_net_tree


def brute_nn_distance(pts: np.ndarray, q: np.ndarray) -> float:
    return float(np.sqrt(((pts - q) ** 2).sum(axis=1)).min())


def test_ring_tree_single_point():
    tree = build_ring_tree(MetricView(coords=[[1.0]]), 0)
    assert tree.size == 1 and tree.is_leaf(0)


def test_ring_tree_two_points():
    view = MetricView(coords=[[0.0], [1.0]])
    tree = build_ring_tree(view, 0)
    assert tree.size == 3
    assert not tree.is_leaf(0)
    assert tree.points_under(int(tree.inner[0])).size == 1
    assert verify_ring_tree(tree, view) == []


@pytest.mark.parametrize("seed", range(3))
def test_ring_tree_nodes_verify(seed):
    view = MetricView(coords=np.random.default_rng(seed).uniform(size=(128, 2)))
    tree = build_ring_tree(view, seed)
    assert verify_ring_tree(tree, view) == []
    assert tree.height() <= 8 * np.log2(128)


def test_coarse_ann_stored_points_return_themselves():
    view = MetricView(coords=np.random.default_rng(3).uniform(size=(200, 3)))
    tree = build_ring_tree(view, 0)
    for x in range(200):
        assert coarse_ann(tree, view, view.point_as_query(x)) == x


def test_coarse_ann_single_point():
    view = MetricView(coords=[[1.0, 1.0]])
    assert coarse_ann(build_ring_tree(view, 0), view, QueryPoint(coords=[5.0, 5.0])) == 0


def test_coarse_ann_within_2n():
    rng = np.random.default_rng(4)
    pts = rng.uniform(size=(512, 2))
    view = MetricView(coords=pts)
    tree = build_ring_tree(view, 0)
    for q in rng.uniform(-0.2, 1.2, size=(200, 2)):
        p = coarse_ann(tree, view, QueryPoint(coords=q))
        assert np.linalg.norm(pts[p] - q) <= 2 * 512 * brute_nn_distance(pts, q)


def test_descend_from_leaf_and_from_rep():
    view = MetricView(coords=np.random.default_rng(5).uniform(size=(100, 2)))
    tree = build_net_tree(view, 0)
    leaf = int(tree.leaf_of[17])
    assert descend_ann(tree, view, QueryPoint(coords=[0.5, 0.5]), leaf, 0.1) == 17
    top = tree.root
    r = int(tree.rep[top])
    assert descend_ann(tree, view, view.point_as_query(r), top, 0.1) == r


def test_descend_from_root_with_frontier_checks():
    rng = np.random.default_rng(6)
    pts = rng.uniform(size=(300, 2))
    view = MetricView(coords=pts)
    tree = build_net_tree(view, 0)
    for q in rng.uniform(size=(50, 2)):
        p = descend_ann(tree, view, QueryPoint(coords=q), tree.root, 0.1, check=True)
        assert np.linalg.norm(pts[p] - q) <= 1.1 * brute_nn_distance(pts, q)


@pytest.mark.parametrize("eps", [0.5, 0.1, 0.01])
def test_ann_query_within_factor(eps):
    rng = np.random.default_rng(7)
    pts = rng.uniform(size=(600, 3))
    view = MetricView(coords=pts)
    index = build_ann_index(view, 0)
    for q in rng.uniform(-0.1, 1.1, size=(150, 3)):
        tr = ann_query_trace(index, QueryPoint(coords=q), eps, check=True)
        assert np.isclose(tr.distance, np.linalg.norm(pts[tr.answer] - q), rtol=1e-12)
        assert tr.distance <= (1 + eps) * brute_nn_distance(pts, q)


def test_ann_query_stored_points_exact():
    view = MetricView(coords=np.random.default_rng(8).uniform(size=(400, 2)))
    index = build_ann_index(view, 0)
    for x in range(400):
        assert ann_query(index, view.point_as_query(x), 0.1) == x


def test_ann_wide_eps_envelope():
    rng = np.random.default_rng(9)
    pts = rng.normal(size=(300, 2))
    index = build_ann_index(MetricView(coords=pts), 0)
    for q in rng.normal(size=(100, 2)) * 3:
        p = ann_query(index, QueryPoint(coords=q), 10.0)
        assert np.linalg.norm(pts[p] - q) <= 11 * brute_nn_distance(pts, q)


def test_ann_matrix_backend_with_query_rows():
    rng = np.random.default_rng(10)
    allpts = rng.uniform(size=(151, 2))
    full = MetricView(coords=allpts).full_matrix()
    view = MetricView(matrix=full[:150, :150])
    index = build_ann_index(view, 0)
    row = full[150, :150]
    p = ann_query(index, QueryPoint(row=row), 0.1)
    assert row[p] <= 1.1 * row.min()
    with pytest.raises(ValueError):
        ann_query(index, QueryPoint(coords=[0.0, 0.0]), 0.1)


def test_ann_deterministic_and_validates():
    view = MetricView(coords=np.random.default_rng(11).uniform(size=(200, 2)))
    a = build_ann_index(view, 3)
    b = build_ann_index(view, 3)
    q = QueryPoint(coords=[0.3, 0.7])
    assert ann_query(a, q, 0.2) == ann_query(b, q, 0.2)
    with pytest.raises(ValueError):
        ann_query(a, q, 0.0)
    with pytest.raises(DuplicatePoints):
        build_ann_index(MetricView(coords=[[0.0], [0.0]]), 0)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.tuples(st.integers(-100, 100), st.integers(-100, 100)), min_size=1, max_size=50,
                unique=True),
       st.tuples(st.floats(-150, 150), st.floats(-150, 150)), st.sampled_from([0.05, 0.5, 2.0]),
       st.integers(0, 100))
def test_ann_query_property(pts, q, eps, seed):
    arr = np.asarray(pts, dtype=float)
    index = build_ann_index(MetricView(coords=arr), seed)
    qv = np.asarray(q)
    tr = ann_query_trace(index, QueryPoint(coords=qv), eps, check=True)
    assert tr.distance <= (1 + eps) * brute_nn_distance(arr, qv) + 1e-12
