from __future__ import annotations

import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from doubling_nets.metric import MetricView
from doubling_nets.net_tree import (
    COVER_FACTOR,
    LEAF_LEVEL,
    PACK_FACTOR,
    REL_FACTOR,
    TAU,
    DontKnow,
    NetTree,
    build_net_tree,
    level_ancestor,
    net_at_level,
    range_query,
    restricted_level_ancestor,
    tau_pow,
    tree_lca,
    verify_net_tree,
)

from oracles import distance_matrix

# planar uniform points, n <= 4096, five seeds: Rel total / n peaked at 26, max degree at 82
REL_PER_POINT = 40
PLANAR_MAX_DEGREE = 160


def rebuilt(tree: NetTree, *, rep=None, parent=None, kids=None) -> NetTree:
    """A copy of ``tree`` with some fields replaced; no validation."""
    rel = [dict(zip(r, d.tolist())) for r, d in zip(tree.rel, tree.rel_dist)]
    return NetTree(
        tree.view,
        tree.level.tolist(),
        list(tree.rep.tolist() if rep is None else rep),
        list(tree.parent.tolist() if parent is None else parent),
        [list(k) for k in (tree.kids if kids is None else kids)],
        rel,
        tree.leaf_of.tolist(),
        tree.root,
        tree.pdist.tolist(),
    )


def naive_ancestor(tree: NetTree, x: int, l: int) -> int:
    v = int(tree.leaf_of[x])
    while tree.parent[v] >= 0 and tree.level[tree.parent[v]] <= l:
        v = int(tree.parent[v])
    return v


def naive_lca(tree: NetTree, u: int, v: int) -> int:
    def path(w):
        out = [w]
        while tree.parent[w] >= 0:
            w = int(tree.parent[w])
            out.append(w)
        return out

    pu, pv = path(u), set(path(v))
    return next(w for w in pu if w in pv)


def test_constants_follow_from_tau():
    assert TAU == 11
    assert COVER_FACTOR == 2 * 11 / 10
    assert PACK_FACTOR == 6 / 20
    assert REL_FACTOR == 13


def test_single_point_tree():
    tree = build_net_tree(MetricView(coords=[[3.0, 1.0]]), 0)
    assert tree.size == 1
    assert tree.is_leaf(tree.root)
    assert verify_net_tree(tree).ok


def test_two_points_root_level_zero():
    tree = build_net_tree(MetricView(coords=[[0.0], [1.0]]), 0)
    assert tree.size == 3
    assert tree.level[tree.root] == 0
    assert len(tree.kids[tree.root]) == 2
    assert all(tree.is_leaf(c) for c in tree.kids[tree.root])
    assert verify_net_tree(tree).ok


@pytest.mark.parametrize("seed", range(5))
def test_random_r4_trees_verify(seed):
    view = MetricView(coords=np.random.default_rng(seed).uniform(size=(256, 4)))
    report = verify_net_tree(build_net_tree(view, seed))
    assert report.ok, report.violations


def test_check_mode_matches_brute_force_parent_search():
    view = MetricView(coords=np.random.default_rng(20).uniform(size=(300, 2)))
    build_net_tree(view, 0, check=True)


def test_hinted_and_unhinted_builds_both_verify():
    view = MetricView(coords=np.random.default_rng(21).uniform(size=(200, 2)))
    assert verify_net_tree(build_net_tree(view, 0)).ok
    assert verify_net_tree(build_net_tree(view, 0, lambda_hint=8)).ok


def test_matrix_backend_tree():
    rng = np.random.default_rng(22)
    mat = MetricView(coords=rng.uniform(size=(80, 3))).full_matrix()
    assert verify_net_tree(build_net_tree(MetricView(matrix=mat), 1)).ok


def test_rebuild_is_deterministic():
    view = MetricView(coords=np.random.default_rng(23).uniform(size=(200, 2)))
    a = build_net_tree(view, 4)
    b = build_net_tree(view, 4)
    assert a.to_json() == b.to_json()


def test_reparented_leaf_breaks_packing():
    view = MetricView(coords=np.concatenate([np.arange(8.0), 1000 + np.arange(8.0)]))
    tree = build_net_tree(view, 0)
    assert verify_net_tree(tree).ok
    leaf = int(tree.leaf_of[0])
    old = int(tree.parent[leaf])
    # an internal vertex on the far cluster
    far = next(v for v in range(tree.size)
               if not tree.is_leaf(v) and tree.points_under(v).min() >= 8)
    parent = tree.parent.tolist()
    kids = [list(k) for k in tree.kids]
    kids[old].remove(leaf)
    kids[far].append(leaf)
    parent[leaf] = far
    report = verify_net_tree(rebuilt(tree, parent=parent, kids=kids))
    assert not report.ok
    assert report.checks["packing"] is False


def test_foreign_rep_breaks_inheritance():
    view = MetricView(coords=np.random.default_rng(24).uniform(size=(40, 2)))
    tree = build_net_tree(view, 0)
    v = next(v for v in range(tree.size) if not tree.is_leaf(v) and v != tree.root
             and tree.points_under(v).size < view.n)
    rep = tree.rep.tolist()
    outside = int(np.setdiff1d(np.arange(view.n), tree.points_under(v))[0])
    rep[v] = outside
    report = verify_net_tree(rebuilt(tree, rep=rep))
    assert report.checks["inheritance"] is False


def test_net_at_level_extremes():
    view = MetricView(coords=np.random.default_rng(25).uniform(size=(50, 2)))
    tree = build_net_tree(view, 0)
    top = int(tree.level[tree.root])
    assert net_at_level(tree, top + 1).tolist() == [int(tree.rep[tree.root])]
    leaves = np.flatnonzero(tree.level == LEAF_LEVEL)
    low = int(tree.parent_level[leaves].min())
    assert net_at_level(tree, low).tolist() == list(range(50))


def test_net_at_level_on_doubling_line():
    view = MetricView(coords=[0.0, 1.0, 2.0, 4.0, 8.0, 16.0])
    tree = build_net_tree(view, 0)
    D = distance_matrix(view)
    for l in range(-3, 4):
        net = net_at_level(tree, l)
        if net.size > 1:
            sub = D[np.ix_(net, net)] + np.diag(np.full(net.size, np.inf))
            assert sub.min() >= tau_pow(l - 1) / 4
        assert D[:, net].min(axis=1).max() <= 4 * tau_pow(l)


def test_level_ancestor_matches_walk():
    view = MetricView(coords=np.random.default_rng(26).uniform(size=(300, 2)))
    tree = build_net_tree(view, 0)
    rng = np.random.default_rng(0)
    top = int(tree.level[tree.root])
    for _ in range(1000):
        x = int(rng.integers(300))
        l = int(rng.integers(-6, top + 3))
        assert level_ancestor(tree, x, l) == naive_ancestor(tree, x, l)
    assert level_ancestor(tree, 0, top) == tree.root
    assert level_ancestor(tree, 0, -10 ** 6) == tree.leaf_of[0]


def test_restricted_level_ancestor_window():
    view = MetricView(coords=np.random.default_rng(27).uniform(size=(300, 2)))
    tree = build_net_tree(view, 0)
    rng = np.random.default_rng(1)
    checked = 0
    for _ in range(2000):
        x = int(rng.integers(300))
        leaf = int(tree.leaf_of[x])
        chain = [leaf]
        while tree.parent[chain[-1]] >= 0:
            chain.append(int(tree.parent[chain[-1]]))
        z = chain[int(rng.integers(1, len(chain)))]
        lz = int(tree.level[z])
        assert restricted_level_ancestor(tree, x, z, lz) == level_ancestor(tree, x, lz)
        lo = math.ceil(lz - tree.window)
        assert restricted_level_ancestor(tree, x, z, lo - 1) is DontKnow
        assert restricted_level_ancestor(tree, x, z, lz + 1) is DontKnow
        l = int(rng.integers(lo, lz + 1))
        assert restricted_level_ancestor(tree, x, z, l) == level_ancestor(tree, x, l)
        checked += 1
    assert checked == 2000


def test_restricted_level_ancestor_rejects_non_ancestor():
    view = MetricView(coords=np.random.default_rng(28).uniform(size=(30, 2)))
    tree = build_net_tree(view, 0)
    with pytest.raises(ValueError):
        restricted_level_ancestor(tree, 0, int(tree.leaf_of[1]), 0)


def test_lca_matches_walk():
    view = MetricView(coords=np.random.default_rng(29).uniform(size=(300, 2)))
    tree = build_net_tree(view, 0)
    rng = np.random.default_rng(2)
    for _ in range(1000):
        u, v = (int(a) for a in rng.integers(tree.size, size=2))
        assert tree_lca(tree, u, v) == naive_lca(tree, u, v)
    assert tree_lca(tree, 5, 5) == 5
    assert tree_lca(tree, int(tree.leaf_of[3]), tree.root) == tree.root


def test_range_query_matches_scan():
    view = MetricView(coords=np.random.default_rng(30).uniform(size=(400, 2)))
    tree = build_net_tree(view, 0)
    D = distance_matrix(view)
    for x in range(0, 400, 37):
        for r in (0.0, 0.05, 0.2, 2.0):
            got = range_query(tree, view.point_as_query(x), r)
            assert got.tolist() == np.flatnonzero(D[x] <= r).tolist()


def test_rel_size_and_degree_bounded_across_n():
    for n in (512, 1024, 2048):
        view = MetricView(coords=np.random.default_rng(n).uniform(size=(n, 2)))
        tree = build_net_tree(view, 0)
        assert sum(len(r) for r in tree.rel) <= REL_PER_POINT * n
        assert tree.max_degree() <= PLANAR_MAX_DEGREE


def test_json_dump():
    tree = build_net_tree(MetricView(coords=[[0.0], [1.0], [5.0]]), 0)
    data = json.loads(tree.to_json())
    assert data["tau"] == 11 and len(data["vertices"]) == tree.size
    assert sum(v["level"] is None for v in data["vertices"]) == 3


@settings(max_examples=40, deadline=None)
@given(st.lists(st.tuples(st.integers(-200, 200), st.integers(-200, 200)), min_size=1, max_size=60,
                unique=True),
       st.integers(0, 1000), st.sampled_from([1.0, 1e-3, 1e4]))
def test_net_tree_invariants_on_lattice_sets(pts, seed, scale):
    view = MetricView(coords=np.asarray(pts, dtype=float) * scale)
    report = verify_net_tree(build_net_tree(view, seed))
    assert report.ok, report.violations


@settings(max_examples=25, deadline=None)
@given(st.lists(st.integers(0, 60), min_size=2, max_size=25, unique=True), st.integers(0, 100))
def test_net_tree_invariants_on_exponential_lines(exps, seed):
    view = MetricView(coords=2.0 ** np.asarray(exps, dtype=float))
    report = verify_net_tree(build_net_tree(view, seed))
    assert report.ok, report.violations
