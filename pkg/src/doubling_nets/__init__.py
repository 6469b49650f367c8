"""Net-trees and the proximity structures built on them for doubling metrics."""

from .ann import AnnIndex, ann_query, build_ann_index
from .crs import build_crs, crs_query
from .dimension import estimate_dim
from .greedy import greedy_permutation, k_center, net_permutation
from .hst import build_coarse_hst
from .lipschitz import MappingView, lipschitz_1d, lipschitz_1d_pointwise, lipschitz_exact, lipschitz_wspd
from .measure import build_doubling_measure, measure_doubling_ratio
from .metric import DuplicatePoints, MetricView, QueryPoint
from .net_tree import NetTree, build_net_tree, verify_net_tree
from .wspd import all_nearest_neighbors, approx_mst, build_spanner, build_wspd, verify_wspd

__all__ = [
    "AnnIndex",
    "DuplicatePoints",
    "MappingView",
    "MetricView",
    "NetTree",
    "QueryPoint",
    "all_nearest_neighbors",
    "ann_query",
    "approx_mst",
    "build_ann_index",
    "build_coarse_hst",
    "build_crs",
    "build_doubling_measure",
    "build_net_tree",
    "build_spanner",
    "build_wspd",
    "crs_query",
    "estimate_dim",
    "greedy_permutation",
    "k_center",
    "lipschitz_1d",
    "lipschitz_1d_pointwise",
    "lipschitz_exact",
    "lipschitz_wspd",
    "measure_doubling_ratio",
    "net_permutation",
    "verify_net_tree",
    "verify_wspd",
]
