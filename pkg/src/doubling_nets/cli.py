"""Command-line front end: ``dn <command> --input FILE [options]``.

Results go to stdout as one JSON document; diagnostics go to stderr.
Exit codes: 0 on success, 1 when the input breaks a contract (for example
duplicate points), 2 when it does not parse.
"""

from __future__ import annotations

import argparse
import itertools
import json
import math
import sys
from pathlib import Path
from typing import Any, Callable

import numpy as np

from .ann import ann_query, build_ann_index, verify_ring_tree
from .crs import SpreadTooLarge, build_crs, crs_query_trace
from .dimension import estimate_dim, recount_balls
from .formats import ParseError, parse_mapping, parse_matrix, parse_points, read_points
from .greedy import greedy_permutation, k_center
from .hst import WeightedGraph, minimum_spanning_tree
from .lipschitz import MappingView, lipschitz_exact, lipschitz_wspd
from .measure import build_doubling_measure, doubling_ratio_bound, dump_measure, measure_doubling_ratio
from .metric import DuplicatePoints, MetricView, QueryPoint, require_distinct
from .net_tree import LEAF_LEVEL, build_net_tree, verify_net_tree
from .wspd import all_nearest_neighbors, approx_mst, build_spanner, build_wspd, dump_wspd, max_stretch, \
    verify_wspd

__all__ = ["SCHEMA_REV", "main", "to_json"]

SCHEMA_REV = 1
_RATIO_RADII = 16


class ContractError(Exception):
    """Input parsed but violates a precondition; exit code 1."""


# ----------------------------------------------------------------------
# output


def _encode(x: Any) -> str:
    if isinstance(x, bool):
        return "true" if x else "false"
    if x is None:
        return "null"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        v = float(x)
        if not math.isfinite(v):
            return "null"
        return format(v, ".17g")
    if isinstance(x, str):
        return json.dumps(x)
    if isinstance(x, dict):
        return "{" + ", ".join(f"{_encode(str(k))}: {_encode(v)}" for k, v in x.items()) + "}"
    if isinstance(x, (list, tuple, np.ndarray)):
        return "[" + ", ".join(_encode(v) for v in x) + "]"
    raise TypeError(f"cannot encode {type(x).__name__}")


def to_json(obj: Any) -> str:
    """JSON with every float printed to 17 significant digits."""
    return _encode(obj)


# ----------------------------------------------------------------------
# input


def _load_view(args: argparse.Namespace) -> MetricView:
    text = Path(args.input).read_text(encoding="utf-8")
    if args.format == "matrix":
        mat = parse_matrix(text)
        if not np.array_equal(mat, mat.T) or np.any(np.diag(mat) != 0):
            raise ContractError("distance matrix must be symmetric with a zero diagonal")
        return MetricView(matrix=mat)
    if args.format == "mapping":
        return MetricView(coords=parse_mapping(text)[0])
    return MetricView(coords=parse_points(text))


def _distinct(view: MetricView) -> MetricView:
    try:
        require_distinct(view)
    except DuplicatePoints as exc:
        raise ContractError(str(exc)) from None
    return view


def _eps(args: argparse.Namespace, lo_open: float = 0.0, hi: float = 1.0) -> float:
    eps = args.eps
    if not lo_open < eps <= hi:
        raise ContractError(f"--eps must lie in ({lo_open}, {hi}]")
    return eps


def _graph_json(g: WeightedGraph) -> dict[str, Any]:
    return {"edge_count": g.edge_count, "total_weight": g.total_weight()}


def _dump(args: argparse.Namespace, text: str) -> None:
    if args.dump:
        Path(args.dump).write_text(text, encoding="utf-8")


# ----------------------------------------------------------------------
# commands


def cmd_build_stats(args: argparse.Namespace) -> Any:
    view = _distinct(_load_view(args))
    tree = build_net_tree(view, args.seed)
    out = {"n": view.n, "vertices": tree.size, "max_degree": tree.max_degree(),
           "level_histogram": {str(k): v for k, v in tree.level_histogram().items()},
           "leaves": int(np.count_nonzero(tree.level == LEAF_LEVEL)),
           "distance_calls": view.calls}
    if args.audit:
        out["verified"] = verify_net_tree(tree).ok
    _dump(args, tree.to_json())
    return out


def cmd_ann(args: argparse.Namespace) -> Any:
    view = _distinct(_load_view(args))
    eps = _eps(args)
    if view.coords is None:
        raise ContractError("ann needs a points file")
    if not args.queries:
        raise ContractError("ann needs --queries")
    qs = read_points(args.queries)
    if qs.shape[1] != view.coords.shape[1]:
        raise ContractError("query dimension differs from the input dimension")
    index = build_ann_index(view, args.seed)
    out = []
    for row in qs:
        q = QueryPoint(coords=row)
        p = ann_query(index, q, eps)
        entry = {"point": p, "distance": view.query_distance(q, p)}
        if args.audit:
            entry["nearest_distance"] = float(view.query_distances(q, np.arange(view.n)).min())
        out.append(entry)
    return out


def cmd_wspd(args: argparse.Namespace) -> Any:
    view = _distinct(_load_view(args))
    eps = _eps(args)
    tree = build_net_tree(view, args.seed)
    pairs = build_wspd(tree, view, eps)
    out: dict[str, Any] = {"eps": eps, "pairs": len(pairs)}
    if args.audit:
        rep = verify_wspd(pairs, view)
        out["verified"] = rep.ok
        out["first_violation"] = rep.first_violation
    _dump(args, dump_wspd(pairs))
    return out


def cmd_spanner(args: argparse.Namespace) -> Any:
    view = _distinct(_load_view(args))
    eps = _eps(args)
    sp = build_spanner(view, eps, args.seed)
    out: dict[str, Any] = {"eps": eps, **_graph_json(sp.graph)}
    if args.audit:
        stretch, pair = max_stretch(sp.graph, view)
        out["max_stretch"] = stretch
        out["stretch_witness"] = list(pair)
    _dump(args, "".join(f"{a} {b} {w!r}\n" for (a, b), w in zip(sp.graph.edges.tolist(),
                                                                 sp.graph.weights.tolist())))
    return out


def _id_pairs(path: str, n: int) -> list[tuple[int, int]]:
    arr = read_points(path)
    if arr.shape[1] != 2 or np.any(arr != np.round(arr)):
        raise ContractError("pair file needs two integer ids per line")
    pairs = [(int(a), int(b)) for a, b in arr.tolist()]
    for a, b in pairs:
        if not (0 <= a < n and 0 <= b < n):
            raise ContractError(f"pair ({a}, {b}) is out of range")
    return pairs


def cmd_crs(args: argparse.Namespace) -> Any:
    view = _distinct(_load_view(args))
    eps = _eps(args)
    try:
        index = build_crs(view, eps, args.seed)
    except SpreadTooLarge as exc:
        raise ContractError(str(exc)) from None
    if args.queries:
        pairs = _id_pairs(args.queries, view.n)
    else:
        pairs = list(itertools.combinations(range(view.n), 2))
    out = []
    for a, b in pairs:
        tr = crs_query_trace(index, a, b)
        entry = {"pair": [a, b], "estimate": tr.value, "coarse": tr.coarse}
        if args.audit:
            entry["distance"] = view.distance(a, b)
        out.append(entry)
    return out


def cmd_measure(args: argparse.Namespace) -> Any:
    view = _distinct(_load_view(args))
    tree = build_net_tree(view, args.seed)
    m = build_doubling_measure(tree)
    out: dict[str, Any] = {"gamma": m.gamma, "weights": m.mu.tolist(), "total": float(np.sum(m.mu))}
    if args.audit:
        rep = measure_doubling_ratio(view, m, _RATIO_RADII, args.seed)
        out["ratio"] = {"max": rep.ratio, "point": rep.point, "radius": rep.radius,
                        "bound": doubling_ratio_bound(m.gamma), "radii_per_point": _RATIO_RADII}
    _dump(args, dump_measure(m))
    return out


def cmd_lipschitz(args: argparse.Namespace) -> Any:
    if args.format != "mapping":
        raise ContractError("lipschitz reads a mapping file (--format mapping)")
    dom, cod = parse_mapping(Path(args.input).read_text(encoding="utf-8"))
    eps = _eps(args, 0.0, 0.25)
    if eps >= 0.25:
        raise ContractError("--eps must lie in (0, 0.25) for lipschitz")
    m = MappingView.from_arrays(dom, cod)
    _distinct(m.domain)
    res = lipschitz_wspd(m, eps, args.seed)
    out: dict[str, Any] = {"eps": eps, "estimate": res.value, "witness": list(res.witness),
                           "upper_bound": res.value * (1 + 2 * eps) / (1 - 2 * eps)}
    if args.audit:
        ex = lipschitz_exact(m)
        out["exact"] = ex.value
        out["exact_witness"] = list(ex.witness)
    return out


def cmd_dim(args: argparse.Namespace) -> Any:
    view = _load_view(args)
    est = estimate_dim(_distinct(view), args.seed)
    out: dict[str, Any] = {"lambda_T": est.lambda_t, "dim_estimate": est.dim,
                           "escalation": [list(e) for e in est.escalation]}
    if args.audit:
        out["ball_problems"] = recount_balls(view, est)
    return out


def cmd_verify(args: argparse.Namespace) -> Any:
    view = _distinct(_load_view(args))
    eps = _eps(args)
    tree = build_net_tree(view, args.seed)
    nt = verify_net_tree(tree)
    index = build_ann_index(view, args.seed, tree=tree)
    ring = verify_ring_tree(index.ring, view)
    ws = verify_wspd(build_wspd(tree, view, eps), view)
    sp = build_spanner(view, eps, args.seed, tree=tree)
    stretch, _ = max_stretch(sp.graph, view) if view.n > 1 else (1.0, (0, 0))
    m = build_doubling_measure(tree)
    checks = {
        "net_tree": nt.ok,
        "ring_tree": not ring,
        "wspd": ws.ok,
        "spanner": stretch <= 1 + eps,
        "measure_total": abs(float(np.sum(m.mu)) - 1) <= 1e-9,
    }
    return {"ok": all(checks.values()), "checks": checks,
            "net_tree_violations": nt.violations[:10], "ring_tree_violations": ring[:10],
            "wspd_first_violation": ws.first_violation, "spanner_max_stretch": stretch}


def cmd_all_nn(args: argparse.Namespace) -> Any:
    view = _distinct(_load_view(args))
    if view.n < 2:
        raise ContractError("all-nn needs at least two points")
    nn = all_nearest_neighbors(view, args.seed)
    return [{"point": p, "neighbor": q, "distance": view.distance(p, q)} for p, q in nn]


def cmd_mst(args: argparse.Namespace) -> Any:
    view = _distinct(_load_view(args))
    eps = _eps(args)
    g = approx_mst(view, eps, args.seed)
    out: dict[str, Any] = {"eps": eps, **_graph_json(g)}
    if args.audit and view.n > 1:
        iu = np.triu_indices(view.n, 1)
        D = view.full_matrix()
        full = WeightedGraph(view.n, np.stack(iu, axis=1), D[iu])
        out["exact_weight"] = minimum_spanning_tree(full).total_weight()
    _dump(args, "".join(f"{a} {b} {w!r}\n" for (a, b), w in zip(g.edges.tolist(), g.weights.tolist())))
    return out


def cmd_k_center(args: argparse.Namespace) -> Any:
    view = _distinct(_load_view(args))
    if args.k is None:
        raise ContractError("k-center needs --k")
    if not 1 <= args.k <= view.n:
        raise ContractError(f"--k must lie in [1, {view.n}]")
    centers, radius = k_center(greedy_permutation(view), args.k)
    return {"k": args.k, "centers": centers, "radius": radius}


COMMANDS: dict[str, Callable[[argparse.Namespace], Any]] = {
    "build-stats": cmd_build_stats,
    "ann": cmd_ann,
    "wspd": cmd_wspd,
    "spanner": cmd_spanner,
    "crs": cmd_crs,
    "measure": cmd_measure,
    "lipschitz": cmd_lipschitz,
    "dim": cmd_dim,
    "verify": cmd_verify,
    "all-nn": cmd_all_nn,
    "mst": cmd_mst,
    "k-center": cmd_k_center,
}


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="dn", description="Net-tree structures for doubling metrics.")
    ap.add_argument("command", choices=sorted(COMMANDS))
    ap.add_argument("--input", required=True, help="points, matrix or mapping file")
    ap.add_argument("--format", choices=["points", "matrix", "mapping"], default=None,
                    help="input format (default: points; mapping for lipschitz)")
    ap.add_argument("--eps", type=float, default=None)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--queries", help="query points (ann) or id pairs (crs)")
    ap.add_argument("--k", type=int, help="number of centers for k-center")
    ap.add_argument("--audit", action="store_true", help="add quadratic verification passes")
    ap.add_argument("--dump", help="write a text dump of the built structure here")
    return ap


def main(argv: list[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    if args.format is None:
        args.format = "mapping" if args.command == "lipschitz" else "points"
    if args.eps is None:
        args.eps = 0.1
    try:
        result = COMMANDS[args.command](args)
    except ParseError as exc:
        print(f"dn: parse error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"dn: {exc}", file=sys.stderr)
        return 2
    except (ContractError, ValueError) as exc:
        print(f"dn: {exc}", file=sys.stderr)
        return 1
    sys.stdout.write(to_json({"schema_rev": SCHEMA_REV, "command": args.command, "result": result}))
    sys.stdout.write("\n")
    return 0


if __name__ == "__main__":
    sys.exit(main())
