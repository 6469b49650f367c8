from __future__ import annotations

import json
import shutil
import subprocess
import sys

import numpy as np
import pytest

from doubling_nets.cli import main, to_json
from doubling_nets.metric import MetricView

from oracles import distance_matrix


def write_points(path, pts) -> str:
    path.write_text("".join(" ".join(repr(float(v)) for v in row) + "\n" for row in np.atleast_2d(pts)))
    return str(path)


def run(capsys, *argv) -> tuple[int, dict | None, str]:
    code = main(list(argv))
    cap = capsys.readouterr()
    doc = json.loads(cap.out) if code == 0 else None
    return code, doc, cap.err


@pytest.fixture
def planar(tmp_path):
    pts = np.random.default_rng(0).random((60, 2))
    return pts, write_points(tmp_path / "pts.txt", pts)


def test_to_json_floats_round_trip():
    x = 0.1 + 0.2
    assert float(json.loads(to_json({"x": x}))["x"]) == x
    assert to_json([1, np.int64(2), True, None, float("inf")]) == "[1, 2, true, null, null]"


def test_build_stats_with_audit_and_dump(capsys, planar, tmp_path):
    _, path = planar
    dump = tmp_path / "tree.json"
    code, doc, _ = run(capsys, "build-stats", "--input", path, "--audit", "--dump", str(dump))
    assert code == 0
    assert doc["schema_rev"] == 1 and doc["command"] == "build-stats"
    res = doc["result"]
    assert res["n"] == 60 and res["leaves"] == 60 and res["verified"] is True
    assert sum(res["level_histogram"].values()) + res["leaves"] == res["vertices"]
    json.loads(dump.read_text())


def test_ann_matches_brute_force(capsys, planar, tmp_path):
    pts, path = planar
    qs = np.random.default_rng(1).random((25, 2))
    qpath = write_points(tmp_path / "q.txt", qs)
    code, doc, _ = run(capsys, "ann", "--input", path, "--queries", qpath, "--eps", "0.1", "--audit")
    assert code == 0
    for q, entry in zip(qs, doc["result"]):
        best = np.sqrt(((pts - q) ** 2).sum(axis=1)).min()
        assert entry["nearest_distance"] == pytest.approx(best, rel=1e-12)
        assert entry["distance"] <= 1.1 * best * (1 + 1e-12)


def test_wspd_spanner_mst_audits(capsys, planar):
    _, path = planar
    code, doc, _ = run(capsys, "wspd", "--input", path, "--eps", "0.5", "--audit")
    assert code == 0 and doc["result"]["verified"] is True
    code, doc, _ = run(capsys, "spanner", "--input", path, "--eps", "0.5", "--audit")
    assert code == 0 and doc["result"]["max_stretch"] <= 1.5
    code, doc, _ = run(capsys, "mst", "--input", path, "--audit")
    res = doc["result"]
    assert code == 0 and res["edge_count"] == 59
    assert res["total_weight"] <= 1.1 * res["exact_weight"]


def test_crs_query_file(capsys, planar, tmp_path):
    pts, path = planar
    qpath = tmp_path / "pairs.txt"
    qpath.write_text("0 1\n5 17\n59 3\n")
    code, doc, _ = run(capsys, "crs", "--input", path, "--queries", str(qpath), "--audit")
    assert code == 0
    for entry in doc["result"]:
        d = entry["distance"]
        assert d / 1.1 <= entry["estimate"] <= 1.1 * d
    qpath.write_text("0 60\n")
    code, _, err = run(capsys, "crs", "--input", path, "--queries", str(qpath))
    assert code == 1 and "out of range" in err


def test_measure_and_dim(capsys, planar, tmp_path):
    _, path = planar
    dump = tmp_path / "mu.txt"
    code, doc, _ = run(capsys, "measure", "--input", path, "--audit", "--dump", str(dump))
    res = doc["result"]
    assert code == 0 and abs(res["total"] - 1) <= 1e-9
    assert res["ratio"]["max"] <= res["ratio"]["bound"]
    assert len(dump.read_text().splitlines()) == 60
    code, doc, _ = run(capsys, "dim", "--input", path, "--audit")
    res = doc["result"]
    assert code == 0 and res["ball_problems"] == []
    assert res["dim_estimate"] == pytest.approx(np.log2(res["lambda_T"]))


def test_dim_on_two_points(capsys, tmp_path):
    path = write_points(tmp_path / "two.txt", [[0.0], [1.0]])
    code, doc, _ = run(capsys, "dim", "--input", path)
    assert code == 0 and doc["result"]["lambda_T"] == 2


def test_lipschitz_mapping(capsys, tmp_path):
    x = np.random.default_rng(2).random((80, 2))
    f = np.sin(3 * x[:, 0]) + x[:, 1]
    path = tmp_path / "map.txt"
    path.write_text("".join(f"{a!r} {b!r} | {c!r}\n" for (a, b), c in zip(x.tolist(), f.tolist())))
    code, doc, _ = run(capsys, "lipschitz", "--input", str(path), "--eps", "0.1", "--audit")
    res = doc["result"]
    assert code == 0
    assert res["estimate"] <= res["exact"] <= res["upper_bound"]
    code, _, err = run(capsys, "lipschitz", "--input", str(path), "--eps", "0.3")
    assert code == 1 and "--eps" in err


def test_all_nn_and_k_center(capsys, planar):
    pts, path = planar
    code, doc, _ = run(capsys, "all-nn", "--input", path)
    D = distance_matrix(MetricView(coords=pts))
    off = D + np.diag(np.full(60, np.inf))
    assert code == 0
    assert [e["neighbor"] for e in doc["result"]] == np.argmin(off, axis=1).tolist()
    code, doc, _ = run(capsys, "k-center", "--input", path, "--k", "5")
    res = doc["result"]
    assert code == 0 and len(res["centers"]) == 5
    assert res["radius"] == pytest.approx(D[:, res["centers"]].min(axis=1).max())
    code, _, _ = run(capsys, "k-center", "--input", path)
    assert code == 1


def test_verify_all_checks(capsys, planar):
    _, path = planar
    code, doc, _ = run(capsys, "verify", "--input", path, "--eps", "0.5")
    assert code == 0 and doc["result"]["ok"] is True
    assert all(doc["result"]["checks"].values())


def test_matrix_input(capsys, tmp_path):
    pts = np.random.default_rng(3).random((20, 2))
    D = distance_matrix(MetricView(coords=pts))
    path = tmp_path / "m.txt"
    path.write_text("20\n" + "".join(" ".join(repr(v) for v in row) + "\n" for row in D.tolist()))
    code, doc, _ = run(capsys, "build-stats", "--input", str(path), "--format", "matrix", "--audit")
    assert code == 0 and doc["result"]["verified"] is True


def test_malformed_matrix_exit_2_names_line(capsys, tmp_path):
    path = tmp_path / "bad.txt"
    path.write_text("2\n0 1\n1 0 4\n")
    code, _, err = run(capsys, "build-stats", "--input", str(path), "--format", "matrix")
    assert code == 2 and "line 3" in err


def test_asymmetric_matrix_exit_1(capsys, tmp_path):
    path = tmp_path / "asym.txt"
    path.write_text("2\n0 1\n2 0\n")
    code, _, err = run(capsys, "build-stats", "--input", str(path), "--format", "matrix")
    assert code == 1 and "symmetric" in err


def test_duplicates_exit_1(capsys, tmp_path):
    path = write_points(tmp_path / "dup.txt", [[0.0, 0.0], [1.0, 1.0], [0.0, 0.0]])
    code, _, err = run(capsys, "wspd", "--input", path)
    assert code == 1 and err


def test_missing_file_exit_2(capsys, tmp_path):
    code, _, _ = run(capsys, "dim", "--input", str(tmp_path / "absent.txt"))
    assert code == 2


def test_output_is_byte_identical_across_runs(capsys, planar):
    _, path = planar
    outs = []
    for _ in range(2):
        assert main(["measure", "--input", path, "--seed", "7", "--audit"]) == 0
        outs.append(capsys.readouterr().out)
    assert outs[0] == outs[1]


def test_console_script(planar):
    _, path = planar
    exe = shutil.which("dn")
    cmd = [exe] if exe else [sys.executable, "-m", "doubling_nets.cli"]
    a = subprocess.run(cmd + ["spanner", "--input", path, "--eps", "0.5"], capture_output=True, check=True)
    b = subprocess.run(cmd + ["spanner", "--input", path, "--eps", "0.5"], capture_output=True, check=True)
    assert a.stdout == b.stdout
    assert json.loads(a.stdout)["result"]["edge_count"] > 0
