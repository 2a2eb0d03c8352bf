import csv
import json
import subprocess
import sys

import pytest

from propinq.cli import CONVERGE_COLUMNS, EXIT_DOMAIN, EXIT_OK, EXIT_RESOURCE, main


def run_cli(tmp_path, command, cfg, name="out.json"):
    conf = tmp_path / "config.json"
    conf.write_text(json.dumps(cfg))
    out = tmp_path / name
    proc = subprocess.run(
        [sys.executable, "-m", "propinq.cli", command, "--config", str(conf), "--out", str(out)],
        capture_output=True,
        text=True,
        env={"PROPINQ_THREADS": "1", "PATH": ""},
    )
    return proc, out


def call(tmp_path, command, cfg, name="out.json"):
    conf = tmp_path / f"{name}.config"
    conf.write_text(json.dumps(cfg))
    out = tmp_path / name
    return main([command, "--config", str(conf), "--out", str(out)]), out


def test_upsilon_subprocess(tmp_path):
    proc, out = run_cli(tmp_path, "upsilon", {"a": "cyclic:2", "b": "trivial", "tol": 1e-3})
    assert proc.returncode == EXIT_OK, proc.stderr
    report = json.loads(out.read_text())
    assert report["hi"] == pytest.approx(2 ** -0.5)
    assert report["exhaustive"]


def test_upsilon_flags_isometric_isomorphism(tmp_path):
    code, out = call(tmp_path, "upsilon", {"a": "cyclic:3", "b": "cyclic:3"})
    report = json.loads(out.read_text())
    assert code == EXIT_OK and report["lo"] == 0 and report["isometric_isomorphism"]


def test_upsilon_output_is_byte_identical(tmp_path):
    cfg = {"a": "abelian:2,2", "b": "cyclic:4"}
    _, first = call(tmp_path, "upsilon", cfg, "a.json")
    _, second = call(tmp_path, "upsilon", cfg, "b.json")
    assert first.read_bytes() == second.read_bytes()


def test_mk_on_a_space(tmp_path):
    cfg = {
        "space": {"points": [0, 1, 2], "dist": [[0, 1, 2], [1, 0, 1], [2, 1, 0]]},
        "phi": {"dirac": 0},
        "psi": {"dirac": 2},
        "seed": 0,
    }
    code, out = call(tmp_path, "mk", cfg)
    report = json.loads(out.read_text())
    assert code == EXIT_OK
    assert report["lo"] == pytest.approx(2.0) and report["hi"] == pytest.approx(2.0)


def test_mk_on_a_fuzzy_torus(tmp_path):
    cfg = {
        "torus": {"k": [2, 2], "theta": [[0, 0.5], [-0.5, 0]]},
        "phi": "tracial",
        "psi": {"vector": [1, 1, 0, 0]},
        "method": "general",
        "restarts": 4,
        "iterations": 100,
        "seed": 3,
    }
    code, out = call(tmp_path, "mk", cfg)
    report = json.loads(out.read_text())
    assert code == EXIT_OK and 0 < report["lo"] <= report["hi"]


@pytest.mark.parametrize(
    "command, cfg",
    [
        ("mk", {"space": {"points": [0, 1], "dist": [[0, 1], [1, 0]]}, "phi": [1, 0], "psi": [0, 1]}),
        ("mk", {"phi": [1], "psi": [1], "seed": 0}),
        ("upsilon", {"a": "banana:2", "b": "trivial"}),
        ("upsilon", {"a": "cyclic:2", "b": "trivial", "tol": -1}),
        ("converge", {"k_list": [[2, 2]], "theta": [[0, 0.25], [-0.25, 0]], "seed": 0}),
        ("converge", {"k_list": [[2, 2]]}),
    ],
)
def test_domain_errors_exit_2(tmp_path, command, cfg):
    code, out = call(tmp_path, command, cfg)
    assert code == EXIT_DOMAIN
    assert not out.exists()


def test_malformed_json_exits_2(tmp_path):
    conf = tmp_path / "bad.json"
    conf.write_text("{not json")
    assert main(["mk", "--config", str(conf), "--out", str(tmp_path / "o.json")]) == EXIT_DOMAIN


def test_resource_error_exits_3(tmp_path):
    cfg = {"a": {"name": "natural:3", "scale": 0.001}, "b": "natural:1"}
    proc, out = run_cli(tmp_path, "upsilon", cfg)
    assert proc.returncode == EXIT_RESOURCE
    assert "resource error" in proc.stderr


def test_converge_single_row(tmp_path):
    cfg = {"k_list": [[2, 2]], "N": 1, "seed": 0}
    proc, out = run_cli(tmp_path, "converge", cfg, "sweep.csv")
    assert proc.returncode == EXIT_OK, proc.stderr
    rows = list(csv.DictReader(out.open()))
    assert tuple(rows[0]) == CONVERGE_COLUMNS
    assert (rows[0]["k"], rows[0]["k_prime"]) == ("2x2", "4x4")
    assert rows[0]["status"] == "ok"
    hi = float(rows[0]["propinquity_upper"])
    assert 0 < hi <= 2 ** -0.5 + 1e-12
    side = json.loads((tmp_path / "sweep.csv.json").read_text())
    assert side["columns"] == list(CONVERGE_COLUMNS) and len(side["rows"]) == 1
    again, out2 = run_cli(tmp_path, "converge", cfg, "sweep2.csv")
    assert out.read_bytes() == out2.read_bytes()
