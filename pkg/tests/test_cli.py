from __future__ import annotations

import json
from importlib import resources

import pytest
from fastapi.testclient import TestClient

from congestflow import cli
from congestflow.service import app

FIXTURES = resources.files("congestflow") / "fixtures"


@pytest.fixture
def k5():
    return str(FIXTURES / "k5.dimacs")


@pytest.fixture
def tree12():
    return str(FIXTURES / "tree12.dimacs")


def _json_lines(text: str) -> list[dict]:
    return [json.loads(line) for line in text.splitlines() if line.strip()]


def test_solve_reports_one_line(k5, capsys):
    assert cli.run(["solve", "--input", k5, "--seed", "1"]) == cli.EXIT_OK
    out = capsys.readouterr()
    (doc,) = _json_lines(out.out)
    assert doc["kind"] == "solve" and doc["congestion"] == 1.0
    assert 4 / 1.1 <= doc["value"] <= 4 and doc["source"] == 0 and doc["sink"] == 4
    assert sum(p["rounds"] for p in doc["phases"]) == doc["rounds"]
    assert "value" in out.err


def test_same_seed_same_bytes(k5, tmp_path, capsys):
    a, b = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
    for path in (a, b):
        assert cli.run(["solve", "--input", k5, "--seed", "7", "--output", str(path)]) == 0
    assert a.read_bytes() == b.read_bytes()
    assert "value" in capsys.readouterr().out


def test_seed_from_environment(k5, monkeypatch, capsys):
    monkeypatch.setenv("CONGESTFLOW_SEED", "3")
    assert cli.run(["solve", "--input", k5]) == 0
    assert _json_lines(capsys.readouterr().out)[0]["seed"] == 3


def test_missing_seed_is_an_input_error(k5, monkeypatch, capsys):
    monkeypatch.delenv("CONGESTFLOW_SEED", raising=False)
    assert cli.run(["solve", "--input", k5]) == cli.EXIT_INPUT
    assert "seed" in capsys.readouterr().err


def test_missing_file(tmp_path, capsys):
    assert cli.run(["solve", "--input", str(tmp_path / "nope"), "--seed", "1"]) == cli.EXIT_INPUT
    assert "cannot read" in capsys.readouterr().err


def test_bad_capacity(tmp_path, capsys):
    p = tmp_path / "bad.dimacs"
    p.write_text("p max 2 1\nn 1 s\nn 2 t\na 1 2 0\n")
    assert cli.run(["solve", "--input", str(p), "--seed", "1"]) == cli.EXIT_INPUT
    assert "rejected" in capsys.readouterr().err


def test_json_input_and_flow_output(tmp_path, capsys):
    p = tmp_path / "g.json"
    p.write_text(json.dumps({"nodes": 3, "source": 0, "sink": 2,
                             "edges": [{"u": 0, "v": 1, "cap": 2}, {"u": 1, "v": 2, "cap": 3}]}))
    flow = tmp_path / "flow.txt"
    assert cli.run(["solve", "--input", str(p), "--seed", "0", "--flow-output", str(flow)]) == 0
    rows = [line.split() for line in flow.read_text().splitlines()]
    assert [r[:3] for r in rows] == [["0", "1", "2"], ["1", "2", "3"]]
    assert float(rows[0][3]) == pytest.approx(2.0) and float(rows[1][3]) == pytest.approx(2.0)
    assert "flow" not in _json_lines(capsys.readouterr().out)[0]


def test_retries_exhausted_exit_code(k5, capsys):
    assert cli.run(["solve", "--input", k5, "--seed", "1", "--max-iters", "1"]) == cli.EXIT_RETRIES
    assert "gave up" in capsys.readouterr().err


def test_approx_stats_on_a_tree(tree12, capsys):
    assert cli.run(["approx-stats", "--input", tree12, "--seed", "2", "--pairs", "20"]) == 0
    lines = _json_lines(capsys.readouterr().out)
    doc = lines[-1]
    assert doc["kind"] == "approx-stats"
    assert doc["alpha_hat"] == pytest.approx(1.0)
    assert doc["lower_violations"] == 0 and doc["cut_violations"] == 0
    assert {p["phase"] for p in doc["phases"]} and doc["rounds"] > 0
    assert all(line["kind"] == "tree" for line in lines[:-1])


def test_verify_fixtures_pass(capsys):
    assert cli.run(["verify", "--seed", "0"]) == cli.EXIT_OK
    out = capsys.readouterr()
    lines = _json_lines(out.out)
    assert lines[-1]["passed"] is True
    assert {line["graph"] for line in lines[:-1]} == {
        "cycle10", "grid4x4", "k5", "path8", "random16", "tree12"}
    assert "all checks passed" in out.err


def test_verify_detects_injected_fault(k5, capsys):
    assert cli.run(["verify", "--input", k5, "--seed", "0", "--inject-fault"]) == cli.EXIT_VERIFY
    lines = _json_lines(capsys.readouterr().out)
    failed = {line["check"] for line in lines[:-1] if not line["passed"]}
    assert failed == {"cluster-validity"}


def test_service_endpoints(k5):
    client = TestClient(app)
    assert client.get("/health").status_code == 200
    text = open(k5).read()
    body = {"graph": {"text": text, "format": "dimacs"}, "config": {"seed": 4}}
    resp = client.post("/solve", json=body, params={"flow": True})
    assert resp.status_code == 200 and len(resp.json()["flow"]) == 10
    bad = {"graph": {"text": "p max 2 1\n", "format": "dimacs"}, "config": {"seed": 4}}
    assert client.post("/solve", json=bad).status_code == 400
    assert client.post("/solve", json={"graph": body["graph"], "config": {}}).status_code == 422
