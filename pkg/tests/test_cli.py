import json
from pathlib import Path

import pytest

from consgraph.cli import main

DATA = Path(__file__).parent / "data"
FIXTURE = str(DATA / "biographies.jsonl")


def _build(tmp_path, extra=()):
    outdir = tmp_path / "graphs"
    code = main([
        "build", "-i", FIXTURE, "-o", str(outdir),
        "--cache-path", str(tmp_path / "cache.jsonl"), *extra,
    ])
    return code, outdir


def test_build_writes_one_graph_per_record(tmp_path):
    code, outdir = _build(tmp_path)
    assert code == 0
    files = sorted(outdir.glob("*.json"))
    assert [f.name for f in files] == ["footballer-bio.json"]
    doc = json.loads(files[0].read_text())
    assert doc["m"] == 5


def test_build_rerun_with_warm_cache_is_byte_identical(tmp_path):
    code, outdir = _build(tmp_path)
    assert code == 0
    first = (outdir / "footballer-bio.json").read_bytes()
    code, outdir = _build(tmp_path)
    assert code == 0
    assert (outdir / "footballer-bio.json").read_bytes() == first


def test_build_missing_input_is_usage_error(tmp_path):
    code = main(["build", "-i", str(tmp_path / "nope.jsonl"), "-o", str(tmp_path / "g")])
    assert code != 0


def test_decode_writes_row_per_graph_per_tau(tmp_path):
    _, outdir = _build(tmp_path)
    results = tmp_path / "results.jsonl"
    code = main([
        "decode", "-g", str(outdir), "-o", str(results),
        "--tau", "0.3", "--tau", "0.5",
    ])
    assert code == 0
    rows = [json.loads(l) for l in results.read_text().splitlines()]
    assert len(rows) == 2
    assert {r["threshold"] for r in rows} == {0.3, 0.5}
    assert all(r["prompt_id"] == "footballer-bio" for r in rows)
    # Monotone trace inclusion across thresholds.
    by_tau = {r["threshold"]: set(r["trace"]["selected_nodes"]) for r in rows}
    assert by_tau[0.5] <= by_tau[0.3]


def test_decode_invalid_tau_usage_error(tmp_path):
    _, outdir = _build(tmp_path)
    code = main(["decode", "-g", str(outdir), "-o", str(tmp_path / "r.jsonl"), "--tau", "2.0"])
    assert code == 64


def test_decode_empty_graph_dir_usage_error(tmp_path):
    empty = tmp_path / "empty"
    empty.mkdir()
    code = main(["decode", "-g", str(empty), "-o", str(tmp_path / "r.jsonl"), "--tau", "0.5"])
    assert code == 64


def test_verify_offline_no_pruning(tmp_path):
    _, outdir = _build(tmp_path)
    problems = tmp_path / "problems.jsonl"
    problems.write_text(json.dumps({"prompt_id": "footballer-bio", "problem": "who?"}) + "\n")
    results = tmp_path / "verify.jsonl"
    code = main([
        "verify", "-g", str(outdir), "--problems", str(problems),
        "-o", str(results), "--kappa", "0.7",
    ])
    assert code == 0
    row = json.loads(results.read_text().splitlines()[0])
    assert row["trace"]["pruned"] == {}
    assert row["trace"]["survivors"] == [0, 1, 2, 3, 4]


def test_verify_missing_problem_text_usage_error(tmp_path):
    _, outdir = _build(tmp_path)
    problems = tmp_path / "problems.jsonl"
    problems.write_text(json.dumps({"prompt_id": "other", "problem": "x"}) + "\n")
    code = main([
        "verify", "-g", str(outdir), "--problems", str(problems),
        "-o", str(tmp_path / "r.jsonl"),
    ])
    assert code == 64


def test_stats_table_and_json(tmp_path, capsys):
    _, outdir = _build(tmp_path)
    assert main(["stats", "-g", str(outdir)]) == 0
    table = capsys.readouterr().out
    assert "footballer-bio" in table
    assert main(["stats", "-g", str(outdir), "--json"]) == 0
    rows = json.loads(capsys.readouterr().out)
    assert rows[0]["pct_consensus"] + rows[0]["pct_disagreement"] == pytest.approx(100, abs=0.01)


def test_stats_overlap_profile(tmp_path, capsys):
    code = main([
        "stats", "--overlap-input", FIXTURE, "--quantiles", "5",
        "--shuffle-baseline", "--seed", "42",
    ])
    assert code == 0
    row = json.loads(capsys.readouterr().out.strip())
    assert len(row["profile"]) == 5
    assert len(row["shuffled_baseline"]) == 5


def test_stats_without_inputs_usage_error():
    assert main(["stats"]) == 64


def test_export_dot(tmp_path):
    _, outdir = _build(tmp_path)
    dotdir = tmp_path / "dot"
    assert main(["export-dot", "-g", str(outdir), "-o", str(dotdir)]) == 0
    dot = (dotdir / "footballer-bio.dot").read_text()
    assert dot.startswith("digraph")
    assert dot.count("[label=") >= 3
    # Balanced braces so standard layout tools can parse it.
    assert dot.count("{") == dot.count("}")


def test_cache_info(tmp_path, capsys):
    _build(tmp_path)
    assert main(["cache-info", "--cache-path", str(tmp_path / "cache.jsonl")]) == 0
    info = json.loads(capsys.readouterr().out)
    assert info["entries"] > 0
    assert "equivalence" in info["by_kind"]


def test_config_file_precedence(tmp_path):
    config = tmp_path / "config.json"
    config.write_text(json.dumps({"taus": [0.4], "judge": "offline"}))
    _, outdir = _build(tmp_path)
    results = tmp_path / "results.jsonl"
    code = main(["decode", "-g", str(outdir), "-o", str(results), "--config", str(config)])
    assert code == 0
    rows = [json.loads(l) for l in results.read_text().splitlines()]
    assert [r["threshold"] for r in rows] == [0.4]
