"""Command-line driver: subcommands, exit codes, config layering.

Everything runs in-process through `main(argv)` so exit codes and output can
be asserted without spawning interpreters.
"""

import json

import pytest

from ctlcsim.cli import main
from ctlcsim.graph import graph_spec_to_json
from ctlcsim.runner import replay
from ctlcsim.synth import batch_to_json
from helpers import compiled, cyc3_gs, k3_gs, swap_gs


@pytest.fixture()
def swap_file(tmp_path):
    path = tmp_path / "swap.json"
    path.write_text(json.dumps(graph_spec_to_json(swap_gs())))
    return str(path)


@pytest.fixture()
def k3_file(tmp_path):
    path = tmp_path / "k3.json"
    path.write_text(json.dumps(graph_spec_to_json(k3_gs())))
    return str(path)


def run_cli(capsys, *argv):
    code = main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


# ----------------------------------------------------------------- unfold

def test_unfold_reports_the_tree(swap_file, capsys):
    code, out, _ = run_cli(capsys, "unfold", swap_file)
    assert code == 0
    doc = json.loads(out)
    assert doc["id"] == "swap" and doc["edge_count"] == 2 and doc["depth"] == 2
    assert len(doc["edges"]) == 2


def test_unfold_writes_dot(swap_file, tmp_path, capsys):
    dot = tmp_path / "tree.dot"
    code, _, _ = run_cli(capsys, "unfold", swap_file, "--dot", str(dot))
    assert code == 0
    assert dot.read_text().startswith("digraph")


def test_unfold_rejects_unreachable_leaders(tmp_path, capsys):
    path = tmp_path / "oneway.json"
    path.write_text(json.dumps({
        "id": "oneway", "nodes": ["A", "B"], "leader": "A",
        "arcs": [{"from": "A", "to": "B", "tam": "t1", "fund": "f1"}],
    }))
    code, _, err = run_cli(capsys, "unfold", str(path))
    assert code == 3
    assert "not every node reaches 'A'" in err
    assert "possible leaders: B" in err


def test_unfold_leader_override(tmp_path, capsys):
    path = tmp_path / "noleader.json"
    doc = graph_spec_to_json(swap_gs())
    del doc["leader"]
    path.write_text(json.dumps(doc))
    code, _, err = run_cli(capsys, "unfold", str(path))
    assert code == 3 and "names no leader" in err
    code, out, _ = run_cli(capsys, "unfold", str(path), "--leader", "A")
    assert code == 0 and json.loads(out)["leader"] == "A"


def test_unfold_missing_file(capsys):
    code, _, err = run_cli(capsys, "unfold", "/nonexistent.json")
    assert code == 3 and "cannot read" in err


# ------------------------------------------------------------------- size

def test_size_prints_the_bound(capsys):
    code, out, _ = run_cli(capsys, "size", "--nodes", "5")
    assert code == 0 and out.strip() == "848"


def test_size_rejects_tiny_graphs(capsys):
    code, _, err = run_cli(capsys, "size", "--nodes", "1")
    assert code == 3 and "at least 2" in err


# ------------------------------------------------------------------ synth

def test_synth_matches_the_library(k3_file, capsys):
    code, out, _ = run_cli(capsys, "synth", k3_file)
    assert code == 0
    assert json.loads(out) == batch_to_json(compiled("k3"))


# --------------------------------------------------------------- simulate

def test_simulate_all_honest(swap_file, tmp_path, capsys):
    trace = tmp_path / "run.jsonl"
    code, out, _ = run_cli(capsys, "simulate", swap_file, "--trace", str(trace))
    assert code == 0
    doc = json.loads(out)
    assert doc["claims"] == 2 and doc["final"] and doc["stuck"] is None
    assert doc["adversary"] == "compliant" and doc["corrupted"] == []
    res = replay(trace.read_text())
    assert res.final


def test_simulate_withholding_corruption(swap_file, capsys):
    code, out, _ = run_cli(
        capsys, "simulate", swap_file,
        "--corrupt", "A", "--adversary", "withhold",
    )
    assert code == 0
    doc = json.loads(out)
    assert doc["claims"] == 0 and doc["final"]
    assert doc["corrupted"] == ["A"] and doc["honest"] == ["B"]


def test_simulate_step_budget(swap_file, capsys):
    code, out, _ = run_cli(capsys, "simulate", swap_file, "--until", "steps:5")
    assert code == 0
    doc = json.loads(out)
    assert doc["steps"] == 5 and not doc["final"]


def test_simulate_rejects_unknown_users(swap_file, capsys):
    code, _, err = run_cli(capsys, "simulate", swap_file, "--corrupt", "Q")
    assert code == 3 and "unknown users" in err


def test_simulate_rejects_bad_until(swap_file, capsys):
    code, _, err = run_cli(capsys, "simulate", swap_file, "--until", "soon")
    assert code == 3 and "--until must be" in err


# ------------------------------------------------------------------ check

@pytest.fixture()
def k3_trace(k3_file, tmp_path, capsys):
    trace = tmp_path / "k3.jsonl"
    assert main(["simulate", k3_file, "--trace", str(trace)]) == 0
    capsys.readouterr()
    return str(trace)


def test_check_passes_a_clean_trace(k3_trace, capsys):
    code, out, _ = run_cli(capsys, "check", k3_trace)
    assert code == 0
    lines = [ln for ln in out.splitlines() if ln]
    assert lines and all(": pass" in ln for ln in lines)
    assert any(ln.startswith("security") for ln in lines)
    assert any(ln.startswith("correctness") for ln in lines)
    assert any(ln.startswith("setup") for ln in lines)


def test_check_json_reports(k3_trace, capsys):
    code, out, _ = run_cli(capsys, "check", k3_trace, "--json")
    assert code == 0
    reports = json.loads(out)
    assert all(r["verdict"] == "pass" for r in reports)
    checks = {r["check"] for r in reports}
    assert {"security", "uniqueness", "underwater"} <= checks


def test_check_user_filter(k3_trace, capsys):
    code, out, _ = run_cli(capsys, "check", k3_trace, "--user", "B")
    assert code == 0
    assert "user=B" in out and "user=A" not in out and "user=C" not in out
    code, _, err = run_cli(capsys, "check", k3_trace, "--user", "Z")
    assert code == 3 and "not an honest user" in err


def test_check_catches_tampering(k3_trace, tmp_path, capsys):
    text = open(k3_trace).read()
    lines = text.strip().splitlines()
    bad = tmp_path / "bad.jsonl"
    bad.write_text("\n".join(lines[:1] + lines[2:]) + "\n")
    code, _, err = run_cli(capsys, "check", str(bad))
    assert code == 2 and "does not replay" in err


def test_check_partially_honest_trace_is_not_a_failure(swap_file, tmp_path, capsys):
    trace = tmp_path / "withheld.jsonl"
    assert main(["simulate", swap_file, "--corrupt", "A",
                 "--adversary", "withhold", "--trace", str(trace)]) == 0
    capsys.readouterr()
    code, out, _ = run_cli(capsys, "check", str(trace))
    assert code == 0
    assert "fail" not in out
    assert "(degenerate)" in out


# ------------------------------------------------------------------ sweep

def test_sweep_small_batch(capsys):
    code, out, err = run_cli(capsys, "sweep", "--runs", "3", "--seed", "1")
    assert code == 0, err
    totals = json.loads(out)
    assert totals["runs"] == 3 and totals["failures"] == 0 and totals["stuck"] == 0


def test_sweep_rejects_unknown_adversaries(capsys):
    code, _, err = run_cli(capsys, "sweep", "--runs", "1", "--adversaries", "evil")
    assert code == 3 and "unknown adversary" in err


# ----------------------------------------------------------------- config

def test_config_file_supplies_defaults(swap_file, tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"seed": 9, "adversary": "reorder"}))
    code, out, _ = run_cli(
        capsys, "--config", str(cfg), "simulate", swap_file
    )
    assert code == 0
    doc = json.loads(out)
    assert doc["seed"] == 9 and doc["adversary"] == "reorder"


def test_explicit_flags_beat_the_config(swap_file, tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"seed": 9}))
    code, out, _ = run_cli(
        capsys, "--config", str(cfg), "simulate", swap_file, "--seed", "2"
    )
    assert code == 0 and json.loads(out)["seed"] == 2


def test_config_must_be_an_object(swap_file, tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps([1, 2]))
    code, _, err = run_cli(capsys, "--config", str(cfg), "simulate", swap_file)
    assert code == 3 and "must be a JSON object" in err
    code, _, err = run_cli(capsys, "--config", str(tmp_path / "missing.json"),
                           "simulate", swap_file)
    assert code == 3 and "cannot read config" in err


# ------------------------------------------------------------- arg parsing

def test_usage_errors_exit_3(capsys):
    assert run_cli(capsys, "size")[0] == 3  # --nodes is required
    assert run_cli(capsys, "frobnicate")[0] == 3
    assert run_cli(capsys)[0] == 3
