import csv
import io

import numpy as np
import pytest

from bayesdefense.cli import EXIT_CONFIG, EXIT_IO, EXIT_OK, main
from bayesdefense.predictor import synthetic_trace
from bayesdefense.scenarios import data_text


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_build_writes_golden_file(tmp_path, capsys):
    target = tmp_path / "sm.efg"
    code, _, _ = run(capsys, "build", "--scenario", "swat-mini", "-o", str(target))
    assert code == EXIT_OK
    assert target.read_text() == data_text("swat-mini.efg")


def test_solve_lists_equilibria_and_selection(tmp_path, capsys):
    target = tmp_path / "t.efg"
    target.write_text(data_text("tank-a1.efg"))
    code, out, _ = run(capsys, "solve", str(target))
    assert code == EXIT_OK
    assert out.startswith("pure equilibria: ")
    assert "selected (subgame-perfect)" in out


def test_solve_scenario_with_override(capsys):
    code, out, _ = run(capsys, "solve", "--scenario", "tank-a1", "--prob", "pump=1")
    assert code == EXIT_OK
    assert "valve: Low-OFF; High-OFF" in out.split("selected")[1]


def test_shapley_command(capsys):
    code, out, _ = run(capsys, "shapley", "--scenario", "tank-a1")
    assert code == EXIT_OK
    assert "valve,14.375" in out


def test_route_command(capsys):
    code, out, _ = run(capsys, "route", "--prob", "N2=0.5", "--prob", "N4=0.5")
    assert code == EXIT_OK
    assert "expected utility 6" in out
    assert "route N1 N3 N6 N7 N5" in out


def _rows(text):
    return list(csv.reader(io.StringIO(text)))


def test_sweep_corners(capsys):
    code, out, _ = run(capsys, "sweep", "--scenario", "routing", "--step", "1.0")
    rows = _rows(out)
    assert code == EXIT_OK
    assert rows[0][:3] == ["p_a", "p_b", "system_utility"] and rows[0][-1] == "eq_count"
    assert len(rows) == 1 + 4
    assert [float(r[2]) for r in rows[1:]] == pytest.approx([8, 8, 7, 6])


def test_tank_sweep_flips_valve_column(capsys):
    code, out, _ = run(capsys, "sweep", "--scenario", "tank-a1", "--step", "0.5")
    rows = _rows(out)
    col = rows[0].index("policy_valve")
    assert rows[1][col] == "Low-ON; High-OFF"
    assert rows[-1][col] == "Low-OFF; High-OFF"


def test_bad_probability_is_a_config_error(capsys):
    code, _, err = run(capsys, "solve", "--scenario", "tank-a1", "--prob", "pump=lots")
    assert code == EXIT_CONFIG and "error [config]" in err


def test_missing_file_is_an_io_error(capsys, tmp_path):
    code, _, err = run(capsys, "kb-query", "--store", str(tmp_path / "none"), "--probs", "0.1")
    assert code == EXIT_IO and "error [io]" in err


def test_kb_train_and_loop(tmp_path, capsys):
    kb = tmp_path / "kb.jsonl"
    model = tmp_path / "pump.clf"
    trace = tmp_path / "trace.csv"
    assert run(capsys, "kb-build", "--scenario", "tank-a1", "--step", "0.1", "-o", str(kb))[0] == EXIT_OK
    code, out, _ = run(capsys, "kb-query", "--store", str(kb), "--probs", "0.77")
    assert code == EXIT_OK and "p_com [0.0, 0.8, 0.0]" in out
    assert run(capsys, "train", "--samples", "800", "-o", str(model))[0] == EXIT_OK
    x, _ = synthetic_trace(12, attack_from=6, seed=1)
    np.savetxt(trace, x, delimiter=",")
    code, out, _ = run(capsys, "loop", "--trace", str(trace), "--kb", str(kb), "--model", f"pump={model}")
    assert code == EXIT_OK
    rows = _rows(out)
    assert len(rows) == 13
    valve = rows[0].index("action_valve")
    assert rows[1][valve] == "ON" and rows[-1][valve] == "OFF"


def test_loop_rejects_empty_store(tmp_path, capsys):
    kb = tmp_path / "empty.jsonl"
    kb.write_text('{"format": "bayesdefense-kb", "version": 1, "count": 0}\n')
    trace = tmp_path / "t.csv"
    trace.write_text("0\n")
    code, _, err = run(capsys, "loop", "--trace", str(trace), "--kb", str(kb))
    assert code == EXIT_CONFIG and "empty" in err


def test_build_then_solve_round_trip(tmp_path, capsys):
    target = tmp_path / "game.efg"
    assert run(capsys, "build", "--scenario", "tank-a1", "--prob", "pump=1", "-o", str(target))[0] == EXIT_OK
    code, out, _ = run(capsys, "solve", str(target))
    assert code == EXIT_OK
    assert "valve: Low-OFF; High-OFF" in out.split("selected")[1]


def test_kb_query_with_two_components(tmp_path, capsys):
    kb = tmp_path / "r.jsonl"
    assert run(capsys, "kb-build", "--scenario", "routing", "--step", "0.5", "-o", str(kb))[0] == EXIT_OK
    code, out, _ = run(capsys, "kb-query", "--store", str(kb), "--probs", "0.2,0.1")
    assert code == EXIT_OK
    assert out.startswith("case 0:")
