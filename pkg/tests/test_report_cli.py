import json
import subprocess
import sys

import pytest

from prepost import corpus
from prepost.cli import main
from prepost.report import analyze
from prepost.traces import parse_trace_set, read_trace_file
from conftest import GOLDEN

SMALL_CASES = GOLDEN / "small"
CASES = ["bufferedChan.seed1", "bufferedChan.seed0", "buffered2.seed0", "selDefault.seed1", "closedChan.seed0", "closedChan.seed2"]


def _text(case):
    return analyze(read_trace_file(SMALL_CASES / f"{case}.trace"), program=corpus.load(case.split(".")[0])).to_text()


@pytest.mark.parametrize("case", CASES)
def test_small_case_report_matches_golden(case):
    assert _text(case) == (SMALL_CASES / f"{case}.txt").read_text(encoding="utf-8")


@pytest.mark.parametrize("case", CASES)
def test_small_case_trace_reproduced_by_run(case, capsys, tmp_path):
    name, seed = case.split(".seed")
    out = tmp_path / "t.trace"
    assert main(["run", name, "--seed", seed, "--out", str(out)]) == 0
    assert out.read_text() == (SMALL_CASES / f"{case}.trace").read_text()


def test_buffered_false_positive_reported():
    assert "x!|2 <-> x?|3" in _text("buffered2.seed0")


def test_buffered_chan_alternative_after_completion():
    assert "x!|1 <-> x?|3" in _text("bufferedChan.seed1")
    assert "alternative communications: 0" in _text("bufferedChan.seed0")


def test_default_run_reports_missed_sync():
    assert "x!|1 <-> x?|2" in _text("selDefault.seed1")


def test_closed_channel_hazard():
    for case in ("closedChan.seed0", "closedChan.seed2"):
        assert "x!|1 may follow close x|3" in _text(case)
    assert "x!|1 <-> x?|2" in _text("closedChan.seed2")


def test_report_json():
    doc = json.loads(analyze(read_trace_file(GOLDEN / "fig1.trace")).to_json())
    assert doc["schedules"]["count"] == 2
    assert [(p["send_loc"], p["recv_loc"]) for p in doc["alternative_communications"]["pairs"]] == [(5, 1)]
    assert doc["status"] == "COMPLETED"


def test_cli_run_deadlock_exits_zero(capsys):
    assert main(["run", "bufferedChan", "--seed", "0"]) == 0
    out = capsys.readouterr().out
    assert "status: DEADLOCK" in out and "T1:" in out


def test_cli_run_json(capsys):
    assert main(["run", "fig1", "--json"]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["status"] == "COMPLETED" and doc["threads"] == 4


def test_cli_run_program_file(tmp_path, capsys):
    f = tmp_path / "p.mp"
    f.write_text("x := makeChan\ngo {\n  x <- 1\n}\ny := <-x\n")
    assert main(["run", str(f)]) == 0
    assert "x!@1" in capsys.readouterr().out


def test_cli_graph_golden(capsys):
    assert main(["graph", str(GOLDEN / "fig1.trace")]) == 0
    assert capsys.readouterr().out == (GOLDEN / "fig1.dot").read_text()


def test_cli_analyze_json(capsys):
    assert main(["analyze", str(GOLDEN / "newsreader_good.trace"), "--json"]) == 0
    assert json.loads(capsys.readouterr().out)["schedules"]["count"] == 6


def test_cli_bench(capsys):
    assert main(["bench", "collector", "--n", "10", "--json"]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["messages"] == 10 and doc["vclock"]["per_message_words"] == 11


def test_cli_input_errors(tmp_path, capsys):
    assert main(["analyze", str(tmp_path / "missing.trace")]) == 1
    assert main(["run", "no-such-program"]) == 1
    assert main(["bench", "fig1", "--n", "3"]) == 1
    assert main(["run", "fig1", "--max-steps", "0"]) == 1
    bad = tmp_path / "bad.trace"
    bad.write_text("T1: garbage(\n")
    assert main(["analyze", str(bad)]) == 1
    src = tmp_path / "bad.mp"
    src.write_text("x := \n")
    assert main(["run", str(src)]) == 1
    assert "error:" in capsys.readouterr().err


def test_cli_inconsistent_exit_two(tmp_path):
    f = tmp_path / "t.trace"
    f.write_text("T1: pre(x?@2); post(3#x?@2)\nT2: pre(x!@1); post(x!@1)\n")
    assert main(["analyze", str(f)]) == 2
    assert main(["graph", str(f)]) == 2


def test_module_entry_point():
    r = subprocess.run([sys.executable, "-m", "prepost", "run", "fig1"], capture_output=True, text=True)
    assert r.returncode == 0 and "status: COMPLETED" in r.stdout
