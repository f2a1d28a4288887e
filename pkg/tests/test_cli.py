"""Command-line harness: subcommands, exit codes, trace round-trips.

Exit-code contract: 0 all checks passed, 1 violations found (with the
counterexample written out), 2 usage or configuration error.
"""
from __future__ import annotations

import json
import subprocess
import sys

import pytest

from durastm import histories as H
from durastm.cli import main, read_trace, write_trace
from durastm.dtml import DtmlConfig, DtmlMachine, act


def _committed_write_history() -> H.History:
    m = DtmlMachine(DtmlConfig(2, 2, 2))
    sched = [
        act("invBegin", 1), act("B1", 1), act("B2", 1), act("resBegin", 1),
        act("invWrite", 1, addr=0, val=1), act("W1", 1), act("W2", 1),
        act("W3", 1), act("W4", 1), act("W5", 1), act("W6", 1), act("W7", 1),
        act("resWrite", 1),
        act("invCommit", 1), act("E1", 1), act("E2", 1), act("E3", 1),
        act("resCommit", 1),
    ]
    return m.run(sched)


def _dirty_read_history() -> H.History:
    # a committed read of a value nobody ever wrote
    return (H.inv_begin(1), H.res_begin(1), H.inv_read(1, 0),
            H.res_read(1, 1))


def test_no_subcommand_is_usage_error(capsys) -> None:
    assert main([]) == 2
    assert "usage" in capsys.readouterr().err.lower()


def test_unknown_flag_is_usage_error(capsys) -> None:
    assert main(["explore", "--bogus"]) == 2
    assert "usage" in capsys.readouterr().err.lower()


def test_bad_config_is_usage_error(capsys) -> None:
    # exhaustive bounds guard without --force
    assert main(["explore", "--txns", "4", "--max-steps", "4"]) == 2
    err = capsys.readouterr().err
    assert "force" in err
    assert main(["explore", "--txns", "4", "--max-steps", "4",
                 "--force"]) == 0


def test_explore_clean_run_exits_zero(capsys) -> None:
    rc = main(["explore", "--txns", "1", "--addrs", "1",
               "--max-steps", "14", "--checks",
               "opacity,refinement,simrel,invariants"])
    assert rc == 0
    out = capsys.readouterr().out
    assert "PASS" in out
    assert "\x1b[" not in out  # plain text unless a TTY asks for color


def test_explore_mutant_writes_counterexample(tmp_path, capsys) -> None:
    out = tmp_path / "cex.jsonl"
    rc = main(["explore", "--mutation", "skip_undo_log", "--addrs", "1",
               "--max-steps", "23", "--out", str(out)])
    assert rc == 1
    assert "FAIL" in capsys.readouterr().out
    cex = read_trace(str(out))
    assert cex, "counterexample must be non-empty"
    # the written counterexample is itself checkable and fails
    assert main(["check-history", "--in", str(out)]) == 1


def test_explore_mutant_without_out_prints_counterexample(capsys) -> None:
    rc = main(["explore", "--mutation", "skip_undo_log", "--addrs", "1",
               "--max-steps", "23"])
    assert rc == 1
    out = capsys.readouterr().out
    jsonl = [line for line in out.splitlines()
             if line.startswith("{")]
    assert jsonl and all(json.loads(line)["ev"] for line in jsonl)


def test_fuzz_clean_and_seeded(capsys) -> None:
    args = ["fuzz", "--walks", "50", "--seed", "3", "--max-steps", "30"]
    assert main(args) == 0
    first = capsys.readouterr().out
    assert main(args) == 0
    assert capsys.readouterr().out == first


def test_fuzz_mutant_with_forced_crash_bites(tmp_path) -> None:
    out = tmp_path / "cex.jsonl"
    rc = main(["fuzz", "--mutation", "skip_flush_W7", "--walks", "1000",
               "--seed", "7", "--min-crashes", "1",
               "--continue-prob", "0.85", "--crash-prob", "0.02",
               "--out", str(out)])
    assert rc == 1
    assert main(["check-history", "--in", str(out)]) == 1


def test_check_history_empty_file_passes(tmp_path) -> None:
    p = tmp_path / "empty.jsonl"
    p.write_text("")
    assert main(["check-history", "--in", str(p)]) == 0


def test_check_history_good_and_bad(tmp_path) -> None:
    good = tmp_path / "good.jsonl"
    write_trace(_committed_write_history(), str(good))
    assert main(["check-history", "--in", str(good)]) == 0
    bad = tmp_path / "bad.jsonl"
    write_trace(_dirty_read_history(), str(bad))
    assert main(["check-history", "--in", str(bad)]) == 1


def test_check_history_malformed_line_names_line_number(tmp_path,
                                                        capsys) -> None:
    p = tmp_path / "broken.jsonl"
    p.write_text('{"ev": "invBegin", "tx": 1}\n{"ev": "bogus"}\n')
    assert main(["check-history", "--in", str(p)]) == 2
    assert "line 2" in capsys.readouterr().err


def test_check_refinement_good_and_bad(tmp_path) -> None:
    good = tmp_path / "good.jsonl"
    write_trace(_committed_write_history(), str(good))
    assert main(["check-refinement", "--in", str(good)]) == 0
    bad = tmp_path / "bad.jsonl"
    write_trace(_dirty_read_history(), str(bad))
    assert main(["check-refinement", "--in", str(bad)]) == 1


def test_walk_dtms2_clean(capsys) -> None:
    rc = main(["walk-dtms2", "--walks", "30", "--seed", "3",
               "--max-steps", "25", "--max-crashes", "2",
               "--checks", "opacity,weaksim"])
    assert rc == 0
    assert "PASS" in capsys.readouterr().out


def test_mutate_reports_all_caught(capsys) -> None:
    rc = main(["mutate", "--seed", "7"])
    assert rc == 0
    out = capsys.readouterr().out
    for name in ("skip_flush_W7", "skip_undo_log", "skip_log_clear_E2"):
        assert name in out
    assert "caught" in out and "escaped" not in out


def test_report_file_is_json(tmp_path) -> None:
    rp = tmp_path / "report.json"
    assert main(["explore", "--txns", "1", "--addrs", "1",
                 "--max-steps", "12", "--report", str(rp)]) == 0
    data = json.loads(rp.read_text())
    assert data["ok"] is True
    assert data["histories_explored"] > 0


def test_trace_round_trip(tmp_path) -> None:
    h = _committed_write_history() + (H.CRASH,)
    p = tmp_path / "trace.jsonl"
    write_trace(h, str(p))
    assert read_trace(str(p)) == h
    crash_line = p.read_text().splitlines()[-1]
    assert json.loads(crash_line) == {"ev": "crash"}


def test_module_entry_point() -> None:
    out = subprocess.run(
        [sys.executable, "-m", "durastm.cli", "explore", "--txns", "1",
         "--addrs", "1", "--max-steps", "10"],
        capture_output=True, text=True)
    assert out.returncode == 0
    assert "PASS" in out.stdout
