"""Acceptance gate: nine end-to-end criteria, one printed verdict line each.

A1  exhaustive bounded sweep of the logging machine is durably opaque
A2  every history from that sweep is accepted by the reference automaton
A3  the missing-commit-flush fault injection is caught by both checkers
A4  the missing-undo-logging fault injection is caught by both checkers
A5  seeded reference-automaton walks are 100% durably opaque
A6  the crash-erasure simulation holds on every one of those walks
A7  forward simulation holds along every execution of the A1 sweep
A8  the four structural state invariants hold at every visited state
A9  the two independent opacity search strategies agree exactly on
    directly enumerated durably well-formed histories

Each test computes its verdict, prints one PASS/FAIL line directly to the
terminal (bypassing capture), then asserts.  A9 checks every history up to
8 events plus a seeded sample of longer ones by default; set
DURASTM_A9_FULL=1 to enumerate the full 12-event space (about 137 million
histories; several hours on one core).
"""
from __future__ import annotations

import os
import random
import time
from itertools import count

import pytest

from durastm import histories as H
from durastm.dtms2 import Dtms2Config, dtms2_accepts
from durastm.explorer import (ExplorationConfig, explore_exhaustive,
                              explore_random, walk_reference,
                              _invariant_violation)
from durastm.dtml import DtmlConfig, DtmlMachine
from durastm.histories import count_histories, enumerate_histories, ops
from durastm.opacity import (durably_opaque, end_to_end_opaque,
                             end_to_end_opaque_alt)

DOMAIN = dict(num_txns=2, num_addrs=2, num_vals=2)
VALUES = range(2)


def _verdict(capsys, label: str, ok: bool, detail: str) -> None:
    with capsys.disabled():
        print(f"\n{label} {'PASS' if ok else 'FAIL'} — {detail}")


# -- the shared exhaustive sweep (feeds A1, A2, A7, A8) -----------------------

@pytest.fixture(scope="module")
def full_sweep():
    samples: list[H.History] = []
    seen = count()

    def keep(h: H.History) -> None:
        if next(seen) % 50_000 == 0 and h and len(samples) < 40:
            samples.append(h)

    cfg = ExplorationConfig(
        **DOMAIN, max_crashes=1, flush_budget=1, max_steps=60,
        checks=("opacity", "refinement", "simrel", "invariants"),
        dedup="state")
    t0 = time.monotonic()
    report = explore_exhaustive(cfg, on_history=keep)
    return report, samples, time.monotonic() - t0


def test_A1_exhaustive_sweep_has_no_durable_opacity_violations(
        full_sweep, capsys) -> None:
    report, samples, elapsed = full_sweep
    bad = [v for v in report.violations if v.check == "opacity"]
    recheck = [h for h in samples if not durably_opaque(h, VALUES).ok]
    ok = not bad and not recheck and elapsed < 600
    _verdict(capsys, "A1", ok,
             f"{report.histories_explored} histories, "
             f"{report.states_visited} states, {len(bad)} durable-opacity "
             f"violations, {len(samples)} sampled histories re-verified "
             f"against the standalone oracle, {elapsed:.0f}s (bound 600s)")
    assert not bad
    assert not recheck
    assert elapsed < 600


def test_A2_every_explored_history_is_accepted_by_reference_automaton(
        full_sweep, capsys) -> None:
    report, samples, _ = full_sweep
    bad = [v for v in report.violations if v.check == "refinement"]
    config = Dtms2Config(**DOMAIN)
    recheck = [h for h in samples if not dtms2_accepts(h, config).ok]
    ok = not bad and not recheck
    _verdict(capsys, "A2", ok,
             f"{report.histories_explored} histories accepted "
             f"(incremental subset construction), {len(bad)} rejections, "
             f"{len(samples)} sampled histories re-verified standalone")
    assert not bad
    assert not recheck


# -- fault injections (A3, A4) ------------------------------------------------

def _hunt(mutation: str):
    cfg = ExplorationConfig(
        **DOMAIN, max_crashes=1, flush_budget=1, max_steps=60,
        mode="random", seed=7, num_walks=1000, min_crashes=1,
        continue_prob=0.85, crash_prob=0.02,
        checks=("opacity", "refinement"), mutation=mutation)
    report = explore_random(cfg, stop_on={"opacity", "refinement"})
    dual = []
    for v in report.violations:
        if v.check != "opacity":
            continue
        h = v.history
        if (not durably_opaque(h, VALUES).ok
                and not dtms2_accepts(h, Dtms2Config(**DOMAIN)).ok
                and any(H.is_crash(e) for e in h)):
            dual.append(h)
    return report, dual


def _check_mutant(capsys, label: str, mutation: str) -> None:
    report, dual = _hunt(mutation)
    ok = bool(dual)
    detail = (f"{mutation}: {len(dual)} crash-bearing counterexamples "
              f"failing durable opacity and automaton acceptance"
              + (f" (first has {len(dual[0])} events)" if dual else ""))
    _verdict(capsys, label, ok, detail)
    assert dual


def test_A3_missing_commit_flush_is_caught(capsys) -> None:
    _check_mutant(capsys, "A3", "skip_flush_W7")


def test_A4_missing_undo_logging_is_caught(capsys) -> None:
    _check_mutant(capsys, "A4", "skip_undo_log")


# -- reference-automaton walks (A5, A6) ---------------------------------------

@pytest.fixture(scope="module")
def reference_walks():
    cfg = ExplorationConfig(
        **DOMAIN, max_crashes=2, max_steps=40, mode="random", seed=42,
        num_walks=10_000, checks=("opacity", "weaksim"))
    return walk_reference(cfg)


def test_A5_reference_walks_are_durably_opaque(reference_walks,
                                               capsys) -> None:
    report = reference_walks
    bad = [v for v in report.violations if v.check == "opacity"]
    ok = report.histories_explored == 10_000 and not bad
    _verdict(capsys, "A5", ok,
             f"{report.histories_explored} seeded walks of up to 40 steps "
             f"with up to 2 crashes, {len(bad)} durable-opacity violations")
    assert report.histories_explored == 10_000
    assert not bad


def test_A6_crash_erasure_simulation_holds_on_reference_walks(
        reference_walks, capsys) -> None:
    report = reference_walks
    bad = [v for v in report.violations if v.check == "weaksim"]
    ok = not bad
    _verdict(capsys, "A6", ok,
             f"crash-free execution with the exact surviving-operation "
             f"trace constructed for all {report.histories_explored} "
             f"walks, {len(bad)} failures")
    assert not bad


# -- simulation and invariants over the sweep (A7, A8) ------------------------

def test_A7_forward_simulation_holds_throughout_the_sweep(
        full_sweep, capsys) -> None:
    report, _, _ = full_sweep
    hard = [v for v in report.violations if v.check == "simrel"]
    ok = not hard
    _verdict(capsys, "A7", ok,
             f"{len(hard)} hard failures (global relation or empty "
             f"candidate set); per-transaction relation soft flags "
             f"reported separately: {report.txn_rel_flag_count}")
    assert not hard


def test_A8_state_invariants_hold_throughout_the_sweep(
        full_sweep, capsys) -> None:
    report, _, _ = full_sweep
    bad = [v for v in report.violations if v.check.startswith("invariant.")]
    initial = DtmlMachine(DtmlConfig(**DOMAIN)).initial()
    initial_bad = _invariant_violation(initial, frozenset())
    ok = not bad and initial_bad is None
    _verdict(capsys, "A8", ok,
             f"single-writer, counter-parity, store-diff and quiet-log "
             f"invariants over {report.states_visited} visited states, "
             f"{len(bad)} violations")
    assert not bad
    assert initial_bad is None


# -- the two independent opacity strategies (A9) -------------------------------

def _random_dwf_history(rng: random.Random, length: int,
                        max_crashes: int) -> H.History:
    status = {t: "NS" for t in range(1, DOMAIN["num_txns"] + 1)}
    crashes = 0
    h: list[H.Event] = []
    while len(h) < length:
        moves: list[tuple[H.Event, int | None, str | None]] = []
        for t, s in status.items():
            if s == "NS":
                moves.append((H.inv_begin(t), t, "PB"))
            elif s == "PB":
                moves.append((H.res_begin(t), t, "RD"))
            elif s == "RD":
                for a in range(DOMAIN["num_addrs"]):
                    moves.append((H.inv_read(t, a), t, "PR"))
                    for v in range(DOMAIN["num_vals"]):
                        moves.append((H.inv_write(t, a, v), t, "PW"))
                moves.append((H.inv_commit(t), t, "PC"))
            elif s == "PR":
                for v in range(DOMAIN["num_vals"]):
                    moves.append((H.res_read(t, v), t, "RD"))
                moves.append((H.res_read_abort(t), t, "HALT"))
            elif s == "PW":
                moves.append((H.res_write(t), t, "RD"))
                moves.append((H.res_write_abort(t), t, "HALT"))
            elif s == "PC":
                moves.append((H.res_commit(t), t, "HALT"))
                moves.append((H.res_commit_abort(t), t, "HALT"))
        if crashes < max_crashes:
            moves.append((H.CRASH, None, None))
        if not moves:
            break
        ev, t, ns = moves[rng.randrange(len(moves))]
        h.append(ev)
        if t is None:
            status = {u: ("NS" if s == "NS" else "HALT")
                      for u, s in status.items()}
            crashes += 1
        else:
            status[t] = ns
    return tuple(h)


def test_A9_independent_opacity_strategies_agree(capsys) -> None:
    full = os.environ.get("DURASTM_A9_FULL") == "1"
    depth = 12 if full else 8
    disagreements: list[H.History] = []
    checked = 0
    for h in enumerate_histories(**DOMAIN, max_events=depth, max_crashes=1):
        o = ops(h)
        if end_to_end_opaque(o, VALUES).ok != end_to_end_opaque_alt(o, VALUES):
            disagreements.append(h)
        checked += 1
    sampled = 0
    if not full:
        rng = random.Random(812)
        for _ in range(3000):
            h = _random_dwf_history(rng, rng.randrange(9, 13), 1)
            assert H.durably_well_formed(h)
            o = ops(h)
            if (end_to_end_opaque(o, VALUES).ok
                    != end_to_end_opaque_alt(o, VALUES)):
                disagreements.append(h)
            sampled += 1
    total = count_histories(**DOMAIN, max_events=12, max_crashes=1)
    ok = not disagreements
    mode = (f"all {checked} histories of <=12 events" if full else
            f"all {checked} histories of <={depth} events plus {sampled} "
            f"seeded longer ones (full space: {total}; DURASTM_A9_FULL=1 "
            f"enumerates it)")
    _verdict(capsys, "A9", ok,
             f"{mode}, {len(disagreements)} disagreements")
    assert not disagreements, disagreements[:3]
