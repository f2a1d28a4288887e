"""Brute-force opacity / durable-opacity oracle.

Every verdict asserted here was derived by hand before the oracle was
written: replaying the memory-snapshot semantics for validity, applying the
committed-plus-current projection rule for legality, and enumerating
completions and block orders for the end-to-end checks.
"""
from __future__ import annotations

import pytest

from durastm import histories as H
from durastm.opacity import (
    TooLargeError,
    durably_opaque,
    end_to_end_opaque,
    end_to_end_opaque_alt,
    legal,
    legal_at,
    opaque,
    sequential,
    valid,
)

V01 = (0, 1)


def block(t: int, *pairs, commit: bool | None = True) -> tuple[H.Event, ...]:
    """One transaction's events: begin, the given op pairs, then commit,
    abort, or (commit=None) nothing."""
    out = [H.inv_begin(t), H.res_begin(t)]
    for kind, addr, val in pairs:
        if kind == "r":
            out += [H.inv_read(t, addr), H.res_read(t, val)]
        else:
            out += [H.inv_write(t, addr, val), H.res_write(t)]
    if commit is True:
        out += [H.inv_commit(t), H.res_commit(t)]
    elif commit is False:
        out += [H.inv_commit(t), H.res_commit_abort(t)]
    return tuple(out)


# validity -------------------------------------------------------------------

def test_valid_initial_reads_are_zero() -> None:
    h = block(1, ("r", 0, 0))
    states = valid(h)
    assert states is not None
    assert states[0] == {}  # all-zero start
    assert all(s.get(0, 0) == 0 for s in states)


def test_valid_read_of_unwritten_value_is_invalid() -> None:
    assert valid(block(1, ("r", 0, 1))) is None


def test_valid_write_then_read_back() -> None:
    h = block(1, ("w", 0, 1), ("r", 0, 1))
    states = valid(h)
    assert states is not None
    # the write pair is the second operation pair: state index 2 onward holds 1
    assert states[2][0] == 1


def test_valid_aborted_write_stutters() -> None:
    t1 = (H.inv_begin(1), H.res_begin(1),
          H.inv_write(1, 0, 1), H.res_write_abort(1))
    t2 = block(2, ("r", 0, 0))
    assert valid(t1 + t2) is not None
    assert valid(t1 + block(2, ("r", 0, 1))) is None


def test_valid_rejects_malformed_pairing() -> None:
    with pytest.raises(ValueError):
        valid((H.inv_begin(1),))  # dangling invocation
    with pytest.raises(ValueError):
        valid((H.inv_begin(1), H.res_read(1, 0)))  # mismatched response
    with pytest.raises(ValueError):
        valid((H.CRASH,))


# legality -------------------------------------------------------------------

def test_aborted_writer_cannot_justify_later_read() -> None:
    hs = block(1, ("w", 0, 1), commit=False) + block(2, ("r", 0, 1))
    # the read response position is illegal: t1's write is projected away
    assert not legal(hs)
    bad_i = len(hs) - 3  # index of t2's read response
    assert hs[bad_i] == H.res_read(2, 1)
    assert not legal_at(hs, bad_i)


def test_committed_writer_justifies_later_read() -> None:
    hs = block(1, ("w", 0, 1)) + block(2, ("r", 0, 1))
    assert legal(hs)
    assert sequential(hs)


def test_live_writer_invisible_to_others_but_sees_itself() -> None:
    t1 = (H.inv_begin(1), H.res_begin(1),
          H.inv_write(1, 0, 1), H.res_write(1),
          H.inv_read(1, 0), H.res_read(1, 1))  # own write visible
    assert legal(t1 + block(2, ("r", 0, 0)))
    assert not legal(t1 + block(2, ("r", 0, 1)))


def test_legal_at_invocation_index_strips_trailing_invocation() -> None:
    hs = block(1) + (H.inv_begin(2), H.res_begin(2), H.inv_read(2, 0))
    assert legal(hs)


def test_legal_rejects_interleaved_input() -> None:
    h = (H.inv_begin(1), H.inv_begin(2), H.res_begin(1), H.res_begin(2))
    with pytest.raises(ValueError):
        legal(h)
    assert not sequential(h)


# end-to-end opacity ----------------------------------------------------------

def test_committed_stale_read_not_opaque() -> None:
    h = block(1, ("w", 0, 1)) + (
        H.inv_begin(2), H.res_begin(2), H.inv_read(2, 0), H.res_read(2, 0),
    )
    v = end_to_end_opaque(h, V01)
    assert not v.ok
    assert v.failing_prefix == len(h)


def test_live_writer_with_pending_commit_can_be_aborted_away() -> None:
    h = (
        H.inv_begin(1), H.res_begin(1),
        H.inv_write(1, 0, 1), H.res_write(1),
        H.inv_commit(1),
        H.inv_begin(2), H.res_begin(2),
        H.inv_read(2, 0), H.res_read(2, 0),
    )
    v = end_to_end_opaque(h, V01)
    assert v.ok
    assert sequential(v.sequential_witness)


def test_pending_commit_can_also_be_taken_as_committed() -> None:
    # the dual world: a reader sees the value while the writer's commit
    # hangs; completing the commit justifies it
    h = (
        H.inv_begin(1), H.res_begin(1),
        H.inv_write(1, 0, 1), H.res_write(1),
        H.inv_commit(1),
        H.inv_begin(2), H.res_begin(2),
        H.inv_read(2, 0), H.res_read(2, 1),
    )
    v = end_to_end_opaque(h, V01)
    assert v.ok
    hs = v.sequential_witness
    assert H.is_committed(hs, 1)


def test_dirty_read_before_commit_invocation_not_opaque() -> None:
    h = (
        H.inv_begin(1), H.res_begin(1),
        H.inv_write(1, 0, 1), H.res_write(1),
        H.inv_begin(2), H.res_begin(2),
        H.inv_read(2, 0), H.res_read(2, 1),
    )
    assert not end_to_end_opaque(h, V01).ok


def test_witness_projections_match_completion() -> None:
    h = block(1, ("w", 0, 1)) + (H.inv_begin(2), H.res_begin(2), H.inv_read(2, 0))
    v = end_to_end_opaque(h, V01)
    assert v.ok
    for t in H.txn_ids(v.completion_witness):
        assert H.project(v.sequential_witness, t) == H.project(v.completion_witness, t)


def test_real_time_order_respected() -> None:
    # t1 strictly precedes t2 in real time, so t2's stale read is fatal even
    # though reordering t2 first would be legal
    h = block(1, ("w", 0, 1)) + block(2, ("r", 0, 0))
    assert not end_to_end_opaque(h, V01).ok
    # without the real-time edge (overlap) the same blocks are fine
    g = (
        H.inv_begin(2), H.res_begin(2),
    ) + block(1, ("w", 0, 1)) + (
        H.inv_read(2, 0), H.res_read(2, 0),
        H.inv_commit(2), H.res_commit(2),
    )
    assert end_to_end_opaque(g, V01).ok


# prefix scanning -------------------------------------------------------------

def test_opaque_reports_shortest_failing_prefix() -> None:
    h = block(1, ("w", 0, 1)) + (
        H.inv_begin(2), H.res_begin(2), H.inv_read(2, 0), H.res_read(2, 0),
    )
    v = opaque(h, V01)
    assert not v.ok
    assert v.failing_prefix == len(h)  # every proper prefix completes away
    assert opaque(h[:-1], V01).ok


def test_opaque_success_carries_full_witness() -> None:
    h = block(1, ("w", 0, 1)) + block(2, ("r", 0, 1))
    v = opaque(h, V01)
    assert v.ok
    assert len(v.sequential_witness) == len(h)


# durable opacity -------------------------------------------------------------

def test_committed_era0_write_visible_after_crash() -> None:
    h = block(1, ("w", 0, 1)) + (H.CRASH,) + block(2, ("r", 0, 1))
    assert durably_opaque(h, V01).ok


def test_uncommitted_era0_write_must_not_survive() -> None:
    # t1 never invoked commit, so no completion can commit it; the era-1
    # read of its value is unjustifiable
    h = (
        H.inv_begin(1), H.res_begin(1),
        H.inv_write(1, 0, 1), H.res_write(1),
        H.CRASH,
    ) + block(2, ("r", 0, 1))
    v = durably_opaque(h, V01)
    assert not v.ok


def test_commit_pending_at_crash_may_have_taken_effect() -> None:
    # with the commit invocation pending at the crash, both outcomes are
    # possible worlds; seeing the value is acceptable
    h = (
        H.inv_begin(1), H.res_begin(1),
        H.inv_write(1, 0, 1), H.res_write(1),
        H.inv_commit(1),
        H.CRASH,
    ) + block(2, ("r", 0, 1))
    assert durably_opaque(h, V01).ok
    # and so is not seeing it
    g = (
        H.inv_begin(1), H.res_begin(1),
        H.inv_write(1, 0, 1), H.res_write(1),
        H.inv_commit(1),
        H.CRASH,
    ) + block(2, ("r", 0, 0))
    assert durably_opaque(g, V01).ok


def test_transaction_spanning_eras_rejected() -> None:
    h = (H.inv_begin(1), H.res_begin(1), H.CRASH, H.inv_commit(1), H.res_commit(1))
    v = durably_opaque(h, V01)
    assert not v.ok
    assert "well-formed" in v.reason


def test_empty_history_durably_opaque() -> None:
    assert durably_opaque((), V01).ok
    assert durably_opaque((H.CRASH,), V01).ok


# oracle bounds ----------------------------------------------------------------

def test_oracle_refuses_too_many_transactions() -> None:
    h = tuple(H.inv_begin(t) for t in range(1, 6))
    with pytest.raises(TooLargeError):
        opaque(h, V01)


def test_oracle_refuses_too_many_values() -> None:
    with pytest.raises(TooLargeError):
        opaque((), (0, 1, 2, 3))


# strategy agreement -----------------------------------------------------------

def test_strategies_agree_on_handpicked_cases() -> None:
    cases = [
        block(1, ("w", 0, 1)) + block(2, ("r", 0, 0)),
        block(1, ("w", 0, 1)) + block(2, ("r", 0, 1)),
        block(1, ("w", 0, 1), commit=None) + (H.inv_commit(1),) + block(2, ("r", 0, 1)),
        block(1, ("w", 0, 1), commit=None) + (H.inv_commit(1),) + block(2, ("r", 0, 0)),
        (H.inv_begin(1), H.inv_begin(2)),
        (),
    ]
    for h in cases:
        a = end_to_end_opaque(h, V01).ok
        b = end_to_end_opaque_alt(h, V01)
        assert a == b, h


def test_strategies_agree_exhaustively_small() -> None:
    for h in H.enumerate_histories(2, 1, 2, 5, max_crashes=0):
        a = end_to_end_opaque(h, V01).ok
        b = end_to_end_opaque_alt(h, V01)
        assert a == b, h
