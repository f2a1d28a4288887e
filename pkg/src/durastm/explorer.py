"""Interleaving-and-crash exploration of the durable TM implementation.

Exhaustive mode runs a depth-first search over every enabled action with
per-path crash and flush budgets, a begin-retry cut, and visited-state
deduplication keyed by a canonical state hash.  Random mode runs seeded
walks, uniform by default, with optional crash/flush/continuation
steering.  A third driver walks the reference automaton directly for its
own checks.

Checks run prefix-incrementally: every emitted event advances the
consistency oracle, the reference-automaton subset construction, and the
forward-simulation candidate set in lockstep with the search, so paths
cut by deduplication have still had their whole prefix checked.  A path
ends at its first violation; the recorded counterexample is that prefix.
"""
from __future__ import annotations

import hashlib
import random
import time
from dataclasses import dataclass, field, replace

from . import histories as H
from .dtml import MUTATIONS, DtmlAction, DtmlConfig, DtmlMachine, DtmlState
from .dtms2 import (
    Dtms2Config,
    Dtms2Machine,
    _closure,
    _matching_actions,
    dtms2_accepts,
    dtms2_random_walk,
)
from .opacity import durably_opaque, end_to_end_opaque
from .refinement import check_weak_sim, sim_step

__all__ = [
    "ExplorationConfig",
    "Violation",
    "CheckReport",
    "canonical_hash",
    "explore_exhaustive",
    "explore_random",
    "walk_reference",
]

# checks meaningful when driving the implementation machine
_MACHINE_CHECKS = frozenset({"opacity", "refinement", "simrel", "invariants"})
# checks meaningful when walking the reference automaton
_REFERENCE_CHECKS = frozenset({"opacity", "refinement", "weaksim"})
_ALL_CHECKS = _MACHINE_CHECKS | _REFERENCE_CHECKS

# when a walk must still crash, do so while enough steps remain for
# recovery plus one observer transaction, or the crash can prove nothing
_FORCED_CRASH_RESERVE = 16

_RECOVERY_KINDS = frozenset({"C1", "C2", "C3", "C4", "C5", "C6"})
_RESTING_PCS = frozenset({"NotStarted", "Idle", "Committed", "Aborted"})
# control points that can never hold the write claim; every other point
# with an odd snapshot (or W3, where glb is already odd but the local
# snapshot has not incremented yet) is inside the exclusive write region
_UNCLAIMED_PCS = frozenset(
    {"NotStarted", "B1", "B2", "BeginResp", "CommitResp", "Committed",
     "Aborted"})


@dataclass(frozen=True)
class ExplorationConfig:
    """Bounds, budgets, and check selection for one exploration run."""

    num_txns: int = 2
    num_addrs: int = 2
    num_vals: int = 2
    max_crashes: int = 1
    flush_budget: int = 1
    max_steps: int = 60
    max_begin_retries: int = 2
    mode: str = "exhaustive"
    seed: int = 0
    checks: tuple[str, ...] = ("opacity", "refinement")
    mutation: str | None = None
    # random-mode extras
    num_walks: int = 1000
    min_crashes: int = 0
    crash_prob: float | None = None
    flush_prob: float | None = None
    continue_prob: float = 0.0
    # "state": cut a path when its state was seen before (maximal state
    # coverage; every walked edge is still fully checked).  "context":
    # cut only when state, remaining budgets, and checker context all
    # repeat, so counterexample paths are never merged away — needed when
    # hunting injected bugs, where a crash-and-recover prefix can
    # converge to a state some healthy prefix reached first.  "auto"
    # picks "context" when a mutation is active.
    dedup: str = "auto"
    # override for the exhaustive-mode state-space guard
    force: bool = False

    def __post_init__(self) -> None:
        object.__setattr__(self, "checks", tuple(self.checks))

    @property
    def check_set(self) -> frozenset[str]:
        return frozenset(self.checks)

    def validate(self, allowed_checks: frozenset[str], *,
                 exhaustive: bool = False) -> None:
        for c in self.checks:
            if c not in _ALL_CHECKS:
                raise ValueError(f"unknown check {c!r}")
            if c not in allowed_checks:
                raise ValueError(
                    f"check {c!r} does not apply to this driver "
                    f"(allowed: {sorted(allowed_checks)})")
        if self.mutation is not None and self.mutation not in MUTATIONS:
            raise ValueError(
                f"unknown mutation {self.mutation!r}; one of {MUTATIONS}")
        if min(self.num_txns, self.num_addrs, self.num_vals) < 1:
            raise ValueError("domain sizes must be at least 1")
        if min(self.max_crashes, self.flush_budget, self.max_steps,
               self.max_begin_retries, self.num_walks) < 0:
            raise ValueError("budgets must be non-negative")
        if not 0 <= self.min_crashes <= self.max_crashes:
            raise ValueError("min_crashes must lie within the crash budget")
        if self.mode not in ("exhaustive", "random"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.dedup not in ("auto", "state", "context"):
            raise ValueError(f"unknown dedup policy {self.dedup!r}")
        if exhaustive and not self.force and (
                self.num_txns > 3 or self.num_addrs > 2 or self.num_vals > 2):
            raise ValueError(
                "exhaustive exploration beyond 3 transactions / 2 addresses"
                " / 2 values explodes; pass force=True to override")

    @property
    def dedup_policy(self) -> str:
        if self.dedup != "auto":
            return self.dedup
        return "context" if self.mutation is not None else "state"


@dataclass(frozen=True)
class Violation:
    """One failed check with the (prefix-truncated) counterexample."""

    check: str
    history: H.History
    detail: dict = field(default_factory=dict, compare=True)


@dataclass
class CheckReport:
    """Outcome of one exploration run."""

    histories_explored: int = 0
    states_visited: int = 0
    violations: list[Violation] = field(default_factory=list)
    elapsed: float = 0.0
    # simulation-relation failures attributable only to the reconstructed
    # per-transaction clause table are reported separately, not as
    # violations (see check_forward_sim)
    txn_rel_flag_count: int = 0
    txn_rel_flags: tuple[str, ...] = ()

    @property
    def ok(self) -> bool:
        return not self.violations

    def as_dict(self) -> dict:
        return {
            "ok": self.ok,
            "histories_explored": self.histories_explored,
            "states_visited": self.states_visited,
            "elapsed": self.elapsed,
            "txn_rel_flag_count": self.txn_rel_flag_count,
            "txn_rel_flags": list(self.txn_rel_flags),
            "violations": [
                {"check": v.check,
                 "history": [H.event_to_json(e) for e in v.history],
                 "detail": v.detail}
                for v in self.violations
            ],
        }


def canonical_hash(state: DtmlState) -> str:
    """Content digest of a machine state, stable across process runs."""
    payload = repr((
        state.glb, state.mem.vstore, state.mem.pstore, state.log.items(),
        state.pc, state.loc, state.in_addr, state.in_val, state.writer,
        state.syst_pc, state.rec_addr, state.rec_val,
    ))
    return hashlib.sha256(payload.encode("ascii")).hexdigest()


# -- prefix-incremental checking ----------------------------------------------


def _needs_consistency_check(ev: H.Event) -> bool:
    # Only events that extend what the history promises can newly break
    # the prefix condition: successful reads fix an observed value, and
    # commit responses fix a transaction's fate (an aborted commit forbids
    # completions that would have committed it).  Invocations, begin/write
    # responses, and operation-level aborts only add events whose
    # completions subsume those of the shorter prefix.
    if ev.ev == "resRead" and not ev.abort:
        return True
    return ev.ev == "resCommit"


def _update_dirty(dirty: frozenset, s: DtmlState, a: DtmlAction,
                  mutation: str | None) -> frozenset:
    """Track which addresses may legitimately differ between the volatile
    and persistent stores (written back but not yet flushed)."""
    k = a.kind
    if k == "crash":
        return frozenset()
    if k == "flush":
        return dirty - {a.addr}
    if k == "W6":
        return dirty | {s.in_addr[a.tx - 1]}
    if k == "W7" and mutation != "skip_flush_W7":
        return dirty - {s.in_addr[a.tx - 1]}
    if k == "C3":
        return dirty | {s.rec_addr}
    if k == "C4":
        return dirty - {s.rec_addr}
    return dirty


def _invariant_violation(s: DtmlState, dirty: frozenset) -> str | None:
    """State invariants checked at every visited state."""
    claimants = [t for t in range(1, len(s.pc) + 1)
                 if s.pc[t - 1] == "W3"
                 or (s.loc[t - 1] % 2 == 1
                     and s.pc[t - 1] not in _UNCLAIMED_PCS)]
    expected = [] if s.writer is None else [s.writer]
    if claimants != expected:
        return "invariant.singleWriter"
    if s.syst_pc == "RecIdle" and (s.glb % 2 == 1) != (s.writer is not None):
        return "invariant.glbParity"
    for addr, (v, p) in enumerate(zip(s.mem.vstore, s.mem.pstore)):
        if v != p and addr not in dirty:
            return "invariant.flushDiff"
    if s.syst_pc == "RecIdle" and s.writer is None and not s.log.is_empty():
        return "invariant.logQuiet"
    return None


def _advance_trace(am: Dtms2Machine, aset: frozenset,
                   ev: H.Event) -> frozenset:
    """One event of the reference automaton's subset construction."""
    succ = set()
    for st in _closure(am, set(aset)):
        for aa in _matching_actions(am, st, ev):
            succ.add(am.step(st, aa)[0])
    return frozenset(succ)


class _Pipeline:
    """Per-edge checking shared by exhaustive and random exploration."""

    def __init__(self, cfg: ExplorationConfig) -> None:
        self.cfg = cfg
        self.checks = cfg.check_set
        self.machine = DtmlMachine(
            DtmlConfig(cfg.num_txns, cfg.num_addrs, cfg.num_vals),
            mutation=cfg.mutation)
        self.abstract = None
        if self.checks & {"refinement", "simrel"}:
            self.abstract = Dtms2Machine(
                Dtms2Config(cfg.num_txns, cfg.num_addrs, cfg.num_vals))
        self.value_domain = range(cfg.num_vals)

    def initial_frames(self) -> tuple[frozenset | None, frozenset | None,
                                      frozenset]:
        aset_tr = None
        aset_sim = None
        if "refinement" in self.checks:
            aset_tr = frozenset({self.abstract.initial()})
        if "simrel" in self.checks:
            aset_sim = frozenset({self.abstract.initial()})
        return aset_tr, aset_sim, frozenset()

    def check_edge(self, a: DtmlAction, s: DtmlState, s2: DtmlState,
                   ev: H.Event | None, events: list[H.Event],
                   aset_tr: frozenset | None, aset_sim: frozenset | None,
                   dirty: frozenset):
        """Check one transition; ``events`` already includes ``ev``.

        Returns (aset_tr', aset_sim', dirty', violations, soft-clause
        strings).  A failing event is reported under every check it
        breaks, so one counterexample can carry several verdicts.
        """
        dirty = _update_dirty(dirty, s, a, self.cfg.mutation)
        if "invariants" in self.checks:
            inv = _invariant_violation(s2, dirty)
            if inv is not None:
                return aset_tr, aset_sim, dirty, [Violation(
                    inv, tuple(events), {"after_action": str(a)})], []
        viols: list[Violation] = []
        if ev is not None:
            h = tuple(events)
            at = len(h) - 1
            if not H.durably_well_formed(h):
                return aset_tr, aset_sim, dirty, [Violation(
                    "wellformed", h, {"at_event": at})], []
            if "opacity" in self.checks and _needs_consistency_check(ev):
                verdict = end_to_end_opaque(H.ops(h), self.value_domain)
                if not verdict.ok:
                    viols.append(Violation(
                        "opacity", h,
                        {"at_event": at, "reason": verdict.reason}))
            if aset_tr is not None:
                aset_tr = _advance_trace(self.abstract, aset_tr, ev)
                if not aset_tr:
                    viols.append(Violation(
                        "refinement", h, {"at_event": at, "event": str(ev)}))
            if viols:
                return aset_tr, aset_sim, dirty, viols, []
        soft: list[str] = []
        if aset_sim is not None:
            aset_sim, hard, soft_clauses = sim_step(
                self.abstract, aset_sim, a, s2, ev)
            if hard:
                return aset_tr, aset_sim, dirty, [Violation(
                    "simrel", tuple(events),
                    {"action": str(a), "clauses": hard})], []
            soft = [f"{a}: {c}" for c in soft_clauses]
        return aset_tr, aset_sim, dirty, [], soft


def _record_soft(report: CheckReport, soft: list[str]) -> None:
    if not soft:
        return
    report.txn_rel_flag_count += len(soft)
    if len(report.txn_rel_flags) < 10:
        report.txn_rel_flags = tuple(
            list(report.txn_rel_flags) + soft)[:10]


def _stop_satisfied(stop_on, report: CheckReport) -> bool:
    if not stop_on:
        return False
    seen = {v.check for v in report.violations}
    return set(stop_on) <= seen


# -- exhaustive mode -----------------------------------------------------------


def explore_exhaustive(cfg: ExplorationConfig, on_history=None,
                       stop_on=None) -> CheckReport:
    """Depth-first search of every schedule within the configured bounds.

    ``on_history`` receives each maximal path's event history (paths end
    at the step bound, at a budget cut, at a revisited state, or at a
    violation).  ``stop_on`` names checks; the search stops early once
    every named check has at least one recorded violation.
    """
    cfg.validate(_MACHINE_CHECKS, exhaustive=True)
    pipe = _Pipeline(cfg)
    machine = pipe.machine
    report = CheckReport()
    context_dedup = cfg.dedup_policy == "context"
    visited: dict[str, list[tuple]] = {}
    distinct_states: set[str] = set()
    events: list[H.Event] = []
    start = time.perf_counter()
    stopped = False

    def finish_path() -> None:
        report.histories_explored += 1
        if on_history is not None:
            on_history(tuple(events))

    def allowed(s: DtmlState, a: DtmlAction, crashes: int, flushes: int,
                retries: tuple[int, ...]) -> bool:
        if a.kind == "crash":
            return crashes < cfg.max_crashes
        if a.kind == "flush":
            return flushes < cfg.flush_budget
        if a.kind == "B2" and s.loc[a.tx - 1] % 2 == 1:
            return retries[a.tx - 1] < cfg.max_begin_retries
        return True

    def dfs(s: DtmlState, depth: int, crashes: int, flushes: int,
            retries: tuple[int, ...], aset_tr, aset_sim, dirty) -> None:
        nonlocal stopped
        if stopped:
            return
        digest = canonical_hash(s)
        if context_dedup:
            context = (s, crashes, flushes, retries, aset_tr, aset_sim,
                       dirty)
        else:
            context = (s,)
        # dominance rule: cut only when this state was already expanded
        # with at least as much remaining depth — a revisit with more
        # steps left can reach continuations the first visit could not
        remaining = cfg.max_steps - depth
        bucket = visited.setdefault(digest, [])
        for entry in bucket:
            if entry[0] == context:
                if remaining <= entry[1]:
                    finish_path()
                    return
                entry[1] = remaining
                break
        else:
            bucket.append([context, remaining])
        distinct_states.add(digest)
        if depth >= cfg.max_steps:
            finish_path()
            return
        progressed = False
        for a in machine.enabled(s):
            if stopped:
                break
            if not allowed(s, a, crashes, flushes, retries):
                continue
            progressed = True
            crashes2 = crashes + (a.kind == "crash")
            flushes2 = flushes + (a.kind == "flush")
            retries2 = retries
            if a.kind == "B2" and s.loc[a.tx - 1] % 2 == 1:
                i = a.tx - 1
                retries2 = retries[:i] + (retries[i] + 1,) + retries[i + 1:]
            s2, ev = machine.step(s, a)
            if ev is not None:
                events.append(ev)
            aset_tr2, aset_sim2, dirty2, viols, soft = pipe.check_edge(
                a, s, s2, ev, events, aset_tr, aset_sim, dirty)
            _record_soft(report, soft)
            if viols:
                report.violations.extend(viols)
                finish_path()
                if _stop_satisfied(stop_on, report):
                    stopped = True
            else:
                dfs(s2, depth + 1, crashes2, flushes2, retries2,
                    aset_tr2, aset_sim2, dirty2)
            if ev is not None:
                events.pop()
        if not progressed:
            finish_path()

    aset_tr, aset_sim, dirty = pipe.initial_frames()
    dfs(machine.initial(), 0, 0, 0, (0,) * cfg.num_txns,
        aset_tr, aset_sim, dirty)
    report.states_visited = len(distinct_states)
    report.elapsed = time.perf_counter() - start
    return report


# -- random mode ---------------------------------------------------------------


def _is_continuation(s: DtmlState, a: DtmlAction) -> bool:
    """Actions that advance an already-live transaction or the recovery
    routine; steering toward these makes walks mostly-sequential, which
    is where committed transactions (and durability bugs) live."""
    if a.kind in _RECOVERY_KINDS:
        return True
    return a.tx is not None and s.pc[a.tx - 1] not in (
        "NotStarted", "Committed", "Aborted")


def _pick_action(rng: random.Random, cfg: ExplorationConfig,
                 acts: list[DtmlAction], s: DtmlState, crashes: int,
                 steps_left: int) -> DtmlAction:
    crash_acts = [a for a in acts if a.kind == "crash"]
    need = cfg.min_crashes - crashes
    if crash_acts and need > 0:
        # an outstanding forced crash fires as soon as some transaction
        # has committed and none is live, so the remaining fresh
        # transactions survive into the next era to observe what the
        # crash did to the committed state
        if (s.syst_pc == "RecIdle"
                and "Committed" in s.pc
                and all(pc in ("NotStarted", "Committed", "Aborted")
                        for pc in s.pc)):
            return crash_acts[0]
        # backstop: crash while the walk can still run recovery and an
        # observer transaction afterwards
        if steps_left <= _FORCED_CRASH_RESERVE + need - 1:
            return crash_acts[0]
    pool = list(acts)
    if cfg.crash_prob is not None:
        pool = [a for a in pool if a.kind != "crash"]
        if crash_acts and rng.random() < cfg.crash_prob:
            return crash_acts[0]
    if cfg.flush_prob is not None:
        flush_acts = [a for a in pool if a.kind == "flush"]
        pool = [a for a in pool if a.kind != "flush"]
        if flush_acts and rng.random() < cfg.flush_prob:
            return rng.choice(flush_acts)
    if cfg.continue_prob > 0.0:
        cont = [a for a in pool if _is_continuation(s, a)]
        if cont and rng.random() < cfg.continue_prob:
            return rng.choice(cont)
    if not pool:
        pool = acts
    return rng.choice(pool)


def explore_random(cfg: ExplorationConfig, on_history=None,
                   stop_on=None) -> CheckReport:
    """Seeded random walks over the implementation machine.

    Walks are uniform over the budget-respecting enabled actions unless
    ``crash_prob``/``flush_prob``/``continue_prob`` steer the choice;
    ``min_crashes`` forces that many crashes into every walk.
    """
    cfg.validate(_MACHINE_CHECKS)
    pipe = _Pipeline(cfg)
    machine = pipe.machine
    report = CheckReport()
    rng = random.Random(cfg.seed)
    digests: set[str] = set()
    start = time.perf_counter()

    for _ in range(cfg.num_walks):
        s = machine.initial()
        digests.add(canonical_hash(s))
        aset_tr, aset_sim, dirty = pipe.initial_frames()
        events: list[H.Event] = []
        crashes = flushes = 0
        retries = [0] * cfg.num_txns
        for step_no in range(cfg.max_steps):
            acts = [a for a in machine.enabled(s)
                    if (a.kind != "crash" or crashes < cfg.max_crashes)
                    and (a.kind != "flush" or flushes < cfg.flush_budget)
                    and (a.kind != "B2" or s.loc[a.tx - 1] % 2 == 0
                         or retries[a.tx - 1] < cfg.max_begin_retries)]
            if not acts:
                break
            a = _pick_action(rng, cfg, acts, s, crashes,
                             cfg.max_steps - step_no)
            crashes += a.kind == "crash"
            flushes += a.kind == "flush"
            if a.kind == "B2" and s.loc[a.tx - 1] % 2 == 1:
                retries[a.tx - 1] += 1
            s2, ev = machine.step(s, a)
            if ev is not None:
                events.append(ev)
            aset_tr, aset_sim, dirty, viols, soft = pipe.check_edge(
                a, s, s2, ev, events, aset_tr, aset_sim, dirty)
            _record_soft(report, soft)
            if viols:
                report.violations.extend(viols)
                break
            s = s2
            digests.add(canonical_hash(s))
        report.histories_explored += 1
        if on_history is not None:
            on_history(tuple(events))
        if _stop_satisfied(stop_on, report):
            break

    report.states_visited = len(digests)
    report.elapsed = time.perf_counter() - start
    return report


# -- reference-automaton walks ---------------------------------------------------


def walk_reference(cfg: ExplorationConfig, on_history=None,
                   stop_on=None) -> CheckReport:
    """Seeded random walks of the reference automaton itself.

    Each walk's history is checked for durable consistency, and the
    ``weaksim`` check replays the walk's schedule against the
    crash-free automaton to confirm the crash steps can be erased.
    """
    cfg.validate(_REFERENCE_CHECKS)
    config = Dtms2Config(cfg.num_txns, cfg.num_addrs, cfg.num_vals)
    report = CheckReport()
    rng = random.Random(cfg.seed)
    start = time.perf_counter()

    for walk_no in range(cfg.num_walks):
        h, schedule = dtms2_random_walk(
            config, rng, cfg.max_steps, max_crashes=cfg.max_crashes)
        report.states_visited += len(schedule)
        if "opacity" in cfg.check_set:
            verdict = durably_opaque(h, range(cfg.num_vals))
            if not verdict.ok:
                report.violations.append(Violation(
                    "opacity", h,
                    {"walk": walk_no, "reason": verdict.reason}))
        if "refinement" in cfg.check_set:
            acc = dtms2_accepts(h, config)
            if not acc.ok:
                report.violations.append(Violation(
                    "refinement", h,
                    {"walk": walk_no, "failed_at": acc.failed_at}))
        if "weaksim" in cfg.check_set:
            sim = check_weak_sim(config, schedule)
            if not sim.ok:
                report.violations.append(Violation(
                    "weaksim", h,
                    {"walk": walk_no, "reason": sim.reason,
                     "failed_at": sim.failed_at}))
        report.histories_explored += 1
        if on_history is not None:
            on_history(h)
        if _stop_satisfied(stop_on, report):
            break

    report.elapsed = time.perf_counter() - start
    return report
