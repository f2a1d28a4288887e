"""Command-line front end for the durable-STM laboratory.

Subcommands
    explore           exhaustive bounded exploration of the logging machine
    fuzz              seeded random walks over the logging machine
    check-history     verify one JSONL trace for durable opacity
    check-refinement  verify one JSONL trace against the reference automaton
    walk-dtms2        seeded random walks of the reference automaton itself
    mutate            run every known fault injection and report which were
                      caught by the selected checks

Exit codes: 0 every selected check passed, 1 at least one violation was
found (the counterexample is written out), 2 usage or configuration error.
The exit code is a pure function of the produced report.

Traces are JSONL, one event object per line (a crash is ``{"ev": "crash"}``).
Counterexamples are minimized by prefix truncation only: a violating history
is reported up to and including the first event that triggers the check,
never re-ordered or re-shrunk.  Output is plain text; PASS/FAIL markers are
colored only on a terminal and never when ``NO_COLOR`` is set.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from typing import Iterable, Sequence

from . import histories as H
from .dtml import MUTATIONS
from .dtms2 import Dtms2Config, config_for_history, dtms2_accepts
from .explorer import (CheckReport, ExplorationConfig, Violation,
                       explore_exhaustive, explore_random, walk_reference)
from .opacity import OracleBounds, TooLargeError, durably_opaque

# -- trace and report files ---------------------------------------------------


def read_trace(path: str) -> H.History:
    """Load a JSONL event trace.  Blank lines are ignored; any malformed
    line raises ValueError naming the 1-based line number."""
    events: list[H.Event] = []
    with open(path, "r", encoding="utf-8") as fh:
        for number, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                events.append(H.event_from_json(json.loads(line)))
            except (ValueError, json.JSONDecodeError) as exc:
                raise ValueError(f"{path}: line {number}: {exc}") from exc
    return tuple(events)


def write_trace(h: Iterable[H.Event], path: str) -> None:
    """Write a history as JSONL, one event object per line."""
    with open(path, "w", encoding="utf-8") as fh:
        for e in h:
            fh.write(json.dumps(H.event_to_json(e), sort_keys=True) + "\n")


def write_report(report: dict, path: str) -> None:
    """Write a JSON report file."""
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")


# -- presentation -------------------------------------------------------------


def _want_color() -> bool:
    return sys.stdout.isatty() and not os.environ.get("NO_COLOR")


def _status(ok: bool) -> str:
    word = "PASS" if ok else "FAIL"
    if _want_color():
        return f"\x1b[32m{word}\x1b[0m" if ok else f"\x1b[31m{word}\x1b[0m"
    return word


def _pick_counterexample(violations: Sequence[Violation]) -> Violation:
    for v in violations:
        if v.check == "opacity":
            return v
    return violations[0]


def _emit_counterexample(v: Violation, out: str | None) -> None:
    if out is not None:
        write_trace(v.history, out)
        print(f"counterexample ({v.check}, {len(v.history)} events) "
              f"written to {out}")
        return
    print(f"counterexample ({v.check}, {len(v.history)} events), JSONL:")
    for e in v.history:
        print(json.dumps(H.event_to_json(e), sort_keys=True))


def _finish_run(report: CheckReport, checks: Sequence[str],
                out: str | None, report_path: str | None) -> int:
    counts = {c: 0 for c in checks}
    for v in report.violations:
        counts[v.check] = counts.get(v.check, 0) + 1
    print(f"histories explored: {report.histories_explored}")
    print(f"states visited:     {report.states_visited}")
    for c in sorted(counts):
        print(f"check {c}: {counts[c]} violation(s)")
    if report.txn_rel_flag_count:
        print(f"per-transaction relation soft flags: "
              f"{report.txn_rel_flag_count} (reported separately)")
    print(_status(report.ok))
    if not report.ok:
        _emit_counterexample(_pick_counterexample(report.violations), out)
    elif out is not None:
        write_trace((), out)
    if report_path is not None:
        write_report(report.as_dict(), report_path)
    return 0 if report.ok else 1


# -- subcommands --------------------------------------------------------------


def _checks_arg(text: str) -> tuple[str, ...]:
    return tuple(c.strip() for c in text.split(",") if c.strip())


def _config_from(args: argparse.Namespace, mode: str) -> ExplorationConfig:
    return ExplorationConfig(
        num_txns=args.txns,
        num_addrs=args.addrs,
        num_vals=args.vals,
        max_crashes=args.max_crashes,
        flush_budget=args.flush_budget,
        max_steps=args.max_steps,
        seed=args.seed,
        checks=args.checks,
        mutation=args.mutation,
        mode=mode,
        num_walks=getattr(args, "walks", 1000),
        min_crashes=getattr(args, "min_crashes", 0),
        continue_prob=getattr(args, "continue_prob", 0.0),
        crash_prob=getattr(args, "crash_prob", None),
        flush_prob=getattr(args, "flush_prob", None),
        dedup=getattr(args, "dedup", "auto"),
        force=args.force,
    )


def _cmd_explore(args: argparse.Namespace) -> int:
    cfg = _config_from(args, "exhaustive")
    report = explore_exhaustive(cfg, stop_on=set(cfg.checks))
    return _finish_run(report, cfg.checks, args.out, args.report)


def _cmd_fuzz(args: argparse.Namespace) -> int:
    cfg = _config_from(args, "random")
    report = explore_random(cfg, stop_on=set(cfg.checks))
    return _finish_run(report, cfg.checks, args.out, args.report)


def _cmd_walk_dtms2(args: argparse.Namespace) -> int:
    cfg = ExplorationConfig(
        num_txns=args.txns, num_addrs=args.addrs, num_vals=args.vals,
        max_crashes=args.max_crashes, max_steps=args.max_steps,
        seed=args.seed, checks=args.checks, mode="random",
        num_walks=args.walks, force=args.force)
    report = walk_reference(cfg, stop_on=set(cfg.checks))
    return _finish_run(report, cfg.checks, args.out, args.report)


def _infer_value_domain(h: H.History, vals: int | None) -> range:
    observed = max((e.val for e in h if e.val is not None), default=-1)
    return range(max(vals if vals is not None else 2, observed + 1))


def _cmd_check_history(args: argparse.Namespace) -> int:
    h = read_trace(getattr(args, "in"))
    domain = _infer_value_domain(h, args.vals)
    verdict = durably_opaque(h, domain, bounds=OracleBounds(
        max_txns=max(4, len(H.txn_ids(h))),
        max_addrs=max(3, len({e.addr for e in h if e.addr is not None})),
        max_vals=max(3, len(domain))))
    print(f"{len(h)} events, value domain {list(domain)}")
    if verdict.ok:
        print(f"durable opacity: {_status(True)}")
        return 0
    print(f"durable opacity: {_status(False)} — {verdict.reason} "
          f"(failing prefix: {verdict.failing_prefix})")
    return 1


def _cmd_check_refinement(args: argparse.Namespace) -> int:
    h = read_trace(getattr(args, "in"))
    config = config_for_history(h)
    result = dtms2_accepts(h, config, durable=True)
    print(f"{len(h)} events against bounds txns={config.num_txns} "
          f"addrs={config.num_addrs} vals={config.num_vals}")
    if result.ok:
        print(f"reference-automaton acceptance: {_status(True)}")
        return 0
    print(f"reference-automaton acceptance: {_status(False)} — first "
          f"impossible event at index {result.failed_at}")
    return 1


def _cmd_mutate(args: argparse.Namespace) -> int:
    wanted = ("opacity", "refinement")
    names = (args.mutation,) if args.mutation else MUTATIONS
    escaped = []
    for name in names:
        cfg = ExplorationConfig(
            num_txns=args.txns, num_addrs=args.addrs, num_vals=args.vals,
            max_crashes=max(1, args.max_crashes),
            flush_budget=args.flush_budget, max_steps=args.max_steps,
            seed=args.seed, checks=wanted, mutation=name, mode="random",
            num_walks=args.walks, min_crashes=1, continue_prob=0.85,
            crash_prob=0.02, force=args.force)
        report = explore_random(cfg, stop_on=set(wanted))
        found = {v.check for v in report.violations}
        if set(wanted) <= found:
            print(f"{name}: caught "
                  f"({', '.join(sorted(found))} violations found)")
        else:
            missing = sorted(set(wanted) - found)
            print(f"{name}: escaped ({', '.join(missing)} found nothing)")
            escaped.append(name)
    print(_status(not escaped))
    return 1 if escaped else 0


# -- argument parsing ---------------------------------------------------------


def _add_domain_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--txns", type=int, default=2,
                   help="number of transactions (default 2)")
    p.add_argument("--addrs", type=int, default=2,
                   help="number of addresses (default 2)")
    p.add_argument("--vals", type=int, default=2,
                   help="number of values (default 2)")
    p.add_argument("--max-crashes", type=int, default=1,
                   help="crash budget (default 1)")
    p.add_argument("--max-steps", type=int, default=60,
                   help="schedule length bound (default 60)")
    p.add_argument("--seed", type=int, default=0,
                   help="random seed (default 0)")
    p.add_argument("--force", action="store_true",
                   help="override the exhaustive-bounds safety guard")


def _add_machine_flags(p: argparse.ArgumentParser) -> None:
    _add_domain_flags(p)
    p.add_argument("--flush-budget", type=int, default=1,
                   help="background-flush budget (default 1)")
    p.add_argument("--mutation", choices=MUTATIONS, default=None,
                   help="inject a fault into the logging machine")


def _add_output_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--out", default=None, metavar="PATH",
                   help="write the counterexample trace (JSONL) here")
    p.add_argument("--report", default=None, metavar="PATH",
                   help="write the full JSON report here")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="durastm",
        description="A bounded-exploration laboratory for durable "
                    "software transactional memory.")
    sub = p.add_subparsers(dest="cmd", required=True)

    ex = sub.add_parser("explore", help="exhaustive bounded exploration")
    _add_machine_flags(ex)
    ex.add_argument("--checks", type=_checks_arg,
                    default=("opacity", "refinement"),
                    help="comma list from opacity,refinement,simrel,"
                         "invariants (default opacity,refinement)")
    ex.add_argument("--dedup", choices=("auto", "state", "context"),
                    default="auto", help="state-merging policy")
    _add_output_flags(ex)
    ex.set_defaults(func=_cmd_explore)

    fz = sub.add_parser("fuzz", help="seeded random walks of the machine")
    _add_machine_flags(fz)
    fz.add_argument("--checks", type=_checks_arg,
                    default=("opacity", "refinement"),
                    help="comma list from opacity,refinement,simrel,"
                         "invariants (default opacity,refinement)")
    fz.add_argument("--walks", type=int, default=1000,
                    help="number of walks (default 1000)")
    fz.add_argument("--min-crashes", type=int, default=0,
                    help="force at least this many crashes per walk")
    fz.add_argument("--continue-prob", type=float, default=0.0,
                    help="bias toward continuing live transactions")
    fz.add_argument("--crash-prob", type=float, default=None,
                    help="dedicated crash probability per step")
    fz.add_argument("--flush-prob", type=float, default=None,
                    help="dedicated flush probability per step")
    _add_output_flags(fz)
    fz.set_defaults(func=_cmd_fuzz)

    wk = sub.add_parser("walk-dtms2",
                        help="seeded random walks of the reference automaton")
    _add_domain_flags(wk)
    wk.add_argument("--checks", type=_checks_arg,
                    default=("opacity", "refinement"),
                    help="comma list from opacity,refinement,weaksim "
                         "(default opacity,refinement)")
    wk.add_argument("--walks", type=int, default=1000,
                    help="number of walks (default 1000)")
    _add_output_flags(wk)
    wk.set_defaults(func=_cmd_walk_dtms2)

    ch = sub.add_parser("check-history",
                        help="durable opacity of one JSONL trace")
    ch.add_argument("--in", required=True, metavar="PATH",
                    help="JSONL trace to check")
    ch.add_argument("--vals", type=int, default=None,
                    help="value-domain size (default: inferred, at least 2)")
    ch.set_defaults(func=_cmd_check_history)

    cr = sub.add_parser("check-refinement",
                        help="reference-automaton acceptance of one trace")
    cr.add_argument("--in", required=True, metavar="PATH",
                    help="JSONL trace to check")
    cr.set_defaults(func=_cmd_check_refinement)

    mu = sub.add_parser("mutate",
                        help="verify the checkers catch every fault injection")
    _add_domain_flags(mu)
    mu.add_argument("--flush-budget", type=int, default=1,
                    help="background-flush budget (default 1)")
    mu.add_argument("--mutation", choices=MUTATIONS, default=None,
                    help="test a single fault instead of all of them")
    mu.add_argument("--walks", type=int, default=1000,
                    help="walks per fault (default 1000)")
    mu.set_defaults(func=_cmd_mutate)

    return p


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code in (0, None) else 2
    try:
        return args.func(args)
    except (ValueError, TooLargeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
