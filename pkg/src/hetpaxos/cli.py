"""Command-line front end.

Output is line-delimited JSON records on stdout (``--format records``, the
default) or a single indented summary document (``--format summary``).
Exit status: 0 on success, 1 when a verdict fails (invalid graph, safety
violation, failed proof), 2 on usage or input errors.  Errors go to stderr
as one JSON object with a machine-readable ``error`` code.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path
from typing import Any, TextIO

from . import graphfile
from .appendix import EXAMPLES, load_example
from .chain import run_chain
from .errors import HetPaxosError
from .graph import (
    ExecutionFacts,
    LearnerGraph,
    check_validity,
    condense,
    derive_quorums_from_edges,
    derive_safe_sets_from_quorums,
    is_condensed,
    stated_edges_within_bound,
)
from .sim import scenario as scenario_mod
from .sim.engine import run
from .sim.report import load_records, verdicts
from .sim.sweep import SweepConfig, sweep
from .sim.termination import termination_schedule


class UsageError(HetPaxosError):
    code = "usage"


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # type: ignore[override]
        raise UsageError(message)


def _dump(rec: Any) -> str:
    return json.dumps(rec, sort_keys=True, separators=(",", ":"))


def _emit(records: list[dict], summary: dict, fmt: str, out: TextIO) -> None:
    if fmt == "summary":
        out.write(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    else:
        for r in records:
            out.write(_dump(r) + "\n")


def _load_graph(ref: str) -> LearnerGraph:
    p = Path(ref)
    if not p.exists() and ref in EXAMPLES:
        return load_example(ref)
    try:
        return graphfile.load(p)
    except OSError as e:
        raise UsageError(f"cannot read graph {ref!r}: {e.strerror}") from e


def _load_scenario(ref: str, args) -> scenario_mod.Scenario:
    try:
        sc = scenario_mod.load(ref)
    except OSError as e:
        raise UsageError(f"cannot read scenario {ref!r}: {e.strerror}") from e
    changes: dict[str, Any] = {}
    if args.seed is not None:
        changes["seed"] = args.seed
    if args.max_time is not None:
        changes["max_time"] = args.max_time
    return dataclasses.replace(sc, **changes) if changes else sc


def _write(path: str, text: str) -> None:
    try:
        Path(path).write_text(text)
    except OSError as e:
        raise UsageError(f"cannot write {path!r}: {e.strerror}") from e


# -- commands ---------------------------------------------------------------------
def cmd_validate_graph(args, out: TextIO) -> int:
    g = _load_graph(args.path)
    cg = condense(g)
    wit = check_validity(cg)
    rec = {
        "record": "graph",
        "path": args.path,
        "acceptors": len(g.acceptors),
        "learners": len(g.learners),
        "condensed_as_given": is_condensed(g),
        "valid": not wit,
        "witnesses": [w.as_dict() for w in wit],
    }
    if args.format == "summary":
        out.write(("valid" if not wit else "invalid") + "\n")
        for w in wit:
            out.write(_dump(w.as_dict()) + "\n")
    else:
        out.write(_dump(rec) + "\n")
    return 0 if not wit else 1


def cmd_condense(args, out: TextIO) -> int:
    g = condense(_load_graph(args.path))
    text = graphfile.dumps(g)
    if args.out:
        _write(args.out, text)
        out.write(_dump({"record": "condensed", "out": args.out, "learners": len(g.learners)}) + "\n")
    else:
        out.write(text)
    return 0


def cmd_derive_bounds(args, out: TextIO) -> int:
    g = _load_graph(args.path)
    records: list[dict] = []
    ok = True
    if args.direction == "quorums":
        cg = condense(g)
        derived = derive_quorums_from_edges(cg)
        for a in g.learners:
            stated = g.quorum(a)
            # a stated quorum is sufficient if it contains a derived one
            sufficient = all(derived[a].contains(q) for q in stated)
            ok &= sufficient
            records.append(
                {
                    "record": "quorums",
                    "learner": a,
                    "derived": derived[a].sorted_sets(),
                    "stated_sufficient": sufficient,
                }
            )
    else:
        d = derive_safe_sets_from_quorums(g)
        for (a, b), fam in sorted(d.edges.items()):
            records.append({"record": "safe_sets", "learners": [a, b], "derived": fam.sorted_sets()})
        for w in d.warnings:
            records.append(dict(w, record="warning"))
        ok = stated_edges_within_bound(g)
        records.append({"record": "bound", "stated_edges_within_bound": ok})
    summary = {"record": "summary", "direction": args.direction, "ok": ok, "entries": len(records)}
    _emit(records + [summary], summary, args.format, out)
    return 0 if ok else 1


def cmd_run(args, out: TextIO) -> int:
    sc = _load_scenario(args.scenario, args)
    if args.terminate:
        sc = termination_schedule(sc, args.terminate)
    trace = run(sc)
    if args.out:
        _write(args.out, trace.to_jsonl())
    rep = verdicts(trace.records)
    _emit(rep.to_records(), rep.summary(), args.format, out)
    return 0 if rep.ok else 1


def cmd_sweep(args, out: TextIO) -> int:
    doc: dict = {}
    if args.config:
        try:
            doc = json.loads(Path(args.config).read_text())
        except OSError as e:
            raise UsageError(f"cannot read sweep config {args.config!r}: {e.strerror}") from e
        except json.JSONDecodeError as e:
            raise UsageError(f"sweep config is not JSON: {e}") from e
    if args.seed is not None:
        doc["seed"] = args.seed
    if args.count is not None:
        doc["count"] = args.count
    if args.max_time is not None:
        doc["max_time"] = args.max_time
    cfg = SweepConfig.from_dict(doc)
    rows = sweep(cfg, workers=args.workers)
    text = "".join(_dump(r) + "\n" for r in rows)
    if args.out:
        _write(args.out, text)
    summary = rows[-1]
    if args.format == "summary" or args.out:
        out.write(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    else:
        out.write(text)
    bad = summary["validity_violations"] + summary["agreement_violations"] + summary["invariant_violations"]
    return 0 if bad == 0 else 1


def cmd_chain(args, out: TextIO) -> int:
    sc = _load_scenario(args.scenario, args)
    res = run_chain(sc)
    records: list[dict] = [dict(o.as_dict(), record="slot") for o in res.outcomes]
    all_ok = True
    for p in res.proofs:
        verified = p.verify(sc.graph, require_valid=not sc.allow_invalid_graph)
        all_ok &= verified
        records.append(
            {
                "record": "proof",
                "learner": p.learner,
                "slot": p.slot,
                "value_hex": p.value.hex(),
                "ballot": [p.ballot.time, p.ballot.tiebreak.hex()],
                "witness": sorted(w.hex() for w in p.witness),
                "messages": len(p.messages),
                "verified": verified,
            }
        )
    if args.out:
        _write(args.out, "".join(p.to_bytes().hex() + "\n" for p in res.proofs))
    summary = dict(res.report.summary(), complete=res.complete, proofs_verified=all_ok)
    summary["ok"] = res.report.ok and all_ok
    _emit(records + [summary], summary, args.format, out)
    return 0 if summary["ok"] else 1


def cmd_verdict(args, out: TextIO) -> int:
    try:
        text = Path(args.trace).read_text()
    except OSError as e:
        raise UsageError(f"cannot read trace {args.trace!r}: {e.strerror}") from e
    records = load_records(text)
    facts = None
    if args.facts:
        try:
            fd = json.loads(Path(args.facts).read_text())
            facts = ExecutionFacts(fd["real_safe"], fd["real_live"])
        except (OSError, json.JSONDecodeError, KeyError, TypeError) as e:
            raise UsageError(f"bad facts file {args.facts!r}: {e}") from e
    rep = verdicts(records, facts)
    _emit(rep.to_records(), rep.summary(), args.format, out)
    return 0 if rep.ok else 1


# -- parser ---------------------------------------------------------------------------
def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--format", choices=("records", "summary"), default="records")
    common.add_argument("--out", default=None)
    common.add_argument("--seed", type=int, default=None)
    common.add_argument("--max-time", type=int, default=None, dest="max_time")

    p = _Parser(prog="hetpaxos", description="tools and simulator for heterogeneous-trust Paxos")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("validate-graph", parents=[common], help="check a learner graph")
    s.add_argument("path", help="graph file, or the name of a bundled example")
    s.set_defaults(func=cmd_validate_graph)

    s = sub.add_parser("condense", parents=[common], help="write the condensed graph")
    s.add_argument("path")
    s.set_defaults(func=cmd_condense)

    s = sub.add_parser("derive-bounds", parents=[common], help="derive quorums or safe sets")
    s.add_argument("path")
    s.add_argument("--direction", choices=("quorums", "safe-sets"), default="quorums")
    s.set_defaults(func=cmd_derive_bounds)

    s = sub.add_parser("run", parents=[common], help="simulate a scenario")
    s.add_argument("scenario")
    s.add_argument("--terminate", metavar="LEARNER", default=None, help="add a termination schedule for LEARNER")
    s.set_defaults(func=cmd_run)

    s = sub.add_parser("sweep", parents=[common], help="run seeded random scenarios")
    s.add_argument("config", nargs="?", default=None)
    s.add_argument("--count", type=int, default=None)
    s.add_argument("--workers", type=int, default=1)
    s.set_defaults(func=cmd_sweep)

    s = sub.add_parser("chain", parents=[common], help="run a multi-slot scenario and extract proofs")
    s.add_argument("scenario")
    s.set_defaults(func=cmd_chain)

    s = sub.add_parser("verdict", parents=[common], help="judge a trace file")
    s.add_argument("trace")
    s.add_argument("--facts", default=None, help="JSON file with real_safe and real_live")
    s.set_defaults(func=cmd_verdict)
    return p


def main(argv: list[str] | None = None, out: TextIO | None = None, err: TextIO | None = None) -> int:
    out = out if out is not None else sys.stdout
    err = err if err is not None else sys.stderr
    try:
        args = build_parser().parse_args(argv)
        return args.func(args, out)
    except HetPaxosError as e:
        doc: dict[str, Any] = {"error": e.code, "message": str(e)}
        if getattr(e, "diagnostics", None):
            doc["diagnostics"] = e.diagnostics
        err.write(_dump(doc) + "\n")
        return 2
    except SystemExit as e:  # --help
        return int(e.code or 0)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
