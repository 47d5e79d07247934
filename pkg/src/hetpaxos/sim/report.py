"""Verdicts and runtime invariant checks.

:func:`verdicts` reads only the event log, so a trace file can be judged
on its own (optionally against different execution facts).
:func:`invariant_violations` inspects a live run (store, nodes, sent set)
and is called by the engine before the summary record is written.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

from .. import graphfile
from ..errors import InvalidScenario
from ..graph import ExecutionFacts, condense, entangled, is_valid, terminating
from ..messages import iter_bits
from .nodes import AcceptorNode


# -- invariants over a live run ---------------------------------------------------
def invariant_violations(trace) -> list[dict]:
    sc, ctx = trace.scenario, trace.ctx
    st = ctx.store
    g = ctx.graph
    facts = sc.facts()
    safe = facts.real_safe
    out: list[dict] = []

    # safe acceptors are never caught
    for i in range(len(st)):
        bad = st.caught_at(i) & safe
        if bad:
            out.append({"invariant": "safe-uncaught", "msg": st.id_at(i).hex(), "acceptors": sorted(bad)})

    # honest 1bs are well-formed
    for i in iter_bits(st.kind_mask["1b"]):
        m = st.at(i)
        if m.signer in safe and not ctx.well_formed(m.id):
            out.append({"invariant": "honest-1b-well-formed", "msg": m.id.hex(), "signer": m.signer})

    # echo completeness (only meaningful once the queue has drained)
    live = [a for a in sc.acceptors if a in facts.real_live]
    if trace.end == "quiescent":
        union: set = set()
        for a in live:
            union |= trace.nodes[a].processed_ids()
        for n in live + list(g.learners):
            # own messages are self-delivered inline, so count processed ones too
            missing = union - trace.delivered[n] - trace.nodes[n].processed_ids()
            if missing:
                out.append(
                    {"invariant": "echo-completeness", "node": n, "missing": sorted(x.hex() for x in missing)[:8]}
                )

    sent_mask = st.mask_of(x for x in trace.sent if x in st)
    wf_2a = 0
    for i in iter_bits(st.kind_mask["2a"] & sent_mask):
        if ctx.well_formed(st.id_at(i)):
            wf_2a |= 1 << i

    if is_valid(g):
        # quorum intersection between connected learners' 2a quorums
        qsig = {}
        for i in iter_bits(wf_2a):
            mid = st.id_at(i)
            qsig[i] = ctx.signers_mask(st.mask_of(ctx.q2a(mid)))
        for i in iter_bits(wf_2a):
            x = st.at(i)
            con = ctx.con(x.lrn, x.id)
            caught = ctx.acceptor_mask(st.caught_at(i))
            for j in iter_bits(wf_2a & st.tran_at(i) & ~(1 << i)):
                y = st.at(j)
                if y.lrn in con and not (qsig[i] & qsig[j] & ~caught):
                    out.append({"invariant": "quorum-intersection", "msg": x.id.hex(), "other": y.id.hex()})

        # after a decision, higher-ballot 2as for entangled learners agree
        lrns = g.learners
        for a in lrns:
            for d in ctx.find_decisions(a, wf_2a):
                for b in lrns:
                    if not entangled(g, a, b, facts):
                        continue
                    for j in iter_bits(wf_2a & st.lrn_mask.get(b, 0) & st.slot_mask.get(d.slot, 0)):
                        bj = st.ballot_at(j)
                        if bj is not None and bj > d.ballot and st.value_at(j) != d.value:
                            out.append(
                                {
                                    "invariant": "after-quorum",
                                    "learner": a,
                                    "other": b,
                                    "msg": st.id_at(j).hex(),
                                }
                            )

    # ballots of honest proposals are unique
    seen: dict[tuple, str] = {}
    for r in trace.records:
        if r["event"] == "propose":
            key = tuple(r["ballot"])
            if key in seen and seen[key] != r["msg"]:
                out.append({"invariant": "ballot-uniqueness", "msg": r["msg"], "other": seen[key]})
            seen.setdefault(key, r["msg"])

    # strategy B: a slot-s 2a only after a slot-(s-1) 1a
    if sc.mode == "chain" and sc.strategy == "B":
        for name, node in sorted(trace.nodes.items()):
            if not isinstance(node, AcceptorNode):
                continue
            slots_1a: set[int] = set()
            for mid in node.order:
                m = st.get(mid)
                if m.kind == "1a":
                    slots_1a.add(m.slot)
                elif m.kind == "2a" and m.signer == name and m.slot > 0 and m.slot - 1 not in slots_1a:
                    out.append({"invariant": "chain-order", "node": name, "msg": mid.hex()})
    return out


# -- verdicts from the log ------------------------------------------------------------
@dataclass
class Report:
    validity: list[dict] = field(default_factory=list)
    agreement: list[dict] = field(default_factory=list)
    termination: dict | None = None
    invariants: list[dict] = field(default_factory=list)
    decisions: list[dict] = field(default_factory=list)
    latency: dict[str, dict] = field(default_factory=dict)
    messages: dict[str, int] = field(default_factory=dict)
    entangled: list[list[str]] = field(default_factory=list)
    end: str = ""
    scenario: str = ""

    @property
    def validity_ok(self) -> bool:
        return not self.validity

    @property
    def agreement_ok(self) -> bool:
        return not self.agreement

    @property
    def termination_ok(self) -> bool | None:
        return None if self.termination is None else self.termination["ok"]

    @property
    def ok(self) -> bool:
        return self.validity_ok and self.agreement_ok and self.termination_ok is not False and not self.invariants

    def summary(self) -> dict:
        return {
            "record": "summary",
            "scenario": self.scenario,
            "ok": self.ok,
            "validity": self.validity_ok,
            "agreement": self.agreement_ok,
            "termination": self.termination_ok,
            "invariant_violations": len(self.invariants),
            "decisions": len(self.decisions),
            "latency": self.latency,
            "messages": self.messages,
            "end": self.end,
        }

    def to_records(self) -> list[dict]:
        out: list[dict] = []
        out.append({"record": "verdict", "verdict": "validity", "ok": self.validity_ok, "violations": self.validity})
        out.append(
            {"record": "verdict", "verdict": "agreement", "ok": self.agreement_ok, "violations": self.agreement}
        )
        out.append({"record": "verdict", "verdict": "termination", "ok": self.termination_ok, "detail": self.termination})
        out.append(
            {"record": "verdict", "verdict": "invariants", "ok": not self.invariants, "violations": self.invariants}
        )
        for d in self.decisions:
            out.append(dict(d, record="decision"))
        out.append(self.summary())
        return out

    def to_jsonl(self) -> str:
        return "".join(json.dumps(r, sort_keys=True, separators=(",", ":")) + "\n" for r in self.to_records())

    def to_text(self) -> str:
        def yn(v):
            return "n/a" if v is None else ("pass" if v else "FAIL")

        lines = [
            f"scenario {self.scenario or '-'} ({self.end})",
            f"validity: {yn(self.validity_ok)}",
            f"agreement: {yn(self.agreement_ok)}",
            f"termination: {yn(self.termination_ok)}",
            f"invariants: {yn(not self.invariants)}",
        ]
        for d in self.decisions:
            lines.append(f"  {d['learner']} slot {d['slot']}: {d['value']!r} at t={d['t']} hop {d['hop']}")
        return "\n".join(lines) + "\n"


def load_records(text: str) -> list[dict]:
    out = []
    for n, line in enumerate(text.splitlines(), 1):
        if line.strip():
            try:
                out.append(json.loads(line))
            except json.JSONDecodeError as e:
                raise InvalidScenario(f"trace line {n}: {e}") from e
    if not out or out[0].get("event") != "header":
        raise InvalidScenario("trace must start with a header record")
    return out


def verdicts(records: list[dict], facts: ExecutionFacts | None = None) -> Report:
    """Judge a trace from its event log alone."""
    head = records[0]
    if head.get("event") != "header":
        raise InvalidScenario("trace must start with a header record")
    g = condense(graphfile.from_dict(head["graph"]))
    if facts is None:
        facts = ExecutionFacts(head["facts"]["real_safe"], head["facts"]["real_live"])
    rep = Report(scenario=head.get("scenario", ""))

    proposed: set[str] = set()
    decides: list[dict] = []
    for r in records:
        ev = r.get("event")
        if ev == "propose" or (ev == "emit" and r.get("kind") == "1a"):
            proposed.add(r["value_hex"])
        elif ev == "decide":
            decides.append(r)
        elif ev == "violation":
            rep.invariants.append({k: v for k, v in r.items() if k not in ("event", "t")})
        elif ev == "summary":
            rep.messages = dict(r.get("messages", {}))
            rep.end = r.get("end", "")

    for d in decides:
        rep.decisions.append(
            {k: d[k] for k in ("learner", "slot", "value", "value_hex", "ballot", "t", "hop")}
        )
        if d["value_hex"] not in proposed:
            rep.validity.append(
                {"learner": d["learner"], "slot": d["slot"], "value": d["value"], "ballot": d["ballot"], "t": d["t"]}
            )

    lrns = g.learners
    by: dict[tuple[str, int], list[dict]] = {}
    for d in decides:
        by.setdefault((d["learner"], d["slot"]), []).append(d)
    slots = sorted({d["slot"] for d in decides})
    for i, a in enumerate(lrns):
        for b in lrns[i:]:
            if not entangled(g, a, b, facts):
                continue
            rep.entangled.append([a, b])
            for s in slots:
                ds = by.get((a, s), []) + ([] if a == b else by.get((b, s), []))
                vals = sorted({d["value_hex"] for d in ds})
                if len(vals) > 1:
                    rep.agreement.append(
                        {
                            "learners": [a, b],
                            "slot": s,
                            "values": vals,
                            "witnesses": [
                                {"learner": d["learner"], "value": d["value"], "ballot": d["ballot"], "t": d["t"]}
                                for d in ds
                            ],
                        }
                    )

    for d in decides:
        key = f"{d['learner']}/{d['slot']}"
        cur = rep.latency.get(key)
        if cur is None or d["t"] < cur["t"]:
            rep.latency[key] = {"t": d["t"], "hop": d["hop"]}

    term = head.get("termination")
    if term:
        target, deadline, slot = term["learner"], term["deadline"], term.get("slot", 0)
        ds = [d for d in by.get((target, slot), []) if d["t"] < deadline]
        others = {
            a: any(d["t"] < deadline for d in by.get((a, slot), []))
            for a in lrns
            if a != target and terminating(g, a, facts)
        }
        rep.termination = {
            "learner": target,
            "deadline": deadline,
            "ok": bool(ds),
            "decided_at": min((d["t"] for d in ds), default=None),
            "terminating": terminating(g, target, facts),
            "others_decided": others,
        }
    return rep


def report_of(trace, facts: ExecutionFacts | None = None) -> Report:
    return verdicts(trace.records, facts)


__all__ = ["Report", "invariant_violations", "load_records", "report_of", "verdicts"]
