"""The discrete-event loop.

Time is an integer.  Pending deliveries sit in a heap ordered by
(time, recipient, message id), so simultaneous events are processed in a
fixed order and a run is a pure function of its scenario.  Each recipient
processes a given message at most once; later copies are ignored.

Hops count message delays along the causal chain: a proposer's 1a arrives
at hop 1, and anything a node sends while handling a hop-h delivery
arrives at hop h+1.
"""
from __future__ import annotations

import heapq
import json
from dataclasses import dataclass, field

from .. import graphfile
from ..graph import condense, entangled, terminating
from ..logic import Context, Decision
from ..messages import Message, MessageId
from ..proposer import ProposerState
from .adversary import make_byzantine
from .nodes import AcceptorNode, LearnerNode, Node, Send
from .scenario import Scenario, encode_value

TRACE_FORMAT = "hetpaxos-trace/1"

_TIMER, _DELIVERY = 0, 1


def ballot_json(b) -> list:
    return [b.time, b.tiebreak.hex()]


@dataclass
class Trace:
    scenario: Scenario
    records: list[dict]
    ctx: Context
    nodes: dict[str, Node]
    delivered: dict[str, set[MessageId]]
    sent: set[MessageId]
    end: str
    end_time: int
    decisions: list[tuple[int, Decision, int]] = field(default_factory=list)

    def to_jsonl(self) -> str:
        return "".join(json.dumps(r, sort_keys=True, separators=(",", ":")) + "\n" for r in self.records)

    def events(self, kind: str) -> list[dict]:
        return [r for r in self.records if r["event"] == kind]

    def decided(self, learner: str, slot: int = 0) -> list[Decision]:
        return [d for _, d, _ in self.decisions if d.learner == learner and d.slot == slot]


class Simulator:
    def __init__(self, scenario: Scenario):
        scenario.validate()
        self.sc = scenario
        self.graph = condense(scenario.graph)
        self.ctx = Context(self.graph, require_valid=not scenario.allow_invalid_graph)
        self.acceptors = self.graph.acceptors
        self.learners = self.graph.learners
        self.peers = tuple(sorted(self.acceptors + self.learners))
        self._is_acceptor = set(self.acceptors)
        self.crash_at = {a: r.at for a, r in scenario.roles.items() if r.crashed}
        values = [p.value for p in scenario.proposals]
        self.nodes: dict[str, Node] = {}
        for a in self.acceptors:
            role = scenario.role(a)
            if role.byzantine:
                self.nodes[a] = make_byzantine(a, role, self.ctx, self.peers, values, scenario.seed)
            else:
                self.nodes[a] = AcceptorNode(a, self.ctx, self.peers)
        for lrn in self.learners:
            self.nodes[lrn] = LearnerNode(lrn, self.ctx)
        self.proposers = {p: ProposerState(p, scenario.retry_policy()) for p in scenario.proposers}
        self.records: list[dict] = []
        self.delivered: dict[str, set[MessageId]] = {n: set() for n in self.nodes}
        self.sent: set[MessageId] = set()
        self.emitted: set[MessageId] = set()
        self.decisions: list[tuple[int, Decision, int]] = []
        self.decided_slots: dict[int, set[str]] = {}
        self.latest_1a: dict[int, MessageId] = {}
        self._heap: list = []
        self._seq = 0

    # -- scheduling -----------------------------------------------------------
    def _push(self, t: int, cls: int, node: str, key: bytes, hop: int, payload) -> None:
        self._seq += 1
        heapq.heappush(self._heap, (t, cls, node, key, hop, self._seq, payload))

    def _send(self, src: str, s: Send, now: int, hop: int) -> None:
        m = s.msg
        self.sent.add(m.id)
        if m.signer == src and m.id not in self.emitted:
            self.emitted.add(m.id)
            self.records.append(self._emit_record(src, m, now))
        lat = self.sc.latency
        crash = self.crash_at.get(src)
        dropped = []
        for dst in s.dests:
            at = now + lat.delay(src, dst, m, now, self.sc.seed)
            if s.extra:
                at += s.extra.get(dst, 0)
            if m.kind == "1a" and dst in self._is_acceptor:
                # acceptors delay receipt of a 1a until its ballot time
                at = max(at, m.ballot.time)
            at = lat.constrain(dst, m, now, at)
            if crash is not None and at > crash:
                dropped.append(dst)
                continue
            self._push(at, _DELIVERY, dst, m.id, hop, (src, m))
        self.records.append(
            {"event": "send", "t": now, "from": src, "msg": m.id.hex(), "kind": m.kind, "to": list(s.dests), "hop": hop}
        )
        if dropped:
            self.records.append(
                {"event": "drop", "t": now, "from": src, "msg": m.id.hex(), "to": dropped, "reason": "crash"}
            )

    def _emit_record(self, node: str, m: Message, now: int) -> dict:
        r = {"event": "emit", "t": now, "node": node, "msg": m.id.hex(), "kind": m.kind, "slot": m.slot}
        if m.kind == "1a":
            r["value"] = encode_value(m.value)
            r["value_hex"] = m.value.hex()
            r["ballot"] = ballot_json(m.ballot)
        elif m.kind == "2a":
            r["lrn"] = m.lrn
        r["refs"] = [x.hex() for x in m.refs]
        return r

    # -- handlers ---------------------------------------------------------------
    def _propose(self, idx: int, attempt: int, now: int) -> None:
        p = self.sc.proposals[idx]
        if attempt > 0 and self.decided_slots.get(p.slot, set()) >= set(self.learners):
            return
        prev = None
        if self.sc.mode == "chain" and self.sc.strategy == "B" and p.slot > 0:
            prev = self.latest_1a.get(p.slot - 1)
            if prev is None:
                # nothing to reference yet; try again next tick
                self._push(now + 1, _TIMER, p.proposer, b"", 0, ("propose", idx, attempt))
                return
        st = self.proposers[p.proposer]
        m = st.propose(p.value, now, p.slot, prev)
        self.latest_1a[p.slot] = m.id
        self.records.append(
            {
                "event": "propose",
                "t": now,
                "proposer": p.proposer,
                "msg": m.id.hex(),
                "slot": p.slot,
                "value": encode_value(p.value),
                "value_hex": p.value.hex(),
                "ballot": ballot_json(m.ballot),
                "attempt": attempt,
                "refs": [x.hex() for x in m.refs],
            }
        )
        self._send(p.proposer, Send(m, self.acceptors), now, 1)
        if attempt < p.retries:
            self._push(now + st.next_retry(attempt), _TIMER, p.proposer, b"", 0, ("propose", idx, attempt + 1))

    def _deliver(self, dst: str, src: str, m: Message, now: int, hop: int) -> None:
        crash = self.crash_at.get(dst)
        if crash is not None and now > crash:
            return
        seen = self.delivered[dst]
        if m.id in seen:
            return
        seen.add(m.id)
        self.records.append({"event": "deliver", "t": now, "to": dst, "from": src, "msg": m.id.hex(), "hop": hop})
        out = self.nodes[dst].receive(m, now)
        if out.parked:
            self.records.append({"event": "park", "t": now, "node": dst, "msg": m.id.hex()})
        for v in out.rejects:
            self.records.append({"event": "reject", "t": now, "node": dst, "msg": v.message.hex(), "reason": v.kind})
        for s in out.sends:
            self._send(dst, s, now, hop + 1)
        for d in out.decisions:
            self.decisions.append((now, d, hop))
            self.decided_slots.setdefault(d.slot, set()).add(d.learner)
            self.records.append(
                {
                    "event": "decide",
                    "t": now,
                    "learner": d.learner,
                    "slot": d.slot,
                    "value": encode_value(d.value),
                    "value_hex": d.value.hex(),
                    "ballot": ballot_json(d.ballot),
                    "hop": hop,
                    "witness": sorted(x.hex() for x in d.witness),
                }
            )

    def _header(self) -> dict:
        sc, g = self.sc, self.graph
        facts = sc.facts()
        ent = [
            [a, b]
            for i, a in enumerate(self.learners)
            for b in self.learners[i:]
            if entangled(g, a, b, facts)
        ]
        return {
            "event": "header",
            "format": TRACE_FORMAT,
            "scenario": sc.name,
            "seed": sc.seed,
            "mode": sc.mode,
            "slots": sc.slots if sc.mode == "chain" else 1,
            "strategy": sc.strategy if sc.mode == "chain" else None,
            "acceptors": list(self.acceptors),
            "learners": list(self.learners),
            "proposers": list(sc.proposers),
            "roles": {a: sc.role(a).to_json() for a in self.acceptors},
            "facts": {"real_safe": sorted(facts.real_safe), "real_live": sorted(facts.real_live)},
            "entangled": ent,
            "terminating": [a for a in self.learners if terminating(g, a, facts)],
            "graph": graphfile.to_dict(g),
            "termination": sc.termination,
        }

    # -- main loop --------------------------------------------------------------
    def run(self, until: int | None = None, checks: bool = True) -> Trace:
        self.records.append(self._header())
        for i, p in enumerate(self.sc.proposals):
            self._push(p.time, _TIMER, p.proposer, b"", 0, ("propose", i, 0))
        for name in sorted(self.nodes):
            for t, token in self.nodes[name].timers():
                self._push(t, _TIMER, name, b"", 0, ("timer", token))
        horizon = self.sc.max_time if until is None else min(until, self.sc.max_time)
        end, now = "quiescent", 0
        deliveries = 0
        while self._heap:
            if self._heap[0][0] > horizon:
                end = "until" if until is not None and until < self.sc.max_time else "max-time"
                break
            t, cls, node, _key, hop, _seq, payload = heapq.heappop(self._heap)
            now = t
            if cls == _TIMER:
                if payload[0] == "propose":
                    self._propose(payload[1], payload[2], t)
                else:
                    crash = self.crash_at.get(node)
                    if crash is None or t <= crash:
                        out = self.nodes[node].on_timer(payload[1], t)
                        for s in out.sends:
                            self._send(node, s, t, 1)
            else:
                src, m = payload
                deliveries += 1
                self._deliver(node, src, m, t, hop)
        trace = Trace(
            self.sc, self.records, self.ctx, self.nodes, self.delivered, self.sent, end, now, self.decisions
        )
        if checks:
            from .report import invariant_violations

            for v in invariant_violations(trace):
                self.records.append(dict(v, event="violation", t=now))
        counts = {"1a": 0, "1b": 0, "2a": 0}
        for r in self.records:
            if r["event"] == "emit":
                counts[r["kind"]] += 1
        n_sends = sum(1 for r in self.records if r["event"] == "send")
        self.records.append(
            {
                "event": "summary",
                "end": end,
                "time": now,
                "messages": counts,
                "deliveries": sum(len(s) for s in self.delivered.values()),
                "sends": n_sends,
                "decisions": len(self.decisions),
            }
        )
        return trace


def run(scenario: Scenario, until: int | None = None, checks: bool = True) -> Trace:
    """Simulate ``scenario``; see the module docstring for the event order."""
    return Simulator(scenario).run(until, checks)
