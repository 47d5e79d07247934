"""Byzantine acceptor strategies.

Adversaries sign only as themselves: every message they create carries
their own id.  Beyond that they may withhold, delay, replay and
equivocate.

* ``silent``: never sends anything.
* ``equivocate``: several forks, each an honest acceptor state machine that
  only accepts proposals for its own values.  Each recipient is shown the
  messages of one fork, so different recipients see conflicting histories.
* ``stale-replay``: follows the protocol but delays its sends by a seeded
  random amount and replays each of its own messages later.
* ``script``: emits hand-written messages at given times.
"""
from __future__ import annotations

from typing import Any

from ..acceptor import AcceptorState
from ..errors import InvalidScenario
from ..logic import Context
from ..messages import Message, MessageId, digest, make_1a, make_1b, make_2a
from .nodes import Node, NodeOutput, Send
from .scenario import Role, decode_value


class SilentNode(Node):
    kind = "acceptor"
    honest = False


class EquivocatorNode(Node):
    kind = "acceptor"
    honest = False

    def __init__(
        self,
        me: str,
        ctx: Context,
        peers: tuple[str, ...],
        values: list[bytes],
        params: dict[str, Any],
    ):
        super().__init__(me)
        n = int(params.get("forks", 2))
        if n < 1:
            raise InvalidScenario(f"{me}: equivocate needs at least one fork")
        if "values" in params:
            prefs = [frozenset(decode_value(v) for v in vs) for vs in params["values"]]
            if len(prefs) != n:
                raise InvalidScenario(f"{me}: one value list per fork expected")
        else:
            buckets: list[set[bytes]] = [set() for _ in range(n)]
            for i, v in enumerate(sorted(set(values))):
                buckets[i % n].add(v)
            prefs = [frozenset(b) for b in buckets]
        claimed = frozenset().union(*prefs)
        self.prefs = prefs

        def chooser(i: int):
            def accept(m: Message) -> bool:
                # unclaimed values go to fork 0
                return m.value in prefs[i] or (i == 0 and m.value not in claimed)

            return accept

        self.forks = [AcceptorState(me, ctx, accept_1a=chooser(i)) for i in range(n)]
        others = [p for p in peers if p != me]
        assign = dict(params.get("assignment", {}))
        self.assignment = {p: int(assign.get(p, k % n)) for k, p in enumerate(others)}
        for p, f in self.assignment.items():
            if not 0 <= f < n:
                raise InvalidScenario(f"{me}: fork {f} for {p!r} out of range")
        self.audience = [tuple(p for p in others if self.assignment[p] == i) for i in range(n)]

    def receive(self, msg: Message, now: int) -> NodeOutput:
        out = NodeOutput()
        for i, fork in enumerate(self.forks):
            r = fork.receive(msg)
            out.parked = out.parked or r.parked
            for m in r.forward:
                if m.signer == self.me and self.audience[i]:
                    out.sends.append(Send(m, self.audience[i]))
        return out


class StaleReplayNode(Node):
    kind = "acceptor"
    honest = False

    def __init__(self, me: str, ctx: Context, peers: tuple[str, ...], seed: int, params: dict[str, Any]):
        super().__init__(me)
        self.state = AcceptorState(me, ctx)
        self.others = tuple(p for p in peers if p != me)
        self.max_extra = int(params.get("max_extra", 8))
        self.replay_after = int(params.get("replay_after", 16))
        self.seed = seed

    def _extra(self, m: Message) -> dict[str, int]:
        out = {}
        for p in self.others:
            h = digest(f"stale|{self.seed}|{self.me}|{p}|".encode() + m.id)
            out[p] = int.from_bytes(h[:8], "big") % (self.max_extra + 1)
        return out

    def receive(self, msg: Message, now: int) -> NodeOutput:
        r = self.state.receive(msg)
        out = NodeOutput(parked=r.parked)
        for m in r.forward:
            extra = self._extra(m)
            out.sends.append(Send(m, self.others, extra))
            if m.signer == self.me:
                out.sends.append(Send(m, self.others, {p: e + self.replay_after for p, e in extra.items()}))
        return out


class ScriptNode(Node):
    """Entries: {"t", "kind", "to": [ids] | "all", "slot", "refs":
    "known" | "recent" | "none", plus "value"/"ballot_time" for a 1a and
    "lrn" for a 2a}."""

    kind = "acceptor"
    honest = False

    def __init__(self, me: str, peers: tuple[str, ...], params: dict[str, Any]):
        super().__init__(me)
        self.others = tuple(p for p in peers if p != me)
        self.entries = list(params.get("script", ()))
        for e in self.entries:
            if e.get("kind") not in ("1a", "1b", "2a") or "t" not in e:
                raise InvalidScenario(f"{me}: bad script entry {e!r}")
        self.known: list[MessageId] = []
        self._seen: set[MessageId] = set()
        self._mark = 0

    def receive(self, msg: Message, now: int) -> NodeOutput:
        if msg.id not in self._seen:
            self._seen.add(msg.id)
            self.known.append(msg.id)
        return NodeOutput()

    def timers(self) -> list[tuple[int, int]]:
        return [(int(e["t"]), i) for i, e in enumerate(self.entries)]

    def on_timer(self, token: int, now: int) -> NodeOutput:
        e = self.entries[token]
        mode = e.get("refs", "known")
        if mode == "none":
            refs: list[MessageId] = []
        elif mode == "recent":
            refs = self.known[self._mark :]
        else:
            refs = list(self.known)
        slot = int(e.get("slot", 0))
        kind = e["kind"]
        if kind == "1a":
            m = make_1a(self.me, decode_value(e.get("value", "")), int(e.get("ballot_time", now)), slot)
        elif kind == "1b":
            m = make_1b(self.me, refs, slot)
        else:
            m = make_2a(self.me, refs, str(e["lrn"]), slot)
        self._mark = len(self.known)
        self.receive(m, now)
        to = e.get("to", "all")
        dests = self.others if to == "all" else tuple(p for p in to if p != self.me)
        return NodeOutput(sends=[Send(m, dests)])


def make_byzantine(
    me: str, role: Role, ctx: Context, peers: tuple[str, ...], values: list[bytes], seed: int
) -> Node:
    s = role.strategy
    if s == "silent":
        return SilentNode(me)
    if s == "equivocate":
        return EquivocatorNode(me, ctx, peers, values, role.params)
    if s == "stale-replay":
        return StaleReplayNode(me, ctx, peers, seed, role.params)
    if s == "script":
        return ScriptNode(me, peers, role.params)
    raise InvalidScenario(f"{me}: unknown strategy {s!r}")
