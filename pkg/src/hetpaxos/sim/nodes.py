"""Simulator node wrappers around the protocol state machines.

A node turns one delivery into a :class:`NodeOutput`: the sends it makes,
what it parked or rejected, and (for learners) the decisions it reached.
"""
from __future__ import annotations

from dataclasses import dataclass, field

from ..acceptor import AcceptorState, Violation
from ..learner import LearnerState
from ..logic import Context, Decision
from ..messages import Message, MessageId


@dataclass
class Send:
    msg: Message
    dests: tuple[str, ...]
    # extra delay per destination, added on top of the latency model
    extra: dict[str, int] | None = None


@dataclass
class NodeOutput:
    sends: list[Send] = field(default_factory=list)
    processed: list[Message] = field(default_factory=list)
    parked: bool = False
    rejects: list[Violation] = field(default_factory=list)
    decisions: list[Decision] = field(default_factory=list)


class Node:
    kind = "node"
    honest = True

    def __init__(self, me: str):
        self.me = me

    def receive(self, msg: Message, now: int) -> NodeOutput:
        return NodeOutput()

    def timers(self) -> list[tuple[int, int]]:
        """(time, token) pairs for scheduled actions (scripted adversaries)."""
        return []

    def on_timer(self, token: int, now: int) -> NodeOutput:
        return NodeOutput()

    def processed_ids(self) -> set[MessageId]:
        return set()


class AcceptorNode(Node):
    kind = "acceptor"

    def __init__(self, me: str, ctx: Context, peers: tuple[str, ...]):
        super().__init__(me)
        self.state = AcceptorState(me, ctx)
        self.others = tuple(p for p in peers if p != me)
        # processing order, used by the chain-ordering invariant
        self.order: list[MessageId] = []

    def receive(self, msg: Message, now: int) -> NodeOutput:
        r = self.state.receive(msg)
        out = NodeOutput(parked=r.parked, rejects=r.violations, processed=r.forward)
        for m in r.forward:
            self.order.append(m.id)
            out.sends.append(Send(m, self.others))
        return out

    def processed_ids(self) -> set[MessageId]:
        return self.state.known


class LearnerNode(Node):
    kind = "learner"

    def __init__(self, me: str, ctx: Context):
        super().__init__(me)
        self.state = LearnerState(me, ctx)
        self._store = ctx.store

    def receive(self, msg: Message, now: int) -> NodeOutput:
        r = self.state.receive(msg)
        return NodeOutput(
            parked=r.parked,
            rejects=r.violations,
            decisions=r.decisions,
            processed=[self._store.get(m) for m in r.processed],
        )

    def processed_ids(self) -> set[MessageId]:
        return self.state.known
