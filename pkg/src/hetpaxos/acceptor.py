"""The acceptor state machine.

``receive`` follows the acceptor pseudocode: buffer until every reference
is known, then atomically echo, record, and react (1b on a new 1a, one 2a
per learner on a 1b of the current top ballot).  Messages the acceptor
creates are self-delivered immediately, which is how they get echoed.
Each learner's 2a references the previous one made in the same step, so
an acceptor's own messages always form a chain (two mutually unreferenced
messages from one signer would get it caught).

Two guards sit on top of the figure, both only ever suppressing messages:

* a 1b is not sent if it would be malformed (a stale 1a arriving after the
  acceptor already answered a higher ballot);
* at most one 2a per (slot, ballot, learner).
"""
from __future__ import annotations

from collections.abc import Callable
from dataclasses import dataclass, field

from .logic import Context
from .messages import Ballot, Message, MessageId, make_1b, make_2a


@dataclass
class Violation:
    kind: str  # "duplicate-ballot" | "malformed"
    message: MessageId
    detail: str = ""

    def as_dict(self) -> dict:
        return {"violation": self.kind, "message": self.message.hex(), "detail": self.detail}


@dataclass
class ReceiveResult:
    # newly known messages, in the order they became known; each is to be
    # forwarded to every other acceptor and learner
    forward: list[Message] = field(default_factory=list)
    violations: list[Violation] = field(default_factory=list)
    parked: bool = False
    # messages suppressed by the guards (never sent), for diagnostics
    suppressed: list[tuple[str, int]] = field(default_factory=list)


class AcceptorState:
    def __init__(
        self,
        me: str,
        ctx: Context,
        learners: tuple[str, ...] | None = None,
        accept_1a: Callable[[Message], bool] | None = None,
    ):
        self.me = me
        self.ctx = ctx
        self.learners = tuple(sorted(learners if learners is not None else ctx.graph.learners))
        self.known: set[MessageId] = set()
        self.recently_received: list[MessageId] = []
        self.pending: list[Message] = []
        self._pending_ids: set[MessageId] = set()
        self.rejected: set[MessageId] = set()
        self.max_ballot: dict[int, Ballot] = {}
        self.ballots_1a: dict[tuple[int, Ballot], MessageId] = {}
        self.sent_2a: set[tuple[int, Ballot, str]] = set()
        self.sent: list[MessageId] = []
        # equivocation forks use this to ignore some proposals
        self.accept_1a = accept_1a

    # -- public ------------------------------------------------------------------
    def receive(self, msg: Message) -> ReceiveResult:
        out = ReceiveResult()
        mid = msg.id
        if mid in self.known or mid in self.rejected or mid in self._pending_ids:
            return out
        if any(r not in self.known for r in msg.refs):
            self.pending.append(msg)
            self._pending_ids.add(mid)
            out.parked = True
            return out
        self._process(msg, out)
        self._drain(out)
        return out

    def max_ballot_for(self, slot: int) -> Ballot | None:
        return self.max_ballot.get(slot)

    # -- internals -------------------------------------------------------------
    def _drain(self, out: ReceiveResult) -> None:
        # FIFO re-scan until a full pass makes no progress
        progress = True
        while progress and self.pending:
            progress = False
            keep: list[Message] = []
            for m in self.pending:
                if all(r in self.known for r in m.refs):
                    self._pending_ids.discard(m.id)
                    self._process(m, out)
                    progress = True
                else:
                    keep.append(m)
            self.pending = keep

    def _reject(self, msg: Message, kind: str, detail: str, out: ReceiveResult) -> None:
        self.rejected.add(msg.id)
        out.violations.append(Violation(kind, msg.id, detail))

    def _process(self, m: Message, out: ReceiveResult) -> None:
        mid = m.id
        if mid in self.known:
            return
        st = self.ctx.store
        st.insert(m)
        if m.kind == "1a" and self.accept_1a is not None and not self.accept_1a(m):
            self.rejected.add(mid)
            return
        if not self.ctx.well_formed(mid):
            self._reject(m, "malformed", m.kind, out)
            return
        if m.kind == "1a":
            key = (m.slot, m.ballot)
            other = self.ballots_1a.get(key)
            if other is not None and other != mid:
                self._reject(m, "duplicate-ballot", other.hex(), out)
                return
            self.ballots_1a[key] = mid
        # atomic step of the figure
        out.forward.append(m)
        self.recently_received.append(mid)
        self.known.add(mid)
        if m.signer == self.me:
            self.sent.append(mid)
        i = st.index_of(mid)
        b = st.ballot_at(i)
        if b is not None:
            cur = self.max_ballot.get(m.slot)
            if cur is None or cur < b:
                self.max_ballot[m.slot] = b
        if m.kind == "1a":
            if self.ctx.prospective_1b_ok(self.recently_received, m.slot):
                z = make_1b(self.me, self.recently_received, m.slot)
                self.recently_received = []
                self._process(z, out)
            else:
                out.suppressed.append(("1b", i))
        elif m.kind == "1b" and b is not None and b == self.max_ballot.get(m.slot):
            for lrn in self.learners:
                key2 = (m.slot, b, lrn)
                if key2 in self.sent_2a:
                    continue
                rr = self.recently_received
                if self.ctx.prospective_2a_ok(self.me, rr, lrn, m.slot):
                    z = make_2a(self.me, rr, lrn, m.slot)
                    self.sent_2a.add(key2)
                    self.recently_received = []
                    self._process(z, out)
