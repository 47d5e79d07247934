"""The learner state machine: buffer, check, and detect decisions.

Instead of the figure's loop over every subset of known messages, the
learner keeps its well-formed 2as grouped by (slot, ballot) and checks
whether a group's signers just became a quorum.  The equivalence with the
subset search is covered by an oracle test.
"""
from __future__ import annotations

from dataclasses import dataclass, field

from .acceptor import Violation
from .logic import Context, Decision
from .messages import Ballot, Message, MessageId


@dataclass
class LearnerResult:
    decisions: list[Decision] = field(default_factory=list)
    violations: list[Violation] = field(default_factory=list)
    parked: bool = False
    # the messages that got processed (in order) during this call
    processed: list[MessageId] = field(default_factory=list)


class LearnerState:
    def __init__(self, me: str, ctx: Context):
        self.me = me
        self.ctx = ctx
        self.known: set[MessageId] = set()
        self.pending: list[Message] = []
        self._pending_ids: set[MessageId] = set()
        self.rejected: set[MessageId] = set()
        self.decisions: list[Decision] = []
        self._groups: dict[tuple[int, Ballot], int] = {}
        self._decided: set[tuple[int, Ballot]] = set()

    def receive(self, msg: Message) -> LearnerResult:
        out = LearnerResult()
        mid = msg.id
        if mid in self.known or mid in self.rejected or mid in self._pending_ids:
            return out
        if any(r not in self.known for r in msg.refs):
            self.pending.append(msg)
            self._pending_ids.add(mid)
            out.parked = True
            return out
        self._process(msg, out)
        progress = True
        while progress and self.pending:
            progress = False
            keep = []
            for m in self.pending:
                if all(r in self.known for r in m.refs):
                    self._pending_ids.discard(m.id)
                    self._process(m, out)
                    progress = True
                else:
                    keep.append(m)
            self.pending = keep
        return out

    def _process(self, m: Message, out: LearnerResult) -> None:
        st = self.ctx.store
        mid = m.id
        st.insert(m)
        if not self.ctx.well_formed(mid):
            self.rejected.add(mid)
            out.violations.append(Violation("malformed", mid, m.kind))
            return
        self.known.add(mid)
        out.processed.append(mid)
        if m.kind != "2a" or m.lrn != self.me:
            return
        i = st.index_of(mid)
        b = st.ballot_at(i)
        key = (m.slot, b)
        group = self._groups.get(key, 0) | (1 << i)
        self._groups[key] = group
        if key in self._decided:
            return
        if self.ctx.is_quorum(self.me, self.ctx.signers_mask(group)):
            self._decided.add(key)
            d = Decision(self.me, m.slot, st.value_at(i), b, frozenset(st.ids_of(group)))
            self.decisions.append(d)
            out.decisions.append(d)

    def decided_slots(self) -> set[int]:
        return {d.slot for d in self.decisions}

    def witness_for(self, slot: int, ballot: Ballot) -> frozenset[MessageId]:
        """The current (maximal) witness for a decision, which may have grown
        since the decision was first recorded."""
        st = self.ctx.store
        return frozenset(st.ids_of(self._groups.get((slot, ballot), 0)))
