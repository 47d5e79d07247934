"""Repeated consensus over numbered slots, and proofs of consensus.

Each slot is its own consensus instance; the slot number is folded into
ballot tiebreaks so messages of different slots never alias.

* Strategy A: slots are fully independent and may complete in any order.
* Strategy B: a slot-s 1a references a slot-(s-1) 1a.  Honest acceptors
  buffer a message until its references are known, so a slot-s 1a is only
  acted on after the referenced 1a has been received and acted on.

A decision's witness (a quorum of same-ballot 2as) together with its causal
past is a self-contained proof: it re-validates against a fresh context
built from those messages alone.
"""
from __future__ import annotations

import dataclasses
import struct
from dataclasses import dataclass, field

from .errors import HetPaxosError, InvalidScenario, MessageDecodeError
from .graph import LearnerGraph, condense
from .logic import InvalidGraph, rebuild_context
from .messages import Ballot, Message, MessageId, MessageStore, closure_messages, deserialize_many, serialize_many
from .sim.engine import Trace, run
from .sim.report import Report, verdicts
from .sim.scenario import Proposal, Scenario

PROOF_MAGIC = b"HPXP\x01"


@dataclass(frozen=True)
class ChainConfig:
    slots: int
    strategy: str = "A"

    def __post_init__(self) -> None:
        if self.slots < 1:
            raise InvalidScenario("a chain needs at least one slot")
        if self.strategy not in ("A", "B"):
            raise InvalidScenario(f"unknown chain strategy {self.strategy!r}")


# -- proofs -----------------------------------------------------------------------
@dataclass(frozen=True)
class ProofOfConsensus:
    learner: str
    slot: int
    value: bytes
    ballot: Ballot
    witness: frozenset[MessageId]
    messages: tuple[Message, ...] = field(repr=False)

    def to_bytes(self) -> bytes:
        lrn = self.learner.encode("utf-8")
        wit = sorted(self.witness)
        head = PROOF_MAGIC + struct.pack(">H", len(lrn)) + lrn + struct.pack(">IH", self.slot, len(wit))
        return head + b"".join(wit) + serialize_many(self.messages)

    @classmethod
    def from_bytes(cls, data: bytes) -> "ProofOfConsensus":
        if not data.startswith(PROOF_MAGIC):
            raise MessageDecodeError("not a proof of consensus")
        try:
            pos = len(PROOF_MAGIC)
            (n,) = struct.unpack_from(">H", data, pos)
            pos += 2
            learner = data[pos : pos + n].decode("utf-8")
            pos += n
            slot, k = struct.unpack_from(">IH", data, pos)
            pos += 6
            wit = [bytes(data[pos + 32 * i : pos + 32 * (i + 1)]) for i in range(k)]
            pos += 32 * k
        except (struct.error, UnicodeDecodeError) as e:
            raise MessageDecodeError(f"bad proof header: {e}") from e
        msgs = tuple(deserialize_many(data[pos:]))
        by_id = {m.id: m for m in msgs}
        if not wit or any(w not in by_id for w in wit):
            raise MessageDecodeError("proof witness not among its messages")
        st = _bare_store(msgs)
        first = wit[0]
        try:
            value, ballot = st.value_of(first), st.ballot_of(first)
        except HetPaxosError as e:
            raise MessageDecodeError(f"proof witness has no ballot: {e}") from e
        return cls(learner, slot, value, ballot, frozenset(wit), msgs)

    def verify(self, graph: LearnerGraph, require_valid: bool = True) -> bool:
        """Re-validate from the proof's own messages: every witness 2a is
        well-formed and together they form a decision with the stated value."""
        try:
            ctx = rebuild_context(condense(graph), self.messages, require_valid=require_valid)
            st = ctx.store
            if any(w not in st for w in self.witness):
                return False
            for w in self.witness:
                m = st.get(w)
                if m.slot != self.slot or not ctx.well_formed(w) or st.value_of(w) != self.value:
                    return False
            return ctx.is_decision(self.learner, self.witness)
        except (HetPaxosError, InvalidGraph):
            return False


def _bare_store(msgs) -> MessageStore:
    """A store over ``msgs`` (no graph needed), for reading ballots."""
    st = MessageStore()
    pending = list(msgs)
    while pending:
        rest = [m for m in pending if not all(r in st for r in m.refs)]
        for m in pending:
            if all(r in st for r in m.refs) and m.id not in st:
                st.insert(m)
        if len(rest) == len(pending):
            raise MessageDecodeError("proof messages are not closed under references")
        pending = [m for m in rest if m.id not in st]
    return st


def extract_proofs(trace: Trace) -> list[ProofOfConsensus]:
    """One proof per (learner, slot): the learner's first decision there."""
    st = trace.ctx.store
    seen: set[tuple[str, int]] = set()
    out = []
    for _, d, _ in trace.decisions:
        key = (d.learner, d.slot)
        if key in seen:
            continue
        seen.add(key)
        msgs = tuple(closure_messages(st, d.witness))
        out.append(ProofOfConsensus(d.learner, d.slot, d.value, d.ballot, d.witness, msgs))
    return out


# -- running chains ------------------------------------------------------------------
@dataclass
class SlotOutcome:
    slot: int
    decisions: dict[str, bytes]  # learner -> first decided value
    complete: bool  # every learner decided

    def as_dict(self) -> dict:
        return {
            "slot": self.slot,
            "complete": self.complete,
            "decisions": {k: v.hex() for k, v in sorted(self.decisions.items())},
        }


@dataclass
class ChainResult:
    trace: Trace
    report: Report
    outcomes: list[SlotOutcome]
    proofs: list[ProofOfConsensus]

    @property
    def complete(self) -> bool:
        return all(o.complete for o in self.outcomes)


def run_chain(sc: Scenario) -> ChainResult:
    if sc.mode != "chain":
        sc = dataclasses.replace(sc, mode="chain", slots=max([p.slot for p in sc.proposals], default=0) + 1)
    trace = run(sc)
    rep = verdicts(trace.records)
    outcomes = []
    for s in range(sc.slots):
        first: dict[str, bytes] = {}
        for _, d, _ in trace.decisions:
            if d.slot == s and d.learner not in first:
                first[d.learner] = d.value
        outcomes.append(SlotOutcome(s, first, set(first) == set(sc.learners)))
    return ChainResult(trace, rep, outcomes, extract_proofs(trace))


class ChainState:
    """A growing chain: each ``append`` adds a proposal for the next slot and
    replays the whole (deterministic) run."""

    def __init__(self, base: Scenario, config: ChainConfig | None = None, spacing: int = 10):
        self.base = base
        self.config = config or ChainConfig(base.slots if base.mode == "chain" else 1, base.strategy)
        self.spacing = spacing
        self.proposals: list[Proposal] = []
        self.result: ChainResult | None = None

    @property
    def height(self) -> int:
        return len(self.proposals)

    def scenario(self) -> Scenario:
        slots = max(self.config.slots, self.height)
        return dataclasses.replace(
            self.base,
            proposals=list(self.base.proposals) + self.proposals,
            mode="chain",
            slots=slots,
            strategy=self.config.strategy,
        )


def append(
    state: ChainState,
    value: bytes,
    *,
    proposer: str = "client",
    time: int | None = None,
    retries: int = 0,
) -> ChainResult:
    """Propose ``value`` for the next slot and report every slot's outcome."""
    slot = state.height
    t = slot * state.spacing if time is None else time
    state.proposals.append(Proposal(proposer, value, t, slot, retries))
    state.result = run_chain(state.scenario())
    return state.result


__all__ = [
    "ChainConfig",
    "ChainResult",
    "ChainState",
    "ProofOfConsensus",
    "SlotOutcome",
    "append",
    "extract_proofs",
    "run_chain",
]
