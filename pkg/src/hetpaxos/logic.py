"""Protocol predicates over a (graph, message store) pair.

Every predicate of a message depends only on that message's causal past,
which never changes once the message is stored.  So a single
:class:`Context` can serve every node of a simulation, and results are
memoized by message index for the life of the store.

Predicates are scoped to the message's slot: ballots, values and 2as of
other slots never interact (ballot tiebreaks include the slot anyway).
"""
from __future__ import annotations

from collections.abc import Iterable
from dataclasses import dataclass

from .errors import NotCondensed, UnknownMessage
from .graph import LearnerGraph, LearnerId, is_condensed, is_valid, pair
from .messages import Ballot, Message, MessageId, MessageStore, ballot_tiebreak, iter_bits


class InvalidGraph(ValueError):
    code = "invalid-graph"


@dataclass(frozen=True)
class Decision:
    learner: LearnerId
    slot: int
    value: bytes
    ballot: Ballot
    witness: frozenset[MessageId]


class Context:
    def __init__(self, graph: LearnerGraph, store: MessageStore | None = None, *, require_valid: bool = True):
        if not is_condensed(graph):
            raise NotCondensed("protocol context needs a condensed learner graph")
        if require_valid and not is_valid(graph):
            raise InvalidGraph("learner graph is not valid")
        self.graph = graph
        self.store = store if store is not None else MessageStore()
        u = graph.universe
        self._acc_bit = {a: 1 << i for i, a in enumerate(u.ids)}
        self._quorums = dict(graph.quorum_masks)
        self._edges: dict[tuple[LearnerId, LearnerId], list[int]] = {}
        for a in graph.learners:
            for b in graph.learners:
                self._edges[(a, b)] = graph.edge_mask_list(a, b)
        self._con: dict[tuple[LearnerId, int], frozenset[LearnerId]] = {}
        self._buried: dict[tuple[int, int], bool] = {}
        self._fresh: dict[tuple[LearnerId, int], bool] = {}
        self._wf: dict[int, bool] = {}

    # -- small helpers -------------------------------------------------------
    def acceptor_bit(self, signer: str) -> int:
        return self._acc_bit.get(signer, 0)

    def signers_mask(self, msgs: int) -> int:
        """Acceptor bitmask of the signers of the messages in ``msgs``."""
        out = 0
        sm = self.store.signer_mask
        for a, bit in self._acc_bit.items():
            if sm.get(a, 0) & msgs:
                out |= bit
        return out

    def is_quorum(self, lrn: LearnerId, acceptor_mask: int) -> bool:
        return any(q & acceptor_mask == q for q in self._quorums[lrn])

    def acceptor_mask(self, acceptors: Iterable[str]) -> int:
        m = 0
        for a in acceptors:
            m |= self._acc_bit.get(a, 0)
        return m

    def _i(self, x: MessageId) -> int:
        return self.store.index_of(x)

    # -- Caught / Con ---------------------------------------------------------
    def caught(self, x: MessageId) -> frozenset[str]:
        """Signers with two mutually unreferenced messages in tran(x)."""
        return self.store.caught_at(self._i(x))

    def _caught_mask(self, i: int) -> int:
        return self.acceptor_mask(self.store.caught_at(i))

    def _con_for(self, a: LearnerId, caught_mask: int) -> frozenset[LearnerId]:
        key = (a, caught_mask)
        hit = self._con.get(key)
        if hit is None:
            hit = frozenset(
                b for b in self.graph.learners if any(s & caught_mask == 0 for s in self._edges[(a, b)])
            )
            self._con[key] = hit
        return hit

    def con(self, a: LearnerId, x: MessageId) -> frozenset[LearnerId]:
        self.graph._check(a)
        return self._con_for(a, self._caught_mask(self._i(x)))

    # -- Buried -----------------------------------------------------------------
    def _buried_i(self, xi: int, yi: int) -> bool:
        key = (xi, yi)
        hit = self._buried.get(key)
        if hit is not None:
            return hit
        st = self.store
        x = st.at(xi)
        result = False
        bx = st.ballot_at(xi)
        if x.kind == "2a" and bx is not None:
            vx = st.value_at(xi)
            ty = st.tran_at(yi)
            cands = st.lrn_mask.get(x.lrn, 0) & st.kind_mask["2a"] & st.slot_mask.get(x.slot, 0) & ty
            zmask = 0
            for z in iter_bits(cands):
                bz = st.ballot_at(z)
                if bz is not None and bz > bx and st.value_at(z) != vx:
                    zmask |= 1 << z
            if zmask:
                lowest = max(xi, (zmask & -zmask).bit_length() - 1)
                sigs = 0
                quorums = self._quorums.get(x.lrn, [])
                for m in iter_bits(ty >> lowest):
                    j = m + lowest
                    tj = st.tran_at(j)
                    if (tj >> xi) & 1 and tj & zmask:
                        bit = self._acc_bit.get(st.at(j).signer, 0)
                        if bit & ~sigs:
                            sigs |= bit
                            if any(q & sigs == q for q in quorums):
                                result = True
                                break
        self._buried[key] = result
        return result

    def buried(self, x: MessageId, y: MessageId) -> bool:
        return self._buried_i(self._i(x), self._i(y))

    # -- Cona / Fresh -----------------------------------------------------------
    def _own_2as(self, i: int) -> int:
        st = self.store
        x = st.at(i)
        return (
            st.signer_mask.get(x.signer, 0) & st.kind_mask["2a"] & st.slot_mask.get(x.slot, 0) & st.tran_at(i)
        )

    def cona(self, a: LearnerId, x: MessageId) -> set[MessageId]:
        i = self._i(x)
        st = self.store
        con = self._con_for(a, self._caught_mask(i))
        out = set()
        for m in iter_bits(self._own_2as(i)):
            if st.at(m).lrn in con and not self._buried_i(m, i):
                out.add(st.id_at(m))
        return out

    def _fresh_i(self, a: LearnerId, i: int) -> bool:
        key = (a, i)
        hit = self._fresh.get(key)
        if hit is not None:
            return hit
        st = self.store
        vx = st.value_at(i)
        result = True
        con = None
        for m in iter_bits(self._own_2as(i)):
            # only 2as with a different value can make x stale
            if st.value_at(m) == vx:
                continue
            if con is None:
                con = self._con_for(a, self._caught_mask(i))
            if st.at(m).lrn in con and not self._buried_i(m, i):
                result = False
                break
        self._fresh[key] = result
        return result

    def fresh(self, a: LearnerId, x: MessageId) -> bool:
        return self._fresh_i(a, self._i(x))

    # -- q() and well-formedness ------------------------------------------------
    def _q2a_mask(self, tran: int, slot: int, lrn: LearnerId) -> int:
        st = self.store
        g = st.get1a_of_mask(tran, slot)
        if g < 0:
            return 0
        same = st.ballot_mask.get((slot, st.at(g).ballot), 0) & st.kind_mask["1b"] & tran
        out = 0
        for m in iter_bits(same):
            if self._fresh_i(lrn, m):
                out |= 1 << m
        return out

    def q2a(self, x: MessageId) -> set[MessageId]:
        i = self._i(x)
        msg = self.store.at(i)
        if msg.kind != "2a":
            raise ValueError("q() is defined for 2a messages")
        return set(self.store.ids_of(self._q2a_mask(self.store.tran_at(i), msg.slot, msg.lrn)))

    def _wf_2a(self, tran: int, signer: str, lrn: LearnerId, slot: int) -> bool:
        if lrn not in self._quorums:
            return False
        q = self._q2a_mask(tran, slot, lrn)
        sigs = self.signers_mask(q)
        bit = self._acc_bit.get(signer, 0)
        return bool(bit & sigs) and self.is_quorum(lrn, sigs)

    def prospective_2a_ok(self, signer: str, refs: Iterable[MessageId], lrn: LearnerId, slot: int) -> bool:
        """Would a 2a with these refs be well-formed?  Nothing is inserted."""
        st = self.store
        tran = 0
        for r in refs:
            tran |= st.tran_mask(r)
        return self._wf_2a(tran, signer, lrn, slot)

    def prospective_1b_ok(self, refs: Iterable[MessageId], slot: int) -> bool:
        """Would a 1b with these refs be well-formed?  Nothing is inserted."""
        st = self.store
        tran = 0
        for r in refs:
            tran |= st.tran_mask(r)
        g = st.get1a_of_mask(tran, slot)
        if g < 0:
            return False
        same = st.ballot_mask.get((slot, st.at(g).ballot), 0) & tran
        return same & ~(1 << g) == 0

    def _wf_i(self, i: int) -> bool:
        hit = self._wf.get(i)
        if hit is not None:
            return hit
        st = self.store
        x = st.at(i)
        if x.kind == "1a":
            ok = x.ballot.tiebreak == ballot_tiebreak(x.value, x.signer, x.slot) and all(
                st.get(r).slot < x.slot for r in x.refs
            )
        elif x.kind == "1b":
            g = st.get1a_index(i)
            if g < 0:
                ok = False
            else:
                same = st.ballot_mask.get((x.slot, st.at(g).ballot), 0) & st.tran_at(i)
                ok = same & ~((1 << i) | (1 << g)) == 0
        else:
            ok = self._wf_2a(st.tran_at(i), x.signer, x.lrn, x.slot)
        self._wf[i] = ok
        return ok

    def well_formed(self, x: MessageId) -> bool:
        return self._wf_i(self._i(x))

    # -- decisions ---------------------------------------------------------------
    def is_decision(self, a: LearnerId, s: Iterable[MessageId]) -> bool:
        st = self.store
        key = None
        mask = 0
        for mid in s:
            i = self._i(mid)
            m = st.at(i)
            if m.kind != "2a" or m.lrn != a:
                return False
            k = (m.slot, st.ballot_at(i))
            if k[1] is None or (key is not None and k != key):
                return False
            key = k
            mask |= 1 << i
        return self.is_quorum(a, self.signers_mask(mask))

    def find_decisions(self, a: LearnerId, among: int | Iterable[MessageId] | None = None) -> list[Decision]:
        """All maximal decision witnesses for ``a`` among the given messages
        (a bitmask of store indices, or ids; default: the whole store)."""
        st = self.store
        if among is None:
            pool = (1 << len(st)) - 1
        elif isinstance(among, int):
            pool = among
        else:
            pool = st.mask_of(among)
        groups: dict[tuple[int, Ballot], int] = {}
        for i in iter_bits(pool & st.lrn_mask.get(a, 0) & st.kind_mask["2a"]):
            b = st.ballot_at(i)
            if b is None:
                continue
            k = (st.at(i).slot, b)
            groups[k] = groups.get(k, 0) | (1 << i)
        out = []
        for (slot, b), mask in sorted(groups.items(), key=lambda kv: (kv[0][0], kv[0][1])):
            if self.is_quorum(a, self.signers_mask(mask)):
                first = (mask & -mask).bit_length() - 1
                out.append(Decision(a, slot, st.value_at(first), b, frozenset(st.ids_of(mask))))
        return out


def rebuild_context(graph: LearnerGraph, msgs: Iterable[Message], require_valid: bool = True) -> Context:
    """A fresh context whose store holds exactly ``msgs`` (in a ref-closed order)."""
    ctx = Context(graph, MessageStore(), require_valid=require_valid)
    pending = list(msgs)
    while pending:
        progress = []
        for m in pending:
            if all(r in ctx.store for r in m.refs):
                ctx.store.insert(m)
            else:
                progress.append(m)
        if len(progress) == len(pending):
            raise UnknownMessage("messages are not closed under references")
        pending = progress
    return ctx


__all__ = ["Context", "Decision", "InvalidGraph", "rebuild_context", "pair"]
