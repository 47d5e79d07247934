import random

import pytest

from hetpaxos.appendix import INTRO, load_example
from hetpaxos.errors import NotCondensed
from hetpaxos.family import AcceptorSetFamily as F
from hetpaxos.graph import LearnerGraph, condense
from hetpaxos.logic import Context, InvalidGraph, rebuild_context
from hetpaxos.messages import MessageStore, make_1a, make_1b, make_2a
from hetpaxos.sim import Latency, Proposal, Scenario, byzantine, run

from oracles import ProtocolOracle
from strategies import random_stores

ABCD = ("A", "B", "C", "D")


def homogeneous(learners=("l1", "l2")):
    q = F.any_k_of(3, ABCD)
    edges = {(a, b): q for i, a in enumerate(learners) for b in learners[i:]}
    return condense(LearnerGraph(ABCD, {lrn: q for lrn in learners}, edges))


def ctx_with(graph, msgs, require_valid=True):
    ctx = Context(graph, require_valid=require_valid)
    for m in msgs:
        ctx.store.insert(m)
    return ctx


def ballot_round(signers, one_a, lrn="l1"):
    """1bs from ``signers`` on ``one_a`` and a 2a from the first signer."""
    b1 = [make_1b(s, [one_a.id]) for s in signers]
    two = make_2a(signers[0], [m.id for m in b1], lrn)
    return b1, two


class TestContext:
    def test_needs_condensed_graph(self):
        g = LearnerGraph(("A",), {"a": F([{"A"}]), "b": F([{"A"}]), "c": F([{"A"}])},
                         {("a", "b"): F([{"A"}]), ("b", "c"): F([{"A"}])})
        with pytest.raises(NotCondensed):
            Context(g)

    def test_rejects_invalid_graph_unless_allowed(self):
        g = condense(load_example("het-failures-acceptors"))
        with pytest.raises(InvalidGraph):
            Context(g)
        Context(g, require_valid=False)

    def test_rebuild_context_orders_messages(self):
        a = make_1a("p", b"x", 0)
        b = make_1b("A", [a.id])
        ctx = rebuild_context(homogeneous(), [b, a])
        assert len(ctx.store) == 2


class TestScripted:
    def test_wellformed_2a_needs_quorum_of_fresh_1bs(self):
        g = homogeneous()
        a = make_1a("p", b"x", 1)
        b1, two = ballot_round(["A", "B", "C"], a)
        ctx = ctx_with(g, [a, *b1, two])
        assert ctx.well_formed(two.id)
        assert ctx.q2a(two.id) == {m.id for m in b1}
        short = make_2a("A", [b1[0].id, b1[1].id], "l1")
        ctx.store.insert(short)
        assert not ctx.well_formed(short.id)

    def test_2a_signer_must_have_sent_a_1b(self):
        g = homogeneous()
        a = make_1a("p", b"x", 1)
        b1, _ = ballot_round(["A", "B", "C"], a)
        outsider = make_2a("D", [m.id for m in b1], "l1")
        ctx = ctx_with(g, [a, *b1, outsider])
        assert not ctx.well_formed(outsider.id)

    def test_1b_may_not_reference_same_ballot_non_1a(self):
        g = homogeneous()
        a = make_1a("p", b"x", 1)
        b_a = make_1b("A", [a.id])
        b_b = make_1b("B", [a.id, b_a.id])
        ctx = ctx_with(g, [a, b_a, b_b])
        assert ctx.well_formed(b_a.id)
        assert not ctx.well_formed(b_b.id)

    def test_1b_may_reference_older_ballots(self):
        g = homogeneous()
        old, new = make_1a("p", b"x", 1), make_1a("p", b"y", 2)
        b_old = make_1b("A", [old.id])
        b_new = make_1b("B", [b_old.id, new.id])
        ctx = ctx_with(g, [old, new, b_old, b_new])
        assert ctx.well_formed(b_new.id)

    def test_1a_with_forged_tiebreak_is_malformed(self):
        from dataclasses import replace

        a = make_1a("p", b"x", 1)
        forged = replace(a, value=b"y")
        ctx = ctx_with(homogeneous(), [forged])
        assert not ctx.well_formed(forged.id)

    def _vote_then_new_ballot(self, second_quorum):
        """A votes x at ballot 1; ballot 2 proposes y; the 1as reach everyone."""
        g = homogeneous()
        x, y = make_1a("p", b"x", 1), make_1a("q", b"y", 2)
        b1, vote = ballot_round(["A", "B", "C"], x)
        msgs = [x, y, *b1, vote]
        # higher-ballot 2as for y, seen by second_quorum
        # honest acceptors chain their own messages
        ref = {m.signer: m.id for m in b1}
        yb = [make_1b(s, [y.id] + ([ref[s]] if s in ref else [])) for s in "BCD"]
        ya = make_2a("B", [m.id for m in yb], "l1")
        msgs += yb + [ya]
        seen = [make_1b(s, [vote.id, ya.id]) for s in second_quorum]
        return g, msgs + seen, vote, ya, seen

    def test_buried_when_quorum_saw_higher_conflicting_2a(self):
        g, msgs, vote, ya, seen = self._vote_then_new_ballot("BC")
        z = make_1b("A", [vote.id] + [m.id for m in seen] + [msgs[1].id])
        ctx = ctx_with(g, msgs + [z])
        assert ctx.buried(vote.id, z.id)
        assert ctx.cona("l1", z.id) == set()
        assert ctx.fresh("l1", z.id)

    def test_not_buried_without_a_quorum(self):
        # z itself counts (A), plus B: two of four
        g, msgs, vote, ya, seen = self._vote_then_new_ballot("B")
        z = make_1b("A", [vote.id] + [m.id for m in seen] + [msgs[1].id])
        ctx = ctx_with(g, msgs + [z])
        assert not ctx.buried(vote.id, z.id)
        assert ctx.cona("l1", z.id) == {vote.id}
        # the 1b carries y but A voted x, unburied: stale
        assert not ctx.fresh("l1", z.id)

    def test_buried_ignores_other_learners(self):
        g, msgs, vote, ya, seen = self._vote_then_new_ballot("BCD")
        other = make_2a("A", [vote.id], "l2")
        z = make_1b("A", [other.id] + [m.id for m in seen] + [msgs[1].id])
        ctx = ctx_with(g, msgs + [other, z])
        # the higher y vote is for l1, so A's l2 vote is not buried by it
        assert not ctx.buried(other.id, z.id)

    def test_con_drops_learners_with_all_safe_sets_caught(self):
        g = condense(load_example(INTRO))
        lrns = g.learners
        a = make_1a("p", b"x", 0)
        # every acceptor equivocates: everyone is caught
        forks = []
        for acc in g.acceptors:
            forks += [make_1b(acc, [a.id]), make_2a(acc, [a.id], lrns[0])]
        top = make_1b(g.acceptors[0], [f.id for f in forks])
        ctx = ctx_with(g, [a, *forks, top])
        assert ctx.caught(top.id) == set(g.acceptors)
        assert ctx.con(lrns[0], top.id) == frozenset()
        assert ctx.con(lrns[0], a.id) == frozenset(b for b in lrns if not g.edge(lrns[0], b).is_empty())

    def test_decision_needs_same_ballot_and_learner(self):
        g = homogeneous()
        x = make_1a("p", b"x", 1)
        b1, _ = ballot_round(["A", "B", "C"], x)
        votes = [make_2a(s, [m.id for m in b1], "l1") for s in "ABC"]
        other = make_2a("A", [m.id for m in b1], "l2")
        ctx = ctx_with(g, [x, *b1, *votes, other])
        assert ctx.is_decision("l1", [v.id for v in votes])
        assert not ctx.is_decision("l1", [v.id for v in votes[:2]])
        assert not ctx.is_decision("l1", [votes[0].id, votes[1].id, other.id])
        [d] = ctx.find_decisions("l1")
        assert d.value == b"x" and d.witness == {v.id for v in votes}
        assert ctx.find_decisions("l2") == []


class TestAgainstOracle:
    @pytest.mark.parametrize("chunk", range(4))
    def test_predicates_on_random_dags(self, chunk):
        for g, msgs in random_stores(25, f"pred{chunk}"):
            ctx = ctx_with(g, msgs, require_valid=False)
            o = ProtocolOracle(g, {m.id: m for m in msgs})
            for m in msgs:
                x = m.id
                assert ctx.caught(x) == o.caught(x)
                assert ctx.well_formed(x) == o.well_formed(x), m
                for a in g.learners:
                    assert ctx.con(a, x) == o.con(a, x)
                    if o.get1a(x) is not None:
                        assert ctx.cona(a, x) == o.cona(a, x)
                        assert ctx.fresh(a, x) == o.fresh(a, x)
                if m.kind == "2a" and o.get1a(x) is not None:
                    assert ctx.q2a(x) == o.q(x)
                for y in msgs[-5:]:
                    assert ctx.buried(x, y.id) == o.buried(x, y.id)

    def test_predicates_on_simulatedrandom_stores(self):
        # realistic stores: well-formed 2as, higher ballots, an equivocator
        for i, name in enumerate(("fully-homogeneous", "het-acceptors", "failure-disagreement")):
            g = condense(load_example(name))
            sc = Scenario(
                g,
                [Proposal("p0", b"x", 0), Proposal("p1", b"y", 2), Proposal("p2", b"z", 5)],
                {g.acceptors[0]: byzantine("equivocate")},
                Latency(default=2, jitter=2),
                seed=i,
            )
            tr = run(sc)
            st = tr.ctx.store
            msgs = list(st)
            o = ProtocolOracle(g, {m.id: m for m in msgs})
            rng = random.Random(i)
            for m in rng.sample(msgs, min(40, len(msgs))):
                x = m.id
                assert tr.ctx.caught(x) == o.caught(x)
                assert tr.ctx.well_formed(x) == o.well_formed(x)
                if m.kind == "2a":
                    assert tr.ctx.q2a(x) == o.q(x)
                if m.kind == "1b":
                    for a in g.learners:
                        assert tr.ctx.fresh(a, x) == o.fresh(a, x)

    def test_find_decisions_matches_subset_search(self):
        """200 random stores of at most 20 messages."""
        checked = 0
        with_decision = 0
        for g, msgs in random_stores(200, "dec"):
            ctx = ctx_with(g, msgs, require_valid=False)
            o = ProtocolOracle(g, {m.id: m for m in msgs})
            pool = [m.id for m in msgs]
            for a in g.learners:
                want = o.decisions(a, pool)
                got = {(d.slot, d.ballot): d for d in ctx.find_decisions(a)}
                assert set(got) == set(want)
                for k, subs in want.items():
                    # the reported witness is the largest decision subset
                    assert got[k].witness == frozenset().union(*subs)
                    assert all(ctx.is_decision(a, s) for s in subs)
                with_decision += bool(want)
            checked += 1
        assert checked == 200
        assert with_decision > 0
