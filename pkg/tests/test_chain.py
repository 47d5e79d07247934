import dataclasses
from pathlib import Path

import pytest

from hetpaxos.appendix import load_example
from hetpaxos.chain import ChainConfig, ChainState, ProofOfConsensus, append, extract_proofs, run_chain
from hetpaxos.errors import InvalidScenario, MessageDecodeError
from hetpaxos.family import AcceptorSetFamily
from hetpaxos.messages import make_1a, make_2a, serialize_many
from hetpaxos.sim import scenario as scenario_mod
from hetpaxos.sim.engine import run
from hetpaxos.sim.scenario import Proposal, Scenario, byzantine

SCENARIOS = Path(__file__).resolve().parent.parent / "scenarios"


@pytest.fixture(scope="module")
def chain_b():
    sc = scenario_mod.load(SCENARIOS / "chain-b.json")
    return sc, run_chain(sc)


@pytest.fixture(scope="module")
def chain_a(chain_b):
    sc = dataclasses.replace(chain_b[0], strategy="A")
    return sc, run_chain(sc)


def first_times(res):
    return {k: v["t"] for k, v in res.report.latency.items()}


class TestStrategies:
    def test_b_completes_in_order(self, chain_b):
        _, res = chain_b
        assert res.complete and res.report.ok
        assert [o.decisions["l1"] for o in res.outcomes] == [b"block0", b"block1", b"block2"]
        # learners see the slow slot-1 1a only through acceptors' echoes, which
        # parks their 2as until it arrives; that delivery is the second hop
        assert res.report.latency == {
            "l1/0": {"t": 3, "hop": 3},
            "l2/0": {"t": 3, "hop": 3},
            "l1/1": {"t": 31, "hop": 2},
            "l2/1": {"t": 31, "hop": 2},
            "l1/2": {"t": 31, "hop": 2},
            "l2/2": {"t": 31, "hop": 2},
        }

    def test_a_lets_slots_overtake(self, chain_a):
        _, res = chain_a
        assert res.complete and res.report.ok
        t = first_times(res)
        assert t["l1/2"] == 5 < t["l1/1"] == 31

    def test_b_slot_1as_reference_previous_slot(self, chain_b):
        _, res = chain_b
        st = res.trace.ctx.store
        ones = {r["slot"]: bytes.fromhex(r["msg"]) for r in res.trace.events("propose")}
        for s in (1, 2):
            assert ones[s - 1] in st.get(ones[s]).refs

    def test_b_acceptors_vote_in_slot_order(self, chain_b):
        _, res = chain_b
        st = res.trace.ctx.store
        for a in res.trace.scenario.acceptors:
            seen = set()
            for mid in res.trace.nodes[a].order:
                m = st.get(mid)
                if m.kind == "1a":
                    seen.add(m.slot)
                elif m.kind == "2a" and m.signer == a and m.slot:
                    assert m.slot - 1 in seen
        assert not res.trace.events("violation")

    def test_b_holds_back_a_proposal_with_nothing_to_reference(self):
        g = load_example("fully-homogeneous")
        sc = Scenario(g, [Proposal("c", b"s0", 5, 0), Proposal("c", b"s1", 0, 1)], mode="chain", slots=2, strategy="B")
        props = run(sc).events("propose")
        # slot 1 retries each tick; at t=5 it runs right after the slot-0 1a
        assert [(r["slot"], r["t"]) for r in props] == [(0, 5), (1, 5)]
        assert props[1]["refs"] == [props[0]["msg"]]

    def test_parking_at_acceptors(self, chain_b):
        _, res = chain_b
        parked = {(r["node"], r["msg"]) for r in res.trace.events("park")}
        assert parked
        assert {n for n, _ in parked} <= set(res.trace.scenario.acceptors) | set(res.trace.scenario.learners)

    def test_config_checks(self):
        with pytest.raises(InvalidScenario):
            ChainConfig(0)
        with pytest.raises(InvalidScenario):
            ChainConfig(2, "C")

    def test_single_mode_scenario_promoted(self):
        g = load_example("het-acceptors")
        res = run_chain(Scenario(g, [Proposal("c", b"v", 0)]))
        assert res.trace.scenario.mode == "chain" and res.complete


class TestProofs:
    def test_every_proof_verifies_and_round_trips(self, chain_b):
        sc, res = chain_b
        assert len(res.proofs) == 6
        for p in res.proofs:
            assert p.verify(sc.graph)
            back = ProofOfConsensus.from_bytes(p.to_bytes())
            assert back == p and back.verify(sc.graph)

    def test_proof_is_self_contained(self, chain_b):
        _, res = chain_b
        p = res.proofs[0]
        ids = {m.id for m in p.messages}
        assert p.witness <= ids
        assert all(r in ids for m in p.messages for r in m.refs)

    def test_wrong_value_or_slot_fails(self, chain_b):
        sc, res = chain_b
        p = res.proofs[0]
        assert not dataclasses.replace(p, value=b"block9").verify(sc.graph)
        assert not dataclasses.replace(p, slot=1).verify(sc.graph)
        assert not dataclasses.replace(p, learner="nobody").verify(sc.graph)

    def test_short_witness_fails(self, chain_b):
        sc, res = chain_b
        p = res.proofs[0]
        assert not dataclasses.replace(p, witness=frozenset(sorted(p.witness)[:1])).verify(sc.graph)

    def test_missing_messages_fail(self, chain_b):
        sc, res = chain_b
        p = res.proofs[0]
        assert not dataclasses.replace(p, messages=p.messages[1:]).verify(sc.graph)

    def test_stricter_graph_rejects(self, chain_b):
        sc, res = chain_b
        p = res.proofs[0]
        g = sc.graph
        strict = g.replace(quorums={x: AcceptorSetFamily([g.acceptors]) for x in g.learners})
        signers = {m.signer for m in p.messages if m.id in p.witness}
        assert set(g.acceptors) - signers
        assert not p.verify(strict, require_valid=False)

    def test_tampered_bytes(self, chain_b):
        _, res = chain_b
        data = bytearray(res.proofs[0].to_bytes())
        with pytest.raises(MessageDecodeError):
            ProofOfConsensus.from_bytes(b"nope" + bytes(data))
        # flip a byte of the last message: its id changes, so the encoding is
        # no longer closed under references or the witness goes missing
        data[-1] ^= 0xFF
        try:
            back = ProofOfConsensus.from_bytes(bytes(data))
        except MessageDecodeError:
            return
        assert not back.verify(res.trace.scenario.graph)

    def test_witness_without_ballot(self):
        m = make_1a("p", b"x", 0)
        two = make_2a("A", [], "l1")
        head = b"HPXP\x01" + (2).to_bytes(2, "big") + b"l1" + (0).to_bytes(4, "big") + (1).to_bytes(2, "big")
        with pytest.raises(MessageDecodeError):
            ProofOfConsensus.from_bytes(head + two.id + serialize_many([m, two]))

    def test_extract_one_per_learner_and_slot(self, chain_a):
        _, res = chain_a
        keys = [(p.learner, p.slot) for p in extract_proofs(res.trace)]
        assert sorted(keys) == [(x, s) for x in ("l1", "l2") for s in range(3)]

    def test_equivocator_proofs_still_verify(self):
        sc = scenario_mod.load(SCENARIOS / "intro-equivocator.json")
        res = run_chain(sc)
        assert res.complete
        for p in res.proofs:
            assert p.verify(sc.graph)


class TestChainState:
    def test_append_grows_the_chain(self):
        state = ChainState(Scenario(load_example("het-failures"), []))
        for i in range(3):
            res = append(state, f"b{i}".encode())
            assert state.height == i + 1
            assert len(res.outcomes) == i + 1
        assert res.complete
        assert [o.decisions[res.trace.scenario.learners[0]] for o in res.outcomes] == [b"b0", b"b1", b"b2"]

    def test_append_strategy_b(self):
        state = ChainState(Scenario(load_example("fully-homogeneous"), []), ChainConfig(1, "B"), spacing=4)
        append(state, b"x")
        res = append(state, b"y")
        assert res.complete and res.report.ok
        assert state.scenario().strategy == "B"

    def test_append_with_byzantine_acceptor(self):
        base = Scenario(load_example("fully-homogeneous"), [], {"D": byzantine("equivocate", forks=2)})
        state = ChainState(base)
        append(state, b"x")
        res = append(state, b"y", retries=1)
        assert res.report.ok
