import dataclasses
import json
import random
from pathlib import Path

import pytest

from hetpaxos.appendix import EXAMPLES, INTRO, INVALID_AS_STATED, load_example
from hetpaxos.errors import InvalidScenario, NotTerminating
from hetpaxos.messages import iter_bits
from hetpaxos.sim import scenario as scenario_mod
from hetpaxos.sim.engine import run
from hetpaxos.sim.report import verdicts
from hetpaxos.sim.scenario import Latency, Override, Proposal, Role, Scenario, byzantine, crash
from hetpaxos.sim.sweep import SweepConfig, random_scenario, random_valid_graph
from hetpaxos.sim.termination import check_termination, termination_schedule

SCENARIOS = Path(__file__).resolve().parent.parent / "scenarios"
SCENARIO_FILES = sorted(p for p in SCENARIOS.glob("*.json") if p.name != "sweep-small.json")


def homog(roles=None, props=None, **kw):
    g = load_example("fully-homogeneous")
    props = props if props is not None else [Proposal("p", b"x", 0), Proposal("q", b"y", 0)]
    return Scenario(g, props, roles or {}, seed=4, **kw)


class TestScenarioFile:
    @pytest.mark.parametrize("path", SCENARIO_FILES, ids=lambda p: p.stem)
    def test_round_trip(self, path):
        sc = scenario_mod.load(path)
        back = scenario_mod.loads(sc.dumps())
        assert back.dumps() == sc.dumps()
        assert back.name == path.stem

    def test_inline_graph_round_trip(self):
        sc = homog({"A": crash(3), "B": byzantine("equivocate", forks=2)})
        sc.latency = Latency(2, links={("A", "B"): 5}, jitter=1, overrides=(Override(7, src=("A",), kind="1b"),))
        back = scenario_mod.loads(sc.dumps())
        assert back.dumps() == sc.dumps()
        assert back.roles == sc.roles
        assert back.latency.links == {("A", "B"): 5}

    def test_binary_values_encode_as_hex(self):
        p = Proposal("p", b"\xff\x00", 0)
        assert p.to_json()["value"] == {"hex": "ff00"}
        assert Proposal.from_json(p.to_json()) == p

    @pytest.mark.parametrize(
        "text",
        ["not json", "[]", '{"format": "other/1"}', '{"proposals": []}', '{"graph": {"example": "nope"}}'],
    )
    def test_bad_files(self, text):
        with pytest.raises(InvalidScenario):
            scenario_mod.loads(text)

    def test_bad_role(self):
        with pytest.raises(InvalidScenario):
            Role.from_json({"sleep": 3})

    def test_diagnostics_list_every_problem(self):
        sc = homog(
            {"A": byzantine("teleport"), "Z": crash(1), "B": crash(-1)},
            [Proposal("A", b"x", 0), Proposal("p", b"y", 0, slot=1)],
        )
        with pytest.raises(InvalidScenario) as e:
            run(sc)
        diags = "\n".join(e.value.diagnostics)
        for needle in ("unknown strategy", "'Z' is not an acceptor", "crash time", "collides", "slot must be 0"):
            assert needle in diags

    def test_invalid_graph_needs_opt_in(self):
        (bad,) = INVALID_AS_STATED
        sc = Scenario(load_example(bad), [Proposal("p", b"x", 0)])
        with pytest.raises(InvalidScenario, match="not valid"):
            run(sc)
        sc.allow_invalid_graph = True
        assert verdicts(run(sc).records).ok

    def test_strategy_b_needs_previous_slot(self):
        sc = homog(props=[Proposal("p", b"x", 0, slot=1)], mode="chain", slots=2, strategy="B")
        assert any("strategy B" in d for d in sc.diagnostics())


class TestDeterminism:
    @pytest.mark.parametrize("path", SCENARIO_FILES, ids=lambda p: p.stem)
    def test_byte_identical_replay(self, path):
        sc = scenario_mod.load(path)
        a = run(sc).to_jsonl()
        assert run(sc).to_jsonl() == a
        assert run(scenario_mod.loads(sc.dumps(), path.parent)).to_jsonl() == a

    @pytest.mark.parametrize("index", range(8))
    def test_sweep_scenarios_replay(self, index):
        sc = random_scenario(SweepConfig(seed=3), index)
        assert run(sc).to_jsonl() == run(random_scenario(SweepConfig(seed=3), index)).to_jsonl()

    def test_seed_changes_jittered_trace(self):
        sc = scenario_mod.load(SCENARIOS / "intro-quiet.json")
        other = dataclasses.replace(sc, seed=sc.seed + 1)
        assert run(sc).to_jsonl() != run(other).to_jsonl()

    def test_trace_starts_with_header_and_ends_with_summary(self):
        recs = run(homog()).records
        assert recs[0]["event"] == "header"
        assert recs[-1]["event"] == "summary"
        assert recs[-1]["end"] == "quiescent"


class TestLatency:
    @pytest.mark.parametrize("name", EXAMPLES)
    def test_appendix_three_hops(self, name):
        sc = Scenario(load_example(name), [Proposal("p", b"v", 0)], allow_invalid_graph=name in INVALID_AS_STATED)
        rep = verdicts(run(sc).records)
        assert rep.ok
        assert set(rep.latency) == {f"{x}/0" for x in sc.learners}
        assert all(v == {"t": 3, "hop": 3} for v in rep.latency.values())

    @pytest.mark.parametrize("seed", range(6))
    def test_random_graphs_three_hops(self, seed):
        g = random_valid_graph(random.Random(seed), 7, 4)
        rep = verdicts(run(Scenario(g, [Proposal("p", b"v", 0)])).records)
        assert len(rep.latency) == len(g.learners)
        for lrn in g.learners:
            # a one-acceptor quorum needs no 1b exchange
            hops = 2 if min(map(len, g.quorum(lrn).sorted_sets())) == 1 else 3
            assert rep.latency[f"{lrn}/0"] == {"t": hops, "hop": hops}

    def test_acceptors_hold_a_future_1a(self):
        script = [{"t": 1, "kind": "1a", "value": "late", "ballot_time": 10}]
        t = run(homog({"A": byzantine("script", script=script)}))
        (mid,) = [r["msg"] for r in t.events("emit") if r["node"] == "A"]
        at = {r["to"]: r["t"] for r in t.events("deliver") if r["msg"] == mid and r["from"] == "A"}
        assert at == {"B": 10, "C": 10, "D": 10, "l1": 2, "l2": 2}


class TestCrash:
    def test_crashed_before_1a_still_decides(self):
        t = run(homog({"A": crash(0)}))
        assert not [r for r in t.events("deliver") if r["to"] == "A"]
        assert not [r for r in t.events("emit") if r["node"] == "A"]
        assert verdicts(t.records).latency["l1/0"] == {"t": 3, "hop": 3}

    def test_sends_landing_after_crash_are_dropped(self):
        t = run(homog({"A": crash(1)}))
        drops = t.events("drop")
        assert drops and all(r["from"] == "A" and r["reason"] == "crash" for r in drops)
        assert all(r["t"] <= 1 for r in t.events("deliver") if r["to"] == "A")
        sent = {r["msg"] for r in drops}
        assert not [r for r in t.events("deliver") if r["msg"] in sent and r["from"] == "A"]

    def test_too_many_crashes_block_but_stay_safe(self):
        t = run(homog({"A": crash(0), "B": crash(0)}))
        rep = verdicts(t.records)
        assert rep.ok and not rep.decisions
        assert t.records[0]["terminating"] == []


class TestByzantine:
    def test_silent_sends_nothing(self):
        t = run(homog({"A": byzantine("silent")}))
        assert not [r for r in t.events("send") if r["from"] == "A"]
        assert verdicts(t.records).ok

    def test_equivocator_gets_caught(self):
        # a later ballot makes honest acceptors merge both forks' histories
        props = [Proposal("p", b"x", 0), Proposal("q", b"y", 0), Proposal("r", b"z", 10)]
        t = run(homog({"A": byzantine("equivocate", forks=2)}, props))
        st = t.ctx.store
        assert any("A" in st.caught_at(i) for i in range(len(st)))
        assert not any(set(st.caught_at(i)) - {"A"} for i in range(len(st)))
        rep = verdicts(t.records)
        assert rep.ok and len({d["value"] for d in rep.decisions}) == 1

    def test_equivocator_assignment(self):
        sc = homog({"A": byzantine("equivocate", forks=2, values=[["x"], ["y"]], assignment={"B": 1})})
        t = run(sc)
        node = t.nodes["A"]
        assert node.assignment["B"] == 1
        assert "B" in node.audience[1]

    def test_equivocator_bad_params(self):
        with pytest.raises(InvalidScenario):
            run(homog({"A": byzantine("equivocate", forks=2, values=[["x"]])}))
        with pytest.raises(InvalidScenario):
            run(homog({"A": byzantine("equivocate", forks=2, assignment={"B": 5})}))

    def test_stale_replay_resends(self):
        t = run(homog({"A": byzantine("stale-replay", max_extra=3, replay_after=10)}))
        sends = [r["msg"] for r in t.events("send") if r["from"] == "A"]
        assert len(sends) > len(set(sends))
        # every recipient processes a message once
        seen = [(r["to"], r["msg"]) for r in t.events("deliver")]
        assert len(seen) == len(set(seen))
        assert verdicts(t.records).ok

    def test_script_forgery_is_rejected(self):
        script = [{"t": 2, "kind": "2a", "lrn": "l1", "refs": "none"}, {"t": 4, "kind": "1b", "refs": "known"}]
        t = run(homog({"A": byzantine("script", script=script)}))
        forged = [r["msg"] for r in t.events("emit") if r["node"] == "A" and r["kind"] == "2a"]
        assert len(forged) == 1
        rejected = {r["node"] for r in t.events("reject") if r["msg"] == forged[0]}
        assert rejected == {"B", "C", "D", "l1", "l2"}
        assert verdicts(t.records).ok

    def test_script_entry_checked(self):
        with pytest.raises(InvalidScenario):
            run(homog({"A": byzantine("script", script=[{"kind": "3a", "t": 0}])}))


class TestScenarios:
    def test_intro_divergence_between_disentangled_learners(self):
        t = run(scenario_mod.load(SCENARIOS / "intro-equivocator.json"))
        rep = verdicts(t.records)
        assert rep.ok
        got = {d["learner"]: (d["value"], d["t"], d["hop"]) for d in rep.decisions}
        assert got == {
            "blue1": ("blue", 3, 3),
            "blue2": ("blue", 3, 3),
            "red1": ("red", 4, 3),
            "red2": ("red", 4, 3),
        }
        ent = {tuple(p) for p in t.records[0]["entangled"]}
        assert ("blue1", "red1") not in ent and ("blue1", "blue2") in ent

    def test_intro_quiet(self):
        rep = verdicts(run(scenario_mod.load(SCENARIOS / "intro-quiet.json")).records)
        assert rep.ok and {d["value"] for d in rep.decisions} == {"x"}

    def test_retry_after_slow_first_ballot(self):
        t = run(scenario_mod.load(SCENARIOS / "homogeneous-retry.json"))
        props = [(r["proposer"], r["t"], r["attempt"]) for r in t.events("propose")]
        # second attempts go out; third ones are skipped once everyone decided
        assert props == [("p1", 0, 0), ("p2", 0, 0), ("p1", 5, 1), ("p2", 6, 1)]
        rep = verdicts(t.records)
        assert rep.ok
        assert rep.latency == {"l1/0": {"t": 9, "hop": 3}, "l2/0": {"t": 9, "hop": 3}}

    def test_until_stops_early(self):
        t = run(homog(), until=2)
        assert t.end == "until" and not t.decisions


class TestTermination:
    @pytest.mark.parametrize("name", [n for n in EXAMPLES if n != INTRO])
    def test_appendix_first_learner(self, name):
        g = load_example(name)
        sc = Scenario(g, [Proposal("p", b"v", 0)], allow_invalid_graph=name in INVALID_AS_STATED)
        sched, trace, rep = check_termination(sc, g.learners[0])
        assert rep.termination_ok and rep.ok
        assert rep.termination["decided_at"] < sched.termination["deadline"]

    def test_intro_with_equivocator(self):
        sc = scenario_mod.load(SCENARIOS / "intro-quiet.json")
        for lrn in ("blue1", "red2"):
            _, _, rep = check_termination(sc, lrn)
            assert rep.termination_ok and rep.ok

    def test_earlier_conflicting_vote_fixes_y(self):
        sc = homog(props=[Proposal("p", b"old", 0), Proposal("q", b"new", 2)])
        sched, trace, rep = check_termination(sc, "l1", start=10)
        assert rep.termination_ok and rep.ok
        before = {d["value_hex"] for d in rep.decisions if d["t"] < sched.termination["start"]}
        assert before and before == {sched.termination["value_hex"]}
        assert {d["value_hex"] for d in rep.decisions} == before

    def test_schedule_layout(self):
        sched = termination_schedule(homog(latency=Latency(3)), "l2")
        tm = sched.termination
        assert tm["period"] == 3 and tm["start"] == 1 and tm["deadline"] == 1 + 13 * 3
        times = [p.time for p in sched.proposals if p.proposer == "termination-proposer"]
        assert times == [1, 1 + 12, 1 + 27]
        assert json.loads(sched.dumps())["termination"] == tm

    def test_not_terminating(self):
        with pytest.raises(NotTerminating):
            termination_schedule(homog({"A": crash(0), "B": crash(0)}), "l1")
        with pytest.raises(NotTerminating):
            termination_schedule(homog(), "l1", quorum=("A", "B"))

    def test_bad_requests(self):
        with pytest.raises(InvalidScenario):
            termination_schedule(homog(), "nobody")
        with pytest.raises(InvalidScenario):
            termination_schedule(homog(props=[Proposal("p", b"x", 5)]), "l1", start=3)

    def test_slow_network_outside_window(self):
        sc = homog(latency=Latency(1, overrides=(Override(40, src=("C",)),)))
        _, _, rep = check_termination(sc, "l1", quorum=("A", "B", "D"))
        assert rep.termination_ok


def test_no_invariant_violations_on_scenario_files():
    for path in SCENARIO_FILES:
        t = run(scenario_mod.load(path))
        assert not t.events("violation"), path.name
        st = t.ctx.store
        assert all(st.at(i).kind == "2a" for i in iter_bits(st.kind_mask["2a"]))
