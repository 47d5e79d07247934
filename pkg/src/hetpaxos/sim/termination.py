"""Schedules that satisfy the termination network assumption.

Given a scenario and a terminating learner ``a``, pick a quorum ``q`` of
``a`` made of live, safe acceptors and lay out 13 periods of length ``D``
starting at ``T0``:

* three proposals x, y, z are sent at the start of periods 0, 4 and 9,
  so their ballots increase and exceed every earlier ballot;
* anything sent to ``a`` or to ``q`` before the end of period 12 arrives
  within ``D - 1`` ticks of max(send time, T0), i.e. before the end of the
  period after it was sent;
* no other 1a reaches an acceptor of ``q`` during the 13 periods (such
  deliveries are held back until the window closes);
* V(y) = V(z) is read off a first simulation pass that stops at the end of
  period 3: the value of the highest-ballot 2a known to any member of
  ``q``.  The second pass then runs the finished schedule.

Sends in between two receipts are attributed to the period of the first
receipt by construction: an acceptor's outputs are emitted at the instant
it processes a delivery.
"""
from __future__ import annotations

import dataclasses

from ..errors import InvalidScenario, NotTerminating
from ..graph import condense, terminating
from ..messages import make_1a
from .engine import Trace, run
from .report import Report, verdicts
from .scenario import Hold, Proposal, Scenario, Window

PROPOSER = "termination-proposer"
PERIODS = 13


def _pick_quorum(sc: Scenario, learner: str, quorum: tuple[str, ...] | None) -> tuple[str, ...]:
    g = condense(sc.graph)
    facts = sc.facts()
    if learner not in g.learners:
        raise InvalidScenario(f"unknown learner {learner!r}")
    if not terminating(g, learner, facts):
        raise NotTerminating(f"{learner} has no quorum of live, safe acceptors")
    ok = facts.real_live & facts.real_safe
    if quorum is not None:
        q = frozenset(quorum)
        if not q <= ok or not g.quorum(learner).contains(q):
            raise NotTerminating(f"{sorted(q)} is not a quorum of live, safe acceptors for {learner}")
        return tuple(sorted(q))
    for s in g.quorum(learner).sorted_sets():
        if set(s) <= ok:
            return tuple(s)
    raise NotTerminating(f"{learner} has no quorum of live, safe acceptors")  # pragma: no cover


def _last_activity(sc: Scenario) -> int:
    ts = [p.time for p in sc.proposals]
    for r in sc.roles.values():
        for e in r.params.get("script", ()) if r.byzantine else ():
            ts.append(int(e.get("t", 0)))
            ts.append(int(e.get("ballot_time", 0)))
    return max(ts, default=-1)


def termination_schedule(
    sc: Scenario,
    learner: str,
    *,
    period: int | None = None,
    start: int | None = None,
    quorum: tuple[str, ...] | None = None,
    slot: int = 0,
) -> Scenario:
    """A copy of ``sc`` extended with the x/y/z proposals and the delivery
    bounds described in the module docstring."""
    if sc.mode == "chain" and sc.strategy == "B" and slot > 0:
        raise InvalidScenario("termination schedules for chained slots are not supported")
    q = _pick_quorum(sc, learner, quorum)
    D = period if period is not None else max(2, sc.latency.default)
    if D < 1:
        raise InvalidScenario("period must be at least 1")
    T0 = start if start is not None else _last_activity(sc) + 1
    if T0 <= _last_activity(sc):
        raise InvalidScenario("the schedule must start after every scripted proposal")
    deadline = T0 + PERIODS * D
    vx = sc.proposals[0].value if sc.proposals else b"v"
    tx, ty, tz = T0, T0 + 4 * D, T0 + 9 * D
    x = make_1a(PROPOSER, vx, tx, slot)
    targets = frozenset(q) | {learner}
    window = Window(T0, deadline, targets, D - 1)

    def build(v: bytes | None) -> Scenario:
        props = list(sc.proposals) + [Proposal(PROPOSER, vx, tx, slot)]
        exempt = {x.id.hex()}
        if v is not None:
            props += [Proposal(PROPOSER, v, ty, slot), Proposal(PROPOSER, v, tz, slot)]
            exempt |= {make_1a(PROPOSER, v, ty, slot).id.hex(), make_1a(PROPOSER, v, tz, slot).id.hex()}
        hold = Hold(frozenset(q), "1a", T0, deadline, frozenset(exempt))
        lat = dataclasses.replace(
            sc.latency, windows=sc.latency.windows + (window,), holds=sc.latency.holds + (hold,)
        )
        return dataclasses.replace(sc, proposals=props, latency=lat, max_time=max(sc.max_time, deadline))

    # pass 1: through the end of period 3
    first = run(build(None), until=ty - 1, checks=False)
    st = first.ctx.store
    best = None
    for a in q:
        for mid in first.nodes[a].processed_ids():
            m = st.get(mid)
            if m.kind == "2a" and m.slot == slot:
                b = st.ballot_of(mid)
                if best is None or best[0] < b:
                    best = (b, st.value_of(mid))
    vy = best[1] if best is not None else vx

    out = build(vy)
    out.termination = {
        "learner": learner,
        "quorum": list(q),
        "slot": slot,
        "start": T0,
        "period": D,
        "deadline": deadline,
        "x": x.id.hex(),
        "y": make_1a(PROPOSER, vy, ty, slot).id.hex(),
        "z": make_1a(PROPOSER, vy, tz, slot).id.hex(),
        "value_hex": vy.hex(),
    }
    return out


def check_termination(sc: Scenario, learner: str, **kw) -> tuple[Scenario, Trace, Report]:
    sched = termination_schedule(sc, learner, **kw)
    trace = run(sched)
    return sched, trace, verdicts(trace.records)
