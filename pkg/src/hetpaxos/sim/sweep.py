"""Seeded random scenario sweeps.

Every scenario is drawn from its own ``random.Random`` stream keyed by
(sweep seed, index), so a sweep is reproducible and any single scenario
can be regenerated on its own.  Runs are independent; with ``workers > 1``
they are farmed out to processes and collected back in index order.
"""
from __future__ import annotations

import functools
import json
import random
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

from ..appendix import EXAMPLES, INVALID_AS_STATED, load_example
from ..family import AcceptorSetFamily
from ..graph import LearnerGraph, condense, derive_safe_sets_from_quorums, is_valid, pair
from ..proposer import RetryPolicy
from .engine import run
from .report import verdicts
from .scenario import Latency, Override, Proposal, Role, Scenario, byzantine, crash


@dataclass(frozen=True)
class SweepConfig:
    count: int = 1000
    seed: int = 0
    max_acceptors: int = 9
    max_learners: int = 4
    max_byzantine: int = 2
    max_crash: int = 2
    max_proposals: int = 3
    max_time: int = 2000

    @classmethod
    def from_dict(cls, doc: dict) -> "SweepConfig":
        known = {k: int(v) for k, v in doc.items() if k in cls.__dataclass_fields__}
        return cls(**known)

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


# -- graphs -------------------------------------------------------------------
def _threshold_family(rng: random.Random, acceptors: list[str]) -> AcceptorSetFamily:
    pool = acceptors if rng.random() < 0.6 else sorted(rng.sample(acceptors, rng.randint(max(1, len(acceptors) - 2), len(acceptors))))
    k = rng.randint(len(pool) // 2 + 1, len(pool))
    fam = AcceptorSetFamily.any_k_of(k, pool)
    if rng.random() < 0.2:
        other = sorted(rng.sample(acceptors, rng.randint(1, len(acceptors))))
        fam = fam.union(AcceptorSetFamily.any_k_of(len(other) // 2 + 1, other))
    return fam


def random_valid_graph(rng: random.Random, max_acceptors: int, max_learners: int) -> LearnerGraph:
    """Threshold quorums, safe sets derived from them, then cross edges are
    dropped at random until the condensed graph is valid."""
    n = rng.randint(3, max(3, max_acceptors))
    acceptors = [f"a{i}" for i in range(n)]
    learners = [f"l{i}" for i in range(rng.randint(1, max_learners))]
    quorums = {lrn: _threshold_family(rng, acceptors) for lrn in learners}
    g = LearnerGraph(acceptors, quorums)
    with warnings.catch_warnings():
        # disjoint quorums just leave that edge empty
        warnings.simplefilter("ignore")
        edges = dict(derive_safe_sets_from_quorums(g).edges)
    # sometimes weaken an edge to a random part of its derived label
    for k, fam in list(edges.items()):
        if len(fam) > 1 and rng.random() < 0.3:
            sets = fam.sorted_sets()
            edges[k] = AcceptorSetFamily(rng.sample(sets, rng.randint(1, len(sets))))
    while True:
        cand = condense(g.replace(edges=edges))
        if is_valid(cand):
            return cand
        cross = sorted(k for k, fam in edges.items() if k[0] != k[1] and not fam.is_empty())
        if not cross:  # pragma: no cover - self edges alone are always valid
            return cand
        edges[rng.choice(cross)] = AcceptorSetFamily()


@functools.lru_cache(maxsize=None)
def _small_examples(max_acceptors: int, max_learners: int) -> tuple[str, ...]:
    out = []
    for e in EXAMPLES:
        g = load_example(e)
        if e not in INVALID_AS_STATED and len(g.acceptors) <= max_acceptors and len(g.learners) <= max_learners:
            out.append(e)
    return tuple(out)


def _graph(rng: random.Random, cfg: SweepConfig) -> tuple[LearnerGraph, str]:
    small = _small_examples(cfg.max_acceptors, cfg.max_learners)
    if small and rng.random() < 0.4:
        name = rng.choice(small)
        return load_example(name), name
    return random_valid_graph(rng, cfg.max_acceptors, cfg.max_learners), "random"


# -- adversaries and schedules ----------------------------------------------------
def _script(rng: random.Random, learners: tuple[str, ...], peers: list[str]) -> list[dict]:
    out = []
    for _ in range(rng.randint(1, 4)):
        kind = rng.choice(["1a", "1b", "2a", "2a"])
        e: dict = {"t": rng.randint(0, 40), "kind": kind, "refs": rng.choice(["known", "recent", "none"])}
        if kind == "1a":
            e["value"] = rng.choice(["v0", "v1", "evil"])
            e["ballot_time"] = rng.randint(0, 40)
        if kind == "2a":
            e["lrn"] = rng.choice(learners)
        if rng.random() < 0.5:
            e["to"] = sorted(rng.sample(peers, rng.randint(1, len(peers))))
        out.append(e)
    return out


def random_scenario(cfg: SweepConfig, index: int) -> Scenario:
    rng = random.Random(f"sweep/{cfg.seed}/{index}")
    g, gname = _graph(rng, cfg)
    accs = list(g.acceptors)
    peers = sorted(accs + list(g.learners))
    roles: dict[str, Role] = {}
    order = accs[:]
    rng.shuffle(order)
    nb = rng.randint(0, min(cfg.max_byzantine, len(accs)))
    for a in order[:nb]:
        s = rng.choice(["equivocate", "equivocate", "silent", "stale-replay", "script"])
        if s == "equivocate":
            roles[a] = byzantine("equivocate", forks=rng.randint(2, 3))
        elif s == "stale-replay":
            roles[a] = byzantine("stale-replay", max_extra=rng.randint(1, 12), replay_after=rng.randint(5, 30))
        elif s == "script":
            roles[a] = byzantine("script", script=_script(rng, g.learners, peers))
        else:
            roles[a] = byzantine("silent")
    nc = rng.randint(0, min(cfg.max_crash, len(accs) - nb))
    for a in order[nb : nb + nc]:
        roles[a] = crash(rng.randint(0, 30))

    values = ["v0", "v1", "v2"]
    props = []
    for i in range(rng.randint(1, cfg.max_proposals)):
        props.append(Proposal(f"p{i}", values[i].encode(), rng.randint(0, 10), 0, rng.randint(0, 2)))

    overrides = []
    for _ in range(rng.randint(0, 4)):
        overrides.append(
            Override(
                latency=rng.randint(0, 25),
                src=tuple(sorted(rng.sample(peers, rng.randint(1, len(peers))))) if rng.random() < 0.5 else None,
                dst=tuple(sorted(rng.sample(peers, rng.randint(1, len(peers))))) if rng.random() < 0.5 else None,
                kind=rng.choice([None, "1a", "1b", "2a"]),
                after=rng.choice([None, rng.randint(0, 20)]),
                before=rng.choice([None, rng.randint(10, 60)]),
            )
        )
    lat = Latency(default=rng.randint(1, 4), jitter=rng.randint(0, 5), overrides=tuple(overrides))
    seed = rng.randrange(1 << 30)
    return Scenario(
        g,
        props,
        roles,
        lat,
        seed=seed,
        max_time=cfg.max_time,
        retry=RetryPolicy(base=rng.randint(2, 8), multiplier=2.0, jitter=rng.randint(0, 4), seed=seed),
        name=f"sweep-{cfg.seed}-{index}-{gname}",
    )


# -- running ------------------------------------------------------------------------
def run_one(cfg: SweepConfig, index: int) -> dict:
    sc = random_scenario(cfg, index)
    rep = verdicts(run(sc).records)
    byz = sorted(a for a, r in sc.roles.items() if r.byzantine)
    crashed = sorted(a for a, r in sc.roles.items() if r.crashed)
    return {
        "record": "scenario",
        "index": index,
        "name": sc.name,
        "acceptors": len(sc.acceptors),
        "learners": len(sc.learners),
        "byzantine": byz,
        "crashed": crashed,
        "proposals": len(sc.proposals),
        "validity": rep.validity_ok,
        "agreement": rep.agreement_ok,
        "invariants": len(rep.invariants),
        "violations": rep.validity + rep.agreement + rep.invariants,
        "decisions": len(rep.decisions),
        "entangled_pairs": len(rep.entangled),
        "end": rep.end,
    }


def _run_star(args):
    return run_one(*args)


def sweep(cfg: SweepConfig, workers: int = 1) -> list[dict]:
    jobs = [(cfg, i) for i in range(cfg.count)]
    if workers > 1:
        with ProcessPoolExecutor(workers) as ex:
            rows = list(ex.map(_run_star, jobs, chunksize=8))
    else:
        rows = [run_one(*j) for j in jobs]
    summary = {
        "record": "sweep-summary",
        "config": cfg.to_dict(),
        "scenarios": len(rows),
        "validity_violations": sum(not r["validity"] for r in rows),
        "agreement_violations": sum(not r["agreement"] for r in rows),
        "invariant_violations": sum(r["invariants"] for r in rows),
        "decisions": sum(r["decisions"] for r in rows),
        "with_byzantine": sum(bool(r["byzantine"]) for r in rows),
        "with_crash": sum(bool(r["crashed"]) for r in rows),
    }
    return rows + [summary]


def to_jsonl(rows: list[dict]) -> str:
    return "".join(json.dumps(r, sort_keys=True, separators=(",", ":")) + "\n" for r in rows)


__all__ = ["SweepConfig", "random_scenario", "random_valid_graph", "run_one", "sweep", "to_jsonl", "pair"]
