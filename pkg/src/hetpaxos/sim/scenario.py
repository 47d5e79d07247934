"""Scenario model and its JSON file format (``hetpaxos-scenario/1``).

A scenario is the complete, deterministic input of a simulation run: the
learner graph, the role of every acceptor, the proposals, the latency model
and the seed.  Identical scenarios produce identical traces.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from .. import graphfile
from ..appendix import load_example
from ..errors import GraphFormatError, InvalidScenario
from ..graph import ExecutionFacts, LearnerGraph, condense, is_valid
from ..messages import Message, digest
from ..proposer import RetryPolicy

FORMAT = "hetpaxos-scenario/1"

BYZANTINE_STRATEGIES = ("silent", "equivocate", "stale-replay", "script")


# -- values ---------------------------------------------------------------------
def encode_value(v: bytes) -> Any:
    try:
        return v.decode("utf-8")
    except UnicodeDecodeError:
        return {"hex": v.hex()}


def decode_value(v: Any) -> bytes:
    if isinstance(v, str):
        return v.encode("utf-8")
    if isinstance(v, dict) and isinstance(v.get("hex"), str):
        return bytes.fromhex(v["hex"])
    raise InvalidScenario(f"bad value {v!r}")


def _ids(v: Any) -> tuple[str, ...] | None:
    if v is None:
        return None
    if isinstance(v, str):
        return (v,)
    return tuple(v)


# -- roles ----------------------------------------------------------------------
@dataclass(frozen=True)
class Role:
    kind: str = "honest"  # honest | crash | byzantine
    at: int | None = None  # crash time
    strategy: str | None = None
    params: dict = field(default_factory=dict, hash=False, compare=True)

    @property
    def byzantine(self) -> bool:
        return self.kind == "byzantine"

    @property
    def crashed(self) -> bool:
        return self.kind == "crash"

    def to_json(self) -> Any:
        if self.kind == "honest":
            return "honest"
        if self.kind == "crash":
            return {"crash": self.at}
        if not self.params:
            return {"byzantine": self.strategy}
        return {"byzantine": dict(self.params, strategy=self.strategy)}

    @classmethod
    def from_json(cls, doc: Any) -> "Role":
        if doc == "honest" or doc is None:
            return cls()
        if isinstance(doc, dict) and "crash" in doc:
            return cls("crash", at=int(doc["crash"]))
        if isinstance(doc, dict) and "byzantine" in doc:
            spec = doc["byzantine"]
            if isinstance(spec, str):
                return cls("byzantine", strategy=spec)
            if isinstance(spec, dict):
                params = {k: v for k, v in spec.items() if k != "strategy"}
                return cls("byzantine", strategy=spec.get("strategy"), params=params)
        raise InvalidScenario(f"bad role {doc!r}")


def crash(at: int) -> Role:
    return Role("crash", at=at)


def byzantine(strategy: str, **params: Any) -> Role:
    return Role("byzantine", strategy=strategy, params=params)


# -- proposals ------------------------------------------------------------------
@dataclass(frozen=True)
class Proposal:
    proposer: str
    value: bytes
    time: int
    slot: int = 0
    retries: int = 0

    def to_json(self) -> dict:
        return {
            "proposer": self.proposer,
            "value": encode_value(self.value),
            "time": self.time,
            "slot": self.slot,
            "retries": self.retries,
        }

    @classmethod
    def from_json(cls, doc: dict) -> "Proposal":
        return cls(
            str(doc["proposer"]),
            decode_value(doc["value"]),
            int(doc.get("time", 0)),
            int(doc.get("slot", 0)),
            int(doc.get("retries", 0)),
        )


# -- latency --------------------------------------------------------------------
@dataclass(frozen=True)
class Override:
    latency: int
    src: tuple[str, ...] | None = None
    dst: tuple[str, ...] | None = None
    kind: str | None = None
    slot: int | None = None
    after: int | None = None  # send time >= after
    before: int | None = None  # send time < before

    def matches(self, src: str, dst: str, msg: Message, send: int) -> bool:
        return (
            (self.src is None or src in self.src)
            and (self.dst is None or dst in self.dst)
            and (self.kind is None or msg.kind == self.kind)
            and (self.slot is None or msg.slot == self.slot)
            and (self.after is None or send >= self.after)
            and (self.before is None or send < self.before)
        )

    def to_json(self) -> dict:
        out: dict[str, Any] = {"latency": self.latency}
        for k, v in (("from", self.src), ("to", self.dst)):
            if v is not None:
                out[k] = list(v)
        for k in ("kind", "slot", "after", "before"):
            if getattr(self, k) is not None:
                out[k] = getattr(self, k)
        return out

    @classmethod
    def from_json(cls, doc: dict) -> "Override":
        return cls(
            int(doc["latency"]),
            _ids(doc.get("from")),
            _ids(doc.get("to")),
            doc.get("kind"),
            doc.get("slot"),
            doc.get("after"),
            doc.get("before"),
        )


@dataclass(frozen=True)
class Window:
    """Messages to ``targets`` sent before ``end`` are delivered no later than
    max(send, start) + cap."""

    start: int
    end: int
    targets: frozenset[str]
    cap: int

    def to_json(self) -> dict:
        return {"start": self.start, "end": self.end, "targets": sorted(self.targets), "cap": self.cap}

    @classmethod
    def from_json(cls, doc: dict) -> "Window":
        return cls(int(doc["start"]), int(doc["end"]), frozenset(doc["targets"]), int(doc["cap"]))


@dataclass(frozen=True)
class Hold:
    """Messages of ``kind`` to ``targets`` that would land in [start, until)
    are held back to ``until``, except the listed message ids."""

    targets: frozenset[str]
    kind: str
    start: int
    until: int
    exempt: frozenset[str] = frozenset()  # message ids, hex

    def to_json(self) -> dict:
        return {
            "to": sorted(self.targets),
            "kind": self.kind,
            "start": self.start,
            "until": self.until,
            "except": sorted(self.exempt),
        }

    @classmethod
    def from_json(cls, doc: dict) -> "Hold":
        return cls(
            frozenset(doc["to"]),
            doc["kind"],
            int(doc.get("start", 0)),
            int(doc["until"]),
            frozenset(doc.get("except", ())),
        )


@dataclass(frozen=True)
class Latency:
    default: int = 1
    links: dict[tuple[str, str], int] = field(default_factory=dict, hash=False)
    groups: dict[str, tuple[str, ...]] = field(default_factory=dict, hash=False)
    intra: int | None = None
    inter: int | None = None
    jitter: int = 0
    overrides: tuple[Override, ...] = ()
    windows: tuple[Window, ...] = ()
    holds: tuple[Hold, ...] = ()

    def _group_of(self, node: str) -> str | None:
        for name, members in self.groups.items():
            if node in members:
                return name
        return None

    def base(self, src: str, dst: str) -> int:
        if (src, dst) in self.links:
            return self.links[(src, dst)]
        if self.groups:
            gs, gd = self._group_of(src), self._group_of(dst)
            if gs is not None and gd is not None:
                v = self.intra if gs == gd else self.inter
                if v is not None:
                    return v
        return self.default

    def delay(self, src: str, dst: str, msg: Message, send: int, seed: int) -> int:
        d = self.base(src, dst)
        if self.jitter > 0:
            h = digest(f"jitter|{seed}|{src}|{dst}|".encode() + msg.id)
            d += int.from_bytes(h[:8], "big") % (self.jitter + 1)
        for o in self.overrides:
            if o.matches(src, dst, msg, send):
                d = o.latency
                break
        return d

    def constrain(self, dst: str, msg: Message, send: int, t: int) -> int:
        """Apply delivery windows, then holds, to a tentative delivery time."""
        for w in self.windows:
            if dst in w.targets and send < w.end:
                t = min(t, max(send, w.start) + w.cap)
        for h in self.holds:
            if dst in h.targets and msg.kind == h.kind and h.start <= t < h.until and msg.id.hex() not in h.exempt:
                t = h.until
        return t

    @property
    def max_base(self) -> int:
        vals = [self.default, *self.links.values()]
        vals += [v for v in (self.intra, self.inter) if v is not None]
        return max(vals) + self.jitter

    def to_json(self) -> dict:
        out: dict[str, Any] = {"default": self.default}
        if self.links:
            out["links"] = [{"from": s, "to": d, "latency": v} for (s, d), v in sorted(self.links.items())]
        if self.groups:
            out["groups"] = {k: list(v) for k, v in sorted(self.groups.items())}
        if self.intra is not None:
            out["intra"] = self.intra
        if self.inter is not None:
            out["inter"] = self.inter
        if self.jitter:
            out["jitter"] = self.jitter
        if self.overrides:
            out["overrides"] = [o.to_json() for o in self.overrides]
        if self.windows:
            out["windows"] = [w.to_json() for w in self.windows]
        if self.holds:
            out["holds"] = [h.to_json() for h in self.holds]
        return out

    @classmethod
    def from_json(cls, doc: Any) -> "Latency":
        if doc is None:
            return cls()
        if isinstance(doc, int):
            return cls(default=doc)
        links = {(str(e["from"]), str(e["to"])): int(e["latency"]) for e in doc.get("links", ())}
        groups = {str(k): tuple(v) for k, v in doc.get("groups", {}).items()}
        return cls(
            default=int(doc.get("default", 1)),
            links=links,
            groups=groups,
            intra=doc.get("intra"),
            inter=doc.get("inter"),
            jitter=int(doc.get("jitter", 0)),
            overrides=tuple(Override.from_json(o) for o in doc.get("overrides", ())),
            windows=tuple(Window.from_json(w) for w in doc.get("windows", ())),
            holds=tuple(Hold.from_json(h) for h in doc.get("holds", ())),
        )


# -- scenario -------------------------------------------------------------------
@dataclass
class Scenario:
    graph: LearnerGraph
    proposals: list[Proposal] = field(default_factory=list)
    roles: dict[str, Role] = field(default_factory=dict)
    latency: Latency = field(default_factory=Latency)
    seed: int = 0
    max_time: int = 10_000
    mode: str = "single"  # single | chain
    slots: int = 1
    strategy: str = "A"  # chain strategy
    retry: RetryPolicy | None = None
    allow_invalid_graph: bool = False
    # filled in by termination_schedule
    termination: dict | None = None
    name: str = ""
    graph_source: dict | None = None  # how the graph was referenced in the file

    def role(self, acceptor: str) -> Role:
        return self.roles.get(acceptor, Role())

    @property
    def acceptors(self) -> tuple[str, ...]:
        return self.graph.acceptors

    @property
    def learners(self) -> tuple[str, ...]:
        return self.graph.learners

    @property
    def proposers(self) -> tuple[str, ...]:
        return tuple(sorted({p.proposer for p in self.proposals}))

    def retry_policy(self) -> RetryPolicy:
        return self.retry if self.retry is not None else RetryPolicy(seed=self.seed)

    def facts(self) -> ExecutionFacts:
        """Actually-safe = every acceptor that is not Byzantine; actually-live =
        every acceptor that is neither Byzantine nor crashed."""
        safe = [a for a in self.acceptors if not self.role(a).byzantine]
        live = [a for a in safe if not self.role(a).crashed]
        return ExecutionFacts(safe, live)

    def diagnostics(self) -> list[str]:
        out = []
        g = self.graph
        accs, lrns = set(g.acceptors), set(g.learners)
        if not self.allow_invalid_graph and not is_valid(condense(g)):
            out.append("graph: learner graph is not valid (set allow_invalid_graph to run anyway)")
        for a, r in sorted(self.roles.items()):
            if a not in accs:
                out.append(f"roles: {a!r} is not an acceptor")
            if r.kind not in ("honest", "crash", "byzantine"):
                out.append(f"roles: {a!r} has unknown kind {r.kind!r}")
            if r.kind == "crash" and (r.at is None or r.at < 0):
                out.append(f"roles: {a!r} crash time must be >= 0")
            if r.kind == "byzantine" and r.strategy not in BYZANTINE_STRATEGIES:
                out.append(f"roles: {a!r} has unknown strategy {r.strategy!r}")
        for i, p in enumerate(self.proposals):
            if p.proposer in accs or p.proposer in lrns:
                out.append(f"proposals[{i}]: proposer {p.proposer!r} collides with a graph node")
            if p.time < 0 or p.retries < 0 or p.slot < 0:
                out.append(f"proposals[{i}]: time, slot and retries must be >= 0")
            if self.mode == "single" and p.slot != 0:
                out.append(f"proposals[{i}]: slot must be 0 in single mode")
            if self.mode == "chain" and p.slot >= self.slots:
                out.append(f"proposals[{i}]: slot {p.slot} out of range")
        if self.mode == "chain" and self.strategy == "B":
            have = {p.slot for p in self.proposals}
            for s in sorted(have):
                if s > 0 and s - 1 not in have:
                    out.append(f"proposals: strategy B needs a slot {s - 1} proposal for slot {s} to reference")
        if self.mode not in ("single", "chain"):
            out.append(f"mode: unknown mode {self.mode!r}")
        if self.strategy not in ("A", "B"):
            out.append(f"mode: unknown chain strategy {self.strategy!r}")
        if self.slots < 1:
            out.append("mode: slots must be >= 1")
        if self.max_time < 0:
            out.append("max_time must be >= 0")
        lat = self.latency
        bad = [v for v in (lat.default, lat.intra, lat.inter, lat.jitter, *lat.links.values()) if v is not None and v < 0]
        bad += [o.latency for o in lat.overrides if o.latency < 0]
        if bad:
            out.append("latency: delays must be >= 0")
        return out

    def validate(self) -> None:
        diags = self.diagnostics()
        if diags:
            raise InvalidScenario("scenario does not validate", diags)

    # -- JSON ----------------------------------------------------------------
    def to_dict(self) -> dict:
        doc: dict[str, Any] = {
            "format": FORMAT,
            "graph": self.graph_source if self.graph_source is not None else graphfile.to_dict(self.graph),
            "proposals": [p.to_json() for p in self.proposals],
            "latency": self.latency.to_json(),
            "seed": self.seed,
            "max_time": self.max_time,
        }
        if self.name:
            doc["name"] = self.name
        roles = {a: r.to_json() for a, r in sorted(self.roles.items()) if r.kind != "honest"}
        if roles:
            doc["roles"] = roles
        if self.mode == "chain":
            doc["mode"] = {"chain": {"slots": self.slots, "strategy": self.strategy}}
        if self.retry is not None:
            r = self.retry
            doc["retry"] = {"base": r.base, "multiplier": r.multiplier, "jitter": r.jitter, "seed": r.seed}
        if self.allow_invalid_graph:
            doc["allow_invalid_graph"] = True
        if self.termination is not None:
            doc["termination"] = self.termination
        return doc

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"


def _graph_from(doc: Any, base: Path | None) -> LearnerGraph:
    if not isinstance(doc, dict):
        raise InvalidScenario("graph must be an object")
    if "example" in doc:
        return load_example(doc["example"])
    if "path" in doc:
        p = Path(doc["path"])
        if base is not None and not p.is_absolute():
            p = base / p
        return graphfile.load(p)
    return graphfile.from_dict(doc)


def from_dict(doc: dict, base: Path | None = None) -> Scenario:
    if not isinstance(doc, dict):
        raise InvalidScenario("scenario must be a JSON object")
    fmt = doc.get("format", FORMAT)
    if fmt != FORMAT:
        raise InvalidScenario(f"unsupported scenario format {fmt!r}")
    if "graph" not in doc:
        raise InvalidScenario("scenario needs a graph")
    try:
        g = _graph_from(doc["graph"], base)
    except (GraphFormatError, KeyError, OSError) as e:
        raise InvalidScenario(f"graph: {e}") from e
    src = doc["graph"] if ("example" in doc["graph"] or "path" in doc["graph"]) else None
    mode, slots, strategy = "single", 1, "A"
    m = doc.get("mode", "single")
    if isinstance(m, dict) and "chain" in m:
        mode = "chain"
        slots = int(m["chain"].get("slots", 1))
        strategy = str(m["chain"].get("strategy", "A"))
    elif m != "single":
        raise InvalidScenario(f"bad mode {m!r}")
    retry = None
    if "retry" in doc:
        r = doc["retry"]
        retry = RetryPolicy(
            int(r.get("base", 4)),
            float(r.get("multiplier", 2.0)),
            int(r.get("jitter", 3)),
            int(r.get("seed", doc.get("seed", 0))),
        )
    try:
        sc = Scenario(
            graph=g,
            proposals=[Proposal.from_json(p) for p in doc.get("proposals", ())],
            roles={str(a): Role.from_json(r) for a, r in doc.get("roles", {}).items()},
            latency=Latency.from_json(doc.get("latency")),
            seed=int(doc.get("seed", 0)),
            max_time=int(doc.get("max_time", 10_000)),
            mode=mode,
            slots=slots,
            strategy=strategy,
            retry=retry,
            allow_invalid_graph=bool(doc.get("allow_invalid_graph", False)),
            termination=doc.get("termination"),
            name=str(doc.get("name", "")),
            graph_source=src,
        )
    except (KeyError, TypeError, ValueError) as e:
        if isinstance(e, InvalidScenario):
            raise
        raise InvalidScenario(f"malformed scenario: {e}") from e
    return sc


def loads(text: str, base: Path | None = None) -> Scenario:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise InvalidScenario(f"not JSON: {e}") from e
    return from_dict(doc, base)


def load(path: str | Path) -> Scenario:
    p = Path(path)
    return loads(p.read_text(), p.parent)
