"""JSON graph files (``format: "hetpaxos-graph/1"``).

Layout::

    {
      "format": "hetpaxos-graph/1",
      "name": "optional label",
      "acceptors": ["A", "B", ...],
      "learners": ["blue", "red"],
      "quorums": {"blue": [<set-spec>, ...], ...},
      "edges": [{"learners": ["blue", "red"], "safe_sets": [<set-spec>, ...]}, ...]
    }

A ``<set-spec>`` is either a plain list of acceptor ids, or a shorthand:

* ``{"any": k, "of": [ids]}`` stands for every k-subset of the pool;
* ``{"combine": [<set-spec-list>, ...]}`` takes one member from each
  listed group and unions them (so "any 2 blue plus any 2 black" is
  ``{"combine": [[{"any": 2, "of": blue}], [{"any": 2, "of": black}]]}``).

Edges not listed have the empty family.  :func:`dump` always writes the
explicit minimal sets, so ``load(dump(g)) == g``.
"""
from __future__ import annotations

import json
from itertools import combinations, product
from pathlib import Path
from typing import Any

from .errors import GraphFormatError
from .family import AcceptorSetFamily
from .graph import LearnerGraph

FORMAT = "hetpaxos-graph/1"


def _expand(spec: Any) -> list[frozenset[str]]:
    if isinstance(spec, list):
        if not all(isinstance(x, str) for x in spec):
            raise GraphFormatError(f"set must be a list of acceptor ids: {spec!r}")
        return [frozenset(spec)]
    if isinstance(spec, dict):
        if "any" in spec:
            pool = spec.get("of")
            k = spec["any"]
            if not isinstance(k, int) or not isinstance(pool, list):
                raise GraphFormatError(f"bad 'any' shorthand: {spec!r}")
            return [frozenset(c) for c in combinations(sorted(set(pool)), k)]
        if "combine" in spec:
            groups = [expand_list(g) for g in spec["combine"]]
            return [frozenset().union(*choice) for choice in product(*groups)]
    raise GraphFormatError(f"unrecognised set spec: {spec!r}")


def expand_list(specs: Any) -> list[frozenset[str]]:
    if not isinstance(specs, list):
        raise GraphFormatError(f"expected a list of set specs, got {specs!r}")
    out: list[frozenset[str]] = []
    for s in specs:
        out.extend(_expand(s))
    return out


def from_dict(doc: dict) -> LearnerGraph:
    if doc.get("format") != FORMAT:
        raise GraphFormatError(f"expected format {FORMAT!r}, got {doc.get('format')!r}")
    try:
        acceptors = list(doc["acceptors"])
        learners = list(doc["learners"])
        quorums = {lrn: AcceptorSetFamily(expand_list(doc["quorums"].get(lrn, []))) for lrn in learners}
        extra = set(doc["quorums"]) - set(learners)
        if extra:
            raise GraphFormatError(f"quorums given for undeclared learners {sorted(extra)}")
        edges: dict[tuple[str, str], AcceptorSetFamily] = {}
        for e in doc.get("edges", []):
            pair = e["learners"]
            if len(pair) != 2:
                raise GraphFormatError(f"edge needs exactly two learners: {pair!r}")
            key = tuple(sorted(pair))
            fam = AcceptorSetFamily(expand_list(e["safe_sets"]))
            edges[key] = edges[key].union(fam) if key in edges else fam
        return LearnerGraph(acceptors, quorums, edges)
    except GraphFormatError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise GraphFormatError(f"malformed graph document: {exc}") from exc


def to_dict(g: LearnerGraph, name: str | None = None) -> dict:
    doc: dict[str, Any] = {"format": FORMAT}
    if name:
        doc["name"] = name
    doc["acceptors"] = list(g.acceptors)
    doc["learners"] = list(g.learners)
    doc["quorums"] = {a: g.quorums[a].sorted_sets() for a in g.learners}
    doc["edges"] = [
        {"learners": [a, b], "safe_sets": fam.sorted_sets()}
        for (a, b), fam in sorted(g.edges.items())
        if not fam.is_empty()
    ]
    return doc


def loads(text: str) -> LearnerGraph:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise GraphFormatError(f"not JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise GraphFormatError("graph document must be a JSON object")
    return from_dict(doc)


def dumps(g: LearnerGraph, name: str | None = None) -> str:
    return json.dumps(to_dict(g, name), indent=1, sort_keys=False) + "\n"


def load(path: str | Path) -> LearnerGraph:
    return loads(Path(path).read_text())


def dump(g: LearnerGraph, path: str | Path, name: str | None = None) -> None:
    Path(path).write_text(dumps(g, name))
