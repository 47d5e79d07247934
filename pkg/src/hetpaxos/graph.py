"""Learner graphs: quorum labels, safe-set edges, condensation and validity.

A :class:`LearnerGraph` is an immutable value.  Edges are keyed by the
sorted learner pair, self-pairs included, and a missing edge is the empty
family ("this pair never has to agree").
"""
from __future__ import annotations

import warnings
from collections.abc import Iterable, Mapping
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import NotCondensed, UnknownLearner
from .family import (
    AcceptorId,
    AcceptorSetFamily,
    Universe,
    masks_contain,
    masks_includes,
    minimal_satisfying,
    minimize_masks,
    product_masks,
)

LearnerId = str
Pair = tuple[LearnerId, LearnerId]

# Subset enumeration over 2**n acceptor sets is used by the derive_* helpers.
MAX_ENUMERATION_ACCEPTORS = 22


def pair(a: LearnerId, b: LearnerId) -> Pair:
    return (a, b) if a <= b else (b, a)


@dataclass(frozen=True)
class ExecutionFacts:
    """Which acceptors actually behaved safely / stayed live in a run."""

    real_safe: frozenset[AcceptorId]
    real_live: frozenset[AcceptorId]

    def __init__(self, real_safe: Iterable[AcceptorId], real_live: Iterable[AcceptorId]):
        object.__setattr__(self, "real_safe", frozenset(real_safe))
        object.__setattr__(self, "real_live", frozenset(real_live))


@dataclass(frozen=True)
class ValidityWitness:
    """A learner pair, safe set and quorum pair with no safe acceptor in common."""

    a: LearnerId
    b: LearnerId
    safe_set: frozenset[AcceptorId]
    q_a: frozenset[AcceptorId]
    q_b: frozenset[AcceptorId]

    def as_dict(self) -> dict:
        return {
            "learners": [self.a, self.b],
            "safe_set": sorted(self.safe_set),
            "q_a": sorted(self.q_a),
            "q_b": sorted(self.q_b),
        }


class LearnerGraph:
    def __init__(
        self,
        acceptors: Iterable[AcceptorId],
        quorums: Mapping[LearnerId, AcceptorSetFamily],
        edges: Mapping[tuple[LearnerId, LearnerId], AcceptorSetFamily] | None = None,
    ):
        listed = list(acceptors)
        self.acceptors: tuple[AcceptorId, ...] = tuple(sorted(set(listed)))
        if len(self.acceptors) != len(listed):
            raise ValueError("duplicate acceptor ids")
        self.learners: tuple[LearnerId, ...] = tuple(sorted(quorums))
        known = set(self.acceptors)
        self.quorums: dict[LearnerId, AcceptorSetFamily] = {}
        for lrn in self.learners:
            fam = quorums[lrn]
            if not fam.acceptors() <= known:
                raise ValueError(f"quorums of {lrn!r} mention unknown acceptors {sorted(fam.acceptors() - known)}")
            self.quorums[lrn] = fam
        self.edges: dict[Pair, AcceptorSetFamily] = {}
        for i, a in enumerate(self.learners):
            for b in self.learners[i:]:
                self.edges[(a, b)] = AcceptorSetFamily()
        for (a, b), fam in (edges or {}).items():
            for lrn in (a, b):
                if lrn not in self.quorums:
                    raise UnknownLearner(lrn)
            if not fam.acceptors() <= known:
                raise ValueError(f"edge {a}-{b} mentions unknown acceptors {sorted(fam.acceptors() - known)}")
            key = pair(a, b)
            self.edges[key] = self.edges[key].union(fam) if not self.edges[key].is_empty() else fam
        # graphs are immutable, so derived facts (condensation, validity) are memoized here
        self._memo: dict[str, object] = {}

    # -- accessors ---------------------------------------------------------
    def _check(self, lrn: LearnerId) -> None:
        if lrn not in self.quorums:
            raise UnknownLearner(lrn)

    def edge(self, a: LearnerId, b: LearnerId) -> AcceptorSetFamily:
        self._check(a)
        self._check(b)
        return self.edges[pair(a, b)]

    def quorum(self, a: LearnerId) -> AcceptorSetFamily:
        self._check(a)
        return self.quorums[a]

    @cached_property
    def universe(self) -> Universe:
        return Universe(self.acceptors)

    @cached_property
    def quorum_masks(self) -> dict[LearnerId, list[int]]:
        u = self.universe
        return {a: fam.masks(u) for a, fam in self.quorums.items()}

    @cached_property
    def edge_masks(self) -> dict[Pair, list[int]]:
        u = self.universe
        return {k: fam.masks(u) for k, fam in self.edges.items()}

    def edge_mask_list(self, a: LearnerId, b: LearnerId) -> list[int]:
        return self.edge_masks[pair(a, b)]

    def replace(
        self,
        quorums: Mapping[LearnerId, AcceptorSetFamily] | None = None,
        edges: Mapping[Pair, AcceptorSetFamily] | None = None,
    ) -> "LearnerGraph":
        q = dict(self.quorums)
        q.update(quorums or {})
        e = dict(self.edges)
        for k, v in (edges or {}).items():
            e[pair(*k)] = v
        return LearnerGraph(self.acceptors, q, e)

    def _with_edge_masks(self, masks: dict[Pair, list[int]]) -> "LearnerGraph":
        u = self.universe
        return LearnerGraph(
            self.acceptors, self.quorums, {k: AcceptorSetFamily.from_masks(v, u) for k, v in masks.items()}
        )

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, LearnerGraph):
            return NotImplemented
        return (self.acceptors, self.quorums, self.edges) == (other.acceptors, other.quorums, other.edges)

    def __hash__(self) -> int:
        return hash((self.acceptors, tuple(self.quorums.items()), tuple(self.edges.items())))

    def __repr__(self) -> str:
        return f"LearnerGraph(acceptors={len(self.acceptors)}, learners={list(self.learners)})"


# -- condensation ------------------------------------------------------------

def _condensed_masks(g: LearnerGraph) -> dict[Pair, list[int]]:
    """Floyd-Warshall closure over (family union, pairwise-union product).

    One pass reaches the fixpoint: going around a cycle only produces
    supersets of sets already present, so no path needs to revisit a node.
    """
    ls = g.learners
    n = len(ls)
    E = [[g.edge_mask_list(ls[i], ls[j]) for j in range(n)] for i in range(n)]
    for k in range(n):
        for i in range(n):
            eik = E[i][k]
            if not eik:
                continue
            for j in range(i, n):
                ekj = E[k][j]
                if not ekj:
                    continue
                prod = product_masks(eik, ekj)
                if masks_includes(E[i][j], prod):
                    continue
                merged = minimize_masks(E[i][j] + prod)
                E[i][j] = merged
                E[j][i] = merged
    return {(ls[i], ls[j]): E[i][j] for i in range(n) for j in range(i, n)}


def condense(g: LearnerGraph) -> LearnerGraph:
    """Close the edge labels under transitivity of agreement."""
    hit = g._memo.get("condensed")
    if hit is None:
        closed = _condensed_masks(g)
        if all(closed[k] == g.edge_masks[k] for k in closed):
            hit = g
        else:
            hit = g._with_edge_masks(closed)
            hit._memo["condensed"] = hit
        g._memo["condensed"] = hit
    return hit  # type: ignore[return-value]


def is_condensed(g: LearnerGraph) -> bool:
    return condense(g) is g


# -- validity -----------------------------------------------------------------

def _pair_violations(g: LearnerGraph, a: LearnerId, b: LearnerId, limit: int) -> list[ValidityWitness]:
    safe = g.edge_mask_list(a, b)
    qa = g.quorum_masks[a]
    qb = g.quorum_masks[b]
    if not safe or not qa or not qb:
        return []
    u = g.universe
    out: list[ValidityWitness] = []
    if len(u) <= 63:
        S = np.asarray(safe, dtype=np.uint64)
        QA = np.asarray(qa, dtype=np.uint64)
        QB = np.asarray(qb, dtype=np.uint64)
        X = (QA[:, None] & S[None, :]).ravel()
        xs, first = np.unique(X, return_index=True)
        bad = (xs[:, None] & QB[None, :]) == 0
        rows = np.nonzero(bad.any(axis=1))[0]
        for r in rows[:limit]:
            flat = int(first[r])
            i, j = divmod(flat, len(safe))
            k = int(np.argmax(bad[r]))
            out.append(ValidityWitness(a, b, u.members(safe[j]), u.members(qa[i]), u.members(qb[k])))
        return out
    seen: set[int] = set()
    for s in safe:
        for q1 in qa:
            x = q1 & s
            if x in seen:
                continue
            seen.add(x)
            for q2 in qb:
                if q2 & x == 0:
                    out.append(ValidityWitness(a, b, u.members(s), u.members(q1), u.members(q2)))
                    if len(out) >= limit:
                        return out
                    break
    return out


def validity_witnesses(g: LearnerGraph, limit: int = 16) -> list[ValidityWitness]:
    """All (up to ``limit``) violations of the intersection requirement,
    checked on the graph as given, without requiring condensation."""
    out: list[ValidityWitness] = []
    for a, b in g.edges:
        for w in _pair_violations(g, a, b, limit - len(out)):
            out.append(w)
        if b != a:
            for w in _pair_violations(g, b, a, limit - len(out)):
                out.append(w)
        if len(out) >= limit:
            break
    return out[:limit]


def check_validity(g: LearnerGraph, limit: int = 16) -> list[ValidityWitness]:
    """Witnesses of invalidity (empty when valid).  Requires a condensed graph."""
    if not is_condensed(g):
        raise NotCondensed("is_valid needs a condensed learner graph; call condense() first")
    return validity_witnesses(g, limit)


def is_valid(g: LearnerGraph) -> bool:
    hit = g._memo.get("valid")
    if hit is None:
        hit = g._memo["valid"] = not check_validity(g, limit=1)
    return hit  # type: ignore[return-value]


# -- execution predicates ---------------------------------------------------

def entangled(g: LearnerGraph, a: LearnerId, b: LearnerId, facts: ExecutionFacts) -> bool:
    return g.edge(a, b).contains(facts.real_safe)


def accurate(g: LearnerGraph, a: LearnerId, facts: ExecutionFacts) -> bool:
    return entangled(g, a, a, facts)


def terminating(g: LearnerGraph, a: LearnerId, facts: ExecutionFacts) -> bool:
    return g.quorum(a).contains(facts.real_live & facts.real_safe)


# -- bounds ---------------------------------------------------------------------

def _all_subsets(n: int) -> np.ndarray:
    if n > MAX_ENUMERATION_ACCEPTORS:
        raise ValueError(f"subset enumeration limited to {MAX_ENUMERATION_ACCEPTORS} acceptors")
    return np.arange(1 << n, dtype=np.uint64)


def derive_quorums_from_edges(g: LearnerGraph) -> dict[LearnerId, AcceptorSetFamily]:
    """Quorums that contain a strict majority of every safe set on every
    edge of the learner.

    A learner whose self-edge is empty has no safety requirement at all and
    gets the empty quorum family.
    """
    if not is_condensed(g):
        raise NotCondensed("derive_quorums_from_edges needs a condensed learner graph")
    u = g.universe
    n = len(u)
    T = _all_subsets(n)
    out: dict[LearnerId, AcceptorSetFamily] = {}
    for a in g.learners:
        if not g.edge_mask_list(a, a):
            out[a] = AcceptorSetFamily()
            continue
        safe_sets: set[int] = set()
        for b in g.learners:
            safe_sets.update(g.edge_mask_list(a, b))
        ok = np.ones(len(T), dtype=bool)
        for s in sorted(safe_sets):
            need = s.bit_count() // 2 + 1
            ok &= np.bitwise_count(T & np.uint64(s)) >= need
        out[a] = AcceptorSetFamily.from_masks(minimal_satisfying(n, ok), u)
    return out


def _intersections(qa: list[int], qb: list[int]) -> tuple[list[int], tuple[int, int] | None]:
    """Minimal pairwise intersections, plus one disjoint pair if any exists."""
    if max(max(qa), max(qb)) >> 63 == 0:
        A = np.asarray(qa, dtype=np.uint64)
        B = np.asarray(qb, dtype=np.uint64)
        X = A[:, None] & B[None, :]
        zero = np.argwhere(X == 0)
        if len(zero):
            i, j = zero[0]
            return [], (qa[int(i)], qb[int(j)])
        return minimize_masks(int(v) for v in np.unique(X)), None
    for x in qa:
        for y in qb:
            if x & y == 0:
                return [], (x, y)
    return minimize_masks(x & y for x in qa for y in qb), None


@dataclass(frozen=True)
class DerivedSafeSets:
    edges: dict[Pair, AcceptorSetFamily]
    warnings: list[dict]


def derive_safe_sets_from_quorums(g: LearnerGraph) -> DerivedSafeSets:
    """Minimal safe sets that put one acceptor in every quorum intersection.

    When some intersection across an edge is empty no safe set can work;
    that edge gets the empty family and a warning naming the quorum pair.
    """
    u = g.universe
    n = len(u)
    T = _all_subsets(n)
    edges: dict[Pair, AcceptorSetFamily] = {}
    notes: list[dict] = []
    for a, b in g.edges:
        qa = g.quorum_masks[a]
        qb = g.quorum_masks[b]
        if not qa or not qb:
            edges[(a, b)] = AcceptorSetFamily()
            continue
        inter, empty = _intersections(qa, qb)
        if empty is not None:
            x, y = empty
            notes.append({
                "learners": [a, b],
                "reason": "disjoint quorums",
                "q_a": sorted(u.members(x)),
                "q_b": sorted(u.members(y)),
            })
            warnings.warn(f"learners {a},{b} have disjoint quorums; no safe set exists", stacklevel=2)
            edges[(a, b)] = AcceptorSetFamily()
            continue
        ok = np.ones(len(T), dtype=bool)
        for i in inter:
            ok &= (T & np.uint64(i)) != 0
        edges[(a, b)] = AcceptorSetFamily.from_masks(minimal_satisfying(n, ok), u)
    return DerivedSafeSets(edges, notes)


def stated_edges_within_bound(g: LearnerGraph) -> bool:
    """True iff every stated safe set is among those derived from the
    stated quorums (the pairwise form of validity)."""
    derived = derive_safe_sets_from_quorums(g)
    return all(derived.edges[k].includes(fam) for k, fam in g.edges.items())


def shrink_safe_sets(g: LearnerGraph) -> LearnerGraph:
    """Tolerate one more failure everywhere: replace each minimal safe set by
    all of its one-smaller subsets."""
    masks: dict[Pair, list[int]] = {}
    for k, fam in g.edge_masks.items():
        shrunk = []
        for s in fam:
            m = s
            while m:
                low = m & -m
                shrunk.append(s ^ low)
                m ^= low
        masks[k] = minimize_masks(shrunk)
    return g._with_edge_masks(masks)
