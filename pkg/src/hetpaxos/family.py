"""Upward-closed families of acceptor sets, stored as minimal antichains.

A family ``F`` here always means its upward closure: ``F.contains(S)`` holds
iff some minimal member of ``F`` is a subset of ``S``.  Quorum labels and
safe-set labels of a learner graph are both families of this kind.

Graph algorithms work on integer bitmasks over a fixed acceptor ordering
(a :class:`Universe`); the helpers below do the mask-level minimization,
products and subset enumeration.  When masks fit in 64 bits the heavy
loops go through numpy.
"""
from __future__ import annotations

from collections.abc import Iterable, Iterator
from itertools import combinations

import numpy as np

AcceptorId = str

_NUMPY_BITS = 63


def iter_bits(mask: int) -> Iterator[int]:
    """Yield the indices of set bits of ``mask`` in increasing order."""
    while mask:
        low = mask & -mask
        yield low.bit_length() - 1
        mask ^= low


def _minimize_numpy(arr: np.ndarray) -> list[int]:
    arr = np.unique(arr)
    order = np.lexsort((arr, np.bitwise_count(arr)))
    arr = arr[order]
    keep = np.ones(len(arr), dtype=bool)
    # Block the quadratic subset test so memory stays bounded.
    block = 2048
    for start in range(0, len(arr), block):
        cand = arr[start:start + block]
        prior = arr[:start + len(cand)][keep[:start + len(cand)]]
        sub = (prior[:, None] & cand[None, :]) == prior[:, None]
        # a candidate is dominated by any *other* kept mask that is a subset
        eq = prior[:, None] == cand[None, :]
        dominated = np.any(sub & ~eq, axis=0)
        keep[start:start + len(cand)] &= ~dominated
    return sorted(int(m) for m in arr[keep])


def minimize_masks(masks: Iterable[int]) -> list[int]:
    """Reduce a collection of masks to its minimal antichain, sorted."""
    unique = set(masks)
    if not unique:
        return []
    if len(unique) > 48 and max(unique) >> _NUMPY_BITS == 0:
        return _minimize_numpy(np.fromiter(unique, dtype=np.uint64, count=len(unique)))
    kept: list[int] = []
    for m in sorted(unique, key=lambda m: (m.bit_count(), m)):
        if not any(k & m == k for k in kept):
            kept.append(m)
    return sorted(kept)


def masks_contain(masks: Iterable[int], target: int) -> bool:
    """True iff some mask in ``masks`` is a subset of ``target``."""
    return any(m & target == m for m in masks)


def masks_includes(big: list[int], small: Iterable[int]) -> bool:
    """True iff the upward closure of ``big`` contains every mask of ``small``."""
    return all(masks_contain(big, m) for m in small)


def product_masks(left: list[int], right: list[int]) -> list[int]:
    """Minimal antichain of pairwise unions ``{s | t}``.

    This is the intersection of the two upward closures.
    """
    if not left or not right:
        return []
    if len(left) * len(right) > 256 and max(max(left), max(right)) >> _NUMPY_BITS == 0:
        a = np.asarray(left, dtype=np.uint64)
        b = np.asarray(right, dtype=np.uint64)
        return _minimize_numpy((a[:, None] | b[None, :]).ravel())
    return minimize_masks(s | t for s in left for t in right)


def minimal_satisfying(n_bits: int, predicate_ok: np.ndarray) -> list[int]:
    """Given a boolean array over all ``2**n_bits`` subsets describing an
    upward-closed property, return its minimal members."""
    idx = np.arange(1 << n_bits, dtype=np.int64)
    minimal = predicate_ok.copy()
    for i in range(n_bits):
        bit = 1 << i
        has = (idx & bit) != 0
        # removing bit i must break the property
        minimal &= ~(has & predicate_ok[idx ^ bit])
    return [int(m) for m in idx[minimal]]


class Universe:
    """A fixed ordering of acceptor ids used for bitmask encodings."""

    def __init__(self, acceptors: Iterable[AcceptorId]):
        self.ids: tuple[AcceptorId, ...] = tuple(sorted(set(acceptors)))
        self.index = {a: i for i, a in enumerate(self.ids)}
        self.full = (1 << len(self.ids)) - 1

    def __len__(self) -> int:
        return len(self.ids)

    def mask(self, members: Iterable[AcceptorId]) -> int:
        m = 0
        for a in members:
            m |= 1 << self.index[a]
        return m

    def members(self, mask: int) -> frozenset[AcceptorId]:
        return frozenset(self.ids[i] for i in iter_bits(mask))


class AcceptorSetFamily:
    """An upward-closed family of acceptor sets.

    Only the minimal members are stored.  Two families compare equal iff
    their minimal antichains are equal, so equality is equality of the
    upward closures.
    """

    __slots__ = ("_minimal", "_hash")

    def __init__(self, sets: Iterable[Iterable[AcceptorId]] = ()):
        candidates = {frozenset(s) for s in sets}
        minimal: list[frozenset[AcceptorId]] = []
        for s in sorted(candidates, key=len):
            if not any(k <= s for k in minimal):
                minimal.append(s)
        self._minimal = frozenset(minimal)
        self._hash = hash(self._minimal)

    @classmethod
    def from_masks(cls, masks: Iterable[int], universe: Universe) -> "AcceptorSetFamily":
        fam = cls.__new__(cls)
        fam._minimal = frozenset(universe.members(m) for m in minimize_masks(masks))
        fam._hash = hash(fam._minimal)
        return fam

    @classmethod
    def any_k_of(cls, k: int, pool: Iterable[AcceptorId]) -> "AcceptorSetFamily":
        """All ``k``-subsets of ``pool`` (the usual threshold family)."""
        pool = sorted(set(pool))
        if k > len(pool) or k < 0:
            return cls()
        return cls(combinations(pool, k))

    @property
    def minimal_sets(self) -> frozenset[frozenset[AcceptorId]]:
        return self._minimal

    def sorted_sets(self) -> list[list[AcceptorId]]:
        """Minimal sets in a canonical order (for serialization and display)."""
        return sorted((sorted(s) for s in self._minimal), key=lambda s: (len(s), s))

    def masks(self, universe: Universe) -> list[int]:
        return sorted(universe.mask(s) for s in self._minimal)

    def contains(self, members: Iterable[AcceptorId]) -> bool:
        target = frozenset(members)
        return any(s <= target for s in self._minimal)

    __contains__ = contains

    def is_empty(self) -> bool:
        return not self._minimal

    def acceptors(self) -> frozenset[AcceptorId]:
        out: set[AcceptorId] = set()
        for s in self._minimal:
            out |= s
        return frozenset(out)

    def union(self, other: "AcceptorSetFamily") -> "AcceptorSetFamily":
        """Family union (the upward closure of both)."""
        return AcceptorSetFamily(self._minimal | other._minimal)

    def includes(self, other: "AcceptorSetFamily") -> bool:
        """True iff every member of ``other`` is a member of ``self``."""
        return all(self.contains(s) for s in other._minimal)

    def __len__(self) -> int:
        return len(self._minimal)

    def __iter__(self) -> Iterator[frozenset[AcceptorId]]:
        return iter(sorted(self._minimal, key=lambda s: (len(s), sorted(s))))

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, AcceptorSetFamily):
            return NotImplemented
        return self._minimal == other._minimal

    def __hash__(self) -> int:
        return self._hash

    def __repr__(self) -> str:
        shown = ", ".join("{" + ",".join(s) + "}" for s in self.sorted_sets()[:6])
        more = "" if len(self._minimal) <= 6 else f", ... ({len(self._minimal)} sets)"
        return f"AcceptorSetFamily([{shown}{more}])"
