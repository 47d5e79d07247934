"""Hash-identified protocol messages and the append-only store that holds them.

Canonical binary layout (all integers big-endian)::

    magic    4 bytes  b"HPX\\x01"
    kind     u8       0x1a | 0x1b | 0x2a
    slot     u32
    signer   u16 length + utf-8
    nrefs    u16, then nrefs x 32-byte message ids (in stored order)
    1a only: value  u32 length + bytes
             time   u64
             tiebreak u8 length + bytes
    2a only: lrn    u16 length + utf-8

A message id is the SHA3-256 digest of that encoding.  The debug text form
(:meth:`Message.debug_text`) is one line and meant for humans and traces.
"""
from __future__ import annotations

import bisect
import hashlib
import struct
from collections.abc import Iterable, Iterator
from dataclasses import dataclass
from functools import cached_property, total_ordering

from .errors import MessageDecodeError, MissingReference, No1aFound, UnknownMessage

MessageId = bytes

MAGIC = b"HPX\x01"
KIND_CODES = {"1a": 0x1A, "1b": 0x1B, "2a": 0x2A}
CODE_KINDS = {v: k for k, v in KIND_CODES.items()}
ID_LEN = 32


def digest(data: bytes) -> bytes:
    return hashlib.sha3_256(data).digest()


def ballot_tiebreak(value: bytes, proposer: str, slot: int = 0) -> bytes:
    """Tiebreak half of a ballot: hash of the value, the proposer and the slot."""
    p = proposer.encode()
    return digest(b"ballot" + struct.pack(">IH", len(value), len(p)) + value + p + struct.pack(">I", slot))


@total_ordering
@dataclass(frozen=True)
class Ballot:
    time: int
    tiebreak: bytes = b""

    def __lt__(self, other: "Ballot") -> bool:
        return (self.time, self.tiebreak) < (other.time, other.tiebreak)

    def short(self) -> str:
        return f"{self.time}.{self.tiebreak.hex()[:6]}"


@dataclass(frozen=True)
class Message:
    kind: str
    signer: str
    refs: tuple[MessageId, ...] = ()
    slot: int = 0
    value: bytes | None = None
    ballot: Ballot | None = None
    lrn: str | None = None

    def __post_init__(self) -> None:
        if self.kind not in KIND_CODES:
            raise ValueError(f"unknown message kind {self.kind!r}")
        # refs behave as an ordered set
        seen: dict[bytes, None] = {}
        for r in self.refs:
            if not isinstance(r, bytes) or len(r) != ID_LEN:
                raise ValueError("refs must be 32-byte message ids")
            seen.setdefault(r, None)
        object.__setattr__(self, "refs", tuple(seen))
        if self.kind == "1a":
            if self.value is None or self.ballot is None:
                raise ValueError("1a needs a value and a ballot")
            if self.lrn is not None:
                raise ValueError("1a carries no learner")
        else:
            if self.value is not None or self.ballot is not None:
                raise ValueError(f"{self.kind} carries no value or ballot of its own")
            if self.kind == "2a" and not self.lrn:
                raise ValueError("2a needs a learner")
            if self.kind == "1b" and self.lrn is not None:
                raise ValueError("1b carries no learner")
        if not (0 <= self.slot < 2**32):
            raise ValueError("slot out of range")

    # -- encoding ------------------------------------------------------------
    def serialize(self) -> bytes:
        signer = self.signer.encode()
        parts = [
            MAGIC,
            struct.pack(">BIH", KIND_CODES[self.kind], self.slot, len(signer)),
            signer,
            struct.pack(">H", len(self.refs)),
            *self.refs,
        ]
        if self.kind == "1a":
            parts += [
                struct.pack(">I", len(self.value)), self.value,
                struct.pack(">QB", self.ballot.time, len(self.ballot.tiebreak)), self.ballot.tiebreak,
            ]
        elif self.kind == "2a":
            lrn = self.lrn.encode()
            parts += [struct.pack(">H", len(lrn)), lrn]
        return b"".join(parts)

    @classmethod
    def deserialize(cls, data: bytes) -> "Message":
        return _decode(memoryview(data), exact=True)[0]

    @cached_property
    def id(self) -> MessageId:
        return digest(self.serialize())

    def debug_text(self) -> str:
        refs = ",".join(r.hex()[:8] for r in self.refs)
        head = f"{self.kind} {self.id.hex()[:8]} by={self.signer} slot={self.slot}"
        if self.kind == "1a":
            head += f" value={self.value!r} ballot={self.ballot.short()}"
        if self.kind == "2a":
            head += f" lrn={self.lrn}"
        return head + f" refs=[{refs}]"

    def __repr__(self) -> str:
        return f"Message({self.debug_text()})"


def _decode(buf: memoryview, exact: bool) -> tuple[Message, int]:
    try:
        if bytes(buf[:4]) != MAGIC:
            raise MessageDecodeError("bad magic")
        pos = 4
        code, slot, slen = struct.unpack_from(">BIH", buf, pos)
        pos += 7
        if code not in CODE_KINDS:
            raise MessageDecodeError(f"bad kind byte {code:#x}")
        signer = bytes(buf[pos:pos + slen]).decode()
        pos += slen
        (nrefs,) = struct.unpack_from(">H", buf, pos)
        pos += 2
        refs = tuple(bytes(buf[pos + i * ID_LEN: pos + (i + 1) * ID_LEN]) for i in range(nrefs))
        pos += nrefs * ID_LEN
        kind = CODE_KINDS[code]
        value = ballot = lrn = None
        if kind == "1a":
            (vlen,) = struct.unpack_from(">I", buf, pos)
            pos += 4
            value = bytes(buf[pos:pos + vlen])
            pos += vlen
            time, tlen = struct.unpack_from(">QB", buf, pos)
            pos += 9
            ballot = Ballot(time, bytes(buf[pos:pos + tlen]))
            pos += tlen
        elif kind == "2a":
            (llen,) = struct.unpack_from(">H", buf, pos)
            pos += 2
            lrn = bytes(buf[pos:pos + llen]).decode()
            pos += llen
        if pos > len(buf) or any(len(r) != ID_LEN for r in refs):
            raise MessageDecodeError("truncated message")
        if exact and pos != len(buf):
            raise MessageDecodeError("trailing bytes after message")
        return Message(kind, signer, refs, slot, value, ballot, lrn), pos
    except (struct.error, UnicodeDecodeError, ValueError) as exc:
        if isinstance(exc, MessageDecodeError):
            raise
        raise MessageDecodeError(str(exc)) from exc


def serialize_many(msgs: Iterable[Message]) -> bytes:
    """Length-prefixed concatenation, used for proofs and fixtures."""
    out = []
    for m in msgs:
        b = m.serialize()
        out.append(struct.pack(">I", len(b)))
        out.append(b)
    return b"".join(out)


def deserialize_many(data: bytes) -> list[Message]:
    out = []
    pos = 0
    view = memoryview(data)
    while pos < len(data):
        if pos + 4 > len(data):
            raise MessageDecodeError("truncated length prefix")
        (n,) = struct.unpack_from(">I", view, pos)
        pos += 4
        out.append(_decode(view[pos:pos + n], exact=True)[0])
        pos += n
    return out


# -- constructors -----------------------------------------------------------

def make_1a(proposer: str, value: bytes, time: int, slot: int = 0, refs: Iterable[MessageId] = ()) -> Message:
    return Message("1a", proposer, tuple(refs), slot, value, Ballot(time, ballot_tiebreak(value, proposer, slot)))


def make_1b(signer: str, refs: Iterable[MessageId], slot: int = 0) -> Message:
    return Message("1b", signer, tuple(refs), slot)


def make_2a(signer: str, refs: Iterable[MessageId], lrn: str, slot: int = 0) -> Message:
    return Message("2a", signer, tuple(refs), slot, lrn=lrn)


def sig_of(msg: Message) -> str:
    return msg.signer


def sigs_of(msgs: Iterable[Message]) -> set[str]:
    return {m.signer for m in msgs}


# -- store ---------------------------------------------------------------------

def iter_bits(mask: int) -> Iterator[int]:
    while mask:
        low = mask & -mask
        yield low.bit_length() - 1
        mask ^= low


@dataclass
class _Entry:
    msg: Message
    tran: int
    get1a: int  # index of the highest-ballot same-slot 1a in tran, or -1
    caught: frozenset[str]


class MessageStore:
    """Append-only, ref-closed message store.

    Every message gets an index in insertion order, which is a topological
    order of the reference DAG.  ``tran`` is kept as an int bitmask over
    indices, so set operations on causal pasts are single big-int ops.
    Because a message's causal past never changes, everything computed
    per message here is computed once at insert.
    """

    def __init__(self) -> None:
        self._entries: list[_Entry] = []
        self._index: dict[MessageId, int] = {}
        self.kind_mask: dict[str, int] = {"1a": 0, "1b": 0, "2a": 0}
        self.signer_mask: dict[str, int] = {}
        self.lrn_mask: dict[str, int] = {}
        self.slot_mask: dict[int, int] = {}
        # (slot, ballot) -> mask of messages whose b() is that ballot
        self.ballot_mask: dict[tuple[int, Ballot], int] = {}
        # per slot: 1a indices ordered by (ballot desc, index asc)
        self._1as_by_slot: dict[int, list[tuple[tuple, int]]] = {}
        self._signers: list[str] = []

    # -- insert ---------------------------------------------------------------
    def insert(self, msg: Message) -> MessageId:
        mid = msg.id
        if mid in self._index:
            return mid
        missing = [r for r in msg.refs if r not in self._index]
        if missing:
            raise MissingReference(missing)
        i = len(self._entries)
        bit = 1 << i
        tran = bit
        caught: set[str] = set()
        for r in msg.refs:
            e = self._entries[self._index[r]]
            tran |= e.tran
            caught |= e.caught
        if msg.kind == "1a":
            key = (_Desc(msg.ballot), i)
            bisect.insort(self._1as_by_slot.setdefault(msg.slot, []), (key, i))
        g = self._find_1a(tran, msg.slot)
        if msg.signer not in self.signer_mask:
            self.signer_mask[msg.signer] = 0
            self._signers.append(msg.signer)
        self.signer_mask[msg.signer] |= bit
        self._entries.append(_Entry(msg, tran, g, frozenset()))
        self._index[mid] = i
        # Caught: signer p is uncaught in x iff p's messages in tran(x) form a
        # chain.  For the latest such message l (other than x), that is
        # "everything else is in tran(l)" plus p uncaught in l.
        for p in self._signers:
            if p in caught:
                continue
            mine = self.signer_mask[p] & tran
            if not mine:
                continue
            rest = mine & ~bit if p == msg.signer else mine
            if not rest:
                continue
            latest = rest.bit_length() - 1
            le = self._entries[latest]
            if p in le.caught or (rest & ~le.tran):
                caught.add(p)
        self._entries[i].caught = frozenset(caught)
        self.kind_mask[msg.kind] |= bit
        self.slot_mask[msg.slot] = self.slot_mask.get(msg.slot, 0) | bit
        if msg.lrn is not None:
            self.lrn_mask[msg.lrn] = self.lrn_mask.get(msg.lrn, 0) | bit
        if g >= 0:
            k = (msg.slot, self._entries[g].msg.ballot)
            self.ballot_mask[k] = self.ballot_mask.get(k, 0) | bit
        return mid

    def _find_1a(self, tran: int, slot: int) -> int:
        for _, j in self._1as_by_slot.get(slot, ()):
            if (tran >> j) & 1:
                return j
        return -1

    # -- lookups ---------------------------------------------------------------
    def __contains__(self, mid: object) -> bool:
        return mid in self._index

    def __len__(self) -> int:
        return len(self._entries)

    def __iter__(self) -> Iterator[Message]:
        return (e.msg for e in self._entries)

    def index_of(self, mid: MessageId) -> int:
        try:
            return self._index[mid]
        except KeyError:
            raise UnknownMessage(mid.hex()) from None

    def get(self, mid: MessageId) -> Message:
        return self._entries[self.index_of(mid)].msg

    def at(self, i: int) -> Message:
        return self._entries[i].msg

    def id_at(self, i: int) -> MessageId:
        return self._entries[i].msg.id

    def tran_mask(self, mid: MessageId) -> int:
        return self._entries[self.index_of(mid)].tran

    def tran_at(self, i: int) -> int:
        return self._entries[i].tran

    def tran(self, mid: MessageId) -> set[MessageId]:
        return {self._entries[j].msg.id for j in iter_bits(self.tran_mask(mid))}

    def ids_of(self, mask: int) -> list[MessageId]:
        return [self._entries[j].msg.id for j in iter_bits(mask)]

    def mask_of(self, ids: Iterable[MessageId]) -> int:
        m = 0
        for mid in ids:
            m |= 1 << self.index_of(mid)
        return m

    def caught_at(self, i: int) -> frozenset[str]:
        return self._entries[i].caught

    def get1a_index(self, i: int) -> int:
        return self._entries[i].get1a

    def get1a_of_mask(self, tran: int, slot: int) -> int:
        return self._find_1a(tran, slot)

    # -- Get1a / b() / V() ---------------------------------------------------
    def get1a(self, mid: MessageId) -> MessageId:
        g = self._entries[self.index_of(mid)].get1a
        if g < 0:
            raise No1aFound(mid.hex())
        return self._entries[g].msg.id

    def ballot_of(self, mid: MessageId) -> Ballot:
        return self.get(self.get1a(mid)).ballot

    def value_of(self, mid: MessageId) -> bytes:
        return self.get(self.get1a(mid)).value

    def ballot_at(self, i: int) -> Ballot | None:
        g = self._entries[i].get1a
        return None if g < 0 else self._entries[g].msg.ballot

    def value_at(self, i: int) -> bytes | None:
        g = self._entries[i].get1a
        return None if g < 0 else self._entries[g].msg.value


class _Desc:
    """Sort key wrapper that reverses the order of a ballot."""

    __slots__ = ("b",)

    def __init__(self, b: Ballot):
        self.b = b

    def __lt__(self, other: "_Desc") -> bool:
        return other.b < self.b

    def __eq__(self, other: object) -> bool:
        return isinstance(other, _Desc) and other.b == self.b


def closure_messages(store: MessageStore, ids: Iterable[MessageId]) -> list[Message]:
    """The messages of ``ids`` plus their causal pasts, in store order."""
    mask = 0
    for mid in ids:
        mask |= store.tran_mask(mid)
    return [store.at(j) for j in iter_bits(mask)]
