"""Proposers: ballot construction and retry-with-backoff."""
from __future__ import annotations

import random
from dataclasses import dataclass

from .messages import Message, MessageId, make_1a


@dataclass(frozen=True)
class RetryPolicy:
    base: int = 4
    multiplier: float = 2.0
    jitter: int = 3
    seed: int = 0


class ProposerState:
    def __init__(self, me: str, retry: RetryPolicy | None = None):
        self.me = me
        self.retry = retry or RetryPolicy()
        self.last_time: int | None = None
        self.proposed: list[Message] = []

    def propose(self, value: bytes, now: int, slot: int = 0, prev: MessageId | None = None) -> Message:
        """A 1a for ``value`` with ballot (now, hash(value, me, slot)).

        Ballot times from one proposer strictly increase: if ``now`` does not
        exceed the previous proposal's time it is bumped past it.
        """
        t = now
        if self.last_time is not None and t <= self.last_time:
            t = self.last_time + 1
        self.last_time = t
        msg = make_1a(self.me, value, t, slot, () if prev is None else (prev,))
        self.proposed.append(msg)
        return msg

    def next_retry(self, attempt: int) -> int:
        """Delay before retry number ``attempt`` (0-based): base * mult^attempt
        plus a jitter drawn from a stream seeded by (seed, proposer, attempt)."""
        if attempt < 0:
            raise ValueError("attempt must be non-negative")
        p = self.retry
        rng = random.Random(f"{p.seed}/{self.me}/{attempt}")
        jitter = rng.randint(0, p.jitter) if p.jitter > 0 else 0
        return int(p.base * p.multiplier ** attempt) + jitter
