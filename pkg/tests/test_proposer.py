import pytest

from hetpaxos.proposer import ProposerState, RetryPolicy


class TestProposer:
    def test_ballot_uses_time_and_hash(self):
        p = ProposerState("p")
        m = p.propose(b"x", 5)
        assert m.kind == "1a" and m.ballot.time == 5 and m.value == b"x"

    def test_ballot_times_strictly_increase(self):
        p = ProposerState("p")
        times = [p.propose(b"x", t).ballot.time for t in (3, 3, 1, 9)]
        assert times == [3, 4, 5, 9]

    def test_prev_reference(self):
        p = ProposerState("p")
        a = p.propose(b"x", 0)
        b = p.propose(b"y", 1, slot=1, prev=a.id)
        assert b.refs == (a.id,) and b.slot == 1

    def test_backoff_is_exponential_plus_jitter(self):
        p = ProposerState("p", RetryPolicy(base=4, multiplier=2.0, jitter=0))
        assert [p.next_retry(i) for i in range(4)] == [4, 8, 16, 32]
        j = ProposerState("p", RetryPolicy(base=4, jitter=3, seed=7))
        delays = [j.next_retry(i) for i in range(5)]
        assert all(4 * 2**i <= d <= 4 * 2**i + 3 for i, d in enumerate(delays))
        assert delays == [ProposerState("p", RetryPolicy(base=4, jitter=3, seed=7)).next_retry(i) for i in range(5)]

    def test_negative_attempt(self):
        with pytest.raises(ValueError):
            ProposerState("p").next_retry(-1)
