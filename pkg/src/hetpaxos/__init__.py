"""Heterogeneous-trust Paxos: learner graphs, the protocol state machines, and a
deterministic network simulator for exercising them."""
from .family import AcceptorSetFamily
from .graph import (
    ExecutionFacts,
    LearnerGraph,
    accurate,
    check_validity,
    condense,
    derive_quorums_from_edges,
    derive_safe_sets_from_quorums,
    entangled,
    is_condensed,
    is_valid,
    terminating,
)

__all__ = [
    "AcceptorSetFamily",
    "ExecutionFacts",
    "LearnerGraph",
    "accurate",
    "check_validity",
    "condense",
    "derive_quorums_from_edges",
    "derive_safe_sets_from_quorums",
    "entangled",
    "is_condensed",
    "is_valid",
    "terminating",
]

__version__ = "0.1.0"
