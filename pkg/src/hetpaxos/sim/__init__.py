"""Deterministic discrete-event simulation of heterogeneous-trust Paxos."""
from .engine import Trace, run
from .report import Report, verdicts
from .scenario import Latency, Proposal, Role, Scenario, byzantine, crash

__all__ = ["Latency", "Proposal", "Report", "Role", "Scenario", "Trace", "byzantine", "crash", "run", "verdicts"]
