"""Exception types shared across the package.

Each error carries a short machine-readable ``code`` so the CLI can report
it on stderr without parsing messages.
"""
from __future__ import annotations


class HetPaxosError(Exception):
    code = "error"


class UnknownLearner(HetPaxosError, KeyError):
    code = "unknown-learner"


class NotCondensed(HetPaxosError):
    code = "not-condensed"


class GraphFormatError(HetPaxosError, ValueError):
    code = "bad-graph"


class MissingReference(HetPaxosError):
    code = "missing-reference"

    def __init__(self, ids):
        self.ids = tuple(ids)
        super().__init__(f"{len(self.ids)} unknown reference(s): " + ", ".join(i.hex()[:12] for i in self.ids))


class UnknownMessage(HetPaxosError, KeyError):
    code = "unknown-message"


class No1aFound(HetPaxosError):
    code = "no-1a"


class MessageDecodeError(HetPaxosError, ValueError):
    code = "bad-message"


class InvalidScenario(HetPaxosError, ValueError):
    code = "invalid-scenario"

    def __init__(self, message: str, diagnostics=None):
        super().__init__(message)
        self.diagnostics = list(diagnostics or [])


class NotTerminating(HetPaxosError):
    code = "not-terminating"
