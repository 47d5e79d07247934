"""The worked example configurations shipped as package data."""
from __future__ import annotations

import json
from importlib import resources

from . import graphfile
from .graph import LearnerGraph

# Short names in appendix order; the JSON files carry the same "name".
EXAMPLES: tuple[str, ...] = (
    "fully-homogeneous",
    "het-failures",
    "het-acceptors",
    "het-failures-acceptors",
    "acceptor-disagreement",
    "failure-disagreement",
    "het-learners-failures",
    "het-learners-acceptors",
    "het-learners-failures-acceptors",
)

# The stated labels of this one do not intersect safely; see README.
INVALID_AS_STATED = frozenset({"het-failures-acceptors"})

# The introductory blue/black/red example.
INTRO = "het-learners-failures-acceptors"


def _name_of(text: str) -> str:
    return json.loads(text)["name"]


def config_text(name: str) -> str:
    for entry in resources.files("hetpaxos.configs").iterdir():
        if entry.name.endswith(".json") and _name_of(entry.read_text()) == name:
            return entry.read_text()
    raise KeyError(name)


def load_example(name: str) -> LearnerGraph:
    """The graph as stated (not condensed)."""
    return graphfile.loads(config_text(name))


def config_path(name: str):
    for entry in resources.files("hetpaxos.configs").iterdir():
        if entry.name.endswith(".json") and _name_of(entry.read_text()) == name:
            return entry
    raise KeyError(name)
