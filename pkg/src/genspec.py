"""
Serialized generator specifications: the tuned ProbMap of a root type together
with the generation size and strategy, and the universe source it was tuned
for.
"""

import json
from dataclasses import dataclass, field
from enum import Enum

from adt_model import (
    PROB_TOLERANCE,
    complete_probmap,
    is_terminal,
    parse_universe,
    print_universe,
    universe_hash,
    validate_probmap,
)

REQUIRED_KEYS = ("root", "size", "strategy", "probabilities", "starProbabilities")


class GenSpecError(ValueError):
    pass


class Strategy(Enum):
    DRAGEN = "dragen"
    MEGADETH = "megadeth"
    DERIVE = "derive"


@dataclass(frozen=True)
class GenSpec:
    root: str
    size: int
    strategy: Strategy
    probabilities: dict
    star_probabilities: dict
    universe_hash: str
    universe_source: str
    excluded_types: tuple = field(default_factory=tuple)

    def to_json(self):
        return {
            "root": self.root,
            "size": self.size,
            "strategy": self.strategy.value,
            "probabilities": dict(self.probabilities),
            "starProbabilities": dict(self.star_probabilities),
            "excludedTypes": list(self.excluded_types),
            "universeHash": self.universe_hash,
            "universe": self.universe_source,
        }


def make_genspec(u, size, probabilities, stars, strategy=Strategy.DRAGEN, excluded_types=()):
    return GenSpec(
        root=u.root,
        size=size,
        strategy=strategy,
        probabilities=complete_probmap(u, probabilities),
        star_probabilities=dict(stars),
        universe_hash=universe_hash(u),
        universe_source=print_universe(u),
        excluded_types=tuple(sorted(excluded_types)),
    )


def _validate_stars(u, stars, excluded_types):
    for c, value in stars.items():
        if c not in u.family_constructors or not is_terminal(c, u):
            raise GenSpecError(f"{c} is not a terminal constructor of the family of {u.root}")
        if not value >= 0.0:
            raise GenSpecError(f"Star probability of {c} is negative or not a number")

    for type_id in u.family:
        terminals = [c for c in u.cons(type_id) if is_terminal(c, u)]
        missing = [c for c in terminals if c not in stars]
        if missing:
            raise GenSpecError(f"Missing star probabilities for {', '.join(missing)}")

        total = sum(stars[c] for c in terminals)
        if type_id in excluded_types and total == 0.0:
            continue
        if abs(total - 1.0) > PROB_TOLERANCE:
            raise GenSpecError(f"Star probabilities of {type_id} sum to {total}, not 1")


def load_genspec(text):
    """Parses a GenSpec document (or the 'spec' member of an optimize report)
    and the universe it embeds."""
    document = json.loads(text)
    if isinstance(document, dict) and "spec" in document:
        document = document["spec"]
    if not isinstance(document, dict):
        raise GenSpecError("A generator spec must be a JSON object")

    missing = [k for k in (*REQUIRED_KEYS, "universe") if k not in document]
    if missing:
        raise GenSpecError(f"Generator spec is missing {', '.join(missing)}")

    try:
        strategy = Strategy(document["strategy"])
    except ValueError as e:
        raise GenSpecError(f"Unknown strategy {document['strategy']!r}") from e

    size = document["size"]
    if not isinstance(size, int) or size < 0:
        raise GenSpecError(f"Generation size must be a nonnegative integer, got {size!r}")

    u = parse_universe(document["universe"], document["root"])
    expected_hash = universe_hash(u)
    if document.get("universeHash", expected_hash) != expected_hash:
        raise GenSpecError("universeHash does not match the embedded universe")

    excluded = tuple(document.get("excludedTypes", ()))
    probabilities = {c: float(v) for c, v in document["probabilities"].items()}
    validate_probmap(u, probabilities, excluded)
    stars = {c: float(v) for c, v in document["starProbabilities"].items()}
    _validate_stars(u, stars, excluded)

    spec = GenSpec(
        root=u.root,
        size=size,
        strategy=strategy,
        probabilities=complete_probmap(u, probabilities),
        star_probabilities=stars,
        universe_hash=expected_hash,
        universe_source=document["universe"],
        excluded_types=excluded,
    )
    return spec, u
