"""
Cost functions: chi-square distance between the predicted constructor counts
of a ProbMap and a target distribution. Every cost is a weighted one; only,
without, onlyTypes and withoutTypes add constructors pinned to probability 0.
"""

import logging
import re
from dataclasses import dataclass

import numpy as np

from adt_model import (
    UniverseError,
    is_terminal,
    normalize_probmap,
    resolve_constructor,
    resolve_type,
    uniform_probmap,
    validate_probmap,
)
from prediction import predict_constructors

logger = logging.getLogger("costfn_logger")

_COST_RE = re.compile(r"^\s*(?P<name>[A-Za-z]+)\s*(?:\((?P<args>.*)\))?\s*$")


class CostSpecError(ValueError):
    pass


def chi_square(observed, expected):
    observed = np.asarray(observed, dtype=float)
    expected = np.asarray(expected, dtype=float)

    if observed.shape != expected.shape:
        raise CostSpecError(
            f"{len(observed)} observed values against {len(expected)} expected values"
        )
    if np.any(expected <= 0.0):
        raise CostSpecError("Expected values must be positive")

    return float(np.sum((observed - expected) ** 2 / expected))


@dataclass(frozen=True)
class CostFunction:
    name: str
    universe: object
    weights: tuple
    pinned: frozenset = frozenset()
    excluded_types: frozenset = frozenset()

    def __call__(self, size, p):
        report = predict_constructors(self.universe, p, size, self.pinned)
        observed = [report.per_constructor[c].total for c, _ in self.weights]
        expected = [weight * size for _, weight in self.weights]
        return chi_square(observed, expected)

    def constrain(self, p):
        """Pins excluded constructors to 0 and renormalizes the rest."""
        constrained = normalize_probmap(self.universe, p, self.pinned)
        return validate_probmap(self.universe, constrained, self.excluded_types)

    def initial_probmap(self):
        return self.constrain(uniform_probmap(self.universe))


def _family_constructor(u, name):
    try:
        ctor = resolve_constructor(u, name.strip())
    except UniverseError as e:
        raise CostSpecError(str(e)) from e

    if ctor not in u.family_constructors:
        raise CostSpecError(f"{ctor} is not generated by the branching family of {u.root}")
    return ctor


def _check_constraints(u, pinned):
    for type_id in u.family:
        ctors = u.cons(type_id)
        if all(c in pinned for c in ctors):
            raise CostSpecError(f"Exclusion removes every constructor of {type_id}")
        if all(c in pinned for c in ctors if is_terminal(c, u)):
            raise CostSpecError(
                f"Exclusion removes every terminal constructor of {type_id}, "
                f"generation could not terminate"
            )


def _build(name, u, weights, pinned=frozenset(), excluded_types=frozenset()):
    ordered = tuple((c, float(weights[c])) for c in u.family_constructors if c in weights)
    logger.debug(f"Cost {name}: weights {ordered}, pinned {sorted(pinned)}")
    return CostFunction(name, u, ordered, frozenset(pinned), frozenset(excluded_types))


def uniform_cost(u):
    return _build("uniform", u, {c: 1 for c in u.family_constructors})


def weighted_cost(u, spec):
    if not spec:
        raise CostSpecError("weighted needs at least one constructor")

    weights = {}
    for name, weight in dict(spec).items():
        if weight <= 0:
            raise CostSpecError(f"Weight of {name} must be positive")
        weights[_family_constructor(u, name)] = weight

    listed = ",".join(f"{c}={w:g}" for c, w in weights.items())
    return _build(f"weighted({listed})", u, weights)


def only_cost(u, whitelist):
    allowed = {_family_constructor(u, name) for name in whitelist}
    pinned = {c for c in u.family_constructors if c not in allowed}
    _check_constraints(u, pinned)
    return _build(
        f"only({','.join(sorted(allowed))})", u, {c: 1 for c in allowed}, pinned
    )


def without_cost(u, blacklist):
    pinned = {_family_constructor(u, name) for name in blacklist}
    _check_constraints(u, pinned)
    kept = {c: 1 for c in u.family_constructors if c not in pinned}
    return _build(f"without({','.join(sorted(pinned))})", u, kept, pinned)


def _type_constraints(u, excluded):
    if u.root in excluded:
        raise CostSpecError(f"The root type {u.root} cannot be excluded")

    pinned = set()
    for type_id in u.family:
        for c in u.cons(type_id):
            fields = u.constructors[c].fields
            if type_id in excluded or any(f.target in excluded for f in fields):
                pinned.add(c)

    for type_id in u.family:
        if type_id in excluded:
            continue
        ctors = u.cons(type_id)
        if all(c in pinned for c in ctors) or all(
            c in pinned for c in ctors if is_terminal(c, u)
        ):
            raise CostSpecError(
                f"Excluding {', '.join(sorted(excluded))} disconnects {type_id} "
                f"from any terminal constructor"
            )
    return pinned


def _family_types(u, names):
    types = set()
    for name in names:
        try:
            type_id = resolve_type(u, name.strip())
        except UniverseError as e:
            raise CostSpecError(str(e)) from e
        if type_id not in u.family:
            raise CostSpecError(f"{type_id} is not part of the family of {u.root}")
        types.add(type_id)
    return types


def only_types_cost(u, types):
    kept = _family_types(u, types)
    excluded = {t for t in u.family if t not in kept}
    pinned = _type_constraints(u, excluded)
    weights = {c: 1 for c in u.family_constructors if c not in pinned}
    return _build(f"onlyTypes({','.join(sorted(kept))})", u, weights, pinned, excluded)


def without_types_cost(u, types):
    excluded = _family_types(u, types)
    pinned = _type_constraints(u, excluded)
    weights = {c: 1 for c in u.family_constructors if c not in pinned}
    return _build(
        f"withoutTypes({','.join(sorted(excluded))})", u, weights, pinned, excluded
    )


def _split_args(args):
    if args is None or not args.strip():
        return []
    return [a.strip() for a in args.split(",") if a.strip()]


def parse_cost(text, u):
    """Parses the command-line cost syntax, e.g. 'weighted(Tree.LeafA=3)'."""
    match = _COST_RE.match(text)
    if not match:
        raise CostSpecError(f"Malformed cost function {text!r}")

    name, args = match.group("name"), _split_args(match.group("args"))

    if name == "uniform":
        if args:
            raise CostSpecError("uniform takes no arguments")
        return uniform_cost(u)

    if name == "weighted":
        spec = {}
        for arg in args:
            ctor, sep, weight = arg.partition("=")
            if not sep:
                raise CostSpecError(f"Expected Constructor=weight, got {arg!r}")
            try:
                spec[ctor.strip()] = float(weight)
            except ValueError as e:
                raise CostSpecError(f"Weight of {ctor.strip()} is not a number") from e
        return weighted_cost(u, spec)

    builders = {
        "only": only_cost,
        "without": without_cost,
        "onlyTypes": only_types_cost,
        "withoutTypes": without_types_cost,
    }
    if name not in builders:
        raise CostSpecError(f"Unknown cost function {name!r}")
    if name == "only" and not args:
        raise CostSpecError("only needs at least one constructor")
    if name == "onlyTypes" and not args:
        raise CostSpecError("onlyTypes needs at least one type")

    return builders[name](u, args)
