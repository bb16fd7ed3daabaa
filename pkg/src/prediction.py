"""
Expected constructor counts of size-bounded generators, modelled as
multi-type Galton-Watson branching processes over the root's family.

Generation k of the process holds the constructors placed at depth k of a
generated value. A generator of size n draws levels 0..n-1 from the full
ProbMap and fills the placeholders left at level n with terminal
constructors only, so a prediction is the branching population up to level
n-1 plus a last-level correction for terminals.
"""

import logging
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from adt_model import branching_factor, build_cdg, is_terminal

EXTINCTION_TOLERANCE = 1e-12
EXTINCTION_MAX_ITERATIONS = 1_000_000

logger = logging.getLogger("prediction_logger")


class PredictionError(ValueError):
    pass


class Granularity(Enum):
    CONSTRUCTOR = "constructor"
    TYPE = "type"


@dataclass(frozen=True, eq=False)
class MeanMatrix:
    granularity: Granularity
    index: tuple
    entries: np.ndarray

    def __getitem__(self, key):
        row, col = key
        return float(self.entries[self.index.index(row), self.index.index(col)])


@dataclass(frozen=True, eq=False)
class PopulationVector:
    index: tuple
    values: np.ndarray

    def __getitem__(self, key):
        return float(self.values[self.index.index(key)])

    def as_dict(self):
        return {k: float(v) for k, v in zip(self.index, self.values)}


@dataclass(frozen=True)
class ConstructorPrediction:
    branching: float
    last_level: float

    @property
    def total(self):
        return self.branching + self.last_level


@dataclass(frozen=True)
class PredictionReport:
    size: int
    per_constructor: dict
    per_foreign: dict = field(default_factory=dict)

    def totals(self):
        return {c: pred.total for c, pred in self.per_constructor.items()}

    def expected(self, ctor):
        if ctor in self.per_constructor:
            return self.per_constructor[ctor].total
        return self.per_foreign[ctor]

    def to_json(self, extinction=None):
        document = {
            "size": self.size,
            "expected": self.totals(),
            "branching": {c: p.branching for c, p in self.per_constructor.items()},
            "lastLevel": {c: p.last_level for c, p in self.per_constructor.items()},
            "foreign": dict(self.per_foreign),
        }
        if extinction is not None:
            document["extinction"] = extinction.as_dict()
        return document


def _require_probabilities(p, ctors):
    missing = [c for c in ctors if c not in p]
    if missing:
        raise PredictionError(f"Missing probability for {', '.join(missing)}")


def _family_branching(u, ctors):
    """beta(T, C) for every constructor C in ctors (rows) and family type T
    (columns)."""
    return np.array(
        [[branching_factor(c, t, u) for t in u.family] for c in ctors], dtype=float
    )


def mean_matrix_constructors(u, p):
    ctors = u.family_constructors
    _require_probabilities(p, ctors)

    type_index = [u.family.index(u.type_of(c)) for c in ctors]
    beta = _family_branching(u, ctors)
    probs = np.array([p[c] for c in ctors])

    # m[i, j] = beta(type(j), i) * p_j
    entries = beta[:, type_index] * probs[None, :]
    return MeanMatrix(Granularity.CONSTRUCTOR, ctors, entries)


def mean_matrix_types(u, p):
    _require_probabilities(p, u.family_constructors)

    entries = np.zeros((len(u.family), len(u.family)))
    for row, type_id in enumerate(u.family):
        ctors = u.cons(type_id)
        probs = np.array([p[c] for c in ctors])
        entries[row] = probs @ _family_branching(u, ctors)
    return MeanMatrix(Granularity.TYPE, u.family, entries)


def initial_population(u, p, granularity):
    if granularity == Granularity.TYPE:
        values = np.array([1.0 if t == u.root else 0.0 for t in u.family])
        return PopulationVector(u.family, values)

    ctors = u.family_constructors
    root_ctors = set(u.cons(u.root))
    _require_probabilities(p, root_ctors)
    values = np.array([p[c] if c in root_ctors else 0.0 for c in ctors])
    return PopulationVector(ctors, values)


def _check_dimensions(g0, M):
    if tuple(g0.index) != tuple(M.index):
        raise PredictionError(
            f"Population of dimension {len(g0.index)} does not match a "
            f"{len(M.index)}x{len(M.index)} mean matrix"
        )


def _generations(g0, M, n):
    _check_dimensions(g0, M)
    current = np.array(g0.values, dtype=float)
    generations = [current]
    for _ in range(n):
        current = current @ M.entries
        generations.append(current)
    return generations


def expected_generation(g0, M, n):
    return PopulationVector(g0.index, _generations(g0, M, n)[-1])


def expected_population(g0, M, n):
    return PopulationVector(g0.index, np.sum(_generations(g0, M, n), axis=0))


def closed_form_population(g0, M, n):
    """E[G0]^T (I - M^(n+1)) (I - M)^-1; only valid when I - M is invertible."""
    _check_dimensions(g0, M)
    identity = np.eye(len(M.index))
    shifted = identity - M.entries

    condition = np.linalg.cond(shifted)
    if not np.isfinite(condition) or condition > 1e12:
        raise PredictionError("I - M is singular, use expected_population")

    rhs = g0.values @ (identity - np.linalg.matrix_power(M.entries, n + 1))
    return PopulationVector(g0.index, np.linalg.solve(shifted.T, rhs))


def star_probs(u, p, pinned=frozenset()):
    stars = {}
    for type_id in u.family:
        terminals = [c for c in u.cons(type_id) if is_terminal(c, u)]
        if not terminals:
            raise PredictionError(
                f"{type_id} has no terminal constructor, generation cannot terminate"
            )
        _require_probabilities(p, terminals)

        total = sum(p[c] for c in terminals)
        if total > 0.0:
            for c in terminals:
                stars[c] = p[c] / total
            continue

        candidates = [c for c in terminals if c not in pinned]
        if not candidates:
            # excluded type, never reached
            stars.update({c: 0.0 for c in terminals})
            continue

        logger.warning(
            f"All terminals of {type_id} have probability 0, "
            f"falling back to uniform over {', '.join(candidates)}"
        )
        for c in terminals:
            stars[c] = 1.0 / len(candidates) if c in candidates else 0.0

    return stars


def predict_constructors(u, p, size, pinned=frozenset()):
    if size < 1:
        raise PredictionError(f"Generation size must be positive, got {size}")

    M = mean_matrix_types(u, p)
    g0 = initial_population(u, p, Granularity.TYPE)
    generations = _generations(g0, M, size - 1)

    population = np.sum(generations, axis=0)
    # placeholders left at the last level, filled by terminals
    last_level = generations[-1] @ M.entries
    stars = star_probs(u, p, pinned)

    per_constructor = {}
    for c in u.family_constructors:
        t = u.family.index(u.type_of(c))
        branching = float(population[t] * p[c])
        fill = float(stars[c] * last_level[t]) if c in stars else 0.0
        per_constructor[c] = ConstructorPrediction(branching, fill)

    logger.debug(f"Prediction at size {size}: {per_constructor}")
    return PredictionReport(size, per_constructor)


def predict_constructors_direct(u, p, size, pinned=frozenset()):
    """Same report as predict_constructors, computed over the mean matrix of
    constructors."""
    if size < 1:
        raise PredictionError(f"Generation size must be positive, got {size}")

    M = mean_matrix_constructors(u, p)
    g0 = initial_population(u, p, Granularity.CONSTRUCTOR)
    generations = _generations(g0, M, size - 1)

    population = np.sum(generations, axis=0)
    beta = _family_branching(u, M.index)
    last_level = generations[-1] @ beta
    stars = star_probs(u, p, pinned)

    per_constructor = {}
    for i, c in enumerate(M.index):
        t = u.family.index(u.type_of(c))
        fill = float(stars[c] * last_level[t]) if c in stars else 0.0
        per_constructor[c] = ConstructorPrediction(float(population[i]), fill)

    return PredictionReport(size, per_constructor)


def predict_foreign(u, p, foreign_probs, report):
    cdg = build_cdg(u)

    parents = {}
    for edge in cdg.edges:
        parents.setdefault(edge.child, []).append(edge)

    expected = {c: report.per_constructor[c].total for c in u.family_constructors}

    def count(ctor):
        if ctor in expected:
            return expected[ctor]
        if ctor not in foreign_probs:
            raise PredictionError(f"Missing probability for {ctor}")
        expected[ctor] = foreign_probs[ctor] * sum(
            count(edge.parent) * edge.multiplicity for edge in parents[ctor]
        )
        return expected[ctor]

    return {c: count(c) for c in cdg.nodes if c not in u.family_constructors}


def extinction_probability(u, p):
    ctors = u.family_constructors
    _require_probabilities(p, ctors)

    beta = _family_branching(u, ctors)
    probs = np.array([p[c] for c in ctors])
    owner = np.array([u.family.index(u.type_of(c)) for c in ctors])

    # least fixpoint of q_t = sum_C p_C * prod_T q_T^beta(T, C)
    q = np.zeros(len(u.family))
    for iteration in range(EXTINCTION_MAX_ITERATIONS):
        offspring = np.prod(q[None, :] ** beta, axis=1)
        updated = np.zeros(len(u.family))
        np.add.at(updated, owner, probs * offspring)

        if np.max(np.abs(updated - q)) < EXTINCTION_TOLERANCE:
            q = updated
            break
        q = updated
    else:
        logger.warning(
            f"Extinction iteration stopped after {EXTINCTION_MAX_ITERATIONS} steps"
        )

    return PopulationVector(u.family, np.clip(q, 0.0, 1.0))
