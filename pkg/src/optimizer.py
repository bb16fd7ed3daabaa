"""
Greedy best-neighbor local search over per-type probability simplices.
"""

import logging
from dataclasses import dataclass, field
from enum import Enum

from adt_model import ProbMapError, normalize_probmap
from genspec import Strategy, make_genspec
from prediction import predict_constructors, star_probs
from util import LogLevel, log_and_print

logger = logging.getLogger("optimizer_logger")


@dataclass(frozen=True)
class SearchConfig:
    delta: float = 0.01
    epsilon: float = 1e-6
    max_steps: int = 10_000
    quantum: float = 1e-6

    def __post_init__(self):
        if not 0.0 < self.delta < 1.0:
            raise ValueError(f"delta must lie in (0, 1), got {self.delta}")
        if not self.epsilon > 0.0:
            raise ValueError(f"epsilon must be positive, got {self.epsilon}")
        if self.max_steps < 1:
            raise ValueError(f"max_steps must be at least 1, got {self.max_steps}")
        if not self.quantum > 0.0:
            raise ValueError(f"quantum must be positive, got {self.quantum}")

    @classmethod
    def from_config(cls, section, **overrides):
        values = {
            "delta": section.getfloat("delta", cls.delta),
            "epsilon": section.getfloat("epsilon", cls.epsilon),
            "max_steps": section.getint("max_steps", cls.max_steps),
            "quantum": section.getfloat("quantum", cls.quantum),
        }
        values.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**values)


class SearchOutcome(Enum):
    LOCAL_MINIMUM = "LocalMinimum"
    EPSILON_STOP = "EpsilonStop"
    STEP_CAP = "StepCap"


@dataclass
class SearchTrace:
    steps: list = field(default_factory=list)
    outcome: SearchOutcome = None
    evaluations: int = 0

    @property
    def moves(self):
        return len(self.steps) - 1

    def summary(self):
        return {
            "outcome": self.outcome.value,
            "moves": self.moves,
            "evaluations": self.evaluations,
            "costs": [cost for _, cost in self.steps],
            "initialCost": self.steps[0][1],
            "finalCost": self.steps[-1][1],
        }


def quantize(p, quantum):
    return tuple(sorted((c, round(v / quantum)) for c, v in p.items()))


def neighbors(u, p, delta, pinned=frozenset(), quantum=1e-6):
    """Moves every unpinned family constructor by +delta and -delta (clamped
    at 0), renormalizing its type. Candidates are listed in constructor id
    order, + before -, without duplicates or the focus itself."""
    seen = {quantize(p, quantum)}
    result = []

    for c in sorted(u.family_constructors):
        if c in pinned:
            continue
        for step in (delta, -delta):
            candidate = dict(p)
            candidate[c] = max(0.0, p[c] + step)
            try:
                candidate = normalize_probmap(u, candidate, pinned, types=[u.type_of(c)])
            except ProbMapError:
                continue

            key = quantize(candidate, quantum)
            if key not in seen:
                seen.add(key)
                result.append(candidate)

    return result


def optimize(cost, size, init, cfg=SearchConfig()):
    u = cost.universe
    visited = {}

    focus = dict(init)
    focus_cost = cost(size, focus)
    visited[quantize(focus, cfg.quantum)] = focus_cost
    trace = SearchTrace(steps=[(focus, focus_cost)])

    for _ in range(cfg.max_steps):
        fresh = [
            q
            for q in neighbors(u, focus, cfg.delta, cost.pinned, cfg.quantum)
            if quantize(q, cfg.quantum) not in visited
        ]
        if not fresh:
            trace.outcome = SearchOutcome.LOCAL_MINIMUM
            break

        best, best_cost = None, None
        for candidate in fresh:
            candidate_cost = cost(size, candidate)
            visited[quantize(candidate, cfg.quantum)] = candidate_cost
            # strict comparison keeps the first candidate on ties
            if best_cost is None or candidate_cost < best_cost:
                best, best_cost = candidate, candidate_cost

        gain = focus_cost - best_cost
        if gain <= 0.0:
            trace.outcome = SearchOutcome.LOCAL_MINIMUM
            break
        if gain <= cfg.epsilon:
            trace.outcome = SearchOutcome.EPSILON_STOP
            break

        focus, focus_cost = best, best_cost
        trace.steps.append((focus, focus_cost))
        logger.debug(f"Step {trace.moves}: cost {focus_cost}")
    else:
        trace.outcome = SearchOutcome.STEP_CAP
        logger.warning(f"Search stopped at the step cap of {cfg.max_steps}")

    trace.evaluations = len(visited)
    return focus, trace


def run_derivation(u, size, cost, cfg=SearchConfig()):
    logger = logging.getLogger("derivation_logger")

    init = cost.initial_probmap()
    probs, trace = optimize(cost, size, init, cfg)
    stars = star_probs(u, probs, cost.pinned)
    spec = make_genspec(
        u, size, probs, stars, Strategy.DRAGEN, excluded_types=cost.excluded_types
    )

    log_and_print(
        logger,
        LogLevel.INFO,
        f"Optimized {u.root} with {cost.name} at size {size}: "
        f"{trace.moves} moves, {trace.evaluations} evaluations, "
        f"cost {trace.steps[0][1]:.4f} -> {trace.steps[-1][1]:.4f} ({trace.outcome.value})",
    )
    return spec, trace, predict_constructors(u, probs, size, cost.pinned)


def derive_generator(u, size, cost, cfg=SearchConfig()):
    spec, _, _ = run_derivation(u, size, cost, cfg)
    return spec
