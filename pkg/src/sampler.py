"""
Random values of a universe under three generation strategies, and empirical
constructor statistics used to check predictions.

  dragen    size-bounded: ProbMap choices while size remains, starred
            terminal choices at size 0, family children at size - 1
  megadeth  uniform choices, family children at size // 2, uniform terminal
            choice at size 0
  derive    uniform choices with no size bound, aborted after a budget of
            emitted constructors

Values are built one by one (one SeedSequence child per value). Statistics
are gathered by a level-by-level multinomial simulation of the same process
over chunks of samples (one SeedSequence child per chunk), which counts
constructors without materializing the values.
"""

import asyncio
import bisect
import json
import logging
from collections import Counter, deque
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import pandas as pd

from adt_model import FieldKind, GROUND_ATOMS, complete_probmap, is_terminal
from genspec import Strategy
from util import LogLevel, log_and_print

DEFAULT_BUDGET = 1_000_000
DEFAULT_CHUNK_SIZE = 1000
STANDARD_ERRORS = 4.0

logger = logging.getLogger("sampler_logger")


@dataclass(frozen=True)
class Value:
    constructor: str
    children: list = field(default_factory=list)


@dataclass(frozen=True)
class BudgetExhausted:
    emitted: int


def _ground(atom, rng):
    if atom == "Int":
        return int(rng.integers(-100, 101))
    if atom == "Double":
        return float(rng.random())
    if atom == "Char":
        return chr(int(rng.integers(32, 127)))
    return None


class _Chooser:
    def __init__(self, ctors, weights):
        kept = [(c, w) for c, w in zip(ctors, weights) if w > 0.0]
        self.ctors = [c for c, _ in kept]
        cumulative = np.cumsum([w for _, w in kept])
        self.cumulative = list(cumulative / cumulative[-1])

    def pick(self, rng):
        index = bisect.bisect_right(self.cumulative, rng.random())
        return self.ctors[min(index, len(self.ctors) - 1)]


class _Selector:
    """Chooses the constructor of a placeholder given its type and remaining
    size (None for unbounded placeholders)."""

    def __init__(self, u, strategy, size, probabilities=None, stars=None):
        self.strategy = strategy
        self.size = size
        self.full = {}
        self.last = {}

        for type_id in u.decls:
            ctors = u.cons(type_id)
            if strategy == Strategy.DRAGEN:
                weights = [probabilities[c] for c in ctors]
            else:
                weights = [1.0] * len(ctors)
            # types excluded from generation have no chooser
            if any(w > 0.0 for w in weights):
                self.full[type_id] = _Chooser(ctors, weights)

            if type_id in u.family:
                terminals = [c for c in ctors if is_terminal(c, u)]
                if strategy == Strategy.DRAGEN:
                    last_weights = [stars.get(c, 0.0) for c in terminals]
                else:
                    last_weights = [1.0] * len(terminals)
                if any(w > 0.0 for w in last_weights):
                    self.last[type_id] = _Chooser(terminals, last_weights)

    def child_size(self, size):
        if size is None or self.strategy == Strategy.DERIVE:
            return None
        if self.strategy == Strategy.MEGADETH:
            return size // 2
        return size - 1

    def select(self, type_id, size, rng):
        if size == 0 and type_id in self.last:
            return self.last[type_id].pick(rng)
        return self.full[type_id].pick(rng)


def _grow(u, selector, size, rng, budget=None):
    holder = [None]
    queue = deque([(holder, 0, u.root, size)])
    emitted = 0

    while queue:
        slots, index, type_id, remaining = queue.popleft()
        if budget is not None and emitted >= budget:
            return BudgetExhausted(emitted)

        ctor = selector.select(type_id, remaining, rng)
        emitted += 1
        fields = u.constructors[ctor].fields
        value = Value(ctor, [None] * len(fields))
        slots[index] = value

        for i, f in enumerate(fields):
            if f.kind == FieldKind.GROUND:
                value.children[i] = _ground(f.target, rng)
            elif f.kind == FieldKind.FAMILY:
                queue.append((value.children, i, f.target, selector.child_size(remaining)))
            else:
                queue.append((value.children, i, f.target, None))

    return holder[0]


def _selector_for(u, spec, strategy):
    if strategy == Strategy.DRAGEN:
        return _Selector(
            u,
            strategy,
            spec.size,
            complete_probmap(u, spec.probabilities),
            spec.star_probabilities,
        )
    return _Selector(u, strategy, spec.size)


def sample_dragen(u, spec, seed):
    selector = _selector_for(u, spec, Strategy.DRAGEN)
    return _grow(u, selector, spec.size, np.random.default_rng(seed))


def sample_megadeth(u, p, size, seed):
    # megadeth generators choose uniformly, p does not take part
    selector = _Selector(u, Strategy.MEGADETH, size)
    return _grow(u, selector, size, np.random.default_rng(seed))


def sample_derive(u, budget, seed):
    selector = _Selector(u, Strategy.DERIVE, None)
    return _grow(u, selector, None, np.random.default_rng(seed), budget)


def sample_values(u, spec, count, seed, strategy=None, budget=DEFAULT_BUDGET):
    """Yields count values, value i drawn from the i-th child of the seed."""
    strategy = strategy or spec.strategy
    selector = _selector_for(u, spec, strategy)
    size = None if strategy == Strategy.DERIVE else spec.size
    limit = budget if strategy == Strategy.DERIVE else None

    for child in np.random.SeedSequence(seed).spawn(count):
        yield _grow(u, selector, size, np.random.default_rng(child), limit)


def count_constructors(v):
    counts = Counter()
    stack = [v]
    while stack:
        item = stack.pop()
        if isinstance(item, Value):
            counts[item.constructor] += 1
            stack.extend(item.children)
    return dict(counts)


_GROUND_PYTHON_TYPES = {"Int": int, "Double": float, "Char": str, "Unit": type(None)}


def check_value(u, v, type_id=None):
    """True when every constructor has the declared arity and field types."""
    stack = [(v, type_id or u.root)]
    while stack:
        item, expected = stack.pop()
        if expected in GROUND_ATOMS:
            if not isinstance(item, _GROUND_PYTHON_TYPES[expected]):
                return False
            continue

        if not isinstance(item, Value) or item.constructor not in u.constructors:
            return False
        ctor = u.constructors[item.constructor]
        if ctor.type_id != expected or len(item.children) != ctor.arity:
            return False
        stack.extend(zip(item.children, (f.target for f in ctor.fields)))

    return True


_CLOSE = object()


def _atom_to_sexp(atom):
    if atom is None:
        return "()"
    if isinstance(atom, str):
        return json.dumps(atom)
    return repr(atom)


def value_to_sexp(v):
    parts = []
    stack = [v]
    while stack:
        item = stack.pop()
        if item is _CLOSE:
            parts[-1] += ")"
            continue

        if isinstance(item, Value):
            token = "(" + item.constructor.rpartition(".")[2]
            stack.append(_CLOSE)
            stack.extend(reversed(item.children))
        else:
            token = _atom_to_sexp(item)

        parts.append(token)
    return " ".join(parts)


def value_to_json(v):
    if isinstance(v, BudgetExhausted):
        return {"budgetExhausted": v.emitted}
    if not isinstance(v, Value):
        return v
    return {"constructor": v.constructor, "children": [value_to_json(c) for c in v.children]}


# Statistics


@dataclass(frozen=True)
class SampleStats:
    samples: int
    mean_counts: dict
    std_err: dict
    size_histogram: dict
    budget_exhausted: int = 0

    @property
    def completed(self):
        return self.samples - self.budget_exhausted

    def to_json(self):
        return {
            "samples": self.samples,
            "observed": dict(self.mean_counts),
            "stdErr": dict(self.std_err),
            "sizeHistogram": {str(k): v for k, v in self.size_histogram.items()},
            "budgetExhausted": self.budget_exhausted,
        }


@dataclass(frozen=True)
class _ChunkJob:
    universe: object
    strategy: Strategy
    size: int
    probabilities: dict
    star_probabilities: dict
    budget: int
    samples: int
    seed: np.random.SeedSequence

    @cached_property
    def layout(self):
        u = self.universe
        types = list(u.decls)
        ctors = [c for t in types for c in u.cons(t)]
        slices, start = {}, 0
        for t in types:
            slices[t] = (start, start + len(u.cons(t)))
            start += len(u.cons(t))

        beta = np.zeros((len(ctors), len(types)), dtype=np.int64)
        for i, c in enumerate(ctors):
            for f in u.constructors[c].fields:
                if f.kind != FieldKind.GROUND:
                    beta[i, types.index(f.target)] += 1
        return types, ctors, slices, beta

    def distribution(self, type_id, level):
        u = self.universe
        ctors = u.cons(type_id)
        in_family = type_id in u.family

        if self.strategy == Strategy.DRAGEN:
            if in_family and level >= self.size:
                weights = [self.star_probabilities.get(c, 0.0) for c in ctors]
            else:
                weights = [self.probabilities[c] for c in ctors]
        elif self.strategy == Strategy.MEGADETH and in_family and self.size >> level == 0:
            weights = [1.0 if is_terminal(c, u) else 0.0 for c in ctors]
        else:
            weights = [1.0] * len(ctors)

        weights = np.array(weights, dtype=float)
        return weights / weights.sum()


def _simulate_chunk(job):
    types, ctors, slices, beta = job.layout
    rng = np.random.default_rng(job.seed)

    counts = np.zeros((job.samples, len(ctors)), dtype=np.int64)
    aborted = np.zeros(job.samples, dtype=bool)
    pending = np.zeros((job.samples, len(types)), dtype=np.int64)
    pending[:, types.index(job.universe.root)] = 1

    # family placeholders created at iteration k sit at depth k
    level = 0
    while pending.any():
        emitted = np.zeros_like(counts)
        for ti, type_id in enumerate(types):
            column = pending[:, ti]
            if not column.any():
                continue
            lo, hi = slices[type_id]
            emitted[:, lo:hi] = rng.multinomial(column, job.distribution(type_id, level))

        counts += emitted
        pending = emitted @ beta

        if job.budget is not None:
            aborted |= counts.sum(axis=1) > job.budget
            pending[aborted] = 0
        level += 1

    return counts, aborted


def _chunk_jobs(u, spec, samples, seed, strategy, budget, chunk_size):
    strategy = strategy or spec.strategy
    probabilities = complete_probmap(u, spec.probabilities)
    sizes = [min(chunk_size, samples - start) for start in range(0, samples, chunk_size)]
    children = np.random.SeedSequence(seed).spawn(len(sizes))

    return [
        _ChunkJob(
            universe=u,
            strategy=strategy,
            size=spec.size,
            probabilities=probabilities,
            star_probabilities=dict(spec.star_probabilities),
            budget=budget if strategy == Strategy.DERIVE else None,
            samples=n,
            seed=child,
        )
        for n, child in zip(sizes, children)
    ]


def _aggregate(u, results, samples):
    ctors = [c for t in u.decls for c in u.cons(t)]
    counts = np.vstack([c for c, _ in results])
    aborted = np.concatenate([a for _, a in results])
    completed = counts[~aborted]
    n = len(completed)

    if n:
        means = completed.mean(axis=0)
    else:
        means = np.zeros(len(ctors))
    if n > 1:
        errors = completed.std(axis=0, ddof=1) / np.sqrt(n)
    else:
        errors = np.zeros(len(ctors))

    sizes, frequencies = np.unique(completed.sum(axis=1), return_counts=True)

    return SampleStats(
        samples=samples,
        mean_counts={c: float(m) for c, m in zip(ctors, means)},
        std_err={c: float(e) for c, e in zip(ctors, errors)},
        size_histogram={int(s): int(f) for s, f in zip(sizes, frequencies)},
        budget_exhausted=int(aborted.sum()),
    )


def _check_samples(samples):
    if samples < 1:
        raise ValueError(f"Sample count must be positive, got {samples}")


def empirical_stats(
    u,
    spec,
    samples,
    seed,
    strategy=None,
    budget=DEFAULT_BUDGET,
    chunk_size=DEFAULT_CHUNK_SIZE,
):
    _check_samples(samples)
    jobs = _chunk_jobs(u, spec, samples, seed, strategy, budget, chunk_size)
    results = [_simulate_chunk(job) for job in jobs]
    return _aggregate(u, results, samples)


async def empirical_stats_async(
    u,
    spec,
    samples,
    seed,
    workers,
    strategy=None,
    budget=DEFAULT_BUDGET,
    chunk_size=DEFAULT_CHUNK_SIZE,
):
    _check_samples(samples)
    jobs = _chunk_jobs(u, spec, samples, seed, strategy, budget, chunk_size)
    semaphore = asyncio.Semaphore(workers)
    loop = asyncio.get_running_loop()

    log_and_print(
        logger,
        LogLevel.INFO,
        f"Sampling {samples} values in {len(jobs)} chunks on {workers} worker(s)",
    )

    with ProcessPoolExecutor(max_workers=workers) as pool:

        async def run(job):
            async with semaphore:
                return await loop.run_in_executor(pool, _simulate_chunk, job)

        results = await asyncio.gather(*(run(job) for job in jobs))

    stats = _aggregate(u, results, samples)
    if stats.budget_exhausted:
        log_and_print(
            logger,
            LogLevel.WARNING,
            f"{stats.budget_exhausted} of {samples} runs exhausted their budget",
        )
    return stats


def compare_with_prediction(expected, stats, standard_errors=STANDARD_ERRORS):
    """Side-by-side table of predicted and observed means; a constructor
    passes when they differ by at most the given number of standard errors."""
    rows = []
    for ctor, predicted in expected.items():
        observed = stats.mean_counts.get(ctor, 0.0)
        error = stats.std_err.get(ctor, 0.0)
        difference = abs(observed - predicted)
        rows.append(
            {
                "constructor": ctor,
                "predicted": predicted,
                "observed": observed,
                "stdErr": error,
                "deviation": difference / error if error > 0.0 else 0.0,
                "pass": bool(difference <= standard_errors * error + 1e-9),
            }
        )
    return pd.DataFrame(rows, columns=["constructor", "predicted", "observed", "stdErr", "deviation", "pass"])


def histogram_frame(stats):
    frame = pd.DataFrame(
        sorted(stats.size_histogram.items()), columns=["constructors", "count"]
    )
    return frame
