import argparse
import asyncio
import configparser
import dataclasses
import json
import logging
import os
import sys
from multiprocessing import cpu_count

import aiofiles
from dotenv import load_dotenv

from adt_model import (
    complete_probmap,
    load_probmap,
    parse_universe,
    uniform_probmap,
    universe_summary,
)
from costfn import parse_cost
from genspec import GenSpecError, Strategy, load_genspec
from optimizer import SearchConfig, run_derivation
from prediction import extinction_probability, predict_constructors, predict_foreign
from sampler import (
    BudgetExhausted,
    compare_with_prediction,
    empirical_stats_async,
    histogram_frame,
    sample_values,
    value_to_json,
    value_to_sexp,
)
from util import LogLevel, log_and_print, setup_logging

DEFAULTS = {
    "search": {"delta": "0.01", "epsilon": "1e-6", "max_steps": "10000", "quantum": "1e-6"},
    "sampling": {
        "count": "100000",
        "seed": "0",
        "budget": "1000000",
        "chunk_size": "1000",
        "workers": "0",
    },
    "paths": {"logs_dir": "logs"},
}

logger = logging.getLogger("main")


def load_config(path):
    config = configparser.ConfigParser()
    config.read_dict(DEFAULTS)
    config.read(path)
    return config


async def read_text(path):
    async with aiofiles.open(path, "r", encoding="utf-8") as f:
        return await f.read()


async def write_text(path, text):
    async with aiofiles.open(path, "w", encoding="utf-8") as f:
        await f.write(text)


def emit(document):
    print(json.dumps(document, indent=2))


def resolve_seed(args, config):
    if args.seed is not None:
        return args.seed
    env_seed = os.getenv("DRAGEN_SEED")
    if env_seed:
        return int(env_seed)
    return config["sampling"].getint("seed")


def resolve_workers(args, config):
    workers = args.workers if args.workers is not None else config["sampling"].getint("workers")
    if workers > 0:
        return workers

    cpus = cpu_count()
    max_procs = max(1, cpus // 2)
    log_and_print(
        logger,
        LogLevel.DEBUG,
        f"CPU count on this machine is {cpus}, using {max_procs} sampling worker(s)",
    )
    return max_procs


def resolve_count(args, config):
    count = args.count if args.count is not None else config["sampling"].getint("count")
    if count < 1:
        log_and_print(logger, LogLevel.ERROR, f"--count must be positive, got {count}")
        return None
    return count


async def load_universe(args):
    return parse_universe(await read_text(args.file), args.root)


async def cmd_check(args, config):
    u = await load_universe(args)
    emit(universe_summary(u))
    return 0


async def cmd_predict(args, config):
    u = await load_universe(args)
    if args.probs:
        p = complete_probmap(u, load_probmap(await read_text(args.probs), u))
    else:
        p = uniform_probmap(u)

    report = predict_constructors(u, p, args.size)
    report = dataclasses.replace(report, per_foreign=predict_foreign(u, p, p, report))
    emit(report.to_json(extinction_probability(u, p)))
    return 0


async def cmd_optimize(args, config):
    u = await load_universe(args)
    cost = parse_cost(args.cost, u)
    cfg = SearchConfig.from_config(
        config["search"],
        delta=args.delta,
        epsilon=args.epsilon,
        max_steps=args.max_steps,
    )

    spec, trace, report = run_derivation(u, args.size, cost, cfg)
    p = spec.probabilities
    report = dataclasses.replace(report, per_foreign=predict_foreign(u, p, p, report))

    document = {
        "cost": cost.name,
        "spec": spec.to_json(),
        "prediction": report.to_json(),
        "trace": trace.summary(),
    }
    if args.out:
        await write_text(args.out, json.dumps(spec.to_json(), indent=2))
        log_and_print(logger, LogLevel.INFO, f"Generator spec written to {args.out}")
    emit(document)
    return 0


def _strategy(args, spec):
    return Strategy(args.strategy) if args.strategy else spec.strategy


def _budget(args, config):
    return args.budget if args.budget is not None else config["sampling"].getint("budget")


async def cmd_sample(args, config):
    spec, u = load_genspec(await read_text(args.spec))
    count = args.count if args.count is not None else 1
    if count < 1:
        log_and_print(logger, LogLevel.ERROR, f"--count must be positive, got {count}")
        return 2

    aborted = 0
    values = sample_values(
        u, spec, count, resolve_seed(args, config), _strategy(args, spec), _budget(args, config)
    )
    for value in values:
        if isinstance(value, BudgetExhausted):
            aborted += 1
        if args.format == "json":
            print(json.dumps(value_to_json(value)))
        elif isinstance(value, BudgetExhausted):
            print(f"; budget exhausted after {value.emitted} constructors")
        else:
            print(value_to_sexp(value))

    if aborted:
        log_and_print(logger, LogLevel.WARNING, f"{aborted} of {count} runs exhausted their budget")
    return 0


async def _stats(args, config, spec, u, strategy, count):
    return await empirical_stats_async(
        u,
        spec,
        count,
        resolve_seed(args, config),
        resolve_workers(args, config),
        strategy=strategy,
        budget=_budget(args, config),
        chunk_size=config["sampling"].getint("chunk_size"),
    )


async def cmd_verify(args, config):
    spec, u = load_genspec(await read_text(args.spec))
    if spec.strategy != Strategy.DRAGEN:
        raise GenSpecError(f"Only dragen generator specs have predictions, got {spec.strategy.value}")
    count = resolve_count(args, config)
    if count is None:
        return 2

    stats = await _stats(args, config, spec, u, Strategy.DRAGEN, count)

    p = spec.probabilities
    pinned = {c for c in u.family_constructors if u.type_of(c) in spec.excluded_types}
    report = predict_constructors(u, p, spec.size, pinned)
    expected = {**report.totals(), **predict_foreign(u, p, p, report)}
    table = compare_with_prediction(expected, stats)

    log_and_print(logger, LogLevel.INFO, table.to_string(index=False))
    emit(
        {
            "size": spec.size,
            "samples": stats.samples,
            "passed": bool(table["pass"].all()),
            "rows": table.to_dict(orient="records"),
        }
    )
    return 0


async def cmd_histogram(args, config):
    spec, u = load_genspec(await read_text(args.spec))
    count = resolve_count(args, config)
    if count is None:
        return 2

    stats = await _stats(args, config, spec, u, _strategy(args, spec), count)
    if stats.budget_exhausted:
        log_and_print(
            logger,
            LogLevel.INFO,
            f"{stats.budget_exhausted} aborted runs left out of the histogram",
        )
    sys.stdout.write(histogram_frame(stats).to_csv(index=False))
    return 0


COMMANDS = {
    "check": cmd_check,
    "predict": cmd_predict,
    "optimize": cmd_optimize,
    "sample": cmd_sample,
    "verify": cmd_verify,
    "histogram": cmd_histogram,
}


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default="config.ini", help="configuration file (default: config.ini)")
    common.add_argument("--workers", type=int, help="sampling processes (default: half the CPUs)")

    universe = argparse.ArgumentParser(add_help=False)
    universe.add_argument("-f", "--file", required=True, help="data declaration file")
    universe.add_argument("--root", required=True, help="root type of the generator")

    sampling = argparse.ArgumentParser(add_help=False)
    sampling.add_argument("--spec", required=True, help="generator spec written by optimize")
    sampling.add_argument("--count", type=int, help="number of values (default: [sampling] count)")
    sampling.add_argument("--seed", type=int, help="random seed (default: DRAGEN_SEED, then [sampling] seed)")
    sampling.add_argument("--budget", type=int, help="constructor budget of derive runs")

    parser = argparse.ArgumentParser(
        prog="main.py",
        description="Predict and tune the constructor distributions of random data generators",
    )
    commands = parser.add_subparsers(dest="command", required=True)

    commands.add_parser("check", parents=[common, universe], help="summarize a universe")

    predict = commands.add_parser("predict", parents=[common, universe], help="expected constructor counts")
    predict.add_argument("--size", type=int, required=True)
    predict.add_argument("--probs", help='JSON file {"probabilities": {...}} (default: uniform)')

    optimize = commands.add_parser("optimize", parents=[common, universe], help="tune a generator")
    optimize.add_argument("--size", type=int, required=True)
    optimize.add_argument("--cost", default="uniform", help="cost function (default: uniform)")
    optimize.add_argument("--delta", type=float, help="search step (default: [search] delta)")
    optimize.add_argument("--epsilon", type=float, help="minimum gain (default: [search] epsilon)")
    optimize.add_argument("--max-steps", type=int, help="step cap (default: [search] max_steps)")
    optimize.add_argument("--out", help="also write the generator spec to this file")

    strategies = [s.value for s in Strategy]
    sample = commands.add_parser("sample", parents=[common, sampling], help="print random values (default count 1)")
    sample.add_argument("--strategy", choices=strategies, help="override the generator spec's strategy")
    sample.add_argument("--format", choices=["sexp", "json"], default="sexp")

    commands.add_parser("verify", parents=[common, sampling], help="compare predictions with samples")

    histogram = commands.add_parser("histogram", parents=[common, sampling], help="size distribution CSV")
    histogram.add_argument("--strategy", choices=strategies, help="override the generator spec's strategy")

    return parser


async def main(argv=None):
    args = build_parser().parse_args(argv)
    if not hasattr(args, "strategy"):
        args.strategy = None

    config = load_config(args.config)
    setup_logging(config["paths"]["logs_dir"])
    load_dotenv()

    try:
        return await COMMANDS[args.command](args, config)
    except (ValueError, OSError) as e:
        log_and_print(logger, LogLevel.ERROR, f"{type(e).__name__}: {e}")
        return 1


if __name__ == "__main__":
    sys.exit(asyncio.run(main()))
