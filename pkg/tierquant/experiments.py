"""Model-dependent shape checks, run across seeds and written to a log.

Each seed trains its own toy checkpoint under ``seed-<n>/`` of the output
directory. The log records every assertion with the numbers behind it, so a
failing check is a finding about the toy model rather than a test failure.
"""
from collections import OrderedDict
from dataclasses import replace
import logging
import os

from .analyzer import degradation, uniform_attention_sweep
from .build import Workbench
from .constants import FULL_PRECISION
from .evaluator import measure
from .exceptions import ConfigError
from .io import write_json
from .quantizer import Assignment, apply_assignment, memory_footprint


logger = logging.getLogger(__name__)

EXPERIMENT_FORMAT = "qslm-experiments-1"
EXPERIMENT_LOG = "experiment_log.json"
DEFAULT_SEEDS = (0, 1, 2)
VOTE_BITS = 4
PLATEAU_BITS = 8
PLATEAU_TOP = 16


def seed_bench(run, seed):
    return Workbench(
        replace(
            run,
            seed=seed,
            checkpoint=None,
            uniform_attention=False,
            output_dir=os.path.join(run.output_dir, f"seed-{seed}"),
        )
    )


def sensitivity_vote(benches, bits=VOTE_BITS):
    """Whether input or output outdegrades the median attention block at
    ``bits`` on a majority of the trained checkpoints."""
    shapes = []
    for bench in benches:
        shape = bench.sensitivity().io_more_sensitive(bits)
        shape["seed"] = bench.config.seed
        shapes.append(shape)
    votes = sum(shape["holds"] for shape in shapes)
    return {
        "name": "io_more_sensitive",
        "bits": bits,
        "votes": votes,
        "holds": 2 * votes > len(shapes),
        "seeds": shapes,
    }


def uniform_plateau(bench, bits=PLATEAU_BITS):
    """Whole model at ``bits`` stays within the run's performance budget."""
    task = bench.config.task
    model, held = bench.model(), bench.held_out()
    assignment = Assignment.uniform(bits)
    quantized = model.with_params(
        apply_assignment(model.params, bench.hierarchy, assignment)
    )
    baseline = measure(model, held, task)
    perf = measure(quantized, held, task)
    mem = memory_footprint(bench.hierarchy, assignment)
    baseline_mem = memory_footprint(
        bench.hierarchy, Assignment.uniform(FULL_PRECISION)
    )
    budget = bench.config.constraints(baseline_mem).perf_budget
    loss = degradation(baseline, perf, task)
    return {
        "name": "uniform_plateau",
        "seed": bench.config.seed,
        "bits": bits,
        "baseline": baseline,
        "metric": perf,
        "memory_bytes": mem,
        "degradation": loss,
        "budget": budget,
        "holds": loss <= budget,
    }


def uniform_sweep_shape(bench, top=PLATEAU_TOP):
    """Attention blocks at ``top`` bits stay within budget while the lowest
    level is measurably worse."""
    checkpoint = bench.load_checkpoint()
    sweep = uniform_attention_sweep(
        checkpoint.params,
        checkpoint.config,
        bench.hierarchy,
        bench.config.task,
        bench.config.ladder,
        bench.held_out(),
        threads=bench.threads,
    )
    lowest = list(sweep.metric)[-1]
    baseline_mem = memory_footprint(
        bench.hierarchy, Assignment.uniform(FULL_PRECISION)
    )
    budget = bench.config.constraints(baseline_mem).perf_budget
    top_loss = sweep.degradation(top)
    low_loss = sweep.degradation(lowest)
    return {
        "name": "uniform_sweep_shape",
        "seed": bench.config.seed,
        "top_bits": top,
        "lowest_bits": lowest,
        "top_degradation": top_loss,
        "lowest_degradation": low_loss,
        "budget": budget,
        "holds": top_loss <= budget and low_loss > top_loss,
        "rows": sweep.to_dict()["rows"],
    }


def run_experiments(run, seeds=DEFAULT_SEEDS, counter=None):
    """Train one checkpoint per seed and log every shape check.

    :param run: Base run configuration; its seed and checkpoint are
                replaced per seed.
    :param seeds: At least one seed; the vote needs a strict majority.
    :returns: The log as written to ``experiment_log.json``.
    :raises ConfigError: if the ladder cannot express the checks.

    """
    seeds = list(seeds)
    if not seeds:
        raise ConfigError("Experiments need at least one seed")
    for bits in (VOTE_BITS, PLATEAU_TOP):
        if bits not in run.ladder:
            raise ConfigError(f"Experiments need {bits} bits in the ladder")

    benches = []
    for seed in seeds:
        bench = seed_bench(run, seed)
        logger.info("Training seed %d", seed)
        bench.train()
        benches.append(bench)
        if counter is not None:
            counter.update(1)

    assertions = [
        sensitivity_vote(benches),
        uniform_plateau(benches[0]),
        uniform_sweep_shape(benches[0]),
    ]
    for assertion in assertions:
        level = logging.INFO if assertion["holds"] else logging.WARNING
        logger.log(level, "%s holds=%s", assertion["name"], assertion["holds"])

    log = OrderedDict(
        [
            ("format", EXPERIMENT_FORMAT),
            ("task", run.task.value),
            ("seeds", seeds),
            ("ladder", list(run.ladder)),
            ("assertions", assertions),
        ]
    )
    os.makedirs(run.output_dir, exist_ok=True)
    write_json(os.path.join(run.output_dir, EXPERIMENT_LOG), log)
    return log
