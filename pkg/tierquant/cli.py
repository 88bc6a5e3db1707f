"""tierquant CLI."""
import functools
import json
import logging
import os
import sys

import click

from tierquant.build import TRACE_FILE, Workbench
from tierquant.config import CONSTRAINT_CASES, load_run_config
from tierquant.exceptions import (
    AssignmentError,
    CheckpointFormatError,
    ConfigError,
    EvaluationError,
    InfeasibleSearchError,
    InputDomainError,
    ModelIntegrityError,
    NumericError,
)
from tierquant.experiments import EXPERIMENT_LOG, run_experiments
from tierquant.model.config import DESCRIPTORS
from tierquant.utils import parse_float_list, parse_int_list


logger = logging.getLogger(__name__)

EXIT_INFEASIBLE = 1
EXIT_USAGE = 2
EXIT_NUMERIC = 3

USAGE_ERRORS = (
    InputDomainError,
    ConfigError,
    AssignmentError,
    CheckpointFormatError,
    ModelIntegrityError,
    FileNotFoundError,
)
HANDLED_ERRORS = (
    InfeasibleSearchError,
    EvaluationError,
    NumericError,
) + USAGE_ERRORS


def exit_code(error):
    if isinstance(error, InfeasibleSearchError):
        return EXIT_INFEASIBLE
    if isinstance(error, EvaluationError):
        error = error.cause
    if isinstance(error, NumericError):
        return EXIT_NUMERIC
    return EXIT_USAGE


def reports_errors(f):
    """Turn workbench errors into a message and the documented exit code."""

    @functools.wraps(f)
    def wrapper(*args, **kwargs):
        try:
            return f(*args, **kwargs)
        except HANDLED_ERRORS as e:
            click.echo(f"Error: {e}", err=True)
            sys.exit(exit_code(e))

    return wrapper


def _int_list(ctx, param, value):
    if value is None:
        return None
    try:
        return tuple(parse_int_list(value))
    except ConfigError as e:
        raise click.BadParameter(str(e))


def _float_list(ctx, param, value):
    if value is None:
        return None
    try:
        return tuple(parse_float_list(value))
    except ConfigError as e:
        raise click.BadParameter(str(e))


def run_options(f):
    """Options shared by every command."""
    options = [
        click.option(
            "--config",
            "config_path",
            type=click.Path(exists=True, dir_okay=False),
            help="JSON run configuration; flags override its fields.",
        ),
        click.option("--ckpt", "checkpoint", type=click.Path()),
        click.option(
            "--task", type=click.Choice(["classify", "generate"]), default=None
        ),
        click.option("--dataset", type=click.Path()),
        click.option("--seed", type=int),
        click.option("--out", "output_dir", type=click.Path(file_okay=False)),
        click.option("--threads", type=int),
    ]
    for option in reversed(options):
        f = option(f)
    return f


def trainer_options(f):
    """Toy model shape and training schedule."""
    options = [
        click.option("--epochs", type=int),
        click.option("--embed-dim", type=int),
        click.option("--num-blocks", type=int),
        click.option("--context-len", type=int),
        click.option("--batch-size", type=int),
        click.option("--learning-rate", type=float),
        click.option("--steps-per-epoch", type=int),
    ]
    for option in reversed(options):
        f = option(f)
    return f


def ladder_option(f):
    return click.option(
        "--ladder",
        callback=_int_list,
        help="Comma-separated bit-widths, highest first.",
    )(f)


@click.group()
@click.option("-v", "--verbose", count=True)
def tierquant(verbose):
    """Post-training quantization search for spiking language models."""
    level = [logging.WARNING, logging.INFO, logging.DEBUG][min(verbose, 2)]
    logging.basicConfig(
        level=level, format="%(levelname)s %(name)s: %(message)s"
    )


@tierquant.command()
@run_options
@trainer_options
@reports_errors
def train(config_path, **flags):
    """Train a toy checkpoint on the task's dataset."""
    run = load_run_config(config_path, **flags)
    bench = Workbench(run)
    with click.progressbar(length=run.epochs, label="Training") as bar:
        path, digest = bench.train(counter=bar)
    click.echo(f"Checkpoint written to {path}")
    click.echo(f"sha256 {digest}")


@tierquant.command()
@run_options
@click.option(
    "--descriptor",
    type=click.Choice(sorted(DESCRIPTORS)),
    help="Analyze a published model shape instead of a checkpoint.",
)
@reports_errors
def analyze(config_path, descriptor, **flags):
    """Block/module hierarchy and memory proportions."""
    run = load_run_config(config_path, **flags)
    result = Workbench(run).analyze(descriptor=descriptor)
    click.echo(f"{result['num_blocks']} blocks")
    for block, fraction in result["proportions"].items():
        click.echo(f"  {block:<16} {fraction * 100:6.2f}%")
    click.echo(f"Attention share {result['attention_share'] * 100:.2f}%")
    click.echo(f"Full precision {result['full_precision_bytes']:.0f} bytes")


@tierquant.command()
@run_options
@ladder_option
@click.option("--uniform-attention", is_flag=True)
@reports_errors
def sensitivity(config_path, uniform_attention, **flags):
    """Per-block (or uniform attention) quantization sweep."""
    run = load_run_config(
        config_path, uniform_attention=uniform_attention or None, **flags
    )
    click.echo("Sweeping... ", nl=False)
    result = Workbench(run).sensitivity()
    click.echo("Done")
    if run.uniform_attention:
        for bits, perf, mem in result.rows():
            click.echo(f"  {bits:>2} bits  {perf:.6g}  {mem:.0f} bytes")
    else:
        shape = result.io_more_sensitive()
        click.echo(json.dumps(shape, sort_keys=True))


@tierquant.command()
@run_options
@ladder_option
@click.option(
    "--const-a",
    type=float,
    help="Accuracy points (classify) or perplexity points (generate).",
)
@click.option("--const-m-bytes", type=float)
@click.option(
    "--const-m-fraction",
    type=float,
    help="Memory budget as a fraction of the full-precision footprint.",
)
@click.option("--alpha", type=float)
@click.option("--alpha-sweep", callback=_float_list)
@click.option("--greedy-stop", is_flag=True)
@click.option("--case", type=click.Choice(sorted(CONSTRAINT_CASES)))
@reports_errors
def search(config_path, greedy_stop, **flags):
    """Tiered precision search under performance and memory budgets."""
    run = load_run_config(
        config_path, greedy_stop=greedy_stop or None, **flags
    )
    bench = Workbench(run)
    click.echo("Searching... ", nl=False)
    try:
        trace, report = bench.search()
    except InfeasibleSearchError:
        click.echo("Done")
        click.echo(
            f"Trace written to {bench.out_path(TRACE_FILE)}", err=True
        )
        raise
    click.echo("Done")
    selected = report["selected"]
    click.echo(
        f"Selected candidate {selected['index']} of {len(trace)}: "
        f"perf {selected['perf']:.6g}, {selected['mem_bytes']:.0f} bytes, "
        f"{report['memory_reduction_pct']:.1f}% smaller"
    )
    for row in report["alpha_sweep"] or []:
        click.echo(
            f"  alpha={row['alpha']:g}: candidate {row['selected']} "
            f"perf {row['perf']:.6g} {row['mem_bytes']:.0f} bytes"
        )
    if not report["verified"]:
        click.echo("Warning: selected candidate did not verify", err=True)


@tierquant.command(name="eval")
@run_options
@click.option(
    "--assignment",
    "assignment_path",
    type=click.Path(exists=True, dir_okay=False),
)
@reports_errors
def evaluate(config_path, assignment_path, **flags):
    """Metric and footprint of a checkpoint, optionally quantized."""
    run = load_run_config(config_path, **flags)
    result = Workbench(run).evaluate(assignment_path=assignment_path)
    click.echo(json.dumps(result, sort_keys=True))


@tierquant.command()
@run_options
@ladder_option
@click.option("--const-a", type=float)
@click.option(
    "--seeds",
    callback=_int_list,
    default="0,1,2",
    help="Comma-separated training seeds for the majority vote.",
)
@trainer_options
@reports_errors
def experiments(config_path, seeds, **flags):
    """Train one checkpoint per seed and log the sensitivity shape checks."""
    run = load_run_config(config_path, **flags)
    with click.progressbar(length=len(seeds), label="Training") as bar:
        log = run_experiments(run, seeds, counter=bar)
    for assertion in log["assertions"]:
        status = "holds" if assertion["holds"] else "does not hold"
        click.echo(f"{assertion['name']}: {status}")
    path = os.path.join(run.output_dir, EXPERIMENT_LOG)
    click.echo(f"Log written to {path}")
