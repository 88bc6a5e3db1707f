"""The workbench: train, analyze, sweep, search and evaluate, reading and
writing everything under one output directory."""
from collections import OrderedDict
import logging
import math
import os

from .analyzer import (
    Hierarchy,
    SensitivityProfile,
    block_sensitivity_sweep,
    extract_hierarchy,
    memory_proportions,
    uniform_attention_sweep,
)
from .constants import FULL_PRECISION
from .data import (
    load_classification,
    load_corpus,
    split_classification,
    split_corpus,
)
from .evaluator import ModelProbe, eval_candidate
from .exceptions import InfeasibleSearchError, InputDomainError
from .io import (
    Checkpoint,
    read_assignment,
    read_checkpoint,
    read_json,
    write_assignment,
    write_checkpoint,
    write_json,
    write_profile_csv,
    write_trace,
    write_uniform_csv,
)
from .model import SpikingLM, TaskKind, train_toy_checkpoint
from .model.config import DESCRIPTORS, ModelConfig
from .quantizer import Assignment, memory_footprint
from .report import build_report, memory_reduction
from .search import TieredSearch, alpha_sweep


logger = logging.getLogger(__name__)

CHECKPOINT_DIR = "checkpoint"
QUANTIZED_DIR = "quantized"
TRACE_FILE = "trace.jsonl"
REPORT_FILE = "report.json"
ASSIGNMENT_FILE = "assignment.json"
HIERARCHY_FILE = "hierarchy.json"
PROFILE_CSV = "sensitivity.csv"
PROFILE_JSON = "sensitivity.json"
PLOT_JSON = "sensitivity_plot.json"
UNIFORM_CSV = "uniform_attention.csv"
UNIFORM_JSON = "uniform_attention.json"


class Workbench:
    """Runs workbench commands for one :class:`tierquant.config.RunConfig`.

    :param run_config: Resolved configuration of this run.

    """

    def __init__(self, run_config):
        self.config = run_config
        self.threads = run_config.resolved_threads()
        self.checkpoint = None
        self.hierarchy = None

    def out_path(self, *parts):
        os.makedirs(self.config.output_dir, exist_ok=True)
        return os.path.join(self.config.output_dir, *parts)

    def checkpoint_path(self):
        if self.config.checkpoint is not None:
            return self.config.checkpoint
        return os.path.join(self.config.output_dir, CHECKPOINT_DIR)

    #
    # Data
    #
    def load_splits(self, vocab=None, context_len=None):
        """``(train, held_out, vocab)`` for the configured task."""
        path = self.config.dataset_path()
        if not os.path.exists(path):
            raise InputDomainError(f"Dataset {path} does not exist")
        if self.config.task is TaskKind.CLASSIFICATION:
            dataset, vocab = load_classification(path, vocab, context_len)
            train, held = split_classification(
                dataset, self.config.holdout_fraction, self.config.seed
            )
        else:
            ids, vocab = load_corpus(path, vocab)
            train, held = split_corpus(ids, self.config.holdout_fraction)
        return train, held, vocab

    def held_out(self):
        """Evaluation split, tokenized with the checkpoint's vocabulary."""
        checkpoint = self.load_checkpoint()
        if checkpoint.config.task is not self.config.task:
            raise InputDomainError(
                f"Checkpoint has a {checkpoint.config.task.value} head but "
                f"the run asks for {self.config.task.value}"
            )
        if checkpoint.vocab is None:
            raise InputDomainError("Checkpoint carries no vocabulary")
        _, held, _ = self.load_splits(
            checkpoint.vocab, checkpoint.config.context_len
        )
        return held

    #
    # Checkpoints
    #
    def load_checkpoint(self):
        if self.checkpoint is None:
            self.checkpoint = read_checkpoint(self.checkpoint_path())
            self.hierarchy = extract_hierarchy(
                self.checkpoint.params, self.checkpoint.config
            )
        return self.checkpoint

    def model(self):
        checkpoint = self.load_checkpoint()
        return SpikingLM(checkpoint.config, checkpoint.params)

    def probe(self, dataset=None):
        dataset = self.held_out() if dataset is None else dataset
        return ModelProbe(
            self.model(), self.hierarchy, dataset, self.config.task
        )

    #
    # Commands
    #
    def train(self, counter=None):
        """Train a toy checkpoint and write it under the output directory.

        :returns: ``(path, sha256 of the weights)``.

        """
        c = self.config
        train, _, vocab = self.load_splits(context_len=c.context_len)
        num_classes = None
        if c.task is TaskKind.CLASSIFICATION:
            num_classes = max(2, max(train.labels) + 1)
        model_config = ModelConfig(
            vocab_size=len(vocab),
            embed_dim=c.embed_dim,
            num_blocks=c.num_blocks,
            context_len=c.context_len,
            ffn_hidden_dim=c.ffn_hidden_dim,
            task=c.task,
            num_classes=num_classes,
        )
        params = train_toy_checkpoint(
            model_config,
            train,
            epochs=c.epochs,
            seed=c.seed,
            batch_size=c.batch_size,
            learning_rate=c.learning_rate,
            steps_per_epoch=c.steps_per_epoch,
            counter=counter,
        )
        path = self.out_path(CHECKPOINT_DIR)
        digest = write_checkpoint(
            path, Checkpoint(config=model_config, params=params, vocab=vocab)
        )
        return path, digest

    def analyze(self, descriptor=None):
        """Hierarchy and memory proportions, of the checkpoint or of a
        named counts-only descriptor."""
        if descriptor is not None:
            if descriptor not in DESCRIPTORS:
                raise InputDomainError(
                    f"Unknown descriptor {descriptor!r}: choose from "
                    f"{', '.join(sorted(DESCRIPTORS))}"
                )
            hierarchy = Hierarchy.from_config(DESCRIPTORS[descriptor])
        else:
            self.load_checkpoint()
            hierarchy = self.hierarchy

        full = memory_footprint(hierarchy, Assignment.uniform(FULL_PRECISION))
        proportions = memory_proportions(hierarchy)
        attention = sum(
            proportions[block] for block in hierarchy.attention_blocks()
        )
        result = {
            "source": descriptor or self.checkpoint_path(),
            "num_blocks": len(hierarchy.blocks()),
            "hierarchy": hierarchy.to_dict(),
            "proportions": proportions,
            "attention_share": attention,
            "full_precision_bytes": full,
        }
        write_json(self.out_path(HIERARCHY_FILE), result)
        return result

    def sensitivity(self):
        """Block sweep, or the joint attention sweep with
        ``uniform_attention``."""
        checkpoint = self.load_checkpoint()
        held = self.held_out()
        args = (
            checkpoint.params,
            checkpoint.config,
            self.hierarchy,
            self.config.task,
            self.config.ladder,
            held,
        )
        if self.config.uniform_attention:
            sweep = uniform_attention_sweep(*args, threads=self.threads)
            write_uniform_csv(self.out_path(UNIFORM_CSV), sweep)
            write_json(self.out_path(UNIFORM_JSON), sweep.to_dict())
            return sweep

        profile = block_sensitivity_sweep(*args, threads=self.threads)
        write_profile_csv(self.out_path(PROFILE_CSV), profile)
        write_json(self.out_path(PROFILE_JSON), profile.to_dict())
        write_json(self.out_path(PLOT_JSON), profile.plot_series())
        shape = profile.io_more_sensitive()
        logger.info(
            "At %d bits: input %.4g, output %.4g, attention median %.4g",
            shape["bits"],
            shape["input"],
            shape["output"],
            shape["attention_median"],
        )
        return profile

    def search(self):
        """Tiered search, then trace, report, assignment and the quantized
        checkpoint.

        The memory budget may be relative to the baseline footprint, which
        is known from the hierarchy before anything is evaluated.

        :raises InfeasibleSearchError: after writing the trace.

        """
        checkpoint = self.load_checkpoint()
        probe = self.probe()
        baseline_mem = memory_footprint(
            self.hierarchy, Assignment.uniform(FULL_PRECISION)
        )
        constraints = self.config.constraints(baseline_mem)
        search = TieredSearch(
            probe,
            self.hierarchy,
            self.config.task,
            self.config.ladder,
            constraints,
            self.config.alpha,
            greedy_stop=self.config.greedy_stop,
            threads=self.threads,
        )
        try:
            trace = search.run()
        except InfeasibleSearchError as e:
            write_trace(self.out_path(TRACE_FILE), e.trace)
            raise
        write_trace(self.out_path(TRACE_FILE), trace)

        selected = trace[trace.selected]
        verified = self.verify(probe, trace)
        alpha_rows = None
        if self.config.alpha_sweep:
            alpha_rows = alpha_sweep(trace, self.config.alpha_sweep)

        profile = None
        if os.path.exists(self.out_path(PROFILE_JSON)):
            profile = SensitivityProfile.from_dict(
                read_json(self.out_path(PROFILE_JSON))
            )

        report = build_report(
            trace,
            self.hierarchy,
            self.config,
            verified=verified,
            alpha_rows=alpha_rows,
            profile=profile,
        )
        write_json(self.out_path(REPORT_FILE), report)
        write_assignment(self.out_path(ASSIGNMENT_FILE), selected.assignment)
        quantized = probe.quantized(selected.assignment)
        write_checkpoint(
            self.out_path(QUANTIZED_DIR),
            Checkpoint(
                config=checkpoint.config,
                params=quantized.params,
                vocab=checkpoint.vocab,
                assignment=selected.assignment,
            ),
        )
        return trace, report

    def verify(self, probe, trace):
        """Re-evaluate the selected candidate from scratch."""
        selected = trace[trace.selected]
        stats, met = eval_candidate(
            probe,
            selected.assignment,
            trace.constraints,
            trace.score_params,
            trace.task,
            selected.index,
        )
        agrees = math.isclose(
            stats.perf, selected.stats.perf, rel_tol=1e-9, abs_tol=1e-12
        )
        if not (met and agrees):
            logger.warning(
                "Selected candidate %d did not verify: met=%s perf=%.6g",
                selected.index,
                met,
                stats.perf,
            )
        return bool(met and agrees)

    def evaluate(self, assignment_path=None):
        """Metric and footprint of the checkpoint.

        A checkpoint written by ``search`` already holds quantized weights
        and records its assignment; re-applying it changes nothing.

        """
        checkpoint = self.load_checkpoint()
        if assignment_path is not None:
            assignment = read_assignment(assignment_path)
        elif checkpoint.assignment is not None:
            assignment = checkpoint.assignment
        else:
            assignment = Assignment.uniform(FULL_PRECISION)
        assignment.validate(self.hierarchy)
        perf, mem = self.probe().test(assignment)
        baseline_mem = memory_footprint(
            self.hierarchy, Assignment.uniform(FULL_PRECISION)
        )
        return OrderedDict(
            [
                ("task", self.config.task.value),
                ("metric", perf),
                ("memory_bytes", mem),
                ("memory_reduction_pct", memory_reduction(mem, baseline_mem)),
                ("assignment", assignment.to_dict()),
            ]
        )

