"""Per-block and uniform-attention quantization sweeps."""
from collections import OrderedDict
from dataclasses import dataclass, field
import logging
import math
import statistics

from tierquant.constants import FULL_PRECISION, INPUT_BLOCK, OUTPUT_BLOCK
from tierquant.evaluator import ModelProbe
from tierquant.exceptions import (
    CheckpointFormatError,
    EvaluationError,
    NumericError,
)
from tierquant.model.config import TaskKind
from tierquant.model.forward import SpikingLM
from tierquant.quantizer import Assignment, check_bits
from tierquant.utils import ordered_map


logger = logging.getLogger(__name__)


def sweep_levels(ladder):
    """The ladder with the full-precision row first."""
    levels = [FULL_PRECISION]
    for bits in ladder:
        bits = check_bits(bits)
        if bits not in levels:
            levels.append(bits)
    return levels


def degradation(baseline, perf, task):
    """Metric loss relative to ``baseline``; positive means worse."""
    if task is TaskKind.CLASSIFICATION:
        return baseline - perf
    return perf - baseline


@dataclass
class SensitivityProfile:
    """Metric of the model with one block quantized, per (block, bits).

    ``cells`` is ordered by block (hierarchy order), then by bits (ladder
    order, 32 first).

    """

    task: TaskKind
    ladder: list
    cells: OrderedDict = field(default_factory=OrderedDict)
    split: str = "held-out"

    @property
    def blocks(self):
        return list(OrderedDict.fromkeys(block for block, _ in self.cells))

    @property
    def baseline(self):
        return self.cells[(self.blocks[0], FULL_PRECISION)]

    def degradation(self, block, bits):
        return degradation(
            self.baseline, self.cells[(block, bits)], self.task
        )

    def io_more_sensitive(self, bits=None):
        """Compare input/output degradation against the median attention
        block at ``bits`` (the lowest swept level by default).

        Returns the raw deltas; ``holds`` is true when either the input or
        the output block degrades more than the median attention block.

        """
        if bits is None:
            bits = self.ladder[-1]
        attention = [
            self.degradation(block, bits)
            for block in self.blocks
            if block not in (INPUT_BLOCK, OUTPUT_BLOCK)
        ]
        median = statistics.median(attention)
        input_delta = self.degradation(INPUT_BLOCK, bits)
        output_delta = self.degradation(OUTPUT_BLOCK, bits)
        return {
            "bits": bits,
            "input": input_delta,
            "output": output_delta,
            "attention_median": median,
            "holds": input_delta > median or output_delta > median,
        }

    def rows(self):
        return [
            (block, bits, perf) for (block, bits), perf in self.cells.items()
        ]

    def plot_series(self):
        """One series per block: x is bits, y is the metric."""
        return {
            "task": self.task.value,
            "x": "bits",
            "y": "accuracy"
            if self.task is TaskKind.CLASSIFICATION
            else "perplexity",
            "series": [
                {
                    "block": block,
                    "bits": [b for (blk, b) in self.cells if blk == block],
                    "metric": [
                        perf
                        for (blk, _), perf in self.cells.items()
                        if blk == block
                    ],
                }
                for block in self.blocks
            ],
        }

    def to_dict(self):
        return {
            "task": self.task.value,
            "split": self.split,
            "ladder": list(self.ladder),
            "cells": [
                {"block": block, "bits": bits, "metric": perf}
                for block, bits, perf in self.rows()
            ],
        }

    @classmethod
    def from_dict(cls, d):
        try:
            cells = OrderedDict(
                ((c["block"], int(c["bits"])), float(c["metric"]))
                for c in d["cells"]
            )
            return cls(
                task=TaskKind.parse(d["task"]),
                ladder=[int(b) for b in d["ladder"]],
                cells=cells,
                split=d.get("split", "held-out"),
            )
        except (KeyError, TypeError, ValueError) as e:
            raise CheckpointFormatError(f"Malformed sensitivity profile: {e}")


@dataclass
class UniformSweep:
    """Metric and footprint with every attention block at one level."""

    task: TaskKind
    metric: OrderedDict = field(default_factory=OrderedDict)
    memory_bytes: OrderedDict = field(default_factory=OrderedDict)

    def degradation(self, bits):
        return degradation(
            self.metric[FULL_PRECISION], self.metric[bits], self.task
        )

    def rows(self):
        return [
            (bits, self.metric[bits], self.memory_bytes[bits])
            for bits in self.metric
        ]

    def to_dict(self):
        return {
            "task": self.task.value,
            "rows": [
                {"bits": bits, "metric": perf, "memory_bytes": mem}
                for bits, perf, mem in self.rows()
            ],
        }


def _run_cells(probe, cells, threads):
    """Evaluate ``{(scope, bits): assignment}`` in order.

    Cells with identical resolved assignments are evaluated once.

    """
    unique = OrderedDict()
    for label, assignment in cells.items():
        key = assignment.key(probe.hierarchy)
        unique.setdefault(key, (label, assignment))

    def run(item):
        (scope, bits), assignment = item
        try:
            perf, mem = probe.test(assignment)
        except Exception as e:
            raise EvaluationError({"block": scope, "bits": bits}, e) from e
        if not math.isfinite(perf):
            raise EvaluationError(
                {"block": scope, "bits": bits},
                NumericError("metric is not finite"),
            )
        logger.debug("%s @ %d bits: %.6g", scope, bits, perf)
        return perf, mem

    results = dict(
        zip(unique, ordered_map(run, list(unique.values()), threads))
    )
    return OrderedDict(
        (label, results[assignment.key(probe.hierarchy)])
        for label, assignment in cells.items()
    )


def block_sensitivity_sweep(
    params, config, hierarchy, task, ladder, dataset, threads=1
):
    """Quantize one block at a time, others at full precision, and measure.

    :param params: Full-precision parameters; never modified.
    :param ladder: Precision levels; the 32-bit row is always included.
    :param dataset: Held-out split for ``task``.
    :param threads: Concurrent cell evaluations.
    :rtype: SensitivityProfile
    :raises EvaluationError: with ``{"block": ..., "bits": ...}`` context.

    """
    task = TaskKind.parse(task)
    probe = ModelProbe(SpikingLM(config, params), hierarchy, dataset, task)
    levels = sweep_levels(ladder)
    cells = OrderedDict(
        ((block, bits), Assignment().with_block(block, bits))
        for block in hierarchy.blocks()
        for bits in levels
    )
    logger.info(
        "Block sweep: %d blocks x %d levels",
        len(hierarchy.blocks()),
        len(levels),
    )
    results = _run_cells(probe, cells, threads)
    return SensitivityProfile(
        task=task,
        ladder=levels,
        cells=OrderedDict(
            (label, perf) for label, (perf, _) in results.items()
        ),
    )


def uniform_attention_sweep(
    params, config, hierarchy, task, ladder, dataset, threads=1
):
    """Quantize every attention block jointly at each level.

    :rtype: UniformSweep

    """
    task = TaskKind.parse(task)
    probe = ModelProbe(SpikingLM(config, params), hierarchy, dataset, task)
    levels = sweep_levels(ladder)
    cells = OrderedDict()
    for bits in levels:
        assignment = Assignment()
        for block in hierarchy.attention_blocks():
            assignment = assignment.with_block(block, bits)
        cells[("attention", bits)] = assignment
    logger.info("Uniform attention sweep: %d levels", len(levels))
    results = _run_cells(probe, cells, threads)

    sweep = UniformSweep(task=task)
    for (_, bits), (perf, mem) in results.items():
        sweep.metric[bits] = perf
        sweep.memory_bytes[bits] = mem
    return sweep
