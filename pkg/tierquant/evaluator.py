"""Task metrics, the performance/memory trade-off score and candidate
evaluation against constraints."""
from dataclasses import asdict, dataclass
import logging
import math

import torch

from .constants import CONSTRAINT_SLACK, FULL_PRECISION
from .exceptions import (
    ConfigError,
    EvaluationError,
    InputDomainError,
    NumericError,
)
from .model.config import TaskKind
from .model.forward import classification_logits, forward_logits
from .quantizer import Assignment, apply_assignment, memory_footprint


logger = logging.getLogger(__name__)

EVAL_BATCH_SIZE = 64


@dataclass(frozen=True)
class Constraints:
    """Budgets a candidate must meet.

    :param perf_budget: Largest acceptable accuracy drop (as a fraction, so
                        2 points is 0.02) or perplexity increase.
    :param mem_budget: Largest acceptable weight footprint in bytes.

    """

    perf_budget: float
    mem_budget: float

    def __post_init__(self):
        if not self.perf_budget >= 0:
            raise ConfigError("The performance budget must be >= 0")
        if not self.mem_budget > 0:
            raise ConfigError("The memory budget must be > 0")

    @classmethod
    def from_points(cls, const_a, mem_budget, task):
        """``const_a`` in accuracy points for classification, in perplexity
        points for generation."""
        if TaskKind.parse(task) is TaskKind.CLASSIFICATION:
            return cls(const_a / 100, mem_budget)
        return cls(const_a, mem_budget)


@dataclass(frozen=True)
class ScoreParams:
    alpha: float
    baseline_mem: float
    baseline_perf: float

    def __post_init__(self):
        if not self.alpha >= 0:
            raise ConfigError("alpha must be >= 0")
        if not self.baseline_mem > 0:
            raise ConfigError("The baseline footprint must be > 0")

    def with_alpha(self, alpha):
        return ScoreParams(alpha, self.baseline_mem, self.baseline_perf)


@dataclass(frozen=True)
class CandidateStats:
    perf: float
    mem: float
    score: float
    fitness: float
    met: bool

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        return cls(
            perf=float(d["perf"]),
            mem=float(d["mem"]),
            score=float(d["score"]),
            fitness=float(d["fitness"]),
            met=bool(d["met"]),
        )


def evaluate_accuracy(model, dataset, batch_size=EVAL_BATCH_SIZE):
    """Fraction of examples whose argmax logit equals the label.

    :param model: A model with a classification head.
    :type model: tierquant.model.SpikingLM
    :param dataset: Labelled sequences.
    :type dataset: tierquant.data.ClassificationSet
    :rtype: float

    """
    if len(dataset) == 0:
        raise InputDomainError("Evaluation dataset is empty")
    num_classes = model.config.num_classes
    if any(not 0 <= label < num_classes for label in dataset.labels):
        raise InputDomainError(
            f"Labels must lie in [0, {num_classes}) for this model"
        )

    correct = 0
    with torch.no_grad():
        for (tokens, lengths), labels in dataset.batches(batch_size):
            logits = classification_logits(
                model.params, model.config, tokens, lengths
            )
            correct += int((logits.argmax(dim=-1) == labels).sum())
    return correct / len(dataset)


def perplexity_from_log_probs(log_probs, targets):
    """``exp(-mean log P(target))`` from ``[n, vocab]`` log-probabilities."""
    picked = log_probs.gather(-1, targets[:, None]).squeeze(-1)
    nll = -picked.to(torch.float64).sum().item()
    if not math.isfinite(nll):
        raise NumericError("Non-finite log-probability in perplexity")
    return math.exp(nll / targets.numel())


def evaluate_perplexity(model, corpus):
    """Perplexity of a token sequence.

    The corpus is cut into consecutive windows of ``context_len`` inputs,
    each evaluated from a fresh state; every token after the first is
    predicted exactly once, so ``N_T = len(corpus) - 1``. Log-probabilities
    are taken in float64.

    """
    corpus = torch.as_tensor(corpus, dtype=torch.long)
    if corpus.dim() != 1 or corpus.numel() < 2:
        raise InputDomainError("A corpus needs at least two tokens")

    window = model.config.context_len
    log_probs = []
    with torch.no_grad():
        for start in range(0, corpus.numel() - 1, window):
            inputs = corpus[start : start + window]
            targets = corpus[start + 1 : start + 1 + window]
            inputs = inputs[: targets.numel()]
            logits = forward_logits(model.params, model.config, inputs)
            log_probs.append(
                torch.log_softmax(logits.to(torch.float64), dim=-1)
            )
    return perplexity_from_log_probs(torch.cat(log_probs), corpus[1:])


def measure(model, dataset, task):
    """The task metric: accuracy for classification, perplexity for
    generation."""
    if TaskKind.parse(task) is TaskKind.CLASSIFICATION:
        return evaluate_accuracy(model, dataset)
    return evaluate_perplexity(model, dataset)


def compute_score(perf, mem_q, score_params, task):
    """Trade-off score: ``perf - alpha * M_q/M`` for accuracy,
    ``perf + alpha * M_q/M`` for perplexity."""
    ratio = mem_q / score_params.baseline_mem
    if TaskKind.parse(task) is TaskKind.CLASSIFICATION:
        return perf - score_params.alpha * ratio
    return perf + score_params.alpha * ratio


def fitness(score, task):
    """Larger is better for both tasks."""
    if TaskKind.parse(task) is TaskKind.CLASSIFICATION:
        return score
    return -score


def check_constraints(baseline_perf, perf, mem, constraints, task):
    if TaskKind.parse(task) is TaskKind.CLASSIFICATION:
        degradation = baseline_perf - perf
    else:
        degradation = perf - baseline_perf
    return (
        degradation <= constraints.perf_budget + CONSTRAINT_SLACK
        and mem <= constraints.mem_budget * (1 + CONSTRAINT_SLACK)
    )


def candidate_stats(perf, mem, constraints, score_params, task):
    score = compute_score(perf, mem, score_params, task)
    return CandidateStats(
        perf=perf,
        mem=mem,
        score=score,
        fitness=fitness(score, task),
        met=check_constraints(
            score_params.baseline_perf, perf, mem, constraints, task
        ),
    )


def eval_candidate(
    probe, assignment, constraints, score_params, task, candidate_index
):
    """Measure one candidate and check it against the budgets.

    :param probe: Anything with ``test(assignment) -> (perf, mem_bytes)``.
    :param candidate_index: Ledger index, attached to any failure.
    :returns: ``(CandidateStats, met)``
    :raises EvaluationError: wrapping whatever the probe raised.

    """
    try:
        perf, mem = probe.test(assignment)
    except Exception as e:
        raise EvaluationError({"candidate": candidate_index}, e) from e
    stats = candidate_stats(perf, mem, constraints, score_params, task)
    logger.debug(
        "candidate %d: perf=%.6g mem=%d met=%s",
        candidate_index,
        perf,
        mem,
        stats.met,
    )
    return stats, stats.met


class ModelProbe:
    """Quantizes a model under an assignment and measures it.

    Instances hold no mutable state, so trials may share one across threads.

    :param model: Full-precision model.
    :type model: tierquant.model.SpikingLM
    :param hierarchy: Hierarchy of ``model``.
    :param dataset: Held-out evaluation data for ``task``.
    :param task: Which metric to measure.

    """

    def __init__(self, model, hierarchy, dataset, task):
        self.model = model
        self.hierarchy = hierarchy
        self.dataset = dataset
        self.task = TaskKind.parse(task)

    def quantized(self, assignment):
        return self.model.with_params(
            apply_assignment(self.model.params, self.hierarchy, assignment)
        )

    def test(self, assignment):
        perf = measure(self.quantized(assignment), self.dataset, self.task)
        if not math.isfinite(perf):
            raise NumericError(f"Metric is not finite under {assignment!r}")
        return perf, memory_footprint(self.hierarchy, assignment)

    def baseline(self):
        return self.test(Assignment.uniform(FULL_PRECISION))
