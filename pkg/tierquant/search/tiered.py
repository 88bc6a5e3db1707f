"""Tiered precision search: global, then per block, then per attention
module."""
import logging

from tierquant.constants import ATTENTION_MODULES, FULL_PRECISION
from tierquant.evaluator import (
    ModelProbe,
    ScoreParams,
    candidate_stats,
    eval_candidate,
)
from tierquant.exceptions import ConfigError, EvaluationError
from tierquant.model.config import TaskKind
from tierquant.quantizer import Assignment, check_bits
from tierquant.utils import ordered_map

from .trace import (
    BLOCK,
    GLOBAL,
    INIT,
    MODULE,
    Candidate,
    Phase,
    SearchTrace,
    select_final,
)


logger = logging.getLogger(__name__)

# Ladder index meaning "no level accepted yet".
BEFORE_LADDER = -1


def check_ladder(ladder):
    ladder = [check_bits(bits) for bits in ladder]
    if not ladder:
        raise ConfigError("The precision ladder is empty")
    if any(a <= b for a, b in zip(ladder, ladder[1:])):
        raise ConfigError(f"Ladder {ladder} is not strictly decreasing")
    return ladder


class TieredSearch:
    """Searches for a mixed-precision assignment one scope at a time.

    Every scope (the whole model, one block, one attention module) is
    scanned down the ladder. A trial differs from the running best
    assignment in that scope only; each trial that meets the constraints
    becomes the running best, so the scope ends at the lowest level that
    was met. Later scopes start from the running best.

    :param probe: Object with ``test(assignment) -> (perf, mem_bytes)``.
    :param hierarchy: Block/module hierarchy of the model under search.
    :type hierarchy: tierquant.analyzer.Hierarchy
    :param task: Which way performance points.
    :param ladder: Strictly decreasing bit-widths.
    :param constraints: Budgets.
    :type constraints: tierquant.evaluator.Constraints
    :param alpha: Memory weight of the trade-off score.
    :param greedy_stop: Stop a scope's scan at its first failing level.
    :param threads: Concurrent evaluations within one scope.

    """

    def __init__(
        self,
        probe,
        hierarchy,
        task,
        ladder,
        constraints,
        alpha,
        greedy_stop=False,
        threads=1,
    ):
        self.probe = probe
        self.hierarchy = hierarchy
        self.task = TaskKind.parse(task)
        self.ladder = check_ladder(ladder)
        self.constraints = constraints
        self.alpha = alpha
        self.greedy_stop = greedy_stop
        self.threads = threads

        self.trace = None
        self.current = None
        self._seen = {}
        self.I_last = BEFORE_LADDER
        self.I_tmp = 0
        self.I_last2 = {}
        self.I_tmp2 = {}
        self.I_last3 = {}

    @property
    def score_params(self):
        return self.trace.score_params

    def _key(self, assignment):
        return assignment.key(self.hierarchy)

    def _evaluate(self, item):
        index, assignment = item
        stats, _ = eval_candidate(
            self.probe,
            assignment,
            self.constraints,
            self.score_params,
            self.task,
            index,
        )
        return stats

    def _record(self, phase, assignment, stats, bits, ref=None):
        candidate = Candidate(
            index=len(self.trace.candidates),
            phase=phase,
            assignment=assignment,
            stats=stats,
            bits=bits,
            ref=ref,
        )
        self.trace.candidates.append(candidate)
        if ref is None:
            self._seen[self._key(assignment)] = candidate.index
        return candidate

    def _record_trial(self, phase, assignment, bits, stats=None):
        """Ledger a trial; repeats of evaluated assignments become refs."""
        seen = self._seen.get(self._key(assignment))
        if seen is not None:
            return self._record(
                phase,
                assignment,
                self.trace.candidates[seen].stats,
                bits,
                ref=seen,
            )
        if stats is None:
            index = len(self.trace.candidates)
            stats = self._evaluate((index, assignment))
        return self._record(phase, assignment, stats, bits)

    def _scan(self, phase, trials, floor=BEFORE_LADDER):
        """Evaluate ``[(i, assignment)]`` of one scope.

        Yields ``(i, candidate)`` in ladder order. Unless ``greedy_stop`` is
        set, all novel trials are evaluated up front (concurrently), then
        recorded in order. A greedy scan ignores failures above
        ``ladder[floor]``, the precision the scope already holds.

        """
        if self.greedy_stop:
            for i, assignment in trials:
                candidate = self._record_trial(
                    phase, assignment, self.ladder[i]
                )
                yield i, candidate
                if not candidate.stats.met and i >= floor:
                    return
            return

        base = len(self.trace.candidates)
        pending, keys = [], set(self._seen)
        for offset, (_, assignment) in enumerate(trials):
            key = self._key(assignment)
            if key not in keys:
                keys.add(key)
                pending.append((base + offset, assignment))
        results = dict(
            zip(
                (index for index, _ in pending),
                ordered_map(self._evaluate, pending, self.threads),
            )
        )
        for offset, (i, assignment) in enumerate(trials):
            candidate = self._record_trial(
                phase,
                assignment,
                self.ladder[i],
                stats=results.get(base + offset),
            )
            yield i, candidate

    def initialize(self):
        """Candidate 0: the full-precision model, which fixes the
        baseline."""
        baseline = Assignment.uniform(FULL_PRECISION)
        try:
            perf, mem = self.probe.test(baseline)
        except Exception as e:
            raise EvaluationError({"candidate": 0}, e) from e
        score_params = ScoreParams(self.alpha, mem, perf)
        self.trace = SearchTrace(
            task=self.task,
            ladder=list(self.ladder),
            constraints=self.constraints,
            score_params=score_params,
        )
        stats = candidate_stats(
            perf, mem, self.constraints, score_params, self.task
        )
        self._record(Phase(INIT), baseline, stats, FULL_PRECISION)
        self.current = baseline
        logger.info(
            "Baseline: perf=%.6g mem=%d bytes met=%s", perf, mem, stats.met
        )
        return self

    def global_phase(self):
        trials = [
            (i, Assignment.uniform(bits)) for i, bits in enumerate(self.ladder)
        ]
        for i, candidate in self._scan(Phase(GLOBAL), trials):
            if candidate.stats.met:
                self.I_last = i
                self.current = candidate.assignment
            else:
                self.I_tmp = self.I_last
        logger.info(
            "Global phase: accepted level %s",
            self._level_name(self.I_last),
        )
        return self

    def block_phase(self):
        start = max(self.I_tmp, 0)
        for block in self.hierarchy.blocks():
            self.I_last2.setdefault(block, BEFORE_LADDER)
            base = self.current
            trials = [
                (i, base.with_block(block, self.ladder[i]))
                for i in range(start, len(self.ladder))
            ]
            scan = self._scan(Phase(BLOCK, block), trials, floor=self.I_last)
            for i, candidate in scan:
                if candidate.stats.met:
                    self.I_last2[block] = i
                    self.current = candidate.assignment
                else:
                    self.I_tmp2[block] = self.I_last2[block]
            logger.info(
                "Block phase: %s at %s",
                block,
                self._level_name(self.I_last2[block]),
            )
        return self

    def module_phase(self):
        for block in self.hierarchy.attention_blocks():
            accepted = self.I_last2.get(block, BEFORE_LADDER)
            if accepted == BEFORE_LADDER:
                accepted = self.I_last
            start = accepted + 1
            modules = [
                m.module
                for m in self.hierarchy.modules(block)
                if m.module in ATTENTION_MODULES
            ]
            for module in modules:
                scope = f"{block}/{module}"
                self.I_last3.setdefault(scope, BEFORE_LADDER)
                base = self.current
                trials = [
                    (i, base.with_module(block, module, self.ladder[i]))
                    for i in range(start, len(self.ladder))
                ]
                phase = Phase(MODULE, block, module)
                for i, candidate in self._scan(phase, trials):
                    if candidate.stats.met:
                        self.I_last3[scope] = i
                        self.current = candidate.assignment
                logger.debug(
                    "Module phase: %s at %s",
                    scope,
                    self._level_name(self.I_last3[scope]),
                )
        logger.info("Module phase done")
        return self

    def _level_name(self, i):
        if i == BEFORE_LADDER:
            return "full precision"
        return f"{self.ladder[i]} bits"

    def markers(self):
        return {
            "I_last": self.I_last,
            "I_tmp": self.I_tmp,
            "I_last2": dict(self.I_last2),
            "I_tmp2": dict(self.I_tmp2),
            "I_last3": dict(self.I_last3),
        }

    def run(self):
        """All phases, then selection.

        :returns: The complete trace with ``selected`` set.
        :raises InfeasibleSearchError: carrying the complete trace.

        """
        self.initialize().global_phase().block_phase().module_phase()
        self.trace.markers = self.markers()
        self.trace.selected = select_final(self.trace)
        selected = self.trace[self.trace.selected]
        logger.info(
            "Selected candidate %d of %d: perf=%.6g mem=%d bytes",
            selected.index,
            len(self.trace),
            selected.stats.perf,
            selected.stats.mem,
        )
        return self.trace


def run_tiered_search(
    model,
    hierarchy,
    dataset,
    task,
    ladder,
    constraints,
    alpha,
    greedy_stop=False,
    threads=1,
):
    """Search a real model.

    :returns: ``(trace, quantized model, selected assignment)``.

    """
    probe = ModelProbe(model, hierarchy, dataset, task)
    trace = TieredSearch(
        probe,
        hierarchy,
        task,
        ladder,
        constraints,
        alpha,
        greedy_stop=greedy_stop,
        threads=threads,
    ).run()
    assignment = trace[trace.selected].assignment
    return trace, probe.quantized(assignment), assignment
