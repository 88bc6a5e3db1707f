"""Candidate ledger of a tiered search, its serialization and the final
selection."""
from dataclasses import dataclass, field
import json
import logging

from tierquant.constants import TRACE_SCHEMA
from tierquant.evaluator import (
    CandidateStats,
    Constraints,
    ScoreParams,
    compute_score,
    fitness,
)
from tierquant.exceptions import CheckpointFormatError, InfeasibleSearchError
from tierquant.model.config import TaskKind
from tierquant.quantizer import Assignment


logger = logging.getLogger(__name__)

INIT = "init"
GLOBAL = "global"
BLOCK = "block"
MODULE = "module"
PHASE_ORDER = (INIT, GLOBAL, BLOCK, MODULE)


@dataclass(frozen=True)
class Phase:
    kind: str
    block: str = None
    module: str = None

    def __str__(self):
        if self.kind == BLOCK:
            return f"{BLOCK}:{self.block}"
        if self.kind == MODULE:
            return f"{MODULE}:{self.block}/{self.module}"
        return self.kind

    @classmethod
    def parse(cls, text):
        kind, _, scope = text.partition(":")
        if kind not in PHASE_ORDER:
            raise CheckpointFormatError(f"Unknown phase {text!r}")
        if kind == BLOCK:
            return cls(kind, scope)
        if kind == MODULE:
            block, _, module = scope.partition("/")
            return cls(kind, block, module)
        return cls(kind)


@dataclass
class Candidate:
    """One ledger entry.

    ``ref`` is set when the trial's resolved assignment had already been
    evaluated; the entry then repeats the stats of candidate ``ref``.

    """

    index: int
    phase: Phase
    assignment: Assignment
    stats: CandidateStats
    bits: int = None
    ref: int = None

    def to_dict(self):
        d = {
            "c": self.index,
            "phase": str(self.phase),
            "bits": self.bits,
            "assignment": self.assignment.to_dict(),
            "perf": self.stats.perf,
            "mem_bytes": self.stats.mem,
            "score": self.stats.score,
            "fitness": self.stats.fitness,
            "met": self.stats.met,
        }
        if self.ref is not None:
            d["ref"] = self.ref
        return d

    @classmethod
    def from_dict(cls, d):
        return cls(
            index=int(d["c"]),
            phase=Phase.parse(d["phase"]),
            assignment=Assignment.from_dict(d["assignment"]),
            stats=CandidateStats(
                perf=float(d["perf"]),
                mem=float(d["mem_bytes"]),
                score=float(d["score"]),
                fitness=float(d["fitness"]),
                met=bool(d["met"]),
            ),
            bits=d.get("bits"),
            ref=d.get("ref"),
        )


@dataclass
class SearchTrace:
    task: TaskKind
    ladder: list
    constraints: Constraints
    score_params: ScoreParams = None
    candidates: list = field(default_factory=list)
    selected: int = None
    markers: dict = field(default_factory=dict)

    @property
    def baseline(self):
        return self.candidates[0].stats if self.candidates else None

    def __len__(self):
        return len(self.candidates)

    def __getitem__(self, index):
        return self.candidates[index]

    def phase_candidates(self, kind):
        return [c for c in self.candidates if c.phase.kind == kind]

    def met_candidates(self):
        return [c for c in self.candidates if c.stats.met]

    def header(self):
        return {
            "schema": TRACE_SCHEMA,
            "record": "header",
            "task": self.task.value,
            "ladder": list(self.ladder),
            "const_a": self.constraints.perf_budget,
            "const_m_bytes": self.constraints.mem_budget,
            "alpha": self.score_params.alpha,
            "baseline_perf": self.score_params.baseline_perf,
            "baseline_mem": self.score_params.baseline_mem,
        }

    def summary(self):
        return {
            "record": "summary",
            "selected": self.selected,
            "candidates": len(self.candidates),
            "markers": self.markers,
        }

    def to_jsonl(self):
        """Header line, one line per candidate, trailing summary line."""
        records = [self.header()]
        records += [c.to_dict() for c in self.candidates]
        records.append(self.summary())
        return "".join(
            json.dumps(r, sort_keys=True) + "\n" for r in records
        )

    @classmethod
    def from_jsonl(cls, text):
        try:
            records = [json.loads(line) for line in text.splitlines() if line]
            header, *rows, summary = records
            if header.get("schema") != TRACE_SCHEMA:
                raise CheckpointFormatError(
                    f"Expected trace schema {TRACE_SCHEMA}, "
                    f"got {header.get('schema')!r}"
                )
            return cls(
                task=TaskKind.parse(header["task"]),
                ladder=list(header["ladder"]),
                constraints=Constraints(
                    header["const_a"], header["const_m_bytes"]
                ),
                score_params=ScoreParams(
                    header["alpha"],
                    header["baseline_mem"],
                    header["baseline_perf"],
                ),
                candidates=[Candidate.from_dict(r) for r in rows],
                selected=summary["selected"],
                markers=summary["markers"],
            )
        except (ValueError, KeyError, TypeError) as e:
            if isinstance(e, CheckpointFormatError):
                raise
            raise CheckpointFormatError(f"Malformed search trace: {e}")


def select_final(trace, score_params=None, task=None):
    """Index of the met candidate with the largest fitness.

    Fitness is recomputed from each candidate's ``(perf, mem)`` under
    ``score_params``, which lets one trace be re-scored for another alpha.
    Ties go to the smaller footprint, then to the smaller index.

    :raises InfeasibleSearchError: when no candidate met the constraints.

    """
    if not trace.candidates:
        raise ValueError("Cannot select from an empty trace")
    score_params = score_params or trace.score_params
    task = TaskKind.parse(task or trace.task)

    best, best_key = None, None
    for candidate in trace.met_candidates():
        score = compute_score(
            candidate.stats.perf, candidate.stats.mem, score_params, task
        )
        key = (-fitness(score, task), candidate.stats.mem, candidate.index)
        if best_key is None or key < best_key:
            best, best_key = candidate.index, key
    if best is None:
        raise InfeasibleSearchError(trace)
    return best


def alpha_sweep(trace, alphas):
    """Re-select over one trace for each alpha.

    Feasibility does not depend on alpha, so the same trace serves them all.

    """
    rows = []
    for alpha in alphas:
        score_params = trace.score_params.with_alpha(alpha)
        index = select_final(trace, score_params)
        stats = trace[index].stats
        score = compute_score(stats.perf, stats.mem, score_params, trace.task)
        rows.append(
            {
                "alpha": alpha,
                "selected": index,
                "perf": stats.perf,
                "mem_bytes": stats.mem,
                "score": score,
                "fitness": fitness(score, trace.task),
            }
        )
        logger.info("alpha=%g selects candidate %d", alpha, index)
    return rows
