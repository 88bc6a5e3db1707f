"""Search report assembly. Every number here is read off a trace or
recomputed from it with the same functions the search used."""
from collections import Counter

from .constants import REPORT_SCHEMA
from .search.trace import PHASE_ORDER


NOT_MEASURED = "not measured"
LAYER_NORM_POLICY = (
    "LayerNorm tensors are a module of their block: they take a module "
    "override if one exists, else the block's precision, else the default"
)


def memory_reduction(mem_q, baseline_mem):
    """Percent of the baseline footprint saved."""
    return (1 - mem_q / baseline_mem) * 100


def resolved_bits(hierarchy, assignment):
    return {
        f"{block}/{module}": bits
        for (block, module), bits in assignment.resolved(hierarchy).items()
    }


def trace_summary(trace):
    phases = Counter(c.phase.kind for c in trace.candidates)
    return {
        "candidates": len(trace),
        "evaluated": sum(1 for c in trace.candidates if c.ref is None),
        "met": len(trace.met_candidates()),
        "per_phase": {kind: phases.get(kind, 0) for kind in PHASE_ORDER},
        "markers": trace.markers,
    }


def case_row(name, trace, index):
    """One row of the results table: budgets, outcome and reduction."""
    stats = trace[index].stats
    baseline = trace.score_params.baseline_mem
    return {
        "case": name,
        "const_a": trace.constraints.perf_budget,
        "const_m_bytes": trace.constraints.mem_budget,
        "selected": index,
        "perf": stats.perf,
        "mem_bytes": stats.mem,
        "memory_reduction_pct": memory_reduction(stats.mem, baseline),
    }


def build_report(
    trace,
    hierarchy,
    run_config,
    verified=None,
    alpha_rows=None,
    profile=None,
):
    """Assemble the ``qslm-report-1`` document for a finished search.

    :param trace: Trace with ``selected`` set.
    :param verified: Outcome of re-evaluating the selected candidate.
    :param alpha_rows: Output of :func:`tierquant.search.alpha_sweep`.
    :param profile: Optional block sensitivity profile of the same model.

    """
    selected = trace[trace.selected]
    baseline = trace.baseline
    name = run_config.case or "run"
    rows = [case_row(name, trace, trace.selected)]
    if alpha_rows:
        rows += [
            case_row(f"{name}@alpha={r['alpha']:g}", trace, r["selected"])
            for r in alpha_rows
        ]

    report = {
        "schema": REPORT_SCHEMA,
        "task": trace.task.value,
        "evaluation_split": "held-out",
        "ladder": list(trace.ladder),
        "alpha": trace.score_params.alpha,
        "seed": run_config.seed,
        "constraints": {
            "perf_budget": trace.constraints.perf_budget,
            "mem_budget_bytes": trace.constraints.mem_budget,
        },
        "baseline": {"perf": baseline.perf, "mem_bytes": baseline.mem},
        "selected": {
            "index": selected.index,
            "phase": str(selected.phase),
            "perf": selected.stats.perf,
            "mem_bytes": selected.stats.mem,
            "score": selected.stats.score,
            "fitness": selected.stats.fitness,
            "assignment": selected.assignment.to_dict(),
            "resolved_bits": resolved_bits(hierarchy, selected.assignment),
        },
        "memory_reduction_pct": memory_reduction(
            selected.stats.mem, baseline.mem
        ),
        "trace_summary": trace_summary(trace),
        "verified": verified,
        "alpha_sweep": alpha_rows,
        "cases": rows,
        "power": NOT_MEASURED,
        "layer_norm_policy": LAYER_NORM_POLICY,
    }
    if profile is not None:
        report["sensitivity"] = profile.to_dict()
        report["io_more_sensitive"] = profile.io_more_sensitive()
    return report
