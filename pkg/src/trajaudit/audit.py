"""Decision rules, two-stage max aggregation across agents and training
configurations, and scenario verdict reports.

A scenario verdict answers four questions: do agents benefit from memory
(paired return gap AND history use), do they use hidden teammate information
(PIF), does synchronous coordination emerge (AA), does temporal coordination
emerge (DAI)?  The threshold rules fire when any subject in any run exceeds
its permutation-null mean; the aggregation therefore only declares a property
absent when no agent under any tested configuration displays it.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Iterable, Sequence

from .diagnostics import DiagnosticResult
from .nulls import GapResult, wilcoxon_one_sided
from .store import Manifest

QUESTIONS = (
    ("memory_benefit", "Do agents benefit from memory?"),
    ("uses_private_info", "Do agents use hidden teammate information?"),
    ("synchronous_coordination", "Does synchronous coordination emerge?"),
    ("temporal_coordination", "Does temporal coordination emerge?"),
)
RULE_METRICS = {
    "uses_private_info": "PIF",
    "synchronous_coordination": "AA",
    "temporal_coordination": "DAI",
}
_REACTIVE_LABEL = "ff"


class AggregationError(ValueError):
    """Raised when a rule is applied to unusable inputs."""


@dataclass(frozen=True)
class RunRecord:
    manifest: Manifest
    diagnostics: tuple[DiagnosticResult, ...]
    returns: tuple[float, ...] = ()

    @property
    def label(self) -> str:
        m = self.manifest
        return f"{m.algorithm}-{m.architecture}-seed{m.seed}"

    @property
    def is_memory_based(self) -> bool:
        """Feed-forward runs are labelled FF; anything else counts as memory-based."""
        return self.manifest.architecture.strip().lower() != _REACTIVE_LABEL

    @property
    def mean_return(self) -> float:
        if not self.returns:
            raise AggregationError(f"run {self.label} carries no returns")
        return sum(self.returns) / len(self.returns)


@dataclass(frozen=True)
class ScenarioVerdict:
    scenario: str
    memory_benefit: bool | None          # None marks "not evaluable"
    uses_private_info: bool
    synchronous_coordination: bool
    temporal_coordination: bool
    evidence: dict

    def answers(self) -> dict[str, bool | None]:
        return {
            "memory_benefit": self.memory_benefit,
            "uses_private_info": self.uses_private_info,
            "synchronous_coordination": self.synchronous_coordination,
            "temporal_coordination": self.temporal_coordination,
        }


# ---------------------------------------------------------------------------
# Decision rules
# ---------------------------------------------------------------------------

def rule_memory_benefit(gap: GapResult | None,
                        har_results: Sequence[DiagnosticResult]) -> bool:
    """Memory benefits iff the return gap is significant AND any memory-run HAR
    value exceeds its permutation-null mean."""
    if gap is None or not har_results:
        return False
    return bool(gap.significant and any(r.flagged for r in har_results))


def rule_threshold(metric_id: str, results: Sequence[DiagnosticResult]) -> bool:
    """True iff any subject in any run exceeds its permutation-null mean."""
    if not results:
        raise AggregationError(f"no {metric_id} results to aggregate")
    relevant = [r for r in results if r.metric_id == metric_id]
    if not relevant:
        raise AggregationError(f"no {metric_id} results to aggregate")
    if any(r.flagged is None for r in relevant):
        raise AggregationError(f"{metric_id} results are not null-calibrated")
    return any(r.flagged for r in relevant)


def _metric_evidence(runs: Sequence[RunRecord], metric_id: str) -> dict:
    best = None
    n_flagged = 0
    n_results = 0
    for run in runs:
        for r in run.diagnostics:
            if r.metric_id != metric_id:
                continue
            n_results += 1
            n_flagged += bool(r.flagged)
            excess = r.comparison_value - r.null.mean
            if best is None or excess > best["excess"]:
                best = {
                    "run": run.label,
                    "subject": list(r.subject),
                    "value": r.comparison_value,       # raw, used for the rule
                    "display_value": max(0.0, r.comparison_value),
                    "null_mean": r.null.mean,
                    "basis": r.null.basis,
                    "excess": excess,
                }
    return {
        "flagged_any": n_flagged > 0,
        "n_flagged": n_flagged,
        "n_results": n_results,
        "best": best,
    }


def paired_gap_deltas(runs: Sequence[RunRecord]) -> list[float]:
    """Return differences J(memory) - J(reactive) over matched (algorithm, seed) runs."""
    reactive: dict[tuple[str, int], RunRecord] = {}
    memory: dict[tuple[str, int], RunRecord] = {}
    for run in runs:
        key = (run.manifest.algorithm, run.manifest.seed)
        bucket = memory if run.is_memory_based else reactive
        if key in bucket:
            raise AggregationError(
                f"duplicate {'memory' if run.is_memory_based else 'reactive'} run for {key}"
            )
        bucket[key] = run
    deltas = []
    for key in sorted(set(reactive) & set(memory)):
        if reactive[key].returns and memory[key].returns:
            deltas.append(memory[key].mean_return - reactive[key].mean_return)
    return deltas


def aggregate_scenario(scenario: str, runs: Sequence[RunRecord]) -> ScenarioVerdict:
    """Apply the four decision rules to every run of one scenario."""
    runs = list(runs)
    if not runs:
        raise AggregationError(f"scenario {scenario!r} has no runs")

    evidence: dict = {"runs": [r.label for r in runs]}
    for metric in ("OAR", "HAR", "PIF", "AA", "DAI"):
        evidence[metric] = _metric_evidence(runs, metric)

    all_results = [r for run in runs for r in run.diagnostics]
    answers = {
        key: rule_threshold(metric, all_results)
        for key, metric in RULE_METRICS.items()
    }

    memory_runs = [r for r in runs if r.is_memory_based]
    har_memory = [d for run in memory_runs for d in run.diagnostics
                  if d.metric_id == "HAR"]
    deltas = paired_gap_deltas(runs)
    if not memory_runs:
        memory_verdict = None
        evidence["memory"] = {"status": "not_evaluable", "reason": "no memory policies"}
    elif not deltas:
        memory_verdict = None
        evidence["memory"] = {"status": "not_evaluable",
                              "reason": "no matched reactive/memory return pairs"}
    else:
        gap = wilcoxon_one_sided(deltas)
        memory_verdict = rule_memory_benefit(gap, har_memory)
        evidence["memory"] = {
            "status": "evaluated",
            "deltas": list(gap.deltas),
            "statistic": gap.statistic,
            "p_value": gap.p_value,
            "significant": gap.significant,
            "method": gap.method,
            "har_flag_any": any(r.flagged for r in har_memory),
            "n_memory_runs": len(memory_runs),
        }

    return ScenarioVerdict(
        scenario=scenario,
        memory_benefit=memory_verdict,
        uses_private_info=answers["uses_private_info"],
        synchronous_coordination=answers["synchronous_coordination"],
        temporal_coordination=answers["temporal_coordination"],
        evidence=evidence,
    )


# ---------------------------------------------------------------------------
# Reports
# ---------------------------------------------------------------------------

def default_group(scenario: str) -> str:
    """Scenario group: the prefix before '/' when present, else one shared column."""
    return scenario.split("/", 1)[0] if "/" in scenario else "all"


def _percent_cell(count: int, total: int) -> str:
    if total == 0:
        return "n/a (0 evaluable)"
    return f"{round(100 * count / total)}% ({count}/{total})"


def _answer_text(value: bool | None) -> str:
    if value is None:
        return "not evaluable"
    return "yes" if value else "no"


def verdict_to_obj(verdict: ScenarioVerdict) -> dict:
    return {
        "scenario": verdict.scenario,
        "memory_benefit": verdict.memory_benefit,
        "uses_private_info": verdict.uses_private_info,
        "synchronous_coordination": verdict.synchronous_coordination,
        "temporal_coordination": verdict.temporal_coordination,
        "evidence": verdict.evidence,
    }


def emit_report(verdicts: Sequence[ScenarioVerdict], format: str = "markdown",
                group_of=default_group) -> str:
    """Render verdicts as a Table-1-style markdown grid or as a JSON document.

    Markdown cells count scenarios satisfying each rule per group; scenarios
    whose memory rule is not evaluable are excluded from that row's totals.
    Output is byte-stable for identical inputs.
    """
    if not verdicts:
        raise AggregationError("no verdicts to report")
    if format not in ("markdown", "json"):
        raise AggregationError(f"unknown report format {format!r}")
    ordered = sorted(verdicts, key=lambda v: v.scenario)

    if format == "json":
        doc = {"scenarios": [verdict_to_obj(v) for v in ordered]}
        return json.dumps(doc, indent=2, sort_keys=True) + "\n"

    groups: dict[str, list[ScenarioVerdict]] = {}
    for v in ordered:
        groups.setdefault(group_of(v.scenario), []).append(v)
    group_names = sorted(groups)

    lines = ["# Trajectory audit report", ""]
    header = "| Question | " + " | ".join(group_names) + " |"
    rule = "|---" * (len(group_names) + 1) + "|"
    lines += [header, rule]
    for key, question in QUESTIONS:
        cells = []
        for g in group_names:
            answers = [v.answers()[key] for v in groups[g]]
            evaluable = [a for a in answers if a is not None]
            cells.append(_percent_cell(sum(evaluable), len(evaluable)))
        lines.append("| " + question + " | " + " | ".join(cells) + " |")

    lines += ["", "## Scenario detail", ""]
    lines += [
        "| Scenario | Memory benefit | Hidden teammate info "
        "| Synchronous coordination | Temporal coordination |",
        "|---|---|---|---|---|",
    ]
    for v in ordered:
        a = v.answers()
        lines.append(
            f"| {v.scenario} | {_answer_text(a['memory_benefit'])} "
            f"| {_answer_text(a['uses_private_info'])} "
            f"| {_answer_text(a['synchronous_coordination'])} "
            f"| {_answer_text(a['temporal_coordination'])} |"
        )
    return "\n".join(lines) + "\n"
