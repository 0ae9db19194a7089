"""Static flaw quantification over finished trajectories.

An annotator model classifies each transcript against the seven-trigger
catalogue (no interaction, no hints). Reports aggregate into per-trigger
and per-category frequencies by benchmark with unweighted macro averages,
and can be scored for agreement against human-labeled reports.
"""

from __future__ import annotations

import re
from collections import Counter
from dataclasses import dataclass
from typing import Mapping, Optional, Sequence

from . import prompts
from .client import ChatMessage, MessageRole, Role, SamplingConfig
from .model import (
    Benchmark,
    FlawCategory,
    FlawInstance,
    FlawReport,
    Problem,
    Trajectory,
    TriggerType,
    render_transcript,
)


class AnnotatorError(Exception):
    pass


class UnparseableReport(AnnotatorError):
    pass


class UnknownTrajectory(AnnotatorError):
    pass


class KeyMismatch(AnnotatorError):
    pass


_FLAW_LINE = re.compile(
    r"(?:FLAW:\s*)?Trigger\s*#?\s*([1-7])\s*(?:at|,|@)?\s*step\s*(\d+)\s*[:\-—]?\s*(.*)",
    re.IGNORECASE,
)
_NO_FLAWS = re.compile(r"\bNO\s+FLAWS?\b|\bno flaws detected\b", re.IGNORECASE)

DEFAULT_ANNOTATOR_SAMPLING = SamplingConfig(temperature=0.6, top_p=0.95, max_tokens=4096)


def _parse_report_text(text: str, trajectory_id: str) -> Optional[FlawReport]:
    instances = []
    for line in text.splitlines():
        match = _FLAW_LINE.search(line)
        if match:
            instances.append(
                FlawInstance(
                    trigger=TriggerType(int(match.group(1))),
                    step_index=int(match.group(2)),
                    rationale=match.group(3).strip(),
                )
            )
    if instances:
        return FlawReport(trajectory_id=trajectory_id, instances=tuple(instances))
    if _NO_FLAWS.search(text):
        return FlawReport(trajectory_id=trajectory_id, instances=())
    return None


def classify_flaws(
    trajectory: Trajectory,
    problem: Problem,
    annotator,
    *,
    sampling: SamplingConfig = DEFAULT_ANNOTATOR_SAMPLING,
    template: Optional[str] = None,
    trajectory_id: Optional[str] = None,
) -> FlawReport:
    """Classify one finished trajectory; zero instances is a valid clean report.

    Unparseable responses are retried once with an identical request.
    """
    template = template or prompts.classifier_template()
    prompt = prompts.fill(
        template,
        problem=problem.description,
        transcript=render_transcript(trajectory),
    )
    messages = [ChatMessage(MessageRole.USER, prompt)]
    trajectory_id = trajectory_id or trajectory.problem_id
    last = ""
    for _ in range(2):
        completion = annotator.complete(messages, sampling, Role.ANNOTATOR)
        last = completion.text
        report = _parse_report_text(completion.text, trajectory_id)
        if report is not None:
            bound = len(trajectory.steps) + 1  # final segment gets the next index
            for i, inst in enumerate(report.instances):
                if inst.step_index >= bound:
                    raise UnparseableReport(
                        f"instance {i} points at step {inst.step_index}, "
                        f"but the trajectory has {len(trajectory.steps)} steps"
                    )
            return report
    raise UnparseableReport(f"annotator response matched no schema: {last[:200]!r}")


@dataclass(frozen=True)
class FlawDistribution:
    """Mean flaw instances per analyzed trajectory, by trigger and category.

    The procedural trigger is tallied on its own and excluded from both
    primary categories. Macro averages weight every benchmark equally.
    """

    per_benchmark_trigger: dict[Benchmark, dict[TriggerType, float]]
    per_benchmark_category: dict[Benchmark, dict[FlawCategory, float]]
    macro_trigger: dict[TriggerType, float]
    macro_category: dict[FlawCategory, float]
    reports_per_benchmark: dict[Benchmark, int]

    def to_dict(self) -> dict:
        return {
            "per_benchmark_trigger": {
                b.value: {str(int(t)): f for t, f in triggers.items()}
                for b, triggers in self.per_benchmark_trigger.items()
            },
            "per_benchmark_category": {
                b.value: {c.value: f for c, f in cats.items()}
                for b, cats in self.per_benchmark_category.items()
            },
            "macro_trigger": {str(int(t)): f for t, f in self.macro_trigger.items()},
            "macro_category": {c.value: f for c, f in self.macro_category.items()},
            "reports_per_benchmark": {
                b.value: n for b, n in self.reports_per_benchmark.items()
            },
        }


def aggregate_distribution(
    reports: Sequence[FlawReport], problems: Mapping[str, Problem] | Sequence[Problem]
) -> FlawDistribution:
    """Frequency aggregation: instances per report, grouped by benchmark."""
    if not isinstance(problems, Mapping):
        problems = {p.id: p for p in problems}
    counts: dict[Benchmark, Counter] = {}
    totals: dict[Benchmark, int] = {}
    for report in reports:
        problem = problems.get(report.trajectory_id)
        if problem is None:
            raise UnknownTrajectory(
                f"report {report.trajectory_id!r} maps to no known problem"
            )
        totals[problem.benchmark] = totals.get(problem.benchmark, 0) + 1
        bucket = counts.setdefault(problem.benchmark, Counter())
        for inst in report.instances:
            bucket[inst.trigger] += 1

    per_trigger: dict[Benchmark, dict[TriggerType, float]] = {}
    per_category: dict[Benchmark, dict[FlawCategory, float]] = {}
    for benchmark, total in totals.items():
        trig = {t: counts[benchmark].get(t, 0) / total for t in TriggerType}
        per_trigger[benchmark] = trig
        cats = {c: 0.0 for c in FlawCategory}
        for t, freq in trig.items():
            cats[t.category] += freq
        per_category[benchmark] = cats

    n = len(totals)
    macro_trigger = {
        t: sum(per_trigger[b][t] for b in totals) / n if n else 0.0 for t in TriggerType
    }
    macro_category = {
        c: sum(per_category[b][c] for b in totals) / n if n else 0.0
        for c in FlawCategory
    }
    return FlawDistribution(
        per_benchmark_trigger=per_trigger,
        per_benchmark_category=per_category,
        macro_trigger=macro_trigger,
        macro_category=macro_category,
        reports_per_benchmark=totals,
    )


def annotator_agreement(
    llm: Sequence[FlawReport], human: Sequence[FlawReport]
) -> float:
    """Instance-level agreement: matched / human-labeled instances.

    A match pairs one human instance with one model instance of the same
    trigger on the same trajectory (step positions are ignored). The
    denominator is the human instance count; with zero human instances the
    agreement is vacuously 1.0.
    """
    llm_by_id = {r.trajectory_id: r for r in llm}
    human_by_id = {r.trajectory_id: r for r in human}
    if set(llm_by_id) != set(human_by_id):
        missing = set(human_by_id) ^ set(llm_by_id)
        raise KeyMismatch(f"report keys differ: {sorted(missing)[:5]}")
    matched = 0
    total = 0
    for trajectory_id, human_report in human_by_id.items():
        human_counts = Counter(i.trigger for i in human_report.instances)
        llm_counts = Counter(i.trigger for i in llm_by_id[trajectory_id].instances)
        total += sum(human_counts.values())
        matched += sum((human_counts & llm_counts).values())
    if total == 0:
        return 1.0
    return matched / total
