"""Corpus loading, deterministic splits, and SFT-record emission.

The default split plan reproduces the published per-benchmark SFT/RL/Test
counts exactly; membership is derived from a seeded shuffle so a corpus
plus a seed fully determines every assignment. Emission keeps only golden
outcomes and marks execution-output spans so a downstream trainer can
exclude them from the loss.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence

from . import prompts
from .model import (
    Benchmark,
    CalmOutcome,
    CalmStatus,
    MalformedRecord,
    Problem,
    Split,
    output_spans,
    problem_from_dict,
    problem_to_dict,
    render_transcript,
)

# Reference share of generated tokens contributed by hints, reported next to
# each curated batch for comparison.
REFERENCE_TOKEN_MODIFICATION = 0.026


class DatasetError(Exception):
    pass


class CountMismatch(DatasetError):
    pass


@dataclass(frozen=True)
class SplitCounts:
    sft: int
    rl: int
    test: int

    def __post_init__(self):
        if min(self.sft, self.rl, self.test) < 0:
            raise ValueError("split counts must be non-negative")

    @property
    def total(self) -> int:
        return self.sft + self.rl + self.test


DEFAULT_SPLIT_COUNTS: dict[Benchmark, SplitCounts] = {
    Benchmark.NL4OPT: SplitCounts(8, 8, 30),
    Benchmark.MAMO_EASY: SplitCounts(200, 350, 100),
    Benchmark.MAMO_COMPLEX: SplitCounts(55, 56, 100),
    Benchmark.INDUSTRY_OR: SplitCounts(6, 12, 80),
    Benchmark.OPTMATH: SplitCounts(30, 36, 100),
    Benchmark.OPTIBENCH: SplitCounts(250, 257, 100),
    Benchmark.COMPLEX_OR: SplitCounts(0, 0, 18),
    Benchmark.NLP4LP: SplitCounts(0, 0, 12),
}


@dataclass(frozen=True)
class SplitPlan:
    counts: Mapping[Benchmark, SplitCounts]
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "counts", dict(self.counts))

    @classmethod
    def default(cls, seed: int = 0) -> "SplitPlan":
        return cls(counts=dict(DEFAULT_SPLIT_COUNTS), seed=seed)


@dataclass(frozen=True)
class SplitResult:
    sft: tuple[Problem, ...]
    rl: tuple[Problem, ...]
    test: tuple[Problem, ...]

    def all_problems(self) -> tuple[Problem, ...]:
        return self.sft + self.rl + self.test


def split_corpus(problems: Sequence[Problem], plan: SplitPlan) -> SplitResult:
    """Partition a corpus into disjoint, exhaustive SFT/RL/Test sets.

    Problems are sorted by id and shuffled with a seed derived from
    (plan.seed, benchmark), so identical inputs always produce identical
    assignments regardless of input order.
    """
    by_benchmark: dict[Benchmark, list[Problem]] = {}
    for p in problems:
        by_benchmark.setdefault(p.benchmark, []).append(p)

    for benchmark, group in by_benchmark.items():
        if benchmark not in plan.counts:
            raise CountMismatch(f"plan has no counts for benchmark {benchmark.value}")
    out_sft: list[Problem] = []
    out_rl: list[Problem] = []
    out_test: list[Problem] = []
    for benchmark in sorted(plan.counts, key=list(Benchmark).index):
        counts = plan.counts[benchmark]
        group = sorted(by_benchmark.get(benchmark, []), key=lambda p: p.id)
        if len(group) != counts.total:
            raise CountMismatch(
                f"{benchmark.value}: plan sums to {counts.total} "
                f"but corpus has {len(group)} problems"
            )
        seen = set()
        for p in group:
            if p.id in seen:
                raise CountMismatch(f"{benchmark.value}: duplicate problem id {p.id!r}")
            seen.add(p.id)
        rng = random.Random(f"{plan.seed}:{benchmark.value}")
        rng.shuffle(group)
        cut1, cut2 = counts.sft, counts.sft + counts.rl
        out_sft.extend(replace(p, split=Split.SFT) for p in group[:cut1])
        out_rl.extend(replace(p, split=Split.RL) for p in group[cut1:cut2])
        out_test.extend(replace(p, split=Split.TEST) for p in group[cut2:])
    return SplitResult(sft=tuple(out_sft), rl=tuple(out_rl), test=tuple(out_test))


# --- corpus files -------------------------------------------------------------

def load_corpus(path: str | Path) -> list[Problem]:
    """One problem per line: {id, benchmark, description, ground_truth[, split]}."""
    problems = []
    ids = set()
    with open(path, encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            try:
                data = json.loads(line)
            except json.JSONDecodeError as exc:
                raise MalformedRecord(f"line {lineno}", f"invalid JSON: {exc}") from None
            problem = problem_from_dict(data, path=f"line {lineno}")
            if problem.id in ids:
                raise MalformedRecord(f"line {lineno}.id", f"duplicate id {problem.id!r}")
            ids.add(problem.id)
            problems.append(problem)
    return problems


def dump_corpus(problems: Iterable[Problem]) -> str:
    return "".join(
        json.dumps(problem_to_dict(p), ensure_ascii=False) + "\n" for p in problems
    )


# --- SFT records ----------------------------------------------------------------

@dataclass(frozen=True)
class SftRecord:
    """One training example: prompts, full transcript, and masked output spans."""

    problem_id: str
    system_prompt: str
    user_prompt: str
    assistant_text: str
    mask_spans: tuple[tuple[int, int], ...]

    def __post_init__(self):
        object.__setattr__(
            self, "mask_spans", tuple((int(a), int(b)) for a, b in self.mask_spans)
        )
        previous_end = 0
        for start, end in self.mask_spans:
            if start < previous_end or end > len(self.assistant_text) or start >= end:
                raise ValueError("mask_spans must be sorted, disjoint, and in bounds")
            span = self.assistant_text[start:end]
            if not (span.startswith("```output\n") and span.endswith("\n```")):
                raise ValueError("each mask span must cover exactly one output block")
            previous_end = end

    def to_dict(self) -> dict:
        return {
            "problem_id": self.problem_id,
            "system_prompt": self.system_prompt,
            "user_prompt": self.user_prompt,
            "assistant_text": self.assistant_text,
            "mask_spans": [list(span) for span in self.mask_spans],
        }


@dataclass(frozen=True)
class FunnelMetrics:
    """Counts at each curation filter stage plus batch-level statistics.

    `flawless` counts trajectories that are both correct and verdict-clean
    (the golden set) so the stages are monotone non-increasing.
    """

    attempted: int
    correct: int
    flawless: int
    emitted: int
    mean_interventions: float
    mean_response_tokens: float
    token_modification_fraction: float
    reference_fraction: float = REFERENCE_TOKEN_MODIFICATION

    def to_dict(self) -> dict:
        return {
            "attempted": self.attempted,
            "correct": self.correct,
            "flawless": self.flawless,
            "emitted": self.emitted,
            "mean_interventions": self.mean_interventions,
            "mean_response_tokens": self.mean_response_tokens,
            "token_modification_fraction": self.token_modification_fraction,
            "reference_fraction": self.reference_fraction,
            "within_reference": self.token_modification_fraction
            <= self.reference_fraction,
        }


def render_funnel(metrics: FunnelMetrics) -> str:
    lines = [
        "curation funnel",
        f"  attempted : {metrics.attempted}",
        f"  correct   : {metrics.correct}",
        f"  flawless  : {metrics.flawless}",
        f"  emitted   : {metrics.emitted}",
        f"  mean interventions per emitted trajectory : {metrics.mean_interventions:.2f}",
        f"  mean response length (tokens)             : {metrics.mean_response_tokens:.1f}",
        f"  hint token fraction : {metrics.token_modification_fraction:.4f} "
        f"(reference {metrics.reference_fraction:.3f}, "
        f"{'within' if metrics.token_modification_fraction <= metrics.reference_fraction else 'above'})",
    ]
    return "\n".join(lines) + "\n"


def emit_sft_dataset(
    outcomes: Sequence[CalmOutcome],
    problems: Mapping[str, Problem],
    *,
    prompt_template: Optional[str] = None,
    system_prompt: str = "",
) -> tuple[list[SftRecord], FunnelMetrics]:
    """Filter golden outcomes into training records plus funnel statistics.

    Only GoldenAccepted outcomes are emitted; correct-but-flagged ones are
    counted but never included (callers persist them separately). Mask
    spans cover exactly the execution-output fences of the transcript.
    """
    template = prompt_template or prompts.reasoner_template()
    records: list[SftRecord] = []
    golden: list[CalmOutcome] = []
    correct = 0
    for outcome in outcomes:
        if outcome.status in (CalmStatus.GOLDEN_ACCEPTED, CalmStatus.CORRECT_BUT_FLAGGED):
            correct += 1
        if outcome.status is not CalmStatus.GOLDEN_ACCEPTED:
            continue
        golden.append(outcome)
        trajectory = outcome.trajectory
        problem = problems.get(trajectory.problem_id)
        if problem is None:
            raise DatasetError(f"no problem {trajectory.problem_id!r} for outcome")
        records.append(
            SftRecord(
                problem_id=trajectory.problem_id,
                system_prompt=system_prompt,
                user_prompt=prompts.fill(template, problem=problem.description),
                assistant_text=render_transcript(trajectory),
                mask_spans=output_spans(trajectory),
            )
        )

    emitted = len(records)
    if golden:
        mean_interventions = sum(o.interventions_used for o in golden) / emitted
        mean_tokens = sum(o.trajectory.generated_token_count for o in golden) / emitted
        total_generated = sum(o.trajectory.generated_token_count for o in golden)
        total_hints = sum(o.trajectory.hint_token_count for o in golden)
        fraction = total_hints / total_generated if total_generated else 0.0
    else:
        mean_interventions = mean_tokens = fraction = 0.0
    funnel = FunnelMetrics(
        attempted=len(outcomes),
        correct=correct,
        flawless=emitted,
        emitted=emitted,
        mean_interventions=mean_interventions,
        mean_response_tokens=mean_tokens,
        token_modification_fraction=fraction,
    )
    return records, funnel
