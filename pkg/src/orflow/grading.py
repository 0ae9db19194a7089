"""Answer grading and the benchmark evaluation protocol.

Grading is a binary signal: reward 1 when the extracted answer lies within
a relative error tolerance of the ground truth (inclusive boundary), with
an absolute-error fallback when the truth is zero. Evaluation reports
pass@1 as the mean success over independently sampled flows per problem,
aggregated per benchmark and as an unweighted macro average.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from fractions import Fraction
from typing import Optional, Sequence

from .client import SamplingConfig
from .engine import FlowBudgets, GenerationFailed, ReflectiveEngine
from .model import (
    Benchmark,
    FailureReason,
    GradingResult,
    InvariantViolation,
    Problem,
    Split,
    Trajectory,
)
from .sandbox import CodeRunner
from .tokens import DEFAULT_TOKENIZER, Tokenizer

DEFAULT_EPSILON = 1e-4


class GraderError(Exception):
    pass


class EmptyBenchmark(GraderError):
    pass


def _decimal_value(x: float) -> Fraction:
    """The exact value of a float's shortest round-tripping decimal form.

    Answers and tolerances enter this system as decimal text, so comparing
    their decimal values keeps the inclusive boundary exact: an answer of
    100.01 against truth 100 at epsilon 1e-4 sits exactly on the boundary
    and must score 1, which raw float64 arithmetic would miss.
    """
    return Fraction(repr(float(x)))


def grade(
    answer: Optional[float],
    truth: float,
    epsilon: float = DEFAULT_EPSILON,
    *,
    missing_reason: FailureReason = FailureReason.NO_BOXED_ANSWER,
) -> GradingResult:
    """Binary reward for a numeric answer against the ground truth.

    reward = 1 iff the answer is present and |answer - truth| / |truth| <=
    epsilon (inclusive, evaluated exactly on the decimal values). When
    truth == 0 the relative error is undefined, so the test falls back to
    |answer| <= epsilon and the result is flagged for audit.
    """
    if not math.isfinite(truth):
        raise ValueError("ground truth must be finite")
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    if answer is None or not math.isfinite(answer):
        return GradingResult(
            extracted_answer=None,
            relative_error=None,
            reward=0,
            failure_reason=missing_reason,
        )
    a, t, e = _decimal_value(answer), _decimal_value(truth), _decimal_value(epsilon)
    if t == 0:
        error = abs(a)
        return GradingResult(
            extracted_answer=answer,
            relative_error=float(error),
            reward=1 if error <= e else 0,
            failure_reason=FailureReason.ZERO_TRUTH_ABSOLUTE_FALLBACK,
        )
    error = abs(a - t) / abs(t)
    return GradingResult(
        extracted_answer=answer,
        relative_error=float(error),
        reward=1 if error <= e else 0,
        failure_reason=None,
    )


def grade_trajectory(
    trajectory: Trajectory, problem: Problem, epsilon: float = DEFAULT_EPSILON
) -> GradingResult:
    """Grade a trajectory, distinguishing a missing box from a non-numeric one."""
    if trajectory.final_answer is not None:
        return grade(trajectory.final_answer, problem.ground_truth, epsilon)
    has_box = "\\boxed{" in trajectory.final_text
    reason = FailureReason.NON_NUMERIC if has_box else FailureReason.NO_BOXED_ANSWER
    return grade(None, problem.ground_truth, epsilon, missing_reason=reason)


@dataclass(frozen=True)
class EvalConfig:
    samples_per_problem: int = 8
    epsilon: float = DEFAULT_EPSILON
    sampling: SamplingConfig = SamplingConfig(temperature=0.6, top_p=0.95)
    budgets: FlowBudgets = FlowBudgets()

    def __post_init__(self):
        if self.samples_per_problem < 1:
            raise ValueError("samples_per_problem must be >= 1")
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")


@dataclass(frozen=True)
class SampleResult:
    """One evaluation sample: its grading, and the flow error if it crashed."""

    grading: GradingResult
    flow_error: Optional[str] = None


@dataclass(frozen=True)
class ProblemScore:
    problem_id: str
    benchmark: Benchmark
    successes: int
    samples: int

    @property
    def score(self) -> float:
        return self.successes / self.samples


@dataclass(frozen=True)
class EvalReport:
    per_benchmark: dict[Benchmark, float]
    macro_avg: float
    per_problem: tuple[ProblemScore, ...]
    epsilon: float
    samples_per_problem: int

    def __post_init__(self):
        object.__setattr__(self, "per_problem", tuple(self.per_problem))
        if self.per_benchmark:
            expected = sum(self.per_benchmark.values()) / len(self.per_benchmark)
            if abs(expected - self.macro_avg) > 1e-12:
                raise ValueError("macro_avg must be the unweighted benchmark mean")

    def to_dict(self) -> dict:
        return {
            "epsilon": self.epsilon,
            "samples_per_problem": self.samples_per_problem,
            "per_benchmark": {b.value: s for b, s in self.per_benchmark.items()},
            "macro_avg": self.macro_avg,
            "per_problem": [
                {
                    "problem_id": p.problem_id,
                    "benchmark": p.benchmark.value,
                    "successes": p.successes,
                    "samples": p.samples,
                }
                for p in self.per_problem
            ],
        }


def pass_at_1(
    problem: Problem,
    reasoner,
    cfg: EvalConfig = EvalConfig(),
    *,
    runner: CodeRunner,
    tokenizer: Tokenizer = DEFAULT_TOKENIZER,
    prompt_template: Optional[str] = None,
    use_stop_sequences: bool = True,
) -> tuple[float, list[SampleResult]]:
    """Mean binary success over independent samples of one problem.

    A sample whose flow fails scores 0 and is flagged, never dropped, so
    the denominator is always `samples_per_problem`.
    """
    results: list[SampleResult] = []
    for index in range(cfg.samples_per_problem):
        sampling = cfg.sampling
        if sampling.seed is not None:
            sampling = replace(sampling, seed=sampling.seed + index)
        engine = ReflectiveEngine(
            reasoner,
            runner,
            cfg.budgets,
            sampling,
            tokenizer,
            prompt_template,
            use_stop_sequences,
        )
        try:
            trajectory = engine.run(problem)
        except (GenerationFailed, InvariantViolation) as exc:
            # A failed sample scores 0 and is flagged, never dropped.
            results.append(
                SampleResult(
                    grading=grade(None, problem.ground_truth, cfg.epsilon),
                    flow_error=str(exc),
                )
            )
            continue
        results.append(
            SampleResult(grading=grade_trajectory(trajectory, problem, cfg.epsilon))
        )
    score = sum(r.grading.reward for r in results) / cfg.samples_per_problem
    return score, results


def evaluate_suite(
    problems: Sequence[Problem],
    reasoner,
    cfg: EvalConfig = EvalConfig(),
    *,
    runner: CodeRunner,
    tokenizer: Tokenizer = DEFAULT_TOKENIZER,
    prompt_template: Optional[str] = None,
    use_stop_sequences: bool = True,
    workers: int = 1,
    benchmarks: Optional[Sequence[Benchmark]] = None,
) -> EvalReport:
    """Score a test suite: per-benchmark pass@1 plus the unweighted macro average.

    Problems run concurrently up to `workers`; the report is a deterministic
    reduction keyed by problem id, independent of completion order.
    """
    problems = [p for p in problems if p.split in (Split.TEST, Split.UNASSIGNED)]
    if not problems and not benchmarks:
        raise EmptyBenchmark("no test problems to evaluate")
    wanted = list(benchmarks) if benchmarks else sorted(
        {p.benchmark for p in problems}, key=list(Benchmark).index
    )
    by_benchmark: dict[Benchmark, list[Problem]] = {b: [] for b in wanted}
    for p in problems:
        if p.benchmark in by_benchmark:
            by_benchmark[p.benchmark].append(p)
    for b, group in by_benchmark.items():
        if not group:
            raise EmptyBenchmark(f"benchmark {b.value} has no test problems")

    def run_one(problem: Problem) -> ProblemScore:
        _, samples = pass_at_1(
            problem,
            reasoner,
            cfg,
            runner=runner,
            tokenizer=tokenizer,
            prompt_template=prompt_template,
            use_stop_sequences=use_stop_sequences,
        )
        return ProblemScore(
            problem_id=problem.id,
            benchmark=problem.benchmark,
            successes=sum(s.grading.reward for s in samples),
            samples=len(samples),
        )

    ordered = [p for b in wanted for p in by_benchmark[b]]
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            scores = list(pool.map(run_one, ordered))
    else:
        scores = [run_one(p) for p in ordered]
    scores.sort(key=lambda s: (list(Benchmark).index(s.benchmark), s.problem_id))

    per_benchmark = {}
    for b in wanted:
        group = [s for s in scores if s.benchmark == b]
        per_benchmark[b] = sum(s.score for s in group) / len(group)
    macro = sum(per_benchmark.values()) / len(per_benchmark)
    return EvalReport(
        per_benchmark=per_benchmark,
        macro_avg=macro,
        per_problem=tuple(scores),
        epsilon=cfg.epsilon,
        samples_per_problem=cfg.samples_per_problem,
    )


def render_eval_table(report: EvalReport) -> str:
    """Plain-text results table, benchmarks in canonical column order."""
    names = [b.value for b in report.per_benchmark] + ["Macro AVG"]
    values = [f"{100 * v:.1f}" for v in report.per_benchmark.values()]
    values.append(f"{100 * report.macro_avg:.1f}")
    widths = [max(len(n), len(v)) for n, v in zip(names, values)]
    header = " | ".join(n.ljust(w) for n, w in zip(names, widths))
    rule = "-+-".join("-" * w for w in widths)
    row = " | ".join(v.rjust(w) for v, w in zip(values, widths))
    return (
        f"pass@1 averaged over {report.samples_per_problem} samples, "
        f"relative-error tolerance epsilon={report.epsilon:g}\n"
        f"{header}\n{rule}\n{row}\n"
    )
