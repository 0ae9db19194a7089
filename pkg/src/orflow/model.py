"""Domain types for reasoning-flow curation and grading.

Everything here is an immutable value object validated at construction.
The module also owns the canonical transcript rendering (how steps, code
fences, and execution-output fences concatenate back into the text the
model saw) and the line-delimited JSON record format used on disk.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from enum import Enum, IntEnum
from typing import Any, Mapping, Optional

CODE_FENCE_OPEN = "```python\n"
CODE_FENCE_CLOSE = "\n```\n"
OUTPUT_FENCE_OPEN = "```output\n"
OUTPUT_FENCE_CLOSE = "\n```"


class RecordError(ValueError):
    """Base for record/validation failures; carries the offending field path."""

    def __init__(self, field_path: str, message: str):
        self.field_path = field_path
        super().__init__(f"{field_path}: {message}")


class MalformedRecord(RecordError):
    """The byte sequence does not conform to the record schema."""


class InvariantViolation(RecordError):
    """A structurally valid record violates a domain invariant."""


class Benchmark(str, Enum):
    NL4OPT = "NL4Opt"
    MAMO_EASY = "MAMO-Easy"
    MAMO_COMPLEX = "MAMO-Complex"
    INDUSTRY_OR = "IndustryOR"
    OPTMATH = "OptMath"
    OPTIBENCH = "OptiBench"
    COMPLEX_OR = "ComplexOR"
    NLP4LP = "NLP4LP"


class Split(str, Enum):
    SFT = "SFT"
    RL = "RL"
    TEST = "Test"
    UNASSIGNED = "Unassigned"


class FlawCategory(str, Enum):
    CODE_UTILIZATION_DISTRUST = "CodeUtilizationDistrust"
    LACK_OF_OR_EXPERTISE = "LackOfOrExpertise"
    PROCEDURAL = "Procedural"


class TriggerType(IntEnum):
    """The seven catalogued reasoning-flaw triggers."""

    PREMATURE_NL_SOLVING = 1
    FRAGMENTED_CODING = 2
    REDUNDANT_MANUAL_VERIFICATION = 3
    LACK_OF_SANITY_CHECK = 4
    FLAWED_REASONING_OR_MODELING = 5
    IMPLEMENTATION_ERROR = 6
    PROTOCOL_VIOLATION = 7

    @property
    def category(self) -> FlawCategory:
        if self.value in (1, 2, 3):
            return FlawCategory.CODE_UTILIZATION_DISTRUST
        if self.value in (4, 5, 6):
            return FlawCategory.LACK_OF_OR_EXPERTISE
        return FlawCategory.PROCEDURAL


class Termination(str, Enum):
    """Why a reasoning flow stopped."""

    COMPLETED = "completed"
    EXECUTION_BUDGET = "execution_budget"
    TOKEN_BUDGET = "token_budget"
    FAILED = "failed"


class FailureReason(str, Enum):
    NO_BOXED_ANSWER = "NoBoxedAnswer"
    NON_NUMERIC = "NonNumeric"
    ZERO_TRUTH_ABSOLUTE_FALLBACK = "ZeroTruthAbsoluteFallback"


class CalmStatus(str, Enum):
    GOLDEN_ACCEPTED = "GoldenAccepted"
    CORRECT_BUT_FLAGGED = "CorrectButFlagged"
    DISCARDED_BUDGET_EXHAUSTED = "DiscardedBudgetExhausted"
    DISCARDED_INCORRECT = "DiscardedIncorrect"


def _require(condition: bool, path: str, message: str) -> None:
    if not condition:
        raise InvariantViolation(path, message)


@dataclass(frozen=True)
class Problem:
    """One benchmark instance: description plus ground-truth objective value."""

    id: str
    benchmark: Benchmark
    description: str
    ground_truth: float
    split: Split = Split.UNASSIGNED

    def __post_init__(self):
        _require(bool(self.id), "problem.id", "must be non-empty")
        _require(
            isinstance(self.ground_truth, (int, float))
            and math.isfinite(self.ground_truth),
            "problem.ground_truth",
            "must be finite",
        )
        object.__setattr__(self, "ground_truth", float(self.ground_truth))


@dataclass(frozen=True)
class Step:
    """One reasoning step: text, optionally a code block and its output."""

    reasoning: str
    code: Optional[str] = None
    output: Optional[str] = None

    def __post_init__(self):
        if self.output is not None:
            _require(
                self.code is not None,
                "step.output",
                "output present without code",
            )


@dataclass(frozen=True)
class Hint:
    """A single corrective intervention spliced into a trajectory."""

    iteration: int
    step_index: int
    char_offset: int
    trigger: TriggerType
    text: str

    def __post_init__(self):
        _require(self.iteration >= 0, "hint.iteration", "must be >= 0")
        _require(self.step_index >= 0, "hint.step_index", "must be >= 0")
        _require(self.char_offset >= 0, "hint.char_offset", "must be >= 0")
        _require(bool(self.text), "hint.text", "must be non-empty")
        object.__setattr__(self, "trigger", TriggerType(self.trigger))


@dataclass(frozen=True)
class Trajectory:
    """A full reasoning flow: interleaved steps plus the final answer segment.

    `generated_token_count` covers model-generated text (reasoning, code
    fences, final segment, spliced hints) and excludes execution-output
    blocks; `hint_token_count` is the portion contributed by hints.
    """

    problem_id: str
    steps: tuple[Step, ...]
    hints: tuple[Hint, ...]
    final_text: str
    final_answer: Optional[float]
    generated_token_count: int
    hint_token_count: int
    code_execution_count: int
    termination: Termination = Termination.COMPLETED
    failure: Optional[str] = None

    def __post_init__(self):
        object.__setattr__(self, "steps", tuple(self.steps))
        object.__setattr__(self, "hints", tuple(self.hints))
        _require(bool(self.problem_id), "trajectory.problem_id", "must be non-empty")
        executed = sum(1 for s in self.steps if s.output is not None)
        _require(
            self.code_execution_count == executed,
            "trajectory.code_execution_count",
            f"is {self.code_execution_count} but {executed} steps have output",
        )
        for i, s in enumerate(self.steps[:-1]):
            _require(
                bool(s.reasoning),
                f"trajectory.steps[{i}].reasoning",
                "may be empty only for the terminal step",
            )
        _require(
            0 <= self.hint_token_count <= self.generated_token_count,
            "trajectory.hint_token_count",
            "must be between 0 and generated_token_count",
        )
        last = -1
        for i, h in enumerate(self.hints):
            _require(
                h.iteration > last,
                f"trajectory.hints[{i}].iteration",
                "iteration indices must be strictly increasing",
            )
            last = h.iteration
            _require(
                h.step_index <= len(self.steps),
                f"trajectory.hints[{i}].step_index",
                "points past the end of the trajectory",
            )
        if self.final_answer is not None:
            _require(
                math.isfinite(self.final_answer),
                "trajectory.final_answer",
                "must be finite when present",
            )
            object.__setattr__(self, "final_answer", float(self.final_answer))


@dataclass(frozen=True)
class GradingResult:
    """Binary grading outcome for one trajectory's final answer."""

    extracted_answer: Optional[float]
    relative_error: Optional[float]
    reward: int
    failure_reason: Optional[FailureReason] = None

    def __post_init__(self):
        _require(self.reward in (0, 1), "grading.reward", "must be 0 or 1")
        if self.extracted_answer is None:
            _require(self.reward == 0, "grading.reward", "no answer implies reward 0")
        if self.reward == 1:
            _require(
                self.extracted_answer is not None and self.relative_error is not None,
                "grading.reward",
                "reward 1 requires an extracted answer and error",
            )
        if self.relative_error is not None:
            _require(
                self.relative_error >= 0,
                "grading.relative_error",
                "must be non-negative",
            )


@dataclass(frozen=True)
class CalmOutcome:
    """Terminal state of one correction loop run for one problem."""

    trajectory: Trajectory
    status: CalmStatus
    interventions_used: int
    verdict_log: tuple[tuple[int, str], ...]

    def __post_init__(self):
        object.__setattr__(
            self, "verdict_log", tuple((int(i), str(v)) for i, v in self.verdict_log)
        )
        _require(
            self.interventions_used >= 0,
            "outcome.interventions_used",
            "must be >= 0",
        )


@dataclass(frozen=True)
class FlawInstance:
    trigger: TriggerType
    step_index: int
    rationale: str

    def __post_init__(self):
        object.__setattr__(self, "trigger", TriggerType(self.trigger))
        _require(self.step_index >= 0, "flaw.step_index", "must be >= 0")


@dataclass(frozen=True)
class FlawReport:
    """Static classification of a finished trajectory against the triggers."""

    trajectory_id: str
    instances: tuple[FlawInstance, ...]

    def __post_init__(self):
        object.__setattr__(self, "instances", tuple(self.instances))
        _require(bool(self.trajectory_id), "report.trajectory_id", "must be non-empty")


# --- transcript rendering -------------------------------------------------
#
# The canonical transcript is the byte-for-byte concatenation of each step's
# reasoning, its code fence, and its output fence, followed by the final
# answer segment. Both the engine's continuation prompt and SFT emission use
# this single definition, so decomposing a trajectory and re-rendering it is
# the identity.


def render_step(step: Step) -> str:
    text = step.reasoning
    if step.code is not None:
        text += CODE_FENCE_OPEN + step.code + CODE_FENCE_CLOSE
    if step.output is not None:
        text += step.output
    return text


def render_transcript(trajectory: Trajectory) -> str:
    return "".join(render_step(s) for s in trajectory.steps) + trajectory.final_text


def output_spans(trajectory: Trajectory) -> tuple[tuple[int, int], ...]:
    """Character ranges of the execution-output blocks within the transcript."""
    spans = []
    pos = 0
    for step in trajectory.steps:
        pos += len(step.reasoning)
        if step.code is not None:
            pos += len(CODE_FENCE_OPEN) + len(step.code) + len(CODE_FENCE_CLOSE)
        if step.output is not None:
            spans.append((pos, pos + len(step.output)))
            pos += len(step.output)
    return tuple(spans)


def non_output_text(trajectory: Trajectory) -> str:
    """The model-generated portion of the transcript (output blocks removed)."""
    parts = []
    for step in trajectory.steps:
        parts.append(step.reasoning)
        if step.code is not None:
            parts.append(CODE_FENCE_OPEN + step.code + CODE_FENCE_CLOSE)
    parts.append(trajectory.final_text)
    return "".join(parts)


# --- serialization ---------------------------------------------------------
#
# One trajectory per line, UTF-8 JSON. Field names below are the stable
# record schema; unknown fields are rejected so schema drift is caught early.

_TRAJECTORY_FIELDS = {
    "problem_id",
    "steps",
    "hints",
    "final_text",
    "final_answer",
    "generated_token_count",
    "hint_token_count",
    "code_execution_count",
    "termination",
    "failure",
}


def _step_to_dict(s: Step) -> dict:
    return {"reasoning": s.reasoning, "code": s.code, "output": s.output}


def _hint_to_dict(h: Hint) -> dict:
    return {
        "iteration": h.iteration,
        "step_index": h.step_index,
        "char_offset": h.char_offset,
        "trigger": int(h.trigger),
        "text": h.text,
    }


def trajectory_to_dict(t: Trajectory) -> dict:
    return {
        "problem_id": t.problem_id,
        "steps": [_step_to_dict(s) for s in t.steps],
        "hints": [_hint_to_dict(h) for h in t.hints],
        "final_text": t.final_text,
        "final_answer": t.final_answer,
        "generated_token_count": t.generated_token_count,
        "hint_token_count": t.hint_token_count,
        "code_execution_count": t.code_execution_count,
        "termination": t.termination.value,
        "failure": t.failure,
    }


def serialize_trajectory(t: Trajectory) -> bytes:
    return (json.dumps(trajectory_to_dict(t), ensure_ascii=False) + "\n").encode(
        "utf-8"
    )


def _expect(data: Mapping, key: str, types, path: str, optional: bool = False):
    if key not in data:
        if optional:
            return None
        raise MalformedRecord(f"{path}.{key}", "missing field")
    value = data[key]
    if value is None and optional:
        return None
    if not isinstance(value, types):
        raise MalformedRecord(
            f"{path}.{key}", f"expected {types}, got {type(value).__name__}"
        )
    return value


def _step_from_dict(data: Any, path: str) -> Step:
    if not isinstance(data, dict):
        raise MalformedRecord(path, "step must be an object")
    return Step(
        reasoning=_expect(data, "reasoning", str, path),
        code=_expect(data, "code", str, path, optional=True),
        output=_expect(data, "output", str, path, optional=True),
    )


def _hint_from_dict(data: Any, path: str) -> Hint:
    if not isinstance(data, dict):
        raise MalformedRecord(path, "hint must be an object")
    trigger = _expect(data, "trigger", int, path)
    try:
        trigger = TriggerType(trigger)
    except ValueError:
        raise MalformedRecord(f"{path}.trigger", f"unknown trigger {trigger}") from None
    return Hint(
        iteration=_expect(data, "iteration", int, path),
        step_index=_expect(data, "step_index", int, path),
        char_offset=_expect(data, "char_offset", int, path),
        trigger=trigger,
        text=_expect(data, "text", str, path),
    )


def trajectory_from_dict(data: Mapping, path: str = "trajectory") -> Trajectory:
    if not isinstance(data, Mapping):
        raise MalformedRecord(path, "record must be an object")
    unknown = set(data) - _TRAJECTORY_FIELDS
    if unknown:
        raise MalformedRecord(f"{path}.{sorted(unknown)[0]}", "unknown field")
    steps = _expect(data, "steps", list, path)
    hints = _expect(data, "hints", list, path)
    termination = _expect(data, "termination", str, path)
    try:
        termination = Termination(termination)
    except ValueError:
        raise MalformedRecord(
            f"{path}.termination", f"unknown termination {termination!r}"
        ) from None
    return Trajectory(
        problem_id=_expect(data, "problem_id", str, path),
        steps=tuple(
            _step_from_dict(s, f"{path}.steps[{i}]") for i, s in enumerate(steps)
        ),
        hints=tuple(
            _hint_from_dict(h, f"{path}.hints[{i}]") for i, h in enumerate(hints)
        ),
        final_text=_expect(data, "final_text", str, path),
        final_answer=_expect(data, "final_answer", (int, float), path, optional=True),
        generated_token_count=_expect(data, "generated_token_count", int, path),
        hint_token_count=_expect(data, "hint_token_count", int, path),
        code_execution_count=_expect(data, "code_execution_count", int, path),
        termination=termination,
        failure=_expect(data, "failure", str, path, optional=True),
    )


def deserialize_trajectory(b: bytes | str) -> Trajectory:
    if isinstance(b, bytes):
        try:
            b = b.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise MalformedRecord("trajectory", f"invalid UTF-8: {exc}") from None
    try:
        data = json.loads(b)
    except json.JSONDecodeError as exc:
        raise MalformedRecord("trajectory", f"invalid JSON: {exc}") from None
    return trajectory_from_dict(data)


# --- problem corpus records -------------------------------------------------

def problem_to_dict(p: Problem) -> dict:
    record = {
        "id": p.id,
        "benchmark": p.benchmark.value,
        "description": p.description,
        "ground_truth": p.ground_truth,
    }
    if p.split is not Split.UNASSIGNED:
        record["split"] = p.split.value
    return record


def problem_from_dict(data: Mapping, path: str = "problem") -> Problem:
    if not isinstance(data, Mapping):
        raise MalformedRecord(path, "record must be an object")
    benchmark = _expect(data, "benchmark", str, path)
    try:
        benchmark = Benchmark(benchmark)
    except ValueError:
        raise MalformedRecord(
            f"{path}.benchmark", f"unknown benchmark {benchmark!r}"
        ) from None
    split = _expect(data, "split", str, path, optional=True)
    try:
        split = Split(split) if split is not None else Split.UNASSIGNED
    except ValueError:
        raise MalformedRecord(f"{path}.split", f"unknown split {split!r}") from None
    return Problem(
        id=_expect(data, "id", str, path),
        benchmark=benchmark,
        description=_expect(data, "description", str, path),
        ground_truth=_expect(data, "ground_truth", (int, float), path),
        split=split,
    )


# --- correction-loop outcome records ----------------------------------------

def outcome_to_dict(o: CalmOutcome) -> dict:
    return {
        "trajectory": trajectory_to_dict(o.trajectory),
        "status": o.status.value,
        "interventions_used": o.interventions_used,
        "verdict_log": [[i, v] for i, v in o.verdict_log],
    }


def outcome_from_dict(data: Mapping, path: str = "outcome") -> CalmOutcome:
    if not isinstance(data, Mapping):
        raise MalformedRecord(path, "record must be an object")
    status = _expect(data, "status", str, path)
    try:
        status = CalmStatus(status)
    except ValueError:
        raise MalformedRecord(f"{path}.status", f"unknown status {status!r}") from None
    log = _expect(data, "verdict_log", list, path)
    entries = []
    for i, entry in enumerate(log):
        if (
            not isinstance(entry, (list, tuple))
            or len(entry) != 2
            or not isinstance(entry[0], int)
            or not isinstance(entry[1], str)
        ):
            raise MalformedRecord(
                f"{path}.verdict_log[{i}]", "expected [iteration, verdict]"
            )
        entries.append((entry[0], entry[1]))
    return CalmOutcome(
        trajectory=trajectory_from_dict(
            _expect(data, "trajectory", dict, path), f"{path}.trajectory"
        ),
        status=status,
        interventions_used=_expect(data, "interventions_used", int, path),
        verdict_log=tuple(entries),
    )


# --- flaw report records -----------------------------------------------------

def flaw_report_to_dict(r: FlawReport) -> dict:
    return {
        "trajectory_id": r.trajectory_id,
        "instances": [
            {
                "trigger": int(i.trigger),
                "step_index": i.step_index,
                "rationale": i.rationale,
            }
            for i in r.instances
        ],
    }


def flaw_report_from_dict(data: Mapping, path: str = "flaw_report") -> FlawReport:
    if not isinstance(data, Mapping):
        raise MalformedRecord(path, "record must be an object")
    instances = []
    for i, inst in enumerate(_expect(data, "instances", list, path)):
        if not isinstance(inst, dict):
            raise MalformedRecord(f"{path}.instances[{i}]", "must be an object")
        trigger = _expect(inst, "trigger", int, f"{path}.instances[{i}]")
        try:
            trigger = TriggerType(trigger)
        except ValueError:
            raise MalformedRecord(
                f"{path}.instances[{i}].trigger", f"unknown trigger {trigger}"
            ) from None
        instances.append(
            FlawInstance(
                trigger=trigger,
                step_index=_expect(inst, "step_index", int, f"{path}.instances[{i}]"),
                rationale=_expect(inst, "rationale", str, f"{path}.instances[{i}]"),
            )
        )
    return FlawReport(
        trajectory_id=_expect(data, "trajectory_id", str, path),
        instances=tuple(instances),
    )
