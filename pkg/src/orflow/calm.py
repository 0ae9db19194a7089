"""The Reasoner–Intervener correction loop.

An Intervener model inspects each finished trajectory. When it finds a
flaw it names the trigger, the step, and a short first-person hint; the
trajectory is truncated at that step, the hint is spliced in as the
Reasoner's own thought, and generation resumes. The loop ends at a clean
verdict or after the intervention budget, and the outcome records whether
the result is golden (clean verdict and correct answer), correct but
still flagged, or discarded.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from enum import Enum
from typing import Optional, Sequence

from . import prompts
from .client import ChatMessage, MessageRole, Role, SamplingConfig
from .engine import FlowBudgets, GenerationFailed, ReflectiveEngine
from .grading import grade
from .model import (
    CalmOutcome,
    CalmStatus,
    Hint,
    Problem,
    Step,
    Trajectory,
    TriggerType,
    render_step,
    render_transcript,
)
from .sandbox import CodeRunner
from .tokens import DEFAULT_TOKENIZER, Tokenizer

NO_INTERVENTION_MARKER = "NO INTERVENTION"

# Higher temperature than the Reasoner's, to diversify analytical feedback.
DEFAULT_INTERVENER_SAMPLING = SamplingConfig(temperature=1.0, top_p=0.95, max_tokens=4096)


class CalmError(Exception):
    pass


class UnparseableVerdict(CalmError):
    """The intervener response matched neither verdict schema (after retry)."""

    def __init__(self, message: str, iteration: Optional[int] = None):
        super().__init__(message)
        self.iteration = iteration


class InvalidSplicePoint(CalmError):
    pass


class Decision(str, Enum):
    NO_INTERVENTION = "no_intervention"
    INTERVENE = "intervene"


@dataclass(frozen=True)
class InterventionVerdict:
    decision: Decision
    trigger: Optional[TriggerType]
    step_index: Optional[int]
    char_offset: Optional[int]
    hint_text: Optional[str]
    rationale: str

    def __post_init__(self):
        if self.decision is Decision.INTERVENE:
            if self.trigger is None or self.step_index is None or not self.hint_text:
                raise ValueError(
                    "an intervene verdict requires trigger, step_index, and hint_text"
                )

    def summary(self) -> str:
        if self.decision is Decision.NO_INTERVENTION:
            return NO_INTERVENTION_MARKER
        return f"Trigger {int(self.trigger)} at step {self.step_index}: {self.hint_text}"


@dataclass(frozen=True)
class CalmConfig:
    max_interventions: int = 5
    reasoner_sampling: SamplingConfig = SamplingConfig(temperature=0.6, top_p=0.95)
    intervener_sampling: SamplingConfig = DEFAULT_INTERVENER_SAMPLING
    budgets: FlowBudgets = FlowBudgets()
    epsilon: float = 1e-4
    include_ground_truth: bool = True

    def __post_init__(self):
        if self.max_interventions < 1:
            raise ValueError("max_interventions must be >= 1")
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")


# --- verdict parsing ---------------------------------------------------------

_VERDICT_LINE = re.compile(r"^\s*VERDICT:\s*(.+)$", re.MULTILINE)
_TRIGGER_PATTERN = re.compile(
    r"Trigger\s*#?\s*([1-7])\s*(?:at|,|@)?\s*step\s*(\d+)"
    r"(?:\s*,?\s*(?:offset|char)\s*(\d+))?\s*[:\-—]?\s*",
    re.IGNORECASE,
)


def _parse_verdict_text(text: str) -> Optional[InterventionVerdict]:
    candidates = [m.group(1) for m in _VERDICT_LINE.finditer(text)]
    # Prefer an explicit VERDICT line; fall back to scanning the whole body.
    for payload in candidates or [text]:
        match = _TRIGGER_PATTERN.search(payload)
        if match:
            hint = payload[match.end() :].strip()
            if not hint and payload is not text:
                # VERDICT line without inline hint; take the remainder of the body.
                tail = text[text.find(payload) + len(payload) :].strip()
                hint = tail
            if not hint:
                return None
            return InterventionVerdict(
                decision=Decision.INTERVENE,
                trigger=TriggerType(int(match.group(1))),
                step_index=int(match.group(2)),
                char_offset=int(match.group(3)) if match.group(3) else None,
                hint_text=hint,
                rationale=text,
            )
        if NO_INTERVENTION_MARKER in payload.upper().replace("_", " "):
            return InterventionVerdict(
                decision=Decision.NO_INTERVENTION,
                trigger=None,
                step_index=None,
                char_offset=None,
                hint_text=None,
                rationale=text,
            )
    if NO_INTERVENTION_MARKER in text.upper().replace("_", " "):
        return InterventionVerdict(
            decision=Decision.NO_INTERVENTION,
            trigger=None,
            step_index=None,
            char_offset=None,
            hint_text=None,
            rationale=text,
        )
    return None


def evaluate_trajectory(
    trajectory: Trajectory,
    problem: Problem,
    intervener,
    *,
    sampling: SamplingConfig = DEFAULT_INTERVENER_SAMPLING,
    template: Optional[str] = None,
    include_ground_truth: bool = True,
) -> InterventionVerdict:
    """Ask the Intervener to inspect a trajectory and parse its verdict.

    An unparseable response is retried once with an identical request; a
    second failure raises UnparseableVerdict.
    """
    template = template or prompts.intervener_template()
    prompt = prompts.fill(
        template,
        problem=problem.description,
        transcript=render_transcript(trajectory),
        ground_truth=repr(problem.ground_truth) if include_ground_truth else "(withheld)",
    )
    messages = [ChatMessage(MessageRole.USER, prompt)]
    last_text = ""
    for _ in range(2):
        completion = intervener.complete(messages, sampling, Role.INTERVENER)
        last_text = completion.text
        verdict = _parse_verdict_text(completion.text)
        if verdict is not None:
            return verdict
    raise UnparseableVerdict(
        f"intervener response matched no verdict schema: {last_text[:200]!r}"
    )


# --- hint splicing -----------------------------------------------------------

@dataclass(frozen=True)
class ResumptionContext:
    """Prompt messages plus the decomposed prefill for the engine."""

    messages: tuple[ChatMessage, ...]
    prefill: str
    prefix_steps: tuple[Step, ...]
    prefill_tail: str


def splice_hint(
    trajectory: Trajectory,
    verdict: InterventionVerdict,
    problem: Problem,
    *,
    prompt_template: Optional[str] = None,
) -> ResumptionContext:
    """Build the resumption context for a hint.

    Steps before the flagged one survive whole; the flagged step is
    truncated at the verdict's character offset (0 removes it entirely) and
    the hint is appended in the Reasoner's voice. A step index equal to the
    number of steps addresses the final answer segment. Offsets are over
    the step's rendered text and should normally fall within its reasoning
    part: an offset that keeps a fence fragment splices that fragment into
    the regenerated reasoning verbatim.
    """
    if verdict.decision is not Decision.INTERVENE:
        raise ValueError("splice_hint requires an intervene verdict")
    index = verdict.step_index
    if index > len(trajectory.steps):
        raise InvalidSplicePoint(
            f"step index {index} exceeds trajectory length {len(trajectory.steps)}"
        )
    if index == len(trajectory.steps):
        kept = trajectory.steps
        segment = trajectory.final_text
    else:
        kept = trajectory.steps[:index]
        segment = render_step(trajectory.steps[index])
    offset = verdict.char_offset or 0
    if offset > len(segment):
        raise InvalidSplicePoint(
            f"char offset {offset} exceeds segment length {len(segment)}"
        )
    prefill_tail = segment[:offset] + verdict.hint_text
    prefill = "".join(render_step(s) for s in kept) + prefill_tail

    template = prompt_template or prompts.reasoner_template()
    prompt = prompts.fill(template, problem=problem.description)
    messages = (
        ChatMessage(MessageRole.USER, prompt),
        ChatMessage(MessageRole.ASSISTANT, prefill),
    )
    return ResumptionContext(
        messages=messages,
        prefill=prefill,
        prefix_steps=kept,
        prefill_tail=prefill_tail,
    )


def _carry_hints(carried: Sequence[Hint], new: Hint) -> tuple[Hint, ...]:
    """Drop carried hints whose spliced text no longer survives the new cut."""
    survivors = [
        h
        for h in carried
        if h.step_index < new.step_index
        or (
            h.step_index == new.step_index
            and h.char_offset + len(h.text) <= new.char_offset
        )
    ]
    survivors.append(new)
    return tuple(survivors)


# --- the loop ------------------------------------------------------------------

def calm_loop(
    problem: Problem,
    reasoner,
    intervener,
    cfg: CalmConfig = CalmConfig(),
    *,
    runner: CodeRunner,
    tokenizer: Tokenizer = DEFAULT_TOKENIZER,
    reasoner_template: Optional[str] = None,
    intervener_template: Optional[str] = None,
    use_stop_sequences: bool = True,
) -> CalmOutcome:
    """Generate, inspect, splice, and resume until clean or out of budget."""
    engine = ReflectiveEngine(
        reasoner,
        runner,
        cfg.budgets,
        cfg.reasoner_sampling,
        tokenizer,
        reasoner_template,
        use_stop_sequences,
    )
    trajectory = engine.run(problem)
    verdict_log: list[tuple[int, str]] = []
    carried: tuple[Hint, ...] = ()

    for iteration in range(cfg.max_interventions + 1):
        try:
            verdict = evaluate_trajectory(
                trajectory,
                problem,
                intervener,
                sampling=cfg.intervener_sampling,
                template=intervener_template,
                include_ground_truth=cfg.include_ground_truth,
            )
        except UnparseableVerdict as exc:
            raise UnparseableVerdict(str(exc), iteration=iteration) from None
        verdict_log.append((iteration, verdict.summary()))

        if verdict.decision is Decision.NO_INTERVENTION:
            result = grade(trajectory.final_answer, problem.ground_truth, cfg.epsilon)
            status = (
                CalmStatus.GOLDEN_ACCEPTED
                if result.reward == 1
                else CalmStatus.DISCARDED_INCORRECT
            )
            return CalmOutcome(
                trajectory=trajectory,
                status=status,
                interventions_used=iteration,
                verdict_log=tuple(verdict_log),
            )

        if iteration >= cfg.max_interventions:
            # Still flawed after the last permitted intervention.
            result = grade(trajectory.final_answer, problem.ground_truth, cfg.epsilon)
            status = (
                CalmStatus.CORRECT_BUT_FLAGGED
                if result.reward == 1
                else CalmStatus.DISCARDED_BUDGET_EXHAUSTED
            )
            return CalmOutcome(
                trajectory=trajectory,
                status=status,
                interventions_used=cfg.max_interventions,
                verdict_log=tuple(verdict_log),
            )

        hint = Hint(
            iteration=iteration,
            step_index=verdict.step_index,
            char_offset=verdict.char_offset or 0,
            trigger=verdict.trigger,
            text=verdict.hint_text,
        )
        context = splice_hint(
            trajectory, verdict, problem, prompt_template=reasoner_template
        )
        carried = _carry_hints(carried, hint)
        try:
            trajectory = engine.resume(
                problem, context.prefix_steps, context.prefill_tail, carried
            )
        except GenerationFailed as exc:
            exc.iteration = iteration
            raise

    raise AssertionError("unreachable: loop bounded by max_interventions")


def token_modification_fraction(outcome: CalmOutcome) -> float:
    """Share of the final trajectory's generated tokens contributed by hints."""
    generated = outcome.trajectory.generated_token_count
    if generated == 0:
        return 0.0
    return outcome.trajectory.hint_token_count / generated
