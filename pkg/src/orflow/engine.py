"""The reflective generation flow.

One engine turn asks the Reasoner to continue the transcript, stops at a
closing code fence, executes the tail block in the sandbox, splices the
output fence back into the transcript, and resumes — until generation
finishes without new code or a budget runs out. The transcript is always
the canonical rendering from `model.render_transcript`, so decomposed
steps reconstruct it byte-for-byte.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Optional, Sequence

from . import prompts
from .client import (
    ChatMessage,
    ClientError,
    Finish,
    MessageRole,
    Role,
    SamplingConfig,
)
from .model import (
    Hint,
    Problem,
    Step,
    Termination,
    Trajectory,
    non_output_text,
    render_step,
)
from .sandbox import (
    CodeRunner,
    ExecutionLimits,
    ExecutionSession,
    UnterminatedFence,
    contains_executable_block,
    extract_code_block,
    first_complete_block,
    format_output_block,
)
from .tokens import DEFAULT_TOKENIZER, Tokenizer

# Generation pauses when a fence line closes so the execution output can be
# spliced in before the model continues.
FENCE_STOP = "\n```\n"


@dataclass(frozen=True)
class FlowBudgets:
    """Caps on one reasoning flow: executions and total response tokens."""

    max_executions: int = 4
    max_response_tokens: int = 16384
    limits: Optional[ExecutionLimits] = None

    def __post_init__(self):
        if self.max_executions < 0:
            raise ValueError("max_executions must be >= 0")
        if self.max_response_tokens < 1:
            raise ValueError("max_response_tokens must be >= 1")
        if self.limits is None:
            object.__setattr__(
                self,
                "limits",
                ExecutionLimits(
                    max_executions_per_trajectory=max(1, self.max_executions)
                ),
            )
        elif self.max_executions > self.limits.max_executions_per_trajectory:
            raise ValueError(
                "max_executions exceeds the sandbox's per-trajectory cap"
            )


class GenerationFailed(Exception):
    """The endpoint failed mid-flow; carries the partial trajectory."""

    def __init__(self, message: str, partial: Trajectory, cause: Optional[Exception] = None):
        super().__init__(message)
        self.partial = partial
        self.cause = cause


_BOXED = "\\boxed{"


def _last_boxed_content(text: str) -> Optional[str]:
    idx = text.rfind(_BOXED)
    if idx == -1:
        return None
    start = idx + len(_BOXED)
    depth = 1
    pos = start
    while pos < len(text) and depth:
        if text[pos] == "{":
            depth += 1
        elif text[pos] == "}":
            depth -= 1
        pos += 1
    if depth:
        return None
    return text[start : pos - 1]


_STRIP_PATTERNS = ("\\$", "\\%", "\\,", "\\;", "\\!", "\\ ")
_STRIP_CHARS = "$€£¥,%"


def extract_final_answer(final_text: str) -> Optional[float]:
    """Numeric content of the last boxed expression, or None.

    Currency symbols, thousands separators, and whitespace are stripped
    before parsing; anything still non-numeric yields None rather than an
    error, since malformed boxes are a model flaw to be graded, not an
    engine failure.
    """
    content = _last_boxed_content(final_text)
    if content is None:
        return None
    cleaned = content.strip()
    for pat in _STRIP_PATTERNS:
        cleaned = cleaned.replace(pat, "")
    cleaned = cleaned.translate({ord(c): None for c in _STRIP_CHARS})
    cleaned = cleaned.strip().strip("{}").strip()
    try:
        value = float(cleaned)
    except ValueError:
        return None
    if not math.isfinite(value):
        return None
    return value


class ReflectiveEngine:
    """Runs reasoning flows for one Reasoner client and one runner."""

    def __init__(
        self,
        reasoner,
        runner: CodeRunner,
        budgets: FlowBudgets = FlowBudgets(),
        sampling: SamplingConfig = SamplingConfig(),
        tokenizer: Tokenizer = DEFAULT_TOKENIZER,
        prompt_template: Optional[str] = None,
        use_stop_sequences: bool = True,
    ):
        self.reasoner = reasoner
        self.runner = runner
        self.budgets = budgets
        self.sampling = sampling
        self.tokenizer = tokenizer
        self.prompt_template = prompt_template or prompts.reasoner_template()
        self.use_stop_sequences = use_stop_sequences

    def prompt_for(self, problem: Problem) -> str:
        return prompts.fill(self.prompt_template, problem=problem.description)

    def run(self, problem: Problem) -> Trajectory:
        return self._run_flow(problem, (), "", ())

    def resume(
        self,
        problem: Problem,
        prefix_steps: Sequence[Step],
        prefill_tail: str,
        hints: Sequence[Hint],
    ) -> Trajectory:
        return self._run_flow(problem, tuple(prefix_steps), prefill_tail, tuple(hints))

    # The flow proper. `prefix_steps` and `prefill_tail` carry resumption
    # state after a hint splice; the tail becomes the head of the next
    # step's reasoning so reconstruction stays lossless.
    def _run_flow(
        self,
        problem: Problem,
        prefix_steps: tuple[Step, ...],
        prefill_tail: str,
        hints: tuple[Hint, ...],
    ) -> Trajectory:
        prompt = self.prompt_for(problem)
        steps = list(prefix_steps)
        buffer = prefill_tail
        session = ExecutionSession(
            self.runner,
            self.budgets.limits,
            already_used=sum(1 for s in steps if s.output is not None),
        )
        tokens_used = self.tokenizer.count(
            "".join(
                s.reasoning + ("```python\n" + s.code + "\n```\n" if s.code is not None else "")
                for s in steps
            )
            + buffer
        )
        termination = Termination.COMPLETED
        failure = None
        final_text = ""

        while True:
            remaining = self.budgets.max_response_tokens - tokens_used
            if remaining <= 0:
                termination, final_text = Termination.TOKEN_BUDGET, buffer
                break
            budget_open = session.used < self.budgets.max_executions
            cfg = replace(
                self.sampling,
                max_tokens=min(self.sampling.max_tokens, remaining),
                stop_sequences=(FENCE_STOP,)
                if (self.use_stop_sequences and budget_open)
                else (),
            )
            transcript = "".join(render_step(s) for s in steps) + buffer
            messages = [ChatMessage(MessageRole.USER, prompt)]
            if transcript:
                messages.append(ChatMessage(MessageRole.ASSISTANT, transcript))
            try:
                completion = self.reasoner.complete(messages, cfg, Role.REASONER)
            except ClientError as exc:
                partial = self._build(
                    problem, steps, hints, buffer, Termination.FAILED, f"endpoint: {exc}"
                )
                raise GenerationFailed(str(exc), partial, exc) from exc

            segment = completion.text + (completion.stop_hit or "")
            tokens_used += self.tokenizer.count(segment)
            buffer += segment

            if completion.finish is Finish.LENGTH:
                try:
                    extract_code_block(buffer)
                except UnterminatedFence:
                    termination = Termination.FAILED
                    failure = "generation hit the token cap inside an open code fence"
                else:
                    termination = Termination.TOKEN_BUDGET
                final_text = buffer
                break

            tail = None
            if self.use_stop_sequences:
                try:
                    tail = extract_code_block(buffer)
                except UnterminatedFence:
                    termination = Termination.FAILED
                    failure = "generation ended inside an open code fence"
                    final_text = buffer
                    break
            else:
                # Over-generation fallback: honor the first complete block
                # and discard everything generated past it.
                first = first_complete_block(buffer)
                if first is None:
                    try:
                        extract_code_block(buffer)
                    except UnterminatedFence:
                        termination = Termination.FAILED
                        failure = "generation ended inside an open code fence"
                        final_text = buffer
                        break
                elif budget_open:
                    tail = first
                    tokens_used -= self.tokenizer.count(buffer[tail.end :])
                    buffer = buffer[: tail.end]

            if tail is None:
                if completion.finish is Finish.STOP:
                    # A fence closed but nothing executable terminates the
                    # buffer (for example a non-python block): keep going.
                    continue
                final_text = buffer
                if not budget_open and contains_executable_block(buffer):
                    termination = Termination.EXECUTION_BUDGET
                break

            if not budget_open:
                final_text = buffer
                termination = Termination.EXECUTION_BUDGET
                break

            result = session.execute(tail.code)
            steps.append(
                Step(
                    reasoning=buffer[: tail.start],
                    code=tail.code,
                    output=format_output_block(result),
                )
            )
            # Anything past the closing fence is whitespace (tail semantics);
            # it opens the next segment so no generated byte is dropped.
            buffer = buffer[tail.end :]

        return self._build(problem, steps, hints, final_text, termination, failure)

    def _build(
        self,
        problem: Problem,
        steps: Sequence[Step],
        hints: Sequence[Hint],
        final_text: str,
        termination: Termination,
        failure: Optional[str],
    ) -> Trajectory:
        draft = Trajectory(
            problem_id=problem.id,
            steps=tuple(steps),
            hints=(),
            final_text=final_text,
            final_answer=None,
            generated_token_count=0,
            hint_token_count=0,
            code_execution_count=sum(1 for s in steps if s.output is not None),
            termination=termination,
            failure=failure,
        )
        generated = self.tokenizer.count(non_output_text(draft))
        hint_tokens = sum(self.tokenizer.count(h.text) for h in hints)
        return replace(
            draft,
            hints=tuple(hints),
            final_answer=extract_final_answer(final_text),
            generated_token_count=generated,
            hint_token_count=min(hint_tokens, generated),
        )


def run_reflective_flow(
    problem: Problem,
    reasoner,
    budgets: FlowBudgets = FlowBudgets(),
    *,
    runner: CodeRunner,
    sampling: SamplingConfig = SamplingConfig(),
    tokenizer: Tokenizer = DEFAULT_TOKENIZER,
    prompt_template: Optional[str] = None,
    use_stop_sequences: bool = True,
) -> Trajectory:
    """One-shot form of `ReflectiveEngine.run`."""
    return ReflectiveEngine(
        reasoner,
        runner,
        budgets,
        sampling,
        tokenizer,
        prompt_template,
        use_stop_sequences,
    ).run(problem)
