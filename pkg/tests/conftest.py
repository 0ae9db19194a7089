"""Shared test helpers: stub runners, problem factories, random trajectories."""

from __future__ import annotations

import random

import pytest

from orflow.model import Benchmark, Hint, Problem, Step, Termination, Trajectory, TriggerType
from orflow.sandbox import ExitStatus, SandboxResult, format_output_block
from orflow.tokens import DEFAULT_TOKENIZER


class SeqRunner:
    """Plays back canned execution results in order and records the code."""

    def __init__(self, stdouts):
        self.pending = list(stdouts)
        self.calls = []

    def run(self, code, limits):
        self.calls.append(code)
        if not self.pending:
            raise AssertionError("runner called more times than scripted")
        item = self.pending.pop(0)
        if isinstance(item, SandboxResult):
            return item
        return SandboxResult(stdout=item, stderr="", exit=ExitStatus.OK)


def make_problem(
    pid="p1",
    benchmark=Benchmark.NL4OPT,
    description="Minimize the total cost.",
    truth=10.0,
    **kwargs,
):
    return Problem(
        id=pid, benchmark=benchmark, description=description, ground_truth=truth, **kwargs
    )


def random_trajectory(rng: random.Random, problem_id="p1") -> Trajectory:
    """A structurally valid trajectory with random content."""
    words = ["model", "solve", "check", "cost", "is", "feasible", "optimal", "x"]

    def text(n):
        return " ".join(rng.choice(words) for _ in range(rng.randint(1, n))) + " "

    steps = []
    for _ in range(rng.randint(0, 4)):
        result = SandboxResult(
            stdout=text(6),
            stderr=text(3) if rng.random() < 0.3 else "",
            exit=ExitStatus.OK,
            truncated=rng.random() < 0.1,
        )
        steps.append(
            Step(
                reasoning=text(12),
                code=f"print({rng.randint(0, 99)})",
                output=format_output_block(result),
            )
        )
    final_text = text(10) + (f"$\\boxed{{{rng.randint(0, 500)}}}$" if rng.random() < 0.8 else "")
    hints = []
    iteration = 0
    for _ in range(rng.randint(0, 3)):
        iteration += rng.randint(1, 2)
        hints.append(
            Hint(
                iteration=iteration,
                step_index=rng.randint(0, len(steps)),
                char_offset=rng.randint(0, 40),
                trigger=TriggerType(rng.randint(1, 7)),
                text=text(8).strip() or "hint",
            )
        )
    from orflow.model import non_output_text

    draft = Trajectory(
        problem_id=problem_id,
        steps=tuple(steps),
        hints=(),
        final_text=final_text,
        final_answer=None,
        generated_token_count=0,
        hint_token_count=0,
        code_execution_count=len(steps),
        termination=rng.choice(list(Termination)),
        failure=None,
    )
    generated = DEFAULT_TOKENIZER.count(non_output_text(draft))
    hint_tokens = min(
        sum(DEFAULT_TOKENIZER.count(h.text) for h in hints), generated
    )
    from dataclasses import replace

    answer = rng.choice([None, float(rng.randint(-100, 100)), rng.random() * 100])
    return replace(
        draft,
        hints=tuple(hints),
        final_answer=answer,
        generated_token_count=generated,
        hint_token_count=hint_tokens,
    )


@pytest.fixture
def rng():
    return random.Random(20240817)
