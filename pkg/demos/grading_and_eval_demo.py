"""Grading semantics and the averaged pass@1 protocol.

Shows the inclusive relative-error boundary, the zero-truth fallback, and
an eight-sample evaluation aggregated into per-benchmark and macro scores.
"""

from orflow import Benchmark, Problem, grade
from orflow.client import ScriptedClient
from orflow.grading import EvalConfig, evaluate_suite, pass_at_1, render_eval_table
from orflow.model import Split


class NoRunner:
    def run(self, code, limits):
        raise AssertionError("these demos never execute code")


print("=== grading rule (epsilon = 1e-4, inclusive) ===")
for answer, truth in [(100.01, 100), (100.02, 100), (10, 10), (None, 25), (0.5, 0.0)]:
    result = grade(answer, truth, 1e-4)
    err = "-" if result.relative_error is None else f"{result.relative_error:.2e}"
    flag = f" [{result.failure_reason.value}]" if result.failure_reason else ""
    print(f"  answer={answer!s:>8}  truth={truth!s:>4}  error={err:>9} "
          f"-> reward {result.reward}{flag}")

print()
print("=== pass@1 over 8 samples ===")
problem = Problem(
    id="demo", benchmark=Benchmark.NL4OPT, description="toy", ground_truth=10.0
)
answers = [10, 10, 10, 3, 10, 4, 10, 10]
score, samples = pass_at_1(
    problem,
    ScriptedClient([f"final \\boxed{{{a}}}" for a in answers]),
    EvalConfig(),
    runner=NoRunner(),
)
print(f"  sample rewards: {[s.grading.reward for s in samples]}")
print(f"  pass@1 = {score}")

print()
print("=== suite report ===")
problems = [
    Problem(id=f"nl-{i}", benchmark=Benchmark.NL4OPT, description=f"marker-nl-{i}",
            ground_truth=1.0, split=Split.TEST)
    for i in range(2)
] + [
    Problem(id="om-0", benchmark=Benchmark.OPTMATH, description="marker-om-0",
            ground_truth=2.0, split=Split.TEST)
]
scripted = {
    "marker-nl-0": [1, 1, 1, 1],
    "marker-nl-1": [1, 1, 9, 9],
    "marker-om-0": [2, 2, 2, 2],
}


class KeyedClient:
    def complete(self, messages, cfg, role_tag):
        from orflow.client import Completion, Finish

        marker = next(k for k in scripted if k in messages[0].content)
        answer = scripted[marker].pop(0)
        return Completion(
            text=f"\\boxed{{{answer}}}", stop_hit=None, token_count=1,
            finish=Finish.END_OF_TURN,
        )


report = evaluate_suite(
    problems, KeyedClient(), EvalConfig(samples_per_problem=4), runner=NoRunner()
)
print(render_eval_table(report))
