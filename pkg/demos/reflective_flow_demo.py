"""Walk through one reflective reasoning flow, step by step.

A scripted stand-in for the model emits reasoning and code; a canned
runner supplies execution results. The engine interleaves them into a
trajectory whose transcript reconstructs byte-for-byte.
"""

from orflow import Problem, Benchmark, ReflectiveEngine, render_transcript
from orflow.client import ScriptedClient
from orflow.sandbox import ExitStatus, SandboxResult

problem = Problem(
    id="demo-parking",
    benchmark=Benchmark.NL4OPT,
    description=(
        "A lot has 25 spaces. Compact cars pay $8, SUVs pay $12 but take two "
        "spaces. At most 5 SUVs are allowed. Maximize revenue."
    ),
    ground_truth=212.0,
)

# One entry per engine turn: the first two end with a closed code fence, the
# last carries the boxed answer.
script = [
    "Let x be compact cars and y SUVs: maximize 8x + 12y subject to "
    "x + 2y <= 25, y <= 5.\n"
    "```python\nfrom pulp import *\n"
    "m = LpProblem('lot', LpMaximize)\n"
    "x = LpVariable('x', 0, cat=LpInteger)\n"
    "y = LpVariable('y', 0, 5, cat=LpInteger)\n"
    "m += 8*x + 12*y\nm += x + 2*y <= 25\nm.solve()\n"
    "print(value(m.objective))\n```\n",
    "\nThe solver reports 212: 15 compacts and 5 SUVs fill all 25 spaces. "
    "That is plausible, so the answer is $\\boxed{212}$.",
]

runner = type(
    "CannedRunner",
    (),
    {
        "run": lambda self, code, limits: SandboxResult(
            stdout="212.0\n", stderr="", exit=ExitStatus.OK
        )
    },
)()

engine = ReflectiveEngine(ScriptedClient(script), runner)
trajectory = engine.run(problem)

print("=== trajectory ===")
print(f"steps executed : {trajectory.code_execution_count}")
print(f"final answer   : {trajectory.final_answer}")
print(f"termination    : {trajectory.termination.value}")
print(f"token count    : {trajectory.generated_token_count}")
print()
print("=== transcript ===")
print(render_transcript(trajectory))
