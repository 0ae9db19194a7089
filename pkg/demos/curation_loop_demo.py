"""The correction loop end to end: flaw, hint, resumption, golden filter.

A scripted Reasoner first models integer quantities as continuous and gets
the wrong optimum. A scripted Intervener names the flaw (Trigger 5), the
loop splices its hint in the Reasoner's own voice and resumes, and the
corrected trajectory passes both filters. The emitted training record
masks the execution output spans.
"""

from orflow import Benchmark, Problem, calm_loop, render_transcript
from orflow.calm import CalmConfig, token_modification_fraction
from orflow.client import ScriptedClient
from orflow.datasets import emit_sft_dataset, render_funnel
from orflow.sandbox import ExitStatus, SandboxResult

problem = Problem(
    id="demo-dessert",
    benchmark=Benchmark.MAMO_EASY,
    description=(
        "Each matcha ice cream uses 4 units of flavouring, each orange sorbet "
        "3. At least 1 matcha and 2 sorbets must be made. Minimize flavouring."
    ),
    ground_truth=10.0,
)

reasoner = ScriptedClient([
    "The problem might be a plain LP, so fractional orders are fine.\n"
    "```python\nprint('relaxed optimum:', 7.98)\n```\n",
    "\nSo the minimum flavouring is $\\boxed{7.98}$.",
    "\n```python\nfrom pulp import *\n"
    "m = LpProblem('dessert', LpMinimize)\n"
    "matcha = LpVariable('m', 1, cat=LpInteger)\n"
    "sorbet = LpVariable('s', 2, cat=LpInteger)\n"
    "m += 4*matcha + 3*sorbet\nm.solve()\nprint(value(m.objective))\n```\n",
    "\nThe integer optimum is 10 (1 matcha, 2 sorbets), which matches the "
    "problem's minimums. Final answer: $\\boxed{10}$.",
])

intervener = ScriptedClient([
    "Fractional desserts cannot be served.\n"
    "VERDICT: Trigger 5 at step 0: Wait, the order counts must be whole "
    "numbers, so this is an integer program rather than a continuous LP.",
    "The flow is clean and the answer is boxed alone.\n"
    "VERDICT: NO INTERVENTION",
])


class CannedRunner:
    outputs = ["relaxed optimum: 7.98\n", "10.0\n"]

    def run(self, code, limits):
        return SandboxResult(
            stdout=self.outputs.pop(0), stderr="", exit=ExitStatus.OK
        )


outcome = calm_loop(problem, reasoner, intervener, CalmConfig(), runner=CannedRunner())

print("=== loop outcome ===")
print(f"status             : {outcome.status.value}")
print(f"interventions used : {outcome.interventions_used}")
for iteration, verdict in outcome.verdict_log:
    print(f"  verdict {iteration}: {verdict[:76]}")
print(f"hint token fraction: {token_modification_fraction(outcome):.4f}")
print()
print("=== final transcript ===")
print(render_transcript(outcome.trajectory))
print()

records, funnel = emit_sft_dataset([outcome], {problem.id: problem})
print("=== curation funnel ===")
print(render_funnel(funnel))
record = records[0]
print(f"training record spans {len(record.mask_spans)} masked output block(s):")
for start, end in record.mask_spans:
    print(f"  [{start}:{end}] {record.assistant_text[start:end][:40]!r}...")
