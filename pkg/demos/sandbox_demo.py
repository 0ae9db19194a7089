"""Drive the real execution runner over its wire protocol.

Requires the sandbox-runner package (pip install -e ./runner). Shows a
mixed-integer transportation model solving to optimality, a runaway loop
being killed at its wall-time limit, and the fresh-process isolation that
makes cross-block state an error.
"""

import sys
import time

from orflow.sandbox import ExecutionLimits, ExecutionSession, RunnerPool, format_output_block

TRANSPORT_PROGRAM = """\
from pulp import LpProblem, LpMinimize, LpVariable, LpBinary, lpSum, PULP_CBC_CMD, value

costs = {"trucks":100, "airplanes":120, "ships":130}
caps  = {"trucks":10,  "airplanes":20,  "ships":30}
demand = 25

m = LpProblem("Transportation", LpMinimize)
x = {k: LpVariable(f"x_{k}", 0, 1, cat=LpBinary) for k in costs}
y = {k: LpVariable(f"y_{k}", 0) for k in costs}
m += lpSum(costs[k]*y[k] for k in costs)
m += lpSum(x[k] for k in costs) >= 1
for k in costs:
    m += y[k] <= caps[k]*x[k]
m += x["trucks"] + x["ships"] <= 1
m += lpSum(y[k] for k in costs) >= demand
m.solve(PULP_CBC_CMD(msg=False))
print("Objective:", value(m.objective))
"""

with RunnerPool([sys.executable, "-m", "sandbox_runner"]) as pool:
    print("=== mixed-integer transportation model ===")
    result = pool.run(TRANSPORT_PROGRAM, ExecutionLimits(wall_time=45))
    print(format_output_block(result))

    print("\n=== runaway loop hits the wall-time limit ===")
    start = time.monotonic()
    result = pool.run("while True: pass", ExecutionLimits(wall_time=2))
    print(format_output_block(result))
    print(f"(returned after {time.monotonic() - start:.1f}s)")

    print("\n=== fresh process per request: no cross-block state ===")
    session = ExecutionSession(pool, ExecutionLimits())
    print(format_output_block(session.execute("h = 42\nprint(h)")))
    print(format_output_block(session.execute("print(h)")))
