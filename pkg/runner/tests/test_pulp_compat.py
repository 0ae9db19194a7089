"""The bundled PuLP-compatible modeling layer against known optima."""

import subprocess
import sys

import pytest

from sandbox_runner import VENDOR_PATH

sys.path.insert(0, str(VENDOR_PATH))

import pulp  # noqa: E402  (the vendored module unless the real one is installed)
from pulp import (  # noqa: E402
    LpBinary,
    LpInteger,
    LpMaximize,
    LpMinimize,
    LpProblem,
    LpStatus,
    LpStatusOptimal,
    LpVariable,
    lpSum,
    value,
)


def test_simple_lp_minimum():
    m = LpProblem("lp", LpMinimize)
    x = LpVariable("x", 0)
    y = LpVariable("y", 0)
    m += 2 * x + 3 * y
    m += x + y >= 10
    m += x <= 4
    status = m.solve()
    assert status == LpStatusOptimal
    assert value(m.objective) == pytest.approx(2 * 4 + 3 * 6)


def test_maximization_sense():
    m = LpProblem("max", LpMaximize)
    x = LpVariable("x", 0, 10)
    m += 5 * x
    m += x <= 7
    m.solve()
    assert value(m.objective) == pytest.approx(35)
    assert x.varValue == pytest.approx(7)


def test_integrality_matters():
    # LP relaxation would take x = 2.5; the integer optimum is 2.
    m = LpProblem("ilp", LpMaximize)
    x = LpVariable("x", 0, cat=LpInteger)
    m += x
    m += 2 * x <= 5
    m.solve()
    assert x.varValue == pytest.approx(2)


def test_binary_exclusion_constraint():
    m = LpProblem("pick", LpMinimize)
    a = LpVariable("a", cat=LpBinary)
    b = LpVariable("b", cat=LpBinary)
    m += 3 * a + 5 * b
    m += a + b >= 1
    m += a + b <= 1
    m.solve()
    assert value(m.objective) == pytest.approx(3)
    assert (a.varValue, b.varValue) == (1, 0)


def test_equality_constraint_and_dicts():
    foods = ["tofu", "quinoa"]
    cost = {"tofu": 2, "quinoa": 3}
    x = LpVariable.dicts("x", foods, lowBound=0)
    m = LpProblem("diet", LpMinimize)
    m += lpSum(cost[f] * x[f] for f in foods)
    m += x["tofu"] + x["quinoa"] == 12
    m.solve()
    assert value(m.objective) == pytest.approx(24)


def test_unbounded_status_is_reported():
    m = LpProblem("free", LpMaximize)
    x = LpVariable("x", 0)
    m += x
    m.solve()
    assert LpStatus[m.status] == "Unbounded"


def test_infeasible_status_is_reported():
    m = LpProblem("bad", LpMinimize)
    x = LpVariable("x", 0, 1)
    m += x
    m += x >= 2
    m.solve()
    assert LpStatus[m.status] == "Infeasible"


def test_vendored_module_importable_as_pulp_in_child():
    code = "import pulp; print(pulp.LpMinimize)"
    result = subprocess.run(
        [sys.executable, "-c", code],
        capture_output=True,
        text=True,
        env={"PYTHONPATH": str(VENDOR_PATH), "PATH": "/usr/bin:/bin"},
    )
    assert result.stdout.strip() == "1"
