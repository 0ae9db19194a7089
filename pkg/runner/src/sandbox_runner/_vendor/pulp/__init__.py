"""PuLP-compatible linear/integer modeling layer backed by scipy's HiGHS.

Installed into solver child processes when the real `pulp` distribution is
absent, so generated solver scripts that model with the common PuLP surface
(LpProblem, LpVariable, lpSum, solve, value) run unchanged. Covers the
modeling subset that benchmark solver code uses; it is not a full PuLP
replacement.
"""

from __future__ import annotations

import itertools
from typing import Optional

import numpy as np
from scipy.optimize import Bounds, LinearConstraint, milp

LpMinimize = 1
LpMaximize = -1

LpContinuous = "Continuous"
LpInteger = "Integer"
LpBinary = "Binary"

LpStatusOptimal = 1
LpStatusNotSolved = 0
LpStatusInfeasible = -1
LpStatusUnbounded = -2
LpStatusUndefined = -3

LpStatus = {
    LpStatusOptimal: "Optimal",
    LpStatusNotSolved: "Not Solved",
    LpStatusInfeasible: "Infeasible",
    LpStatusUnbounded: "Unbounded",
    LpStatusUndefined: "Undefined",
}

_SCIPY_STATUS = {0: LpStatusOptimal, 1: LpStatusNotSolved, 2: LpStatusInfeasible,
                 3: LpStatusUnbounded, 4: LpStatusUndefined}

_counter = itertools.count()


class LpAffineExpression:
    """Linear expression: variable coefficients plus a constant."""

    def __init__(self, terms=None, constant=0.0):
        self.terms: dict[LpVariable, float] = dict(terms or {})
        self.constant = float(constant)

    @staticmethod
    def _coerce(value) -> "LpAffineExpression":
        if isinstance(value, LpAffineExpression):
            return value
        if isinstance(value, LpVariable):
            return LpAffineExpression({value: 1.0})
        if isinstance(value, (int, float, np.integer, np.floating)):
            return LpAffineExpression(constant=float(value))
        raise TypeError(f"cannot use {type(value).__name__} in a linear expression")

    def _combined(self, other, sign) -> "LpAffineExpression":
        other = self._coerce(other)
        terms = dict(self.terms)
        for var, coef in other.terms.items():
            terms[var] = terms.get(var, 0.0) + sign * coef
        return LpAffineExpression(terms, self.constant + sign * other.constant)

    def __add__(self, other):
        return self._combined(other, 1.0)

    __radd__ = __add__

    def __sub__(self, other):
        return self._combined(other, -1.0)

    def __rsub__(self, other):
        return self._coerce(other)._combined(self, -1.0)

    def __neg__(self):
        return LpAffineExpression(
            {v: -c for v, c in self.terms.items()}, -self.constant
        )

    def __mul__(self, other):
        if isinstance(other, (LpAffineExpression, LpVariable)):
            raise TypeError("expressions must stay linear")
        scale = float(other)
        return LpAffineExpression(
            {v: c * scale for v, c in self.terms.items()}, self.constant * scale
        )

    __rmul__ = __mul__

    def __truediv__(self, other):
        return self * (1.0 / float(other))

    def __le__(self, other):
        return LpConstraint(self - other, "<=")

    def __ge__(self, other):
        return LpConstraint(self - other, ">=")

    def __eq__(self, other):  # model syntax, not identity
        return LpConstraint(self - other, "==")

    __hash__ = None

    def value(self):
        total = self.constant
        for var, coef in self.terms.items():
            if var.varValue is None:
                return None
            total += coef * var.varValue
        return total


class LpVariable:
    def __init__(self, name, lowBound=None, upBound=None, cat=LpContinuous, e=None):
        self.name = str(name)
        self.lowBound = lowBound
        self.upBound = upBound
        self.cat = cat
        self.varValue: Optional[float] = None
        self._index = next(_counter)
        if cat == LpBinary:
            self.lowBound, self.upBound = 0, 1

    @classmethod
    def dicts(cls, name, indexs, lowBound=None, upBound=None, cat=LpContinuous):
        indexs = list(indexs)
        if indexs and isinstance(indexs[0], (list, tuple, range)):
            first, *rest = indexs
            if not rest:
                return {i: cls(f"{name}_{i}", lowBound, upBound, cat) for i in first}
            inner = rest[0] if len(rest) == 1 else rest
            return {
                i: cls.dicts(f"{name}_{i}", inner, lowBound, upBound, cat)
                for i in first
            }
        return {i: cls(f"{name}_{i}", lowBound, upBound, cat) for i in indexs}

    def _expr(self):
        return LpAffineExpression({self: 1.0})

    def __add__(self, other):
        return self._expr() + other

    __radd__ = __add__

    def __sub__(self, other):
        return self._expr() - other

    def __rsub__(self, other):
        return LpAffineExpression._coerce(other) - self._expr()

    def __neg__(self):
        return -self._expr()

    def __mul__(self, other):
        return self._expr() * other

    __rmul__ = __mul__

    def __truediv__(self, other):
        return self._expr() / other

    def __le__(self, other):
        return self._expr() <= other

    def __ge__(self, other):
        return self._expr() >= other

    def __eq__(self, other):
        if isinstance(other, LpVariable) and other is self:
            return True
        return self._expr() == other

    def __hash__(self):
        return id(self)

    def __repr__(self):
        return self.name

    def value(self):
        return self.varValue


class LpConstraint:
    def __init__(self, expression: LpAffineExpression, sense: str, name=None):
        self.expression = expression
        self.sense = sense
        self.name = name


def lpSum(items=0) -> LpAffineExpression:
    if isinstance(items, (LpAffineExpression, LpVariable)):
        return LpAffineExpression._coerce(items)
    if isinstance(items, (int, float)):
        return LpAffineExpression(constant=items)
    total = LpAffineExpression()
    for item in items:
        total = total + item
    return total


class _SolverCommand:
    """Accepted for API compatibility; solving always uses HiGHS via scipy."""

    def __init__(self, *args, msg=True, **kwargs):
        self.msg = msg


PULP_CBC_CMD = _SolverCommand
GLPK_CMD = _SolverCommand
COIN_CMD = _SolverCommand
HiGHS_CMD = _SolverCommand


class LpProblem:
    def __init__(self, name="NoName", sense=LpMinimize):
        self.name = name
        self.sense = sense
        self.objective: Optional[LpAffineExpression] = None
        self.constraints: list[LpConstraint] = []
        self.status = LpStatusNotSolved

    def __iadd__(self, other):
        if isinstance(other, tuple):
            constraint, name = other
            if isinstance(constraint, LpConstraint):
                constraint.name = name
                self.constraints.append(constraint)
                return self
            other = constraint
        if isinstance(other, LpConstraint):
            self.constraints.append(other)
        elif isinstance(other, (LpAffineExpression, LpVariable, int, float)):
            self.objective = LpAffineExpression._coerce(other)
        else:
            raise TypeError(f"cannot add {type(other).__name__} to a problem")
        return self

    def setObjective(self, expression):
        self.objective = LpAffineExpression._coerce(expression)

    def addConstraint(self, constraint, name=None):
        if name is not None:
            constraint.name = name
        self.constraints.append(constraint)

    def variables(self) -> list[LpVariable]:
        seen: dict[int, LpVariable] = {}
        sources = [self.objective] if self.objective is not None else []
        sources.extend(c.expression for c in self.constraints)
        for expr in sources:
            for var in expr.terms:
                seen[var._index] = var
        return [seen[i] for i in sorted(seen)]

    def solve(self, solver=None) -> int:
        variables = self.variables()
        index = {var: i for i, var in enumerate(variables)}
        n = len(variables)

        objective = self.objective or LpAffineExpression()
        c = np.zeros(n)
        for var, coef in objective.terms.items():
            c[index[var]] = coef
        if self.sense == LpMaximize:
            c = -c

        lower = np.array(
            [-np.inf if v.lowBound is None else float(v.lowBound) for v in variables]
        )
        upper = np.array(
            [np.inf if v.upBound is None else float(v.upBound) for v in variables]
        )
        integrality = np.array(
            [1 if v.cat in (LpInteger, LpBinary) else 0 for v in variables]
        )

        constraints = []
        for constraint in self.constraints:
            row = np.zeros(n)
            for var, coef in constraint.expression.terms.items():
                row[index[var]] += coef
            rhs = -constraint.expression.constant
            if constraint.sense == "<=":
                constraints.append(LinearConstraint(row[None, :], -np.inf, rhs))
            elif constraint.sense == ">=":
                constraints.append(LinearConstraint(row[None, :], rhs, np.inf))
            else:
                constraints.append(LinearConstraint(row[None, :], rhs, rhs))

        if n == 0:
            self.status = LpStatusOptimal
            return self.status
        result = milp(
            c=c,
            constraints=constraints or None,
            integrality=integrality,
            bounds=Bounds(lower, upper),
        )
        self.status = _SCIPY_STATUS.get(result.status, LpStatusUndefined)
        if result.x is not None:
            for var, i in index.items():
                var.varValue = float(result.x[i])
        return self.status


def value(x):
    if x is None:
        return None
    if isinstance(x, (int, float, np.integer, np.floating)):
        return float(x)
    return x.value()
