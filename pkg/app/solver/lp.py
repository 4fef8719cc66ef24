"""
Linear program model and a dense two-phase primal simplex.

Bland's rule picks both the entering column (lowest index with negative
reduced cost) and the leaving row (lowest basic index among ratio ties),
so the pivot sequence is a pure function of the instance.
"""
import enum
import math
from dataclasses import dataclass, field

import numpy as np

LE, GE, EQ = '<=', '>=', '='
TOL = 1e-9


class Status(str, enum.Enum):
    OPTIMAL = 'optimal'
    BUDGET = 'incumbent_budget_exhausted'
    INFEASIBLE = 'infeasible'
    UNBOUNDED = 'unbounded'


@dataclass
class Variable:
    name: str
    lower: float = 0.0
    upper: float = math.inf
    integer: bool = False


@dataclass
class Constraint:
    coefficients: dict
    relation: str
    rhs: float
    name: str = ''


@dataclass
class IPInstance:
    variables: list = field(default_factory=list)
    objective: list = field(default_factory=list)
    constraints: list = field(default_factory=list)
    sense: str = 'minimize'

    def add_variable(self, name, cost, lower=0.0, upper=math.inf, integer=False):
        self.variables.append(Variable(name, lower, upper, integer))
        self.objective.append(float(cost))
        return len(self.variables) - 1

    def add_constraint(self, coefficients, relation, rhs, name=''):
        if relation not in (LE, GE, EQ):
            raise ValueError(f'unknown relation {relation!r}')
        self.constraints.append(Constraint(dict(coefficients), relation, float(rhs), name))
        return len(self.constraints) - 1

    @property
    def n(self):
        return len(self.variables)

    def validate(self):
        if len(self.objective) != len(self.variables):
            raise ValueError('objective length does not match variable count')
        if not all(math.isfinite(c) for c in self.objective):
            raise ValueError('objective coefficients must be finite')
        for row in self.constraints:
            for j, a in row.coefficients.items():
                if not 0 <= j < self.n:
                    raise ValueError(f'constraint {row.name!r} references variable {j}')
                if not math.isfinite(a):
                    raise ValueError(f'constraint {row.name!r} has a non-finite coefficient')
            if not math.isfinite(row.rhs):
                raise ValueError(f'constraint {row.name!r} has a non-finite rhs')
        for v in self.variables:
            if not math.isfinite(v.lower):
                raise ValueError(f'variable {v.name!r} needs a finite lower bound')

    def is_feasible(self, values, tol=TOL):
        x = np.asarray(values, dtype=float)
        for j, v in enumerate(self.variables):
            if x[j] < v.lower - tol or x[j] > v.upper + tol:
                return False
            if v.integer and abs(x[j] - round(x[j])) > tol:
                return False
        for row in self.constraints:
            lhs = sum(a * x[j] for j, a in row.coefficients.items())
            if row.relation == LE and lhs > row.rhs + tol:
                return False
            if row.relation == GE and lhs < row.rhs - tol:
                return False
            if row.relation == EQ and abs(lhs - row.rhs) > tol:
                return False
        return True

    def evaluate(self, values):
        return float(np.dot(np.asarray(self.objective, dtype=float), np.asarray(values, dtype=float)))


@dataclass
class SolveResult:
    status: Status
    values: np.ndarray = None
    objective: float = None
    pairs: list = None
    nodes: int = 0
    pivots: int = 0

    @property
    def ok(self):
        return self.status in (Status.OPTIMAL, Status.BUDGET) and self.values is not None


def _pivot(T, i, j):
    T[i] /= T[i, j]
    factor = T[:, j].copy()
    factor[i] = 0.0
    T -= np.outer(factor, T[i])


def _run(T, basis, n_cols):
    pivots = 0
    while True:
        reduced = T[-1, :n_cols]
        entering = np.nonzero(reduced < -TOL)[0]
        if entering.size == 0:
            return Status.OPTIMAL, pivots
        j = int(entering[0])
        column = T[:-1, j]
        rows = np.nonzero(column > TOL)[0]
        if rows.size == 0:
            return Status.UNBOUNDED, pivots
        ratios = T[rows, -1] / column[rows]
        best = ratios.min()
        ties = rows[ratios - best <= TOL * max(1.0, abs(best))]
        i = int(ties[np.argmin(basis[ties])])
        _pivot(T, i, j)
        basis[i] = j
        pivots += 1


def solve_lp(inst, lower=None, upper=None):
    """
    Solve the LP relaxation of ``inst`` (integrality ignored). ``lower`` and
    ``upper`` override the variable bounds, which is how branching works.
    """
    inst.validate()
    n = inst.n
    lo = np.array([v.lower for v in inst.variables] if lower is None else lower, dtype=float)
    up = np.array([v.upper for v in inst.variables] if upper is None else upper, dtype=float)
    if np.any(up < lo - TOL):
        return SolveResult(Status.INFEASIBLE)

    # rows over shifted variables x' = x - lo >= 0
    rows = []
    for con in inst.constraints:
        a = np.zeros(n)
        for j, coef in con.coefficients.items():
            a[j] += coef
        rows.append((a, con.relation, con.rhs - float(a @ lo)))
    for j in range(n):
        if math.isfinite(up[j]):
            a = np.zeros(n)
            a[j] = 1.0
            rows.append((a, LE, up[j] - lo[j]))

    normalized = []
    for a, rel, b in rows:
        if b < 0:
            a, b = -a, -b
            rel = {LE: GE, GE: LE, EQ: EQ}[rel]
        normalized.append((a, rel, b))

    m = len(normalized)
    n_slack = sum(1 for _, rel, _ in normalized if rel != EQ)
    n_art = sum(1 for _, rel, _ in normalized if rel != LE)
    n_real = n + n_slack
    width = n_real + n_art
    T = np.zeros((m + 1, width + 1))
    basis = np.zeros(m, dtype=int)
    slack_col, art_col = n, n_real
    art_rows = []
    for i, (a, rel, b) in enumerate(normalized):
        T[i, :n] = a
        T[i, -1] = b
        if rel == LE:
            T[i, slack_col] = 1.0
            basis[i] = slack_col
            slack_col += 1
        else:
            if rel == GE:
                T[i, slack_col] = -1.0
                slack_col += 1
            T[i, art_col] = 1.0
            basis[i] = art_col
            art_rows.append(i)
            art_col += 1

    pivots = 0
    if art_rows:
        T[-1, n_real:width] = 1.0
        for i in art_rows:
            T[-1] -= T[i]
        status, count = _run(T, basis, width)
        pivots += count
        if -T[-1, -1] > TOL * max(1.0, float(np.abs(T[:-1, -1]).max(initial=0.0))):
            return SolveResult(Status.INFEASIBLE, pivots=pivots)
        # drive remaining artificials out of the basis, dropping redundant rows
        keep = []
        for i in range(m):
            if basis[i] >= n_real:
                nonzero = np.nonzero(np.abs(T[i, :n_real]) > TOL)[0]
                if nonzero.size == 0:
                    continue
                _pivot(T, i, int(nonzero[0]))
                basis[i] = int(nonzero[0])
                pivots += 1
            keep.append(i)
        T = np.vstack([T[keep][:, list(range(n_real)) + [width]], np.zeros((1, n_real + 1))])
        basis = basis[keep]
    else:
        T = np.hstack([T[:, :n_real], T[:, -1:]])
        T[-1] = 0.0

    cost = np.zeros(n_real)
    cost[:n] = inst.objective
    cb = cost[basis]
    T[-1, :n_real] = cost - cb @ T[:-1, :n_real]
    T[-1, -1] = -float(cb @ T[:-1, -1])
    status, count = _run(T, basis, n_real)
    pivots += count
    if status is Status.UNBOUNDED:
        return SolveResult(Status.UNBOUNDED, pivots=pivots)

    shifted = np.zeros(n_real)
    shifted[basis] = T[:-1, -1]
    values = lo + shifted[:n]
    values[np.abs(values) < TOL] = 0.0
    return SolveResult(Status.OPTIMAL, values=values, objective=inst.evaluate(values), pivots=pivots)
