"""
Minimum-cost bipartite matching of an exact cardinality by successive
shortest augmenting paths with node potentials.
"""
import math
from dataclasses import dataclass

import numpy as np

from app.solver.lp import EQ, LE, TOL, IPInstance, SolveResult, Status


@dataclass
class MatchingInstance:
    costs: np.ndarray          # rows: left nodes, columns: right nodes; inf forbids a pair
    cardinality: int

    def __post_init__(self):
        self.costs = np.asarray(self.costs, dtype=float)
        if self.costs.ndim != 2:
            self.costs = self.costs.reshape(len(self.costs), -1) if self.costs.size else np.zeros((0, 0))
        if np.isnan(self.costs).any():
            raise ValueError('matching costs must not be NaN')
        if np.isneginf(self.costs).any():
            raise ValueError('matching costs must be > -inf')
        if not 0 <= self.cardinality <= min(self.costs.shape):
            raise ValueError(f'cardinality {self.cardinality} exceeds min{self.costs.shape}')

    @property
    def shape(self):
        return self.costs.shape


def _shortest_paths(W, match_left, match_right, pot_left, pot_right):
    """
    Dense Dijkstra on reduced costs from every free left node. Ties go to
    left nodes first, then the lower index.
    """
    n_left, n_right = W.shape
    dist_left = np.full(n_left, math.inf)
    dist_right = np.full(n_right, math.inf)
    prev_right = np.full(n_right, -1, dtype=int)
    dist_left[match_left < 0] = 0.0
    done_left = np.zeros(n_left, dtype=bool)
    done_right = np.zeros(n_right, dtype=bool)

    while True:
        open_left = np.where(done_left, math.inf, dist_left)
        open_right = np.where(done_right, math.inf, dist_right)
        i = int(np.argmin(open_left)) if n_left else -1
        j = int(np.argmin(open_right)) if n_right else -1
        best_left = open_left[i] if i >= 0 else math.inf
        best_right = open_right[j] if j >= 0 else math.inf
        if math.isinf(best_left) and math.isinf(best_right):
            break
        if best_left <= best_right:
            done_left[i] = True
            reduced = W[i] + pot_left[i] - pot_right
            if match_left[i] >= 0:
                reduced[match_left[i]] = math.inf
            candidate = best_left + np.maximum(reduced, 0.0)
            better = (~done_right) & (candidate < dist_right - TOL)
            dist_right[better] = candidate[better]
            prev_right[better] = i
        else:
            done_right[j] = True
            owner = match_right[j]
            if owner >= 0 and not done_left[owner]:
                reduced = max(pot_right[j] - W[owner, j] - pot_left[owner], 0.0)
                if best_right + reduced < dist_left[owner] - TOL:
                    dist_left[owner] = best_right + reduced
    return dist_left, dist_right, prev_right


def min_cost_matching(inst):
    """
    Returns pairs (left, right) sorted by left index. When fewer than
    ``cardinality`` pairs can be matched over finite entries the status is
    INFEASIBLE and the pairs are a minimum-cost matching of the largest
    achievable size.
    """
    C = inst.costs
    n_left, n_right = C.shape
    m = inst.cardinality
    finite = np.isfinite(C)
    # a constant shift keeps argmin for a fixed cardinality and makes costs non-negative
    shift = min(0.0, float(C[finite].min())) if finite.any() else 0.0
    W = np.where(finite, C - shift, math.inf)

    match_left = np.full(n_left, -1, dtype=int)
    match_right = np.full(n_right, -1, dtype=int)
    pot_left = np.zeros(n_left)
    pot_right = np.zeros(n_right)
    pot_sink = 0.0
    status = Status.OPTIMAL

    for _ in range(m):
        dist_left, dist_right, prev_right = _shortest_paths(W, match_left, match_right, pot_left, pot_right)
        free = np.nonzero(match_right < 0)[0]
        through = dist_right[free] + pot_right[free] - pot_sink
        if free.size == 0 or not np.isfinite(through).any():
            status = Status.INFEASIBLE
            break
        sink = int(free[np.argmin(through)])
        dist_sink = float(through.min())

        j = sink
        while True:
            i = prev_right[j]
            previous = match_left[i]
            match_left[i] = j
            match_right[j] = i
            if previous < 0:
                break
            j = previous

        pot_left += np.minimum(dist_left, dist_sink)
        pot_right += np.minimum(dist_right, dist_sink)
        pot_sink += dist_sink

    pairs = sorted((int(i), int(match_left[i])) for i in range(n_left) if match_left[i] >= 0)
    values = np.zeros(n_left * n_right)
    for i, j in pairs:
        values[i * n_right + j] = 1.0
    objective = float(sum(C[i, j] for i, j in pairs))
    return SolveResult(status, values=values, objective=objective, pairs=pairs)


def matching_as_lp(inst, per_left=True):
    """
    The same problem as an LP: one variable per finite pair, each right node
    used at most once, each left node at most once when ``per_left``, and
    the total fixed to the cardinality. Returns (IPInstance, variable pairs).
    """
    lp = IPInstance()
    index = {}
    n_left, n_right = inst.shape
    for i in range(n_left):
        for j in range(n_right):
            if np.isfinite(inst.costs[i, j]):
                index[(i, j)] = lp.add_variable(f'y_{i}_{j}', inst.costs[i, j], upper=1.0)
    for j in range(n_right):
        row = {k: 1.0 for (a, b), k in index.items() if b == j}
        if row:
            lp.add_constraint(row, LE, 1.0, name=f'target_{j}')
    if per_left:
        for i in range(n_left):
            row = {k: 1.0 for (a, b), k in index.items() if a == i}
            if row:
                lp.add_constraint(row, LE, 1.0, name=f'vehicle_{i}')
    lp.add_constraint({k: 1.0 for k in index.values()}, EQ, inst.cardinality, name='cardinality')
    return lp, sorted(index, key=index.get)
