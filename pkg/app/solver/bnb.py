"""
Best-first branch and bound over LP relaxations.
"""
import heapq
import logging
import math

import numpy as np

from app.solver.lp import TOL, SolveResult, Status, solve_lp
from app.utils import Budget, log_event

logger = logging.getLogger(__name__)


def _most_fractional(values, integer_idx):
    best_j, best_gap = None, TOL
    for j in integer_idx:
        gap = abs(values[j] - round(values[j]))
        if gap > best_gap + TOL:
            best_j, best_gap = j, gap
    return best_j


def solve_ip(inst, warm_start=None, budget=None):
    """
    Anytime solve: ``warm_start`` (a value vector) becomes the first
    incumbent, each LP relaxation solved spends one budget step, and an
    exhausted budget returns the incumbent with status BUDGET.
    """
    inst.validate()
    run = (budget or Budget()).fresh()
    integer_idx = [j for j, v in enumerate(inst.variables) if v.integer]

    incumbent, incumbent_obj = None, math.inf
    if warm_start is not None:
        start = np.asarray(warm_start, dtype=float)
        if inst.is_feasible(start):
            incumbent, incumbent_obj = start.copy(), inst.evaluate(start)
        else:
            logger.warning('warm start ignored: infeasible for the instance')

    lower = [v.lower for v in inst.variables]
    upper = [v.upper for v in inst.variables]
    heap = [(-math.inf, 0, lower, upper)]
    sequence = 1
    nodes = pivots = 0
    exhausted = False

    while heap:
        if run.exhausted:
            exhausted = True
            break
        bound, _, lo, up = heapq.heappop(heap)
        if bound >= incumbent_obj - TOL:
            continue
        run.spend(1)
        nodes += 1
        relaxed = solve_lp(inst, lo, up)
        pivots += relaxed.pivots
        if relaxed.status is Status.INFEASIBLE:
            continue
        if relaxed.status is Status.UNBOUNDED:
            return SolveResult(Status.UNBOUNDED, nodes=nodes, pivots=pivots)
        if relaxed.objective >= incumbent_obj - TOL:
            continue
        j = _most_fractional(relaxed.values, integer_idx)
        if j is None:
            values = relaxed.values.copy()
            values[integer_idx] = np.round(values[integer_idx])
            incumbent, incumbent_obj = values, inst.evaluate(values)
            continue
        down_up = list(up)
        down_up[j] = math.floor(relaxed.values[j])
        up_lo = list(lo)
        up_lo[j] = math.ceil(relaxed.values[j])
        heapq.heappush(heap, (relaxed.objective, sequence, lo, down_up))
        heapq.heappush(heap, (relaxed.objective, sequence + 1, up_lo, up))
        sequence += 2

    if exhausted:
        log_event(logger, 'IP_BUDGET_EXHAUSTED', nodes=nodes, open=len(heap), incumbent=incumbent_obj)
        return SolveResult(Status.BUDGET, values=incumbent,
                           objective=incumbent_obj if incumbent is not None else None,
                           nodes=nodes, pivots=pivots)
    if incumbent is None:
        return SolveResult(Status.INFEASIBLE, nodes=nodes, pivots=pivots)
    return SolveResult(Status.OPTIMAL, values=incumbent, objective=incumbent_obj, nodes=nodes, pivots=pivots)
