"""
Idle-vehicle rebalancing: the many-to-one baseline, the one-to-one matching
with sampling caps, and proactive dispatch toward virtual requests.
"""
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from app.exceptions import InvariantViolation
from app.solver import EQ, IPInstance, MatchingInstance, Status, min_cost_matching, solve_lp
from app.utils import log_event

logger = logging.getLogger(__name__)

REAL, VIRTUAL = 'real', 'virtual'
LP_TOL = 1e-6


@dataclass(frozen=True)
class RebalanceTask:
    vehicle_id: int
    target_node: int
    travel_time: float
    kind: str = REAL
    ref: object = None          # request id, or (cluster, rank) for a virtual target


@dataclass(frozen=True)
class RebalanceCaps:
    v_max: int = 300
    r_max: int = 600
    gamma: float = 3

    def __post_init__(self):
        if self.v_max <= 0 or self.r_max <= 0 or self.gamma <= 0:
            raise ValueError('rebalance caps must be positive')

    def vehicle_cap(self, n_targets):
        return int(min(self.v_max, self.gamma * min(n_targets, self.r_max)))


@dataclass(frozen=True)
class Target:
    node: int
    probability: float = 1.0
    kind: str = REAL
    ref: object = None


@dataclass
class RebalanceOutcome:
    tasks: list = field(default_factory=list)
    requested: int = 0          # cardinality asked of the formulation
    formulation: str = ''

    @property
    def shortfall(self):
        return self.requested - len(self.tasks)


def _rng(seed_or_rng):
    if isinstance(seed_or_rng, np.random.Generator):
        return seed_or_rng
    return np.random.default_rng(seed_or_rng)


def _sample(items, size, rng):
    if len(items) <= size:
        return list(items)
    picked = np.sort(rng.choice(len(items), size=size, replace=False))
    return [items[int(i)] for i in picked]


def request_targets(requests):
    return [Target(r.origin, 1.0, REAL, r.id) for r in sorted(requests, key=lambda r: r.id)]


def cap_targets(real, virtual, r_max, rng):
    """Truncate to ``r_max`` targets; real targets are never displaced by virtual ones."""
    if len(real) >= r_max:
        return _sample(real, r_max, rng)
    return list(real) + _sample(virtual, r_max - len(real), rng)


def sample_for_rebalance(idle, unserved, caps, seed):
    """
    Step 1 caps the requests at R^max; step 2 caps the vehicles at
    min(V^max, gamma * min(|R|, R^max)). Sampling is uniform without
    replacement and keeps the input order of what survives.
    """
    rng = _rng(seed)
    idle = sorted(idle, key=lambda v: v.id)
    unserved = list(unserved)
    requests = _sample(unserved, caps.r_max, rng)
    vehicles = _sample(idle, caps.vehicle_cap(len(unserved)), rng)
    return vehicles, requests


def travel_matrix(idle, targets, net, now, weight_by_probability=False):
    tau = np.full((len(idle), len(targets)), math.inf)
    for i, v in enumerate(idle):
        for j, t in enumerate(targets):
            cost = v.time_to(t.node, now, net)
            if weight_by_probability and t.probability > 0:
                cost = cost / t.probability
            tau[i, j] = cost
    return tau


def baseline_lp(tau):
    """The many-to-one LP: only the total is fixed, 0 <= y <= 1."""
    lp = IPInstance()
    n_v, n_t = tau.shape
    index = {}
    for i in range(n_v):
        for j in range(n_t):
            if np.isfinite(tau[i, j]):
                index[(i, j)] = lp.add_variable(f'y_{i}_{j}', tau[i, j], upper=1.0)
    cardinality = min(n_v, n_t, len(index))
    lp.add_constraint({k: 1.0 for k in index.values()}, EQ, cardinality, name='cardinality')
    return lp, sorted(index, key=index.get)


def rebalance_baseline(idle, unserved, net, now=0.0):
    """
    Solves the many-to-one LP with the simplex solver. The constraint matrix
    is an interval matrix, so the optimal vertex is integral and its value
    must equal the sum of the cheapest pairs; a mismatch is an internal
    error. A vehicle selected for several requests heads to its nearest one.
    """
    idle = sorted(idle, key=lambda v: v.id)
    targets = request_targets(unserved)
    outcome = RebalanceOutcome(formulation='baseline')
    if not idle or not targets:
        return outcome
    tau = travel_matrix(idle, targets, net, now)
    lp, pairs = baseline_lp(tau)
    outcome.requested = min(len(idle), len(targets), len(pairs))
    if outcome.requested == 0:
        return outcome
    result = solve_lp(lp)
    if result.status is not Status.OPTIMAL:
        raise InvariantViolation(f'baseline rebalancing LP ended {result.status.value}')
    cheapest = float(np.sort(tau[np.isfinite(tau)])[:outcome.requested].sum())
    if abs(result.objective - cheapest) > LP_TOL * max(1.0, cheapest):
        raise InvariantViolation(f'baseline rebalancing LP reached {result.objective}, cheapest pairs sum to {cheapest}')
    best_for = {}
    for (i, j), value in zip(pairs, result.values):
        if value < 0.5:
            continue
        key = (tau[i, j], targets[j].ref)
        if i not in best_for or key < best_for[i][0]:
            best_for[i] = (key, j)
    for i in sorted(best_for):
        j = best_for[i][1]
        outcome.tasks.append(RebalanceTask(idle[i].id, targets[j].node, float(tau[i, j]), REAL, targets[j].ref))
    log_event(logger, 'BASELINE_LP', pairs=outcome.requested, pivots=result.pivots,
              objective=round(result.objective, 6))
    return outcome


def rebalance_one_to_one(idle_subset, targets, net, now=0.0, weight_by_probability=False):
    """
    Minimum-cost matching of cardinality min(|vehicles|, |targets|); each
    target receives at most one vehicle. If unreachable pairs make that
    cardinality impossible the largest achievable matching is used.
    """
    idle_subset = sorted(idle_subset, key=lambda v: v.id)
    outcome = RebalanceOutcome(formulation='one_to_one', requested=min(len(idle_subset), len(targets)))
    if outcome.requested == 0:
        return outcome
    tau = travel_matrix(idle_subset, targets, net, now, weight_by_probability)
    result = min_cost_matching(MatchingInstance(tau, outcome.requested))
    if result.status is Status.INFEASIBLE:
        logger.warning('rebalance matching short by %d of %d pairs',
                       outcome.requested - len(result.pairs), outcome.requested)
    for i, j in result.pairs:
        v, t = idle_subset[i], targets[j]
        outcome.tasks.append(RebalanceTask(v.id, t.node, float(v.time_to(t.node, now, net)), t.kind, t.ref))
    return outcome


def proactive_rebalance(idle, unserved_real, virtuals, caps, net, now, seed,
                        targets_mode='union', weight_by_probability=False):
    """
    Matches idle vehicles to unserved requests and virtual requests (already
    filtered by probability and suppression). ``targets_mode`` 'virtual_only'
    ignores the real ones.
    """
    rng = _rng(seed)
    real = request_targets(unserved_real) if targets_mode == 'union' else []
    virtual = [Target(vr.node, vr.probability, VIRTUAL, (vr.cluster, vr.rank)) for vr in virtuals]
    targets = cap_targets(real, virtual, caps.r_max, rng)
    vehicles = _sample(sorted(idle, key=lambda v: v.id), caps.vehicle_cap(len(real) + len(virtual)), rng)
    outcome = rebalance_one_to_one(vehicles, targets, net, now, weight_by_probability)
    outcome.formulation = 'proactive'
    return outcome


def dispatch(outcome, fleet):
    """Set rebalance targets on the chosen vehicles; rebalancing vehicles are never re-targeted."""
    fleet_by_id = {v.id: v for v in fleet}
    targets_seen, vehicles_seen = set(), set()
    for task in outcome.tasks:
        vehicle = fleet_by_id[task.vehicle_id]
        if not vehicle.is_idle:
            raise InvariantViolation(f'vehicle {vehicle.id} is not idle and cannot be rebalanced')
        if task.vehicle_id in vehicles_seen:
            raise InvariantViolation(f'vehicle {vehicle.id} received two rebalancing tasks')
        vehicles_seen.add(task.vehicle_id)
        if outcome.formulation != 'baseline':
            key = (task.kind, task.ref)
            if key in targets_seen:
                raise InvariantViolation(f'target {task.ref} received two vehicles')
            targets_seen.add(key)
        if task.target_node == vehicle.next_node:
            continue
        vehicle.set_rebalance_target(task.target_node)
    log_event(logger, 'REBALANCE', formulation=outcome.formulation, tasks=len(outcome.tasks),
              requested=outcome.requested)
    return fleet
