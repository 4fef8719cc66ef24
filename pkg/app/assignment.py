"""
Trip-vehicle assignment: the epoch ILP over RTV edges, its greedy warm
start, and committing the chosen routes to the fleet.

minimize   sum c_ij x_ij + sum c_ko chi_k
subject to sum_i x_ij <= 1                      for every vehicle j
           sum_{i containing k} x_ij + chi_k = 1  for every pending request k
"""
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from app.exceptions import InvariantViolation
from app.models import RequestState
from app.pdp import check_route
from app.solver import EQ, LE, IPInstance, Status, solve_ip
from app.utils import log_event

logger = logging.getLogger(__name__)


@dataclass
class AssignmentInstance(IPInstance):
    """The epoch ILP plus the RTV edges and requests its columns stand for."""
    edges: list = field(default_factory=list)
    request_ids: list = field(default_factory=list)
    penalty: float = 0.0

    def vector(self, solution):
        values = np.zeros(self.n)
        chosen = {(e.trip, e.vehicle_id) for e in solution.chosen}
        for j, e in enumerate(self.edges):
            if (e.trip, e.vehicle_id) in chosen:
                values[j] = 1.0
        offset = len(self.edges)
        for k, rid in enumerate(self.request_ids):
            if rid in solution.unassigned:
                values[offset + k] = 1.0
        return values


@dataclass
class AssignmentSolution:
    chosen: tuple = ()            # TripEdge per vehicle that gets a new route
    unassigned: frozenset = frozenset()
    objective: float = 0.0
    status: Status = Status.OPTIMAL
    nodes: int = 0

    @property
    def assigned_requests(self):
        return sorted(rid for e in self.chosen for rid in e.trip)

    def summary(self):
        return {
            'assigned': len(self.assigned_requests),
            'trips': len(self.chosen),
            'unassigned': len(self.unassigned),
            'objective': self.objective,
            'status': self.status.value,
            'nodes': self.nodes,
        }


def _trip_name(trip):
    return '-'.join(str(rid) for rid in trip)


def build_assignment_ip(rtv, pending, params):
    pending_ids = sorted(r.id for r in pending)
    pending_set = set(pending_ids)
    edges = [e for e in rtv.edges() if set(e.trip) <= pending_set]
    inst = AssignmentInstance(edges=edges, request_ids=pending_ids, penalty=params.unassigned_penalty)

    # x_ij <= 1 follows from the request rows, so no upper bound rows are added
    for e in edges:
        inst.add_variable(f'x_{_trip_name(e.trip)}_v{e.vehicle_id}', e.cost, integer=True)
    for rid in pending_ids:
        inst.add_variable(f'chi_{rid}', params.unassigned_penalty, integer=True)

    by_vehicle = {}
    by_request = {rid: [] for rid in pending_ids}
    for j, e in enumerate(edges):
        by_vehicle.setdefault(e.vehicle_id, []).append(j)
        for rid in e.trip:
            by_request[rid].append(j)
    for vid in sorted(by_vehicle):
        inst.add_constraint({j: 1.0 for j in by_vehicle[vid]}, LE, 1.0, name=f'vehicle_{vid}')
    offset = len(edges)
    for k, rid in enumerate(pending_ids):
        row = {j: 1.0 for j in by_request[rid]}
        row[offset + k] = 1.0
        inst.add_constraint(row, EQ, 1.0, name=f'request_{rid}')
    return inst


def _objective(chosen, unassigned, penalty):
    return float(sum(e.cost for e in chosen) + len(unassigned) * penalty)


def greedy_warm_start(rtv, pending, params=None):
    """Larger trips first, then cheaper, then by ids; always a feasible assignment."""
    pending_ids = {r.id for r in pending}
    used_vehicles, covered = set(), set()
    chosen = []
    order = sorted((e for e in rtv.edges() if set(e.trip) <= pending_ids),
                   key=lambda e: (-len(e.trip), e.cost, e.trip, e.vehicle_id))
    for e in order:
        if e.vehicle_id in used_vehicles or covered.intersection(e.trip):
            continue
        chosen.append(e)
        used_vehicles.add(e.vehicle_id)
        covered.update(e.trip)
    unassigned = frozenset(pending_ids - covered)
    penalty = params.unassigned_penalty if params is not None else 0.0
    chosen = tuple(sorted(chosen, key=lambda e: e.vehicle_id))
    return AssignmentSolution(chosen, unassigned, _objective(chosen, unassigned, penalty))


def solution_from_values(inst, values, status=Status.OPTIMAL, nodes=0):
    values = np.asarray(values, dtype=float)
    chosen = tuple(sorted((e for j, e in enumerate(inst.edges) if values[j] > 0.5),
                          key=lambda e: e.vehicle_id))
    offset = len(inst.edges)
    unassigned = frozenset(rid for k, rid in enumerate(inst.request_ids) if values[offset + k] > 0.5)
    return AssignmentSolution(chosen, unassigned, _objective(chosen, unassigned, inst.penalty), status, nodes)


def solve_assignment(rtv, pending, params, budget=None):
    inst = build_assignment_ip(rtv, pending, params)
    warm = greedy_warm_start(rtv, pending, params)
    if not pending:
        return warm
    result = solve_ip(inst, warm_start=inst.vector(warm), budget=budget)
    if not result.ok:
        raise InvariantViolation(f'assignment ILP returned {result.status.value} despite a feasible warm start')
    return solution_from_values(inst, result.values, result.status, result.nodes)


def enumerate_assignment(rtv, pending, params):
    """Exhaustive optimum over every vehicle-disjoint, request-disjoint edge set."""
    pending_ids = {r.id for r in pending}
    by_vehicle = {}
    for e in rtv.edges():
        if set(e.trip) <= pending_ids:
            by_vehicle.setdefault(e.vehicle_id, []).append(e)
    vehicles = sorted(by_vehicle)
    best = {'objective': math.inf, 'chosen': ()}

    def visit(k, chosen, covered):
        if k == len(vehicles):
            unassigned = pending_ids - covered
            value = _objective(chosen, unassigned, params.unassigned_penalty)
            if value < best['objective']:
                best['objective'], best['chosen'] = value, tuple(chosen)
            return
        visit(k + 1, chosen, covered)
        for e in by_vehicle[vehicles[k]]:
            if covered.isdisjoint(e.trip):
                visit(k + 1, chosen + [e], covered | set(e.trip))

    visit(0, [], set())
    covered = {rid for e in best['chosen'] for rid in e.trip}
    return AssignmentSolution(best['chosen'], frozenset(pending_ids - covered), best['objective'])


def commit(solution, rtv, fleet, registry, now, net):
    """
    Install chosen routes, move request states, and strip stale stops from
    vehicles that were not chosen. Returns the fleet.
    """
    fleet_by_id = {v.id: v for v in fleet}
    chosen_requests = {}
    for e in solution.chosen:
        vehicle = fleet_by_id[e.vehicle_id]
        feasible, _ = check_route(vehicle, e.route, now, registry, net)
        if not feasible:
            raise InvariantViolation(f'vehicle {vehicle.id}: committed route {e.route} fails re-validation')
        stops_for = {s.request_id for s in e.route}
        if not set(vehicle.onboard) <= stops_for:
            raise InvariantViolation(f'vehicle {vehicle.id}: new route drops an onboard passenger')
        vehicle.route = tuple(e.route)
        if vehicle.rebalance_target is not None:
            log_event(logger, 'REBALANCE_CANCELLED', vehicle=vehicle.id, target=vehicle.rebalance_target)
            vehicle.rebalance_target = None
        for rid in e.trip:
            chosen_requests[rid] = vehicle.id

    for rid in sorted(registry):
        r = registry[rid]
        if rid in chosen_requests:
            if r.state is RequestState.PENDING:
                r.transition(RequestState.ASSIGNED)
            r.vehicle_id = chosen_requests[rid]
        elif r.state is RequestState.ASSIGNED:
            r.transition(RequestState.PENDING)
            r.vehicle_id = None

    chosen_vehicles = {e.vehicle_id for e in solution.chosen}
    for vehicle in fleet:
        if vehicle.id in chosen_vehicles or not vehicle.route:
            continue
        keep = tuple(s for s in vehicle.route
                     if s.request_id in vehicle.onboard
                     or (registry[s.request_id].state is RequestState.ASSIGNED
                         and registry[s.request_id].vehicle_id == vehicle.id))
        vehicle.route = keep
    log_event(logger, 'ASSIGNMENT', **solution.summary())
    return fleet
