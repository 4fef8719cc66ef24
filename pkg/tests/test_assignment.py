import pytest

from app.assignment import (
    AssignmentSolution, build_assignment_ip, commit, enumerate_assignment, greedy_warm_start,
    solve_assignment,
)
from app.exceptions import InvariantViolation
from app.models import CostParams, RequestState, dropoff, pickup
from app.oracles import assignment_suite
from app.rtv import RTVGraph, TripEdge
from app.solver import Status
from app.utils import Budget


def _graph(*edges):
    graph = RTVGraph()
    for trip, vid, cost in edges:
        graph.trips.add(trip)
        graph.tv_edges[(trip, vid)] = TripEdge(trip, vid, cost, ())
    return graph


@pytest.fixture
def pending(make_request):
    return [make_request(rid, 0, 1) for rid in range(3)]


def test_no_edges_leaves_everyone_unassigned(pending):
    params = CostParams(10000.0)
    solution = solve_assignment(RTVGraph(), pending, params)
    assert solution.chosen == ()
    assert solution.unassigned == {0, 1, 2}
    assert solution.objective == 3 * 10000.0


def test_single_trip_is_taken(make_request):
    solution = solve_assignment(_graph(((0,), 0, 40.0)), [make_request(0, 0, 1)], CostParams(10000.0))
    assert [(e.trip, e.vehicle_id) for e in solution.chosen] == [((0,), 0)]
    assert solution.unassigned == frozenset()
    assert solution.objective == 40.0
    assert solution.status is Status.OPTIMAL


def test_no_pending_requests(make_request):
    solution = solve_assignment(RTVGraph(), [], CostParams(100.0))
    assert solution.objective == 0.0
    assert solution.summary()['assigned'] == 0


def test_ip_shape(pending):
    graph = _graph(((0,), 0, 10.0), ((0, 1), 0, 30.0), ((2,), 1, 5.0), ((3,), 1, 1.0))
    inst = build_assignment_ip(graph, pending, CostParams(500.0))
    # the trip for request 3 is not pending and is left out
    assert len(inst.edges) == 3
    assert inst.n == 3 + 3
    assert [c.name for c in inst.constraints] == ['vehicle_0', 'vehicle_1', 'request_0', 'request_1', 'request_2']
    assert all(v.integer for v in inst.variables)


def test_greedy_prefers_larger_trips(pending):
    graph = _graph(((0,), 0, 10.0), ((0, 1), 0, 100.0))
    warm = greedy_warm_start(graph, pending, CostParams(1000.0))
    assert [e.trip for e in warm.chosen] == [(0, 1)]
    assert warm.unassigned == {2}
    assert warm.objective == 1100.0

    best = solve_assignment(graph, pending, CostParams(1000.0))
    assert [e.trip for e in best.chosen] == [(0, 1)]
    assert best.objective == 1100.0


def test_ip_beats_greedy(pending):
    # greedy grabs (0, 1) on vehicle 0 and strands request 2; pairing 0 with 2 covers everyone
    graph = _graph(((0, 1), 0, 50.0), ((0, 2), 0, 60.0), ((1,), 1, 20.0))
    params = CostParams(1000.0)
    warm = greedy_warm_start(graph, pending, params)
    best = solve_assignment(graph, pending, params)
    assert warm.objective == 1050.0
    assert best.objective == 80.0
    assert best.objective == enumerate_assignment(graph, pending, params).objective


def test_budget_keeps_the_warm_start(pending):
    graph = _graph(((0, 1), 0, 50.0), ((0, 2), 0, 60.0), ((1,), 1, 20.0))
    params = CostParams(1000.0)
    stopped = solve_assignment(graph, pending, params, budget=Budget(steps=0))
    assert stopped.status is Status.BUDGET
    assert stopped.objective == greedy_warm_start(graph, pending, params).objective


def test_matches_enumeration():
    summary = assignment_suite(n_instances=150, seed=4)
    assert summary['failures'] == 0


def test_commit_moves_states_and_routes(line_net, make_request, make_vehicle):
    fresh = make_request(0, 1, 2, net=line_net)
    reassigned = make_request(1, 0, 2, net=line_net)
    rider = make_request(2, 0, 2, net=line_net)
    reassigned.transition(RequestState.ASSIGNED)
    reassigned.vehicle_id = 1
    rider.transition(RequestState.ASSIGNED)
    rider.mark_picked_up(0.0, vehicle_id=1)
    registry = {r.id: r for r in (fresh, reassigned, rider)}

    rebalancing = make_vehicle(0, 0)
    rebalancing.set_rebalance_target(2)
    busy = make_vehicle(1, 0, onboard=[2], route=[pickup(reassigned), dropoff(reassigned), dropoff(rider)])
    fleet = [rebalancing, busy]

    route = (pickup(fresh), dropoff(fresh))
    edge = TripEdge((0,), 0, 60.0, route)
    solution = AssignmentSolution(chosen=(edge,), unassigned=frozenset({1}), objective=60.0)
    commit(solution, _graph(), fleet, registry, 0.0, line_net)

    assert rebalancing.route == route
    assert rebalancing.rebalance_target is None
    assert fresh.state is RequestState.ASSIGNED and fresh.vehicle_id == 0
    assert reassigned.state is RequestState.PENDING and reassigned.vehicle_id is None
    assert busy.route == (dropoff(rider),)
    assert rider.state is RequestState.ONBOARD


def test_commit_rejects_routes_that_fail_replay(line_net, make_request, make_vehicle):
    r = make_request(0, 2, 0, net=line_net, max_wait=60.0, max_delay=120.0)
    edge = TripEdge((0,), 0, 0.0, (pickup(r), dropoff(r)))
    with pytest.raises(InvariantViolation):
        commit(AssignmentSolution(chosen=(edge,)), _graph(), [make_vehicle(0, 0)], {0: r}, 0.0, line_net)
