"""
Brute-force verification suites. Each one draws random instances from a
seeded generator, checks a fast routine against a slow reference, and
returns a summary record with counts and failures.
"""
import logging
import math
from dataclasses import replace

import numpy as np
from scipy.optimize import linear_sum_assignment

from app.assignment import enumerate_assignment, solve_assignment
from app.models import CostParams, Request, RequestState, VehicleState
from app.pdp import PDPQuery, best_route_exhaustive
from app.rebalance import marginal_probabilities
from app.rtv import (
    RTVGraph, SearchSettings, TripEdge, brute_force_rtv, build_rtv, build_rv, candidate_vehicles,
    optimal_partition, partition_requests, query_for, random_partition,
)
from app.scenario import grid_network
from app.simulator import run
from app.solver import MatchingInstance, Status, matching_as_lp, min_cost_matching, solve_lp
from app.utils import log_event

logger = logging.getLogger(__name__)

OMEGA, DELTA = 300.0, 600.0


def _grid(rows=5, cols=5, edge_seconds=60.0):
    return grid_network(rows, cols, edge_seconds)


def _random_request(rid, net, rng, request_time):
    origin = int(rng.integers(net.n))
    destination = int(rng.integers(net.n - 1))
    if destination >= origin:
        destination += 1
    return Request(rid, origin, destination, float(request_time), OMEGA, DELTA,
                   direct_time=net.travel_time(origin, destination))


def _summary(suite, **counts):
    record = {'suite': suite}
    record.update(counts)
    record['passed'] = record.get('failures', 0) == 0
    log_event(logger, 'ORACLE', **record)
    return record


def random_pdp_query(net, rng, now=600.0, max_new=4, max_onboard=2, capacity=4):
    """A vehicle with up to ``max_onboard`` passengers and up to ``max_new`` fresh requests."""
    node = int(rng.integers(net.n))
    n_onboard = int(rng.integers(0, max_onboard + 1))
    n_new = int(rng.integers(1, max_new + 1))
    passengers = []
    for rid in range(n_onboard):
        r = _random_request(rid, net, rng, now - rng.uniform(0.0, OMEGA))
        r.state = RequestState.ONBOARD
        r.pickup_time = now
        passengers.append(r)
    new = [_random_request(n_onboard + k, net, rng, now - rng.uniform(0.0, OMEGA / 2)) for k in range(n_new)]
    vehicle = VehicleState(id=0, capacity=capacity, current_node=node, arrival_at_next=now,
                           onboard=frozenset(r.id for r in passengers))
    return PDPQuery(vehicle, tuple(new), now, tuple(passengers))


def pdp_suite(n_queries=10_000, seed=0, net=None, max_ratio=0.7):
    """
    Pruned search against plain enumeration: same feasibility, same cost,
    and at most ``max_ratio`` of the partial routes explored in aggregate.
    """
    net = net or _grid()
    rng = np.random.default_rng([seed, 1])
    failures = feasible = 0
    explored_pruned = explored_full = 0
    for _ in range(n_queries):
        query = random_pdp_query(net, rng)
        pruned = best_route_exhaustive(query, net, prune=True)
        full = best_route_exhaustive(query, net, prune=False)
        explored_pruned += pruned.explored
        explored_full += full.explored
        if pruned.feasible != full.feasible or (full.feasible and pruned.cost != full.cost):
            failures += 1
        feasible += full.feasible
    ratio = explored_pruned / explored_full if explored_full else 1.0
    failures += ratio > max_ratio
    return _summary('pdp', queries=n_queries, feasible=feasible, failures=failures,
                    explored_pruned=explored_pruned, explored_full=explored_full, explored_ratio=round(ratio, 6))


def random_rtv_graph(rng, max_vehicles=5, max_trips=8, max_requests=6):
    n_requests = int(rng.integers(1, max_requests + 1))
    n_vehicles = int(rng.integers(1, max_vehicles + 1))
    pending = [Request(rid, 0, 1, 0.0, OMEGA, DELTA) for rid in range(n_requests)]
    graph = RTVGraph()
    for _ in range(int(rng.integers(1, max_trips + 1))):
        size = int(rng.integers(1, min(3, n_requests) + 1))
        trip = tuple(sorted(int(i) for i in rng.choice(n_requests, size=size, replace=False)))
        vid = int(rng.integers(n_vehicles))
        graph.trips.add(trip)
        graph.tv_edges[(trip, vid)] = TripEdge(trip, vid, float(rng.integers(0, 2000)), ())
    return graph, pending


def assignment_suite(n_instances=1000, seed=0, penalty=1000.0):
    """The ILP against exhaustive enumeration of vehicle- and request-disjoint edge sets."""
    rng = np.random.default_rng([seed, 2])
    params = CostParams(penalty)
    failures = 0
    for _ in range(n_instances):
        rtv, pending = random_rtv_graph(rng)
        fast = solve_assignment(rtv, pending, params)
        slow = enumerate_assignment(rtv, pending, params)
        if fast.status is not Status.OPTIMAL or abs(fast.objective - slow.objective) > 1e-9:
            failures += 1
    return _summary('assignment', instances=n_instances, failures=failures)


def hungarian_matching(costs, cardinality):
    """
    Minimum cost matching of exactly ``cardinality`` pairs through scipy's
    assignment solver, padding with zero-cost dummies. Returns (objective,
    pairs) or None when no such matching exists.
    """
    C = np.asarray(costs, dtype=float)
    n1, n2 = C.shape
    m = cardinality
    size = n1 + n2 - m
    padded = np.zeros((size, size))
    padded[:n1, :n2] = C
    padded[n1:, n2:] = math.inf
    try:
        rows, cols = linear_sum_assignment(padded)
    except ValueError:
        return None
    pairs = sorted((int(i), int(j)) for i, j in zip(rows, cols) if i < n1 and j < n2)
    return float(sum(C[i, j] for i, j in pairs)), pairs


def matching_suite(n_instances=500, seed=0, max_side=8, unreachable=0.2, tol=1e-9):
    """Successive shortest paths against the simplex on the LP and against scipy."""
    rng = np.random.default_rng([seed, 3])
    failures = infeasible = largest = 0
    for _ in range(n_instances):
        n1, n2 = int(rng.integers(1, max_side + 1)), int(rng.integers(1, max_side + 1))
        largest = max(largest, n1, n2)
        costs = rng.integers(1, 100, size=(n1, n2)).astype(float)
        costs[rng.random((n1, n2)) < unreachable] = math.inf
        inst = MatchingInstance(costs, min(n1, n2))
        fast = min_cost_matching(inst)
        reference = hungarian_matching(costs, inst.cardinality)
        if fast.status is Status.INFEASIBLE:
            infeasible += 1
            failures += reference is not None
            continue
        lp, _ = matching_as_lp(inst)
        relaxed = solve_lp(lp)
        scale = max(1.0, abs(fast.objective))
        if reference is None or relaxed.status is not Status.OPTIMAL:
            failures += 1
        elif abs(fast.objective - reference[0]) > tol * scale or abs(fast.objective - relaxed.objective) > tol * scale:
            failures += 1
    return _summary('matching', instances=n_instances, infeasible=infeasible, largest_side=largest,
                    failures=failures)


def marginal_suite(n_instances=1000, seed=0, max_count=10, tol=1e-12):
    """Suffix-sum identity, monotonicity, and that the marginals add up to the mean count."""
    rng = np.random.default_rng([seed, 4])
    failures = 0
    for _ in range(n_instances):
        P = rng.dirichlet(np.ones(int(rng.integers(1, max_count + 2))))
        P = P / P.sum()
        p = marginal_probabilities(P)
        suffix_ok = all(abs(p[i - 1] - float(P[i:].sum())) <= tol for i in range(1, len(P)))
        monotone = all(p[i] <= p[i - 1] + tol for i in range(1, len(p)))
        mean_ok = abs(sum(p) - float(np.dot(np.arange(len(P)), P))) <= tol
        failures += not (suffix_ok and monotone and mean_ok)
    return _summary('marginal', instances=n_instances, failures=failures)


def clustered_instance(net, rng, n_requests, n_vehicles, now=0.0, spread=0.3, centers=None):
    """
    Requests drawn round-robin around ``centers`` (nodes; two random ones by
    default), vehicles anywhere. Returns (requests, candidates).
    """
    if centers is None:
        centers = [int(rng.integers(net.n)) for _ in range(2)]
    points = [net.coordinates(node) for node in centers]
    requests = []
    for rid in range(n_requests):
        cx, cy = points[rid % len(points)]
        origin = net.nearest_node(cx + rng.normal(0.0, spread), cy + rng.normal(0.0, spread))
        destination = int(rng.integers(net.n - 1))
        if destination >= origin:
            destination += 1
        requests.append(Request(rid, origin, destination, now, OMEGA, DELTA,
                                direct_time=net.travel_time(origin, destination)))
    fleet = [VehicleState(id=i, capacity=4, current_node=int(rng.integers(net.n))) for i in range(n_vehicles)]
    candidates = {r.id: candidate_vehicles(r, fleet, now, net) for r in requests}
    return requests, candidates


def corner_nodes(net):
    return [net.nearest_node(x, y) for x in (net.xs.min(), net.xs.max()) for y in (net.ys.min(), net.ys.max())]


def partition_suite(n_instances=100, seed=0, n_requests=40, n_vehicles=40, k=4, small_instances=20, small_size=8,
                    not_worse_share=0.9):
    """
    K-means slots against random slots on two-blob demand: k-means must be
    no worse on at least ``not_worse_share`` of the instances. On small
    instances with one tight blob per corner and k = 4, k-means must reach
    the exhaustive optimum, and the optimum may never lose to either
    heuristic.
    """
    net = _grid(15, 15)
    rng = np.random.default_rng([seed, 5])
    kmeans_wins = 0
    for i in range(n_instances):
        requests, candidates = clustered_instance(net, rng, n_requests, n_vehicles)
        clustered = partition_requests(requests, k, seed, net, candidates)
        scattered = random_partition(requests, k, np.random.default_rng([seed, 5, i]), candidates)
        kmeans_wins += clustered.io_cost <= scattered.io_cost
    corners = corner_nodes(net)
    beaten = matches_optimum = 0
    for i in range(small_instances):
        requests, candidates = clustered_instance(net, rng, small_size, n_vehicles, spread=0.1, centers=corners)
        best = optimal_partition(requests, k, candidates)
        clustered = partition_requests(requests, k, seed, net, candidates)
        scattered = random_partition(requests, k, np.random.default_rng([seed, 6, i]), candidates)
        beaten += best.io_cost > min(clustered.io_cost, scattered.io_cost)
        matches_optimum += clustered.io_cost == best.io_cost
    needed = math.ceil(not_worse_share * n_instances)
    failures = beaten + (small_instances - matches_optimum) + (kmeans_wins < needed)
    return _summary('partition', instances=n_instances, kmeans_not_worse=kmeans_wins, needed=needed,
                    small_instances=small_instances, kmeans_optimal=matches_optimum, failures=failures)


def rtv_suite(n_instances=50, seed=0, n_requests=5, n_vehicles=3, capacity=3):
    """Level-by-level trip growth against every subset for every vehicle."""
    net = _grid(4, 4)
    rng = np.random.default_rng([seed, 7])
    settings = SearchSettings(cutoff=4, prune=True)
    failures = 0
    trips = 0
    for _ in range(n_instances):
        now = 120.0
        requests = [_random_request(rid, net, rng, now - rng.uniform(0.0, 60.0)) for rid in range(n_requests)]
        registry = {r.id: r for r in requests}
        fleet = [VehicleState(id=i, capacity=capacity, current_node=int(rng.integers(net.n)), arrival_at_next=now)
                 for i in range(n_vehicles)]
        rv, _ = build_rv(requests, fleet, now, net, registry, settings=settings)
        fast = build_rtv(rv, fleet, requests, now, net, registry, settings=settings)
        slow = brute_force_rtv(requests, fleet, now, net, registry, settings=settings)
        same_keys = set(fast.tv_edges) == set(slow.tv_edges)
        same_costs = same_keys and all(fast.tv_edges[key].cost == slow.tv_edges[key].cost for key in slow.tv_edges)
        failures += not same_costs
        trips += len(slow.tv_edges)
    return _summary('rtv', instances=n_instances, trip_edges=trips, failures=failures)


class CacheAuditor:
    """
    Run observer: after each epoch recomputes, by direct exhaustive search,
    a random sample of the (request, vehicle) pairs the cache excludes. Any
    feasible one means the cache dropped a vehicle it should have kept.
    """

    def __init__(self, samples=1000, per_epoch=20, seed=0):
        self.samples = samples
        self.per_epoch = per_epoch
        self.rng = np.random.default_rng([seed, 8])
        self.audited = 0
        self.violations = []

    def __call__(self, state, metrics):
        if state.cache is None or self.audited >= self.samples:
            return
        fleet_by_id = {v.id: v for v in state.fleet}
        pairs = [(rid, vid) for rid, vid in state.cache.excluded_pairs(sorted(fleet_by_id))
                 if state.registry[rid].state in (RequestState.PENDING, RequestState.ASSIGNED)]
        if not pairs:
            return
        quota = min(self.per_epoch, self.samples - self.audited, len(pairs))
        for index in sorted(self.rng.choice(len(pairs), size=quota, replace=False)):
            rid, vid = pairs[int(index)]
            vehicle = fleet_by_id[vid]
            query = query_for(vehicle, (state.registry[rid],), state.now, state.registry)
            if best_route_exhaustive(query, state.net, prune=False).feasible:
                self.violations.append((state.epoch, rid, vid))
            self.audited += 1


def cache_suite(config, net, demand, samples=1000, seed=0):
    auditor = CacheAuditor(samples=samples, seed=seed)
    report = run(replace(config, variant='speedup'), net, demand, observer=auditor)
    return _summary('cache', audited=auditor.audited, failures=len(auditor.violations),
                    service_rate=report.service_rate)


def exactness_suite(config, net, demand):
    """
    'original' and 'speedup' with the same rebalancing formulation must reach
    the same objective every epoch and serve the same requests.
    """
    objectives = {}
    served = {}
    for variant in ('original', 'speedup'):
        pinned = replace(config, variant=variant, rebalance_formulation='one_to_one',
                         rtv_budget_steps=None, rtv_budget_seconds=None,
                         ip_budget_nodes=None, ip_budget_seconds=None)
        report = run(pinned, net, demand)
        objectives[variant] = [m.objective for m in report.metrics]
        served[variant] = list(report.served_ids)
    differing = sum(1 for a, b in zip(objectives['original'], objectives['speedup']) if a != b)
    differing += abs(len(objectives['original']) - len(objectives['speedup']))
    same_served = served['original'] == served['speedup']
    return _summary('exactness', epochs=len(objectives['original']), differing_epochs=differing,
                    failures=differing + (not same_served))


def run_suites(names, seed=0, scale=1.0, scenario=None):
    """
    Run the named suites with instance counts multiplied by ``scale``.
    ``scenario`` is a (config, net, demand) triple for the run-based suites;
    without it they are skipped.
    """
    def count(n):
        return max(1, int(round(n * scale)))

    table = {
        'pdp': lambda: pdp_suite(count(10_000), seed),
        'assignment': lambda: assignment_suite(count(1000), seed),
        'matching': lambda: matching_suite(count(500), seed),
        'marginal': lambda: marginal_suite(count(1000), seed),
        'partition': lambda: partition_suite(count(100), seed, small_instances=count(20)),
        'rtv': lambda: rtv_suite(count(50), seed),
    }
    if scenario is not None:
        config, net, demand = scenario
        table['cache'] = lambda: cache_suite(config, net, demand, samples=count(1000), seed=seed)
        table['exactness'] = lambda: exactness_suite(config, net, demand)
    results = []
    for name in names:
        if name not in table:
            logger.warning('skipping oracle suite %s', name)
            continue
        results.append(table[name]())
    return results


SUITES = ('pdp', 'assignment', 'matching', 'marginal', 'partition', 'rtv', 'cache', 'exactness')
