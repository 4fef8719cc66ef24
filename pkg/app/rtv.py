"""
Shareability graphs: request-vehicle (RV) and request-trip-vehicle (RTV).

The RV step only checks vehicles that could reach the request's origin in
time and, when a cache is given, that have not been proven infeasible for
it in an earlier epoch. Work is fanned out over request partitions; the
partition only changes where work runs, never the result.
"""
import itertools
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from app.models import VehicleState
from app.pdp import EPS, PDPQuery, best_route_exhaustive, solve_pdp
from app.utils import Budget, kmeans_labels, log_event

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SearchSettings:
    cutoff: int = 4
    prune: bool = True
    max_trip_size: int = None
    workers: int = 1


@dataclass
class RVGraph:
    rr_edges: set = field(default_factory=set)
    rv_edges: dict = field(default_factory=dict)      # (request_id, vehicle_id) -> PDPResult
    candidates: dict = field(default_factory=dict)    # request_id -> frozenset of vehicle ids
    explored: int = 0
    pdp_calls: int = 0

    def rr_connected(self, a, b):
        return (min(a, b), max(a, b)) in self.rr_edges


@dataclass(frozen=True)
class TripEdge:
    trip: tuple
    vehicle_id: int
    cost: float
    route: tuple


@dataclass
class RTVGraph:
    trips: set = field(default_factory=set)
    tv_edges: dict = field(default_factory=dict)      # (trip, vehicle_id) -> TripEdge
    complete: dict = field(default_factory=dict)      # vehicle_id -> budget not exhausted
    explored: int = 0
    pdp_calls: int = 0

    def trips_with_request(self, request_id):
        return sorted(t for t in self.trips if request_id in t)

    def edges(self):
        """Trip edges in deterministic (trip, vehicle) order."""
        return [self.tv_edges[key] for key in sorted(self.tv_edges)]


class FeasibleVehicleCache:
    """
    Per single-request trip: the vehicles still possibly feasible. A set only
    ever shrinks; an empty set means the request can be skipped until it
    expires.
    """

    def __init__(self):
        self.sets = {}
        self.created = {}

    def __contains__(self, request_id):
        return request_id in self.sets

    def allowed(self, request_id):
        return self.sets.get(request_id)

    def is_dropped(self, request_id):
        return request_id in self.sets and not self.sets[request_id]

    def forget(self, request_id):
        self.sets.pop(request_id, None)
        self.created.pop(request_id, None)

    def excluded_pairs(self, vehicle_ids):
        for rid in sorted(self.sets):
            for vid in vehicle_ids:
                if vid not in self.sets[rid]:
                    yield rid, vid


def update_cache(cache, outcomes, epoch=0):
    """
    ``outcomes`` maps request id -> {vehicle id: still possible}. A first
    sighting initializes A_T to the possible set; later sightings intersect.
    """
    for rid in sorted(outcomes):
        possible = {vid for vid, ok in outcomes[rid].items() if ok}
        if rid not in cache.sets:
            cache.sets[rid] = possible
            cache.created[rid] = epoch
        else:
            before = len(cache.sets[rid])
            cache.sets[rid] &= possible
            if len(cache.sets[rid]) < before:
                log_event(logger, 'CACHE_SHRINK', request=rid, before=before, after=len(cache.sets[rid]))
        if not cache.sets[rid]:
            log_event(logger, 'CACHE_DROP', request=rid, epoch=epoch)
    return cache


def candidate_vehicles(r, fleet, now, net):
    """Vehicles that could drive straight to the origin within the wait bound."""
    return frozenset(
        v.id for v in fleet
        if v.ready_time(now) + net.times_from(v.next_node)[r.origin] - r.request_time <= r.max_wait + EPS)


def query_for(vehicle, requests, now, registry):
    passengers = tuple(registry[rid] for rid in sorted(vehicle.onboard))
    return PDPQuery(vehicle, tuple(requests), now, passengers)


@dataclass
class RequestPartition:
    slots: list
    io_cost: int


def io_cost(slots, candidates):
    """Sum over slots of the number of distinct candidate vehicles the slot needs."""
    total = 0
    for slot in slots:
        union = set()
        for rid in slot:
            union |= candidates.get(rid, frozenset())
        total += len(union)
    return total


def partition_requests(requests, k, seed, net, candidates=None):
    """K-means on origin coordinates; one slot per cluster."""
    requests = sorted(requests, key=lambda r: r.id)
    candidates = candidates or {}
    if not requests:
        return RequestPartition([[] for _ in range(k)], 0)
    points = np.array([net.coordinates(r.origin) for r in requests])
    labels, _ = kmeans_labels(points, k, seed)
    slots = [[] for _ in range(k)]
    for r, label in zip(requests, labels):
        slots[int(label)].append(r.id)
    return RequestPartition(slots, io_cost(slots, candidates))


def random_partition(requests, k, seed, candidates=None):
    rng = np.random.default_rng(seed)
    slots = [[] for _ in range(k)]
    for r in sorted(requests, key=lambda r: r.id):
        slots[int(rng.integers(k))].append(r.id)
    return RequestPartition(slots, io_cost(slots, candidates or {}))


def optimal_partition(requests, k, candidates, require_nonempty=False):
    """
    Exhaustive minimum io_cost partition over restricted-growth labelings of
    at most k slots, empty slots allowed as in the heuristics.
    ``require_nonempty`` keeps only partitions with min(k, n) occupied slots.
    Meant for a handful of requests only.
    """
    ids = sorted(r.id for r in requests)
    n = len(ids)
    if n == 0:
        return RequestPartition([[] for _ in range(k)], 0)
    need = min(k, n) if require_nonempty else 1
    best = None

    def visit(i, labels, used):
        nonlocal best
        if i == n:
            if used < need:
                return
            slots = [[] for _ in range(k)]
            for rid, label in zip(ids, labels):
                slots[label].append(rid)
            cost = io_cost(slots, candidates)
            if best is None or cost < best.io_cost:
                best = RequestPartition(slots, cost)
            return
        for label in range(min(used + 1, k)):
            labels.append(label)
            visit(i + 1, labels, max(used, label + 1))
            labels.pop()

    visit(0, [], 0)
    return best


def _virtual_vehicle(node, now):
    return VehicleState(id=-1, capacity=2, current_node=node, arrival_at_next=now)


def _rr_shareable(a, b, now, net, settings):
    explored = 0
    for origin in (a.origin, b.origin):
        query = PDPQuery(_virtual_vehicle(origin, now), (a, b), now)
        result = best_route_exhaustive(query, net, prune=settings.prune)
        explored += result.explored
        if result.feasible:
            return True, explored
    return False, explored


def build_rv(requests, fleet, now, net, registry, partition=None, cache=None, settings=SearchSettings()):
    """
    Returns (RVGraph, outcomes) where outcomes feed ``update_cache``.
    """
    requests = sorted(requests, key=lambda r: r.id)
    graph = RVGraph()

    for a, b in itertools.combinations(requests, 2):
        ok, explored = _rr_shareable(a, b, now, net, settings)
        graph.explored += explored
        if ok:
            graph.rr_edges.add((a.id, b.id))

    fleet_by_id = {v.id: v for v in fleet}
    by_id = {r.id: r for r in requests}
    for r in requests:
        graph.candidates[r.id] = candidate_vehicles(r, fleet, now, net)

    def check_slot(slot):
        rows = []
        for rid in slot:
            r = by_id[rid]
            vids = graph.candidates[rid]
            if cache is not None and rid in cache:
                vids = vids & cache.allowed(rid)
            for vid in sorted(vids):
                result = solve_pdp(query_for(fleet_by_id[vid], (r,), now, registry), net,
                                   cutoff=settings.cutoff, prune=settings.prune)
                rows.append((rid, vid, result))
        return rows

    slots = partition.slots if partition is not None else [[r.id for r in requests]]
    if settings.workers > 1 and len(slots) > 1:
        with ThreadPoolExecutor(max_workers=settings.workers) as pool:
            chunks = list(pool.map(check_slot, slots))
    else:
        chunks = [check_slot(slot) for slot in slots]

    outcomes = {r.id: {} for r in requests}
    for rid, vid, result in sorted((row for chunk in chunks for row in chunk), key=lambda row: row[:2]):
        graph.pdp_calls += 1
        graph.explored += result.explored
        # heuristic failures prove nothing, so they keep the vehicle in A_T
        outcomes[rid][vid] = result.feasible or not result.exact
        if result.feasible:
            graph.rv_edges[(rid, vid)] = result
    return graph, outcomes


def _explore_vehicle(vehicle, rv, requests_by_id, now, net, registry, budget, settings):
    tv_edges = {}
    explored = 0
    calls = 0
    complete = True
    run = budget.fresh()
    level = {}
    for (rid, vid), result in sorted(rv.rv_edges.items()):
        if vid == vehicle.id:
            level[(rid,)] = result
    for trip, result in level.items():
        tv_edges[trip] = result

    max_size = settings.max_trip_size or vehicle.capacity
    size = 2
    while size <= max_size and len(level) > 1 and complete:
        previous = sorted(level)
        previous_set = set(previous)
        candidates = set()
        for a, b in itertools.combinations(previous, 2):
            union = tuple(sorted(set(a) | set(b)))
            if len(union) == size:
                candidates.add(union)
        next_level = {}
        for trip in sorted(candidates):
            if run.exhausted:
                complete = False
                break
            if any(sub not in previous_set for sub in itertools.combinations(trip, size - 1)):
                continue
            if size == 2 and not rv.rr_connected(*trip):
                continue
            run.spend(1)
            calls += 1
            result = solve_pdp(query_for(vehicle, [requests_by_id[rid] for rid in trip], now, registry),
                               net, cutoff=settings.cutoff, prune=settings.prune)
            explored += result.explored
            if result.feasible:
                next_level[trip] = result
        tv_edges.update(next_level)
        level = next_level
        size += 1
    return vehicle.id, tv_edges, complete, explored, calls


def build_rtv(rv, fleet, requests, now, net, registry, budget=None, settings=SearchSettings()):
    """
    Grow trips per vehicle by size from the RV edges. A trip is tried only
    when all its one-smaller subsets are trips of the same vehicle. The
    budget is per vehicle; an exhausted budget leaves a valid but possibly
    incomplete graph.
    """
    budget = budget or Budget()
    requests_by_id = {r.id: r for r in requests}
    vehicles = sorted(fleet, key=lambda v: v.id)

    def explore(vehicle):
        return _explore_vehicle(vehicle, rv, requests_by_id, now, net, registry, budget, settings)

    if settings.workers > 1 and len(vehicles) > 1:
        with ThreadPoolExecutor(max_workers=settings.workers) as pool:
            results = list(pool.map(explore, vehicles))
    else:
        results = [explore(v) for v in vehicles]

    graph = RTVGraph()
    for vid, tv_edges, complete, explored, calls in sorted(results, key=lambda item: item[0]):
        graph.complete[vid] = complete
        graph.explored += explored
        graph.pdp_calls += calls
        for trip, result in sorted(tv_edges.items()):
            graph.trips.add(trip)
            graph.tv_edges[(trip, vid)] = TripEdge(trip, vid, result.cost, result.route)
    return graph


def brute_force_rtv(requests, fleet, now, net, registry, settings=SearchSettings()):
    """Every subset of requests against every vehicle; the oracle for build_rtv."""
    requests = sorted(requests, key=lambda r: r.id)
    graph = RTVGraph()
    for vehicle in sorted(fleet, key=lambda v: v.id):
        max_size = settings.max_trip_size or vehicle.capacity
        for size in range(1, min(max_size, len(requests)) + 1):
            for subset in itertools.combinations(requests, size):
                result = solve_pdp(query_for(vehicle, subset, now, registry), net,
                                   cutoff=settings.cutoff, prune=settings.prune)
                if result.feasible:
                    trip = tuple(r.id for r in subset)
                    graph.trips.add(trip)
                    graph.tv_edges[(trip, vehicle.id)] = TripEdge(trip, vehicle.id, result.cost, result.route)
        graph.complete[vehicle.id] = True
    return graph
