"""
Per-(vehicle, trip) pickup-and-delivery search.

A route starts where the vehicle becomes free (its next node, at
max(now, arrival there)) and visits stops along shortest paths. A pickup is
feasible when the vehicle arrives before request_time + max_wait, a dropoff
when it arrives before request_time + direct_time + max_delay. The cost of a
route is the sum of scheduled delays over onboard and new requests.
"""
import math
from dataclasses import dataclass

from app.exceptions import InvariantViolation, RouteError
from app.models import StopKind, dropoff, pickup

# slack on time comparisons; leg sums and direct times may differ in the last bits
EPS = 1e-6


@dataclass(frozen=True)
class PDPQuery:
    vehicle: object
    new_requests: tuple
    now: float
    passengers: tuple = ()

    def __post_init__(self):
        onboard_ids = {r.id for r in self.passengers}
        if onboard_ids != set(self.vehicle.onboard):
            raise InvariantViolation(f'vehicle {self.vehicle.id}: passenger records do not match onboard set')
        if any(r.id in onboard_ids for r in self.new_requests):
            raise InvariantViolation(f'vehicle {self.vehicle.id}: new requests overlap onboard passengers')


@dataclass(frozen=True)
class PDPResult:
    feasible: bool
    route: tuple = ()
    cost: float = math.inf
    explored: int = 0
    exact: bool = True


class _Context:
    """Flattened per-query data so the search loop touches plain lists only."""

    def __init__(self, query, net):
        vehicle = query.vehicle
        self.net = net
        self.capacity = vehicle.capacity
        self.start_node = vehicle.next_node
        self.start_time = vehicle.ready_time(query.now)
        self.requests = list(query.passengers) + sorted(query.new_requests, key=lambda r: r.id)
        self.n_onboard = len(query.passengers)
        self.by_id = {r.id: i for i, r in enumerate(self.requests)}
        self.origin = [r.origin for r in self.requests]
        self.dest = [r.destination for r in self.requests]
        self.pickup_deadline = [r.pickup_deadline + EPS for r in self.requests]
        self.dropoff_deadline = [r.dropoff_deadline + EPS for r in self.requests]
        self.earliest = [r.earliest_arrival for r in self.requests]
        stops = [(pickup(r), i) for i, r in enumerate(self.requests) if i >= self.n_onboard]
        stops += [(dropoff(r), i) for i, r in enumerate(self.requests)]
        # children are tried in (kind, request id) order so that the first
        # minimum found is the lexicographically smallest one
        self.stops = sorted(stops)

    def rows(self, node):
        return self.net.times_from(node)

    def evaluate(self, route):
        """(feasible, cost) of a well-formed route."""
        node, t = self.start_node, self.start_time
        load = self.n_onboard
        cost = 0.0
        if load > self.capacity:
            return False, None
        for stop in route:
            i = self.by_id[stop.request_id]
            t = t + self.rows(node)[stop.node]
            node = stop.node
            if stop.kind is StopKind.PICKUP:
                if t > self.pickup_deadline[i]:
                    return False, None
                load += 1
                if load > self.capacity:
                    return False, None
            else:
                if t > self.dropoff_deadline[i]:
                    return False, None
                cost += t - self.earliest[i]
                load -= 1
        return True, cost


def best_route_exhaustive(query, net, prune=True):
    """
    Minimum-cost feasible ordering over every valid interleaving. With
    ``prune`` a partial route is abandoned as soon as some request can no
    longer meet its bound even by driving straight to its next stop.
    """
    ctx = _Context(query, net)
    m = len(ctx.requests)
    if ctx.n_onboard > ctx.capacity:
        return PDPResult(False, explored=0)

    picked = [i < ctx.n_onboard for i in range(m)]
    delivered = [False] * m
    prefix = []
    best = {'cost': math.inf, 'route': None}
    explored = 0

    def violates_lookahead(node, t):
        row = ctx.rows(node)
        for j in range(m):
            if delivered[j]:
                continue
            if not picked[j] and t + row[ctx.origin[j]] > ctx.pickup_deadline[j]:
                return True
            if t + row[ctx.dest[j]] > ctx.dropoff_deadline[j]:
                return True
        return False

    def extend(node, t, load, cost, remaining):
        nonlocal explored
        if remaining == 0:
            if cost < best['cost']:
                best['cost'] = cost
                best['route'] = tuple(prefix)
            return
        row = ctx.rows(node)
        for stop, i in ctx.stops:
            if stop.kind is StopKind.PICKUP:
                if picked[i] or load >= ctx.capacity:
                    continue
            elif delivered[i] or not picked[i]:
                continue
            explored += 1
            ta = t + row[stop.node]
            if stop.kind is StopKind.PICKUP:
                if ta > ctx.pickup_deadline[i]:
                    continue
                picked[i] = True
                new_load, new_cost = load + 1, cost
            else:
                if ta > ctx.dropoff_deadline[i]:
                    continue
                delivered[i] = True
                new_load, new_cost = load - 1, cost + (ta - ctx.earliest[i])
            if not (prune and violates_lookahead(stop.node, ta)):
                prefix.append(stop)
                extend(stop.node, ta, new_load, new_cost, remaining - 1)
                prefix.pop()
            if stop.kind is StopKind.PICKUP:
                picked[i] = False
            else:
                delivered[i] = False

    if not (prune and violates_lookahead(ctx.start_node, ctx.start_time)):
        n_stops = len(ctx.stops)
        extend(ctx.start_node, ctx.start_time, ctx.n_onboard, 0.0, n_stops)

    if best['route'] is None:
        return PDPResult(False, explored=explored)
    return PDPResult(True, best['route'], best['cost'], explored=explored)


def _seed_route(query, ctx):
    """Committed route restricted to this query's requests, if still feasible."""
    wanted = set(ctx.by_id)
    seeded = tuple(s for s in query.vehicle.route if s.request_id in wanted)
    if _well_formed(seeded, set(query.vehicle.onboard), ctx) and ctx.evaluate(seeded)[0]:
        return seeded
    onboard = set(query.vehicle.onboard)
    base = [s for s in query.vehicle.route if s.request_id in onboard and s.kind is StopKind.DROPOFF]
    present = {s.request_id for s in base}
    base += [dropoff(r) for r in query.passengers if r.id not in present]
    return tuple(base)


def _well_formed(route, onboard, ctx):
    seen_pickup, seen_dropoff = set(), set()
    for stop in route:
        if stop.kind is StopKind.PICKUP:
            if stop.request_id in onboard or stop.request_id in seen_pickup:
                return False
            seen_pickup.add(stop.request_id)
        else:
            if stop.request_id in seen_dropoff:
                return False
            if stop.request_id not in onboard and stop.request_id not in seen_pickup:
                return False
            seen_dropoff.add(stop.request_id)
    return onboard <= seen_dropoff and seen_pickup <= seen_dropoff


def best_route_insertion(query, net):
    """
    Single-pass insertion: each new request (by request time, then id) goes
    into the cheapest feasible (pickup, dropoff) position pair.
    """
    ctx = _Context(query, net)
    route = list(_seed_route(query, ctx))
    placed = {s.request_id for s in route}
    explored = 0
    if not ctx.evaluate(route)[0]:
        return PDPResult(False, explored=explored, exact=False)

    pending = sorted((r for r in query.new_requests if r.id not in placed),
                     key=lambda r: (r.request_time, r.id))
    cost = ctx.evaluate(route)[1]
    for r in pending:
        p, d = pickup(r), dropoff(r)
        best_route, best_cost = None, math.inf
        for i in range(len(route) + 1):
            for j in range(i, len(route) + 1):
                candidate = route[:i] + [p] + route[i:j] + [d] + route[j:]
                explored += 1
                feasible, c = ctx.evaluate(candidate)
                if feasible and c < best_cost:
                    best_route, best_cost = candidate, c
        if best_route is None:
            return PDPResult(False, explored=explored, exact=False)
        route, cost = best_route, best_cost
    return PDPResult(True, tuple(route), cost, explored=explored, exact=False)


def solve_pdp(query, net, cutoff=4, prune=True):
    """Exhaustive search up to ``cutoff`` requests in total, insertion above."""
    if len(query.passengers) + len(query.new_requests) <= cutoff:
        return best_route_exhaustive(query, net, prune=prune)
    return best_route_insertion(query, net)


def check_route(vehicle, route, now, requests, net):
    """
    Replay ``route`` from the vehicle's position. ``requests`` maps ids to
    Request records for every stop and onboard passenger.
    Returns (feasible, cost); cost is None when infeasible.
    """
    onboard = set(vehicle.onboard)
    try:
        passengers = tuple(requests[rid] for rid in sorted(onboard))
        others = {s.request_id for s in route} - onboard
        new_requests = tuple(requests[rid] for rid in sorted(others))
    except KeyError as e:
        raise RouteError(f'vehicle {vehicle.id}: route references unknown request {e.args[0]}') from None
    query = PDPQuery(vehicle, new_requests, now, passengers)
    ctx = _Context(query, net)
    route = tuple(route)
    if not _well_formed(route, onboard, ctx):
        raise RouteError(f'vehicle {vehicle.id}: malformed route {route}')
    return ctx.evaluate(route)
