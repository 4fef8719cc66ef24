"""
Requests, stops, vehicles, and the system cost function.
"""
import enum
from dataclasses import dataclass, field
from typing import NamedTuple

from app.exceptions import RequestStateError


class RequestState(str, enum.Enum):
    PENDING = 'pending'
    ASSIGNED = 'assigned'
    ONBOARD = 'onboard'
    COMPLETED = 'completed'
    REJECTED = 'rejected'


ALLOWED_TRANSITIONS = {
    RequestState.PENDING: {RequestState.ASSIGNED, RequestState.REJECTED},
    RequestState.ASSIGNED: {RequestState.ONBOARD, RequestState.REJECTED, RequestState.PENDING},
    RequestState.ONBOARD: {RequestState.COMPLETED},
    RequestState.COMPLETED: set(),
    RequestState.REJECTED: set(),
}

TERMINAL_STATES = {RequestState.COMPLETED, RequestState.REJECTED}


@dataclass
class Request:
    id: int
    origin: int
    destination: int
    request_time: float
    max_wait: float
    max_delay: float
    direct_time: float = 0.0    # shortest o->d travel time, fixed at ingest
    state: RequestState = RequestState.PENDING
    pickup_time: float = None
    dropoff_time: float = None
    vehicle_id: int = None

    def __post_init__(self):
        if self.origin == self.destination:
            raise ValueError(f'request {self.id}: origin equals destination')
        if not self.max_wait > 0:
            raise ValueError(f'request {self.id}: max_wait must be > 0')
        if self.max_delay < self.max_wait:
            raise ValueError(f'request {self.id}: max_delay must be >= max_wait')

    @property
    def earliest_arrival(self):
        """t_r^*: request time plus the direct shortest travel time."""
        return self.request_time + self.direct_time

    @property
    def pickup_deadline(self):
        return self.request_time + self.max_wait

    @property
    def dropoff_deadline(self):
        return self.earliest_arrival + self.max_delay

    def transition(self, new_state):
        if new_state not in ALLOWED_TRANSITIONS[self.state]:
            raise RequestStateError(f'request {self.id}: illegal transition {self.state.value} -> {new_state.value}')
        self.state = new_state

    def mark_picked_up(self, when, vehicle_id):
        if when < self.request_time:
            raise RequestStateError(f'request {self.id}: pickup before request time')
        self.transition(RequestState.ONBOARD)
        self.pickup_time = when
        self.vehicle_id = vehicle_id

    def mark_dropped_off(self, when):
        if when <= self.pickup_time:
            raise RequestStateError(f'request {self.id}: dropoff must follow pickup')
        self.transition(RequestState.COMPLETED)
        self.dropoff_time = when

    def __repr__(self):
        return f"Request({self.id}, {self.origin}->{self.destination}, t={self.request_time}, {self.state.value})"


class DemandRecord(NamedTuple):
    """One row of a request stream file; ids are dense network indices."""
    request_time: float
    origin: int
    destination: int


class StopKind(enum.IntEnum):
    PICKUP = 0
    DROPOFF = 1


@dataclass(frozen=True, order=True)
class Stop:
    kind: StopKind
    request_id: int
    node: int = field(compare=False)


def pickup(request):
    return Stop(StopKind.PICKUP, request.id, request.origin)


def dropoff(request):
    return Stop(StopKind.DROPOFF, request.id, request.destination)


@dataclass
class VehicleState:
    """
    A vehicle is at ``next_node`` from ``arrival_at_next`` on; before that it
    is travelling the edge current_node -> next_node. ``onboard`` and
    ``route`` are replaced wholesale, never mutated in place, so sharing one with
    a worker thread is safe.
    """
    id: int
    capacity: int
    current_node: int
    next_node: int = None
    arrival_at_next: float = 0.0
    onboard: frozenset = frozenset()
    route: tuple = ()
    rebalance_target: int = None

    def __post_init__(self):
        if self.capacity < 1:
            raise ValueError(f'vehicle {self.id}: capacity must be >= 1')
        if self.next_node is None:
            self.next_node = self.current_node

    @property
    def is_empty(self):
        return not self.onboard and not self.route

    @property
    def is_idle(self):
        """Empty and not heading to a rebalancing target."""
        return self.is_empty and self.rebalance_target is None

    def ready_time(self, now):
        """When the vehicle can leave ``next_node``."""
        return max(now, self.arrival_at_next)

    def time_to(self, node, now, net):
        """Residual time to the next node plus the shortest time onwards."""
        return self.ready_time(now) - now + net.times_from(self.next_node)[node]

    def set_rebalance_target(self, node):
        if not self.is_empty:
            raise RequestStateError(f'vehicle {self.id}: cannot rebalance while serving requests')
        self.rebalance_target = node


@dataclass(frozen=True)
class CostParams:
    unassigned_penalty: float

    @classmethod
    def default(cls, max_wait, max_delay):
        return cls(unassigned_penalty=10.0 * (max_wait + max_delay))


def waiting_time(r):
    if r.pickup_time is None:
        raise RequestStateError(f'request {r.id} has not been picked up')
    return r.pickup_time - r.request_time


def total_delay(r, net=None):
    """
    delta_r = t_r^d - (t_r^r + tt(o_r, d_r)). With a network the direct time
    is re-queried; otherwise the value stored at ingest is used.
    """
    if r.state is not RequestState.COMPLETED:
        raise RequestStateError(f'request {r.id} is not completed')
    direct = net.travel_time(r.origin, r.destination) if net is not None else r.direct_time
    return r.dropoff_time - (r.request_time + direct)


def system_cost(delays, assigned_delay_bounds, n_rejected, params):
    return sum(delays) + sum(assigned_delay_bounds) + n_rejected * params.unassigned_penalty
