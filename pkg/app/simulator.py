"""
The epoch loop: advance vehicles, ingest and expire requests, build the RV
and RTV graphs, solve the assignment, rebalance idle vehicles, and record
metrics.
"""
import logging
import math
import os
import time
from dataclasses import asdict, dataclass, field, fields

import numpy as np
import pandas as pd

from app.assignment import commit, solve_assignment
from app.exceptions import ConfigError, InvariantViolation
from app.models import CostParams, Request, RequestState, StopKind, VehicleState, waiting_time
from app.pdp import EPS
from app.rebalance import (
    RebalanceCaps, RebalanceOutcome, build_clusters, dispatch, fit_demand, generate_virtual_requests,
    proactive_rebalance, rebalance_baseline, rebalance_one_to_one, request_targets, sample_for_rebalance,
    suppress_served_virtuals,
)
from app.rtv import (
    FeasibleVehicleCache, SearchSettings, build_rtv, build_rv, candidate_vehicles, partition_requests,
    random_partition, update_cache,
)
from app.utils import Budget, log_event, write_json, write_jsonl

logger = logging.getLogger(__name__)

VARIANTS = ('original', 'speedup', 'speedup_proactive')
FORMULATIONS = ('baseline', 'one_to_one')
TIMING_MODES = ('steps', 'wall')

# independent random streams, so variants draw identical numbers for the same purpose
PURPOSE_FLEET, PURPOSE_PARTITION, PURPOSE_REBALANCE = 0, 1, 2

_TRUE = {'1', 'true', 'yes', 'on'}
_FALSE = {'0', 'false', 'no', 'off'}


def _parse_bool(value):
    if isinstance(value, bool):
        return value
    text = str(value).strip().lower()
    if text in _TRUE:
        return True
    if text in _FALSE:
        return False
    raise ValueError(f'not a boolean: {value!r}')


def _optional(cast):
    def parse(value):
        if value is None or str(value).strip().lower() in ('', 'none', 'null'):
            return None
        return cast(value)
    return parse


def _integer(value):
    number = float(value)
    if not number.is_integer():
        raise ValueError(f'not an integer: {value!r}')
    return int(number)


@dataclass(frozen=True)
class SimConfig:
    epoch_s: float = 30.0
    fleet_size: int = 40
    capacity: int = 4
    omega_s: float = 300.0
    delta_s: float = 600.0
    seed: int = 0
    variant: str = 'speedup'
    unassigned_penalty: float = None
    drain_factor: float = 2.0
    exhaustive_cutoff: int = 4
    max_trip_size: int = None
    rtv_budget_steps: int = None
    rtv_budget_seconds: float = None
    ip_budget_nodes: int = None
    ip_budget_seconds: float = None
    partitions: int = 4
    workers: int = 1
    alpha_miles: float = 0.4
    p_min: float = 0.75
    gamma: float = 3
    v_max: int = 300
    r_max: int = 600
    bin_seconds: float = 300.0
    lookahead_bins: int = 1
    suppression_mode: str = 'per_vehicle'
    weight_by_probability: bool = False
    proactive_targets: str = 'union'
    rebalance_formulation: str = None
    timing_mode: str = 'steps'

    _PARSERS = {
        'epoch_s': float, 'fleet_size': _integer, 'capacity': _integer, 'omega_s': float,
        'delta_s': float, 'seed': _integer, 'variant': str, 'unassigned_penalty': _optional(float),
        'drain_factor': float, 'exhaustive_cutoff': _integer, 'max_trip_size': _optional(_integer),
        'rtv_budget_steps': _optional(_integer), 'rtv_budget_seconds': _optional(float),
        'ip_budget_nodes': _optional(_integer), 'ip_budget_seconds': _optional(float),
        'partitions': _integer, 'workers': _integer, 'alpha_miles': float, 'p_min': float,
        'gamma': float, 'v_max': _integer, 'r_max': _integer, 'bin_seconds': float,
        'lookahead_bins': _integer, 'suppression_mode': str, 'weight_by_probability': _parse_bool,
        'proactive_targets': str, 'rebalance_formulation': _optional(str), 'timing_mode': str,
    }

    def __post_init__(self):
        self.validate()

    @classmethod
    def keys(cls):
        return [f.name for f in fields(cls)]

    @classmethod
    def from_mapping(cls, mapping, strict=True):
        """Build from lower-case string keys, coercing text values."""
        values = {}
        for key, raw in mapping.items():
            name = key.strip().lower()
            if name not in cls._PARSERS:
                if strict:
                    raise ConfigError(f'unknown config key {key!r}')
                continue
            try:
                values[name] = cls._PARSERS[name](raw)
            except (TypeError, ValueError) as e:
                raise ConfigError(f'bad value for {name}: {raw!r} ({e})') from None
        return cls(**values)

    @classmethod
    def from_app_config(cls, app_config, overrides=None):
        values = {name: app_config[name.upper()] for name in cls.keys() if name.upper() in app_config}
        values.update(overrides or {})
        return cls.from_mapping(values)

    def validate(self):
        checks = [
            (self.epoch_s > 0, 'epoch_s must be > 0'),
            (self.fleet_size >= 0, 'fleet_size must be >= 0'),
            (self.capacity >= 1, 'capacity must be >= 1'),
            (self.omega_s > 0, 'omega_s must be > 0'),
            (self.delta_s >= self.omega_s, 'delta_s must be >= omega_s'),
            (self.variant in VARIANTS, f'variant must be one of {VARIANTS}'),
            (self.rebalance_formulation in (None,) + FORMULATIONS,
             f'rebalance_formulation must be one of {FORMULATIONS}'),
            (self.timing_mode in TIMING_MODES, f'timing_mode must be one of {TIMING_MODES}'),
            (self.suppression_mode in ('per_vehicle', 'cluster'), 'suppression_mode must be per_vehicle or cluster'),
            (self.proactive_targets in ('union', 'virtual_only'), 'proactive_targets must be union or virtual_only'),
            (self.exhaustive_cutoff >= 1, 'exhaustive_cutoff must be >= 1'),
            (self.max_trip_size is None or self.max_trip_size >= 1, 'max_trip_size must be >= 1'),
            (self.partitions >= 1, 'partitions must be >= 1'),
            (self.workers >= 1, 'workers must be >= 1'),
            (self.alpha_miles > 0, 'alpha_miles must be > 0'),
            (0 <= self.p_min <= 1, 'p_min must be within [0, 1]'),
            (self.gamma > 0 and self.v_max > 0 and self.r_max > 0, 'gamma, v_max and r_max must be > 0'),
            (self.bin_seconds > 0, 'bin_seconds must be > 0'),
            (self.lookahead_bins >= 0, 'lookahead_bins must be >= 0'),
            (self.drain_factor >= 0, 'drain_factor must be >= 0'),
            (self.unassigned_penalty is None or self.unassigned_penalty > 0, 'unassigned_penalty must be > 0'),
        ]
        for budget in ('rtv_budget_steps', 'rtv_budget_seconds', 'ip_budget_nodes', 'ip_budget_seconds'):
            value = getattr(self, budget)
            checks.append((value is None or value >= 0, f'{budget} must be >= 0'))
        for ok, message in checks:
            if not ok:
                raise ConfigError(message)

    @property
    def use_cache(self):
        return self.variant != 'original'

    @property
    def prune(self):
        return self.variant != 'original'

    @property
    def proactive(self):
        return self.variant == 'speedup_proactive'

    @property
    def formulation(self):
        if self.rebalance_formulation is not None:
            return self.rebalance_formulation
        return 'baseline' if self.variant == 'original' else 'one_to_one'

    @property
    def cost_params(self):
        if self.unassigned_penalty is not None:
            return CostParams(self.unassigned_penalty)
        return CostParams.default(self.omega_s, self.delta_s)

    @property
    def search_settings(self):
        return SearchSettings(cutoff=self.exhaustive_cutoff, prune=self.prune,
                              max_trip_size=self.max_trip_size, workers=self.workers)

    @property
    def caps(self):
        return RebalanceCaps(self.v_max, self.r_max, self.gamma)

    def to_dict(self):
        return {f.name: getattr(self, f.name) for f in fields(self)}


@dataclass
class EpochMetrics:
    epoch: int
    time: float
    new: int = 0
    pending: int = 0
    assigned: int = 0
    onboard: int = 0
    completed: int = 0
    rejected: int = 0
    picked_up_now: int = 0
    dropped_off_now: int = 0
    rejected_now: int = 0
    io_cost: int = 0
    rr_edges: int = 0
    rv_edges: int = 0
    trips: int = 0
    pdp_calls: int = 0
    explored: int = 0
    rtv_complete: bool = True
    ip_status: str = 'optimal'
    ip_nodes: int = 0
    objective: float = 0.0
    virtual_requests: int = 0
    rebalance_tasks: int = 0
    rebalance_shortfall: int = 0
    cache_size: int = 0
    cache_dropped: int = 0
    compute_steps: int = 0
    compute_seconds: float = None

    def to_record(self):
        return asdict(self)


@dataclass
class RunReport:
    variant: str
    seed: int
    timing_mode: str
    ingested: int = 0
    served: int = 0
    completed: int = 0
    rejected: int = 0
    onboard_at_end: int = 0
    service_rate: float = 1.0
    mean_waiting_time: float = 0.0
    mean_total_delay: float = 0.0
    mean_computation: float = 0.0
    epochs: int = 0
    empty_run: bool = False
    served_ids: list = field(default_factory=list)
    metrics: list = field(default_factory=list)

    def summary(self):
        record = asdict(self)
        record.pop('metrics')
        record.pop('served_ids')
        return record

    def to_dict(self):
        record = self.summary()
        record['served_ids'] = list(self.served_ids)
        return record


@dataclass
class SimState:
    config: SimConfig
    net: object
    fleet: list
    now: float = 0.0
    epoch: int = 0
    registry: dict = field(default_factory=dict)
    cache: FeasibleVehicleCache = None
    next_request_id: int = 0
    demand_model: object = None
    clusters: object = None
    metrics: list = field(default_factory=list)

    def requests_in(self, *states):
        return [self.registry[rid] for rid in sorted(self.registry) if self.registry[rid].state in states]

    def pool(self):
        return self.requests_in(RequestState.PENDING, RequestState.ASSIGNED)


def _rng(config, epoch, purpose):
    return np.random.default_rng([config.seed, epoch, purpose])


def initial_fleet(config, net, nodes=None):
    """Vehicles at ``nodes`` if given, else at seeded uniformly drawn nodes."""
    if nodes is None:
        rng = _rng(config, 0, PURPOSE_FLEET)
        nodes = [int(n) for n in rng.integers(net.n, size=config.fleet_size)] if net.n else []
    return [VehicleState(id=i, capacity=config.capacity, current_node=int(node)) for i, node in enumerate(nodes)]


def _check_service(r):
    if waiting_time(r) > r.max_wait + EPS:
        raise InvariantViolation(f'request {r.id} waited {waiting_time(r)} s > {r.max_wait} s')
    if r.dropoff_time is not None and r.dropoff_time - r.earliest_arrival > r.max_delay + EPS:
        raise InvariantViolation(f'request {r.id} delayed beyond {r.max_delay} s')


def advance(fleet, now, dt, net, registry):
    """
    Move every vehicle from ``now`` to ``now + dt`` along shortest-path
    edges, executing stops as they are reached. Returns the (time, kind,
    vehicle, request) events in time order.
    """
    if not dt > 0:
        raise ValueError('dt must be > 0')
    end = now + dt
    events = []
    for vehicle in fleet:
        while vehicle.arrival_at_next <= end:
            clock = max(vehicle.arrival_at_next, now)
            node = vehicle.next_node
            while vehicle.route and vehicle.route[0].node == node:
                stop = vehicle.route[0]
                try:
                    r = registry[stop.request_id]
                except KeyError:
                    raise InvariantViolation(f'vehicle {vehicle.id}: stop for unknown request {stop.request_id}') from None
                if stop.kind is StopKind.PICKUP:
                    if len(vehicle.onboard) >= vehicle.capacity:
                        raise InvariantViolation(f'vehicle {vehicle.id}: pickup of {r.id} exceeds capacity')
                    r.mark_picked_up(clock, vehicle.id)
                    vehicle.onboard = vehicle.onboard | {r.id}
                    events.append((clock, 'pickup', vehicle.id, r.id))
                else:
                    if r.id not in vehicle.onboard:
                        raise InvariantViolation(f'vehicle {vehicle.id}: dropoff of {r.id} who is not onboard')
                    r.mark_dropped_off(clock)
                    vehicle.onboard = vehicle.onboard - {r.id}
                    events.append((clock, 'dropoff', vehicle.id, r.id))
                _check_service(r)
                vehicle.route = vehicle.route[1:]

            vehicle.current_node = node
            if vehicle.route:
                destination = vehicle.route[0].node
            elif vehicle.rebalance_target is not None:
                if vehicle.rebalance_target == node:
                    events.append((clock, 'rebalanced', vehicle.id, None))
                    vehicle.rebalance_target = None
                    break
                destination = vehicle.rebalance_target
            else:
                break
            path = net.shortest_path(node, destination)
            vehicle.next_node = path[1]
            vehicle.arrival_at_next = clock + net.edge_time(node, path[1])
    events.sort(key=lambda e: (e[0], e[2], e[1]))
    return events


def ingest(state, records):
    """Turn stream records into pending requests with the configured bounds."""
    config, net = state.config, state.net
    added = []
    for record in records:
        r = Request(
            id=state.next_request_id,
            origin=int(record.origin),
            destination=int(record.destination),
            request_time=float(record.request_time),
            max_wait=config.omega_s,
            max_delay=config.delta_s,
            direct_time=net.travel_time(int(record.origin), int(record.destination)),
        )
        state.registry[r.id] = r
        state.next_request_id += 1
        added.append(r)
    return added


def expire(pending, now):
    """Requests not yet picked up that waited longer than their bound are rejected."""
    kept, rejected = [], []
    for r in pending:
        if r.state in (RequestState.PENDING, RequestState.ASSIGNED) and now - r.request_time > r.max_wait:
            r.transition(RequestState.REJECTED)
            rejected.append(r)
        else:
            kept.append(r)
    return kept, rejected


def _strip_requests(fleet, request_ids):
    if not request_ids:
        return
    for vehicle in fleet:
        if any(s.request_id in request_ids for s in vehicle.route):
            vehicle.route = tuple(s for s in vehicle.route if s.request_id not in request_ids)


def _rebalance(state, unserved, metrics):
    config, net, now = state.config, state.net, state.now
    idle = [v for v in state.fleet if v.is_idle]
    rng = _rng(config, state.epoch, PURPOSE_REBALANCE)
    if config.proactive:
        virtuals = generate_virtual_requests(state.demand_model, state.clusters, now,
                                             config.p_min, config.lookahead_bins)
        virtuals = suppress_served_virtuals(virtuals, idle, config.omega_s, net, now, config.suppression_mode)
        metrics.virtual_requests = len(virtuals)
        if config.formulation == 'baseline':
            outcome = rebalance_baseline(idle, unserved, net, now)
        else:
            outcome = proactive_rebalance(idle, unserved, virtuals, config.caps, net, now, rng,
                                          config.proactive_targets, config.weight_by_probability)
    elif config.formulation == 'baseline':
        outcome = rebalance_baseline(idle, unserved, net, now)
    else:
        vehicles, requests = sample_for_rebalance(idle, unserved, config.caps, rng)
        outcome = rebalance_one_to_one(vehicles, request_targets(requests), net, now)
    if not isinstance(outcome, RebalanceOutcome):
        raise InvariantViolation('rebalancing returned an unexpected result')
    dispatch(outcome, state.fleet)
    metrics.rebalance_tasks = len(outcome.tasks)
    metrics.rebalance_shortfall = outcome.shortfall


def step(state, new_requests):
    """One epoch. Returns the epoch's metrics and appends them to the state."""
    config, net = state.config, state.net
    start = state.now
    state.epoch += 1
    end = state.epoch * config.epoch_s
    for record in new_requests:
        if record.request_time > end or (record.request_time <= start and state.epoch > 1):
            raise InvariantViolation(f'request time {record.request_time} outside epoch ({start}, {end}]')

    events = advance(state.fleet, start, end - start, net, state.registry)
    state.now = end
    metrics = EpochMetrics(epoch=state.epoch, time=end)
    metrics.picked_up_now = sum(1 for e in events if e[1] == 'pickup')
    metrics.dropped_off_now = sum(1 for e in events if e[1] == 'dropoff')

    added = ingest(state, new_requests)
    metrics.new = len(added)
    pool, rejected = expire(state.pool(), state.now)
    _strip_requests(state.fleet, {r.id for r in rejected})
    metrics.rejected_now = len(rejected)
    if state.cache is not None:
        active = {r.id for r in pool}
        for rid in [rid for rid in state.cache.sets if rid not in active]:
            state.cache.forget(rid)

    started = time.perf_counter()
    considered = pool
    if state.cache is not None:
        considered = [r for r in pool if not state.cache.is_dropped(r.id)]
    candidates = {r.id: candidate_vehicles(r, state.fleet, state.now, net) for r in considered}
    k = min(config.partitions, max(1, len(considered)))
    if config.use_cache:
        partition = partition_requests(considered, k, config.seed, net, candidates)
    else:
        partition = random_partition(considered, k, _rng(config, state.epoch, PURPOSE_PARTITION), candidates)
    metrics.io_cost = partition.io_cost

    settings = config.search_settings
    rv, outcomes = build_rv(considered, state.fleet, state.now, net, state.registry,
                            partition=partition, cache=state.cache, settings=settings)
    if state.cache is not None:
        update_cache(state.cache, outcomes, state.epoch)
    rtv = build_rtv(rv, state.fleet, considered, state.now, net, state.registry,
                    budget=Budget(config.rtv_budget_steps, config.rtv_budget_seconds), settings=settings)
    solution = solve_assignment(rtv, pool, config.cost_params,
                                budget=Budget(config.ip_budget_nodes, config.ip_budget_seconds))
    commit(solution, rtv, state.fleet, state.registry, state.now, net)
    unserved = [state.registry[rid] for rid in sorted(solution.unassigned)
                if state.registry[rid].state is RequestState.PENDING]
    _rebalance(state, unserved, metrics)
    elapsed = time.perf_counter() - started

    metrics.pending = len(pool)
    metrics.assigned = len(solution.assigned_requests)
    metrics.rr_edges = len(rv.rr_edges)
    metrics.rv_edges = len(rv.rv_edges)
    metrics.trips = len(rtv.tv_edges)
    metrics.pdp_calls = rv.pdp_calls + rtv.pdp_calls
    metrics.explored = rv.explored + rtv.explored
    metrics.rtv_complete = all(rtv.complete.values())
    metrics.ip_status = solution.status.value
    metrics.ip_nodes = solution.nodes
    metrics.objective = solution.objective
    metrics.onboard = len(state.requests_in(RequestState.ONBOARD))
    metrics.completed = len(state.requests_in(RequestState.COMPLETED))
    metrics.rejected = len(state.requests_in(RequestState.REJECTED))
    if state.cache is not None:
        metrics.cache_size = len(state.cache.sets)
        metrics.cache_dropped = sum(1 for rid in state.cache.sets if state.cache.is_dropped(rid))
    metrics.compute_steps = metrics.explored + metrics.ip_nodes
    if config.timing_mode == 'wall':
        metrics.compute_seconds = elapsed
    state.metrics.append(metrics)
    log_event(logger, 'EPOCH', epoch=metrics.epoch, time=metrics.time, new=metrics.new, pending=metrics.pending,
              assigned=metrics.assigned, objective=metrics.objective, status=metrics.ip_status,
              rebalance=metrics.rebalance_tasks)
    return metrics


def _epoch_of(t, epoch_s):
    """Index k of the epoch ((k-1)*epoch_s, k*epoch_s] that batches time t."""
    k = max(1, int(math.ceil(t / epoch_s)))
    while t > k * epoch_s:
        k += 1
    while k > 1 and t <= (k - 1) * epoch_s:
        k -= 1
    return k


def new_state(config, net, history=None, demand_model=None, fleet_nodes=None):
    if config.proactive and demand_model is None and history is None:
        raise ConfigError('the speedup_proactive variant needs demand history or a fitted demand model')
    state = SimState(config=config, net=net, fleet=initial_fleet(config, net, fleet_nodes))
    if config.use_cache:
        state.cache = FeasibleVehicleCache()
    if config.proactive:
        state.clusters = build_clusters(net, config.alpha_miles)
        state.demand_model = demand_model or fit_demand(history, state.clusters, config.bin_seconds)
    return state


def run(config, net, demand, history=None, demand_model=None, fleet_nodes=None, observer=None):
    """
    Simulate ``demand`` (records with request_time, origin, destination) to
    completion. After the last arrival the loop drains for at most
    drain_factor * (omega + delta) seconds; requests still waiting then are
    rejected. ``observer(state, metrics)`` is called after every epoch.
    """
    state = new_state(config, net, history, demand_model, fleet_nodes)
    records = sorted(demand, key=lambda rec: (rec.request_time, rec.origin, rec.destination))
    if any(rec.request_time < 0 for rec in records):
        raise ConfigError('request times must be >= 0')
    by_epoch = {}
    for rec in records:
        by_epoch.setdefault(_epoch_of(rec.request_time, config.epoch_s), []).append(rec)
    last_epoch = max(by_epoch) if by_epoch else 0
    drain_epochs = int(math.ceil(config.drain_factor * (config.omega_s + config.delta_s) / config.epoch_s))

    log_event(logger, 'RUN_START', variant=config.variant, seed=config.seed, requests=len(records),
              fleet=len(state.fleet))
    for epoch in range(1, last_epoch + 1):
        metrics = step(state, by_epoch.get(epoch, []))
        if observer is not None:
            observer(state, metrics)
    for _ in range(drain_epochs):
        if not state.requests_in(RequestState.PENDING, RequestState.ASSIGNED, RequestState.ONBOARD):
            break
        metrics = step(state, [])
        if observer is not None:
            observer(state, metrics)

    _, rejected = expire(state.pool(), math.inf)
    _strip_requests(state.fleet, {r.id for r in rejected})
    report = build_report(state)
    log_event(logger, 'RUN_END', variant=config.variant, seed=config.seed, service_rate=report.service_rate,
              epochs=report.epochs)
    return report


def build_report(state):
    config = state.config
    requests = [state.registry[rid] for rid in sorted(state.registry)]
    served = [r for r in requests if r.pickup_time is not None]
    completed = [r for r in requests if r.state is RequestState.COMPLETED]
    report = RunReport(variant=config.variant, seed=config.seed, timing_mode=config.timing_mode)
    report.ingested = len(requests)
    report.served = len(served)
    report.completed = len(completed)
    report.rejected = sum(1 for r in requests if r.state is RequestState.REJECTED)
    report.onboard_at_end = sum(1 for r in requests if r.state is RequestState.ONBOARD)
    if report.ingested != report.completed + report.onboard_at_end + report.rejected:
        raise InvariantViolation('ingested requests do not balance with terminal states')
    report.empty_run = report.ingested == 0
    report.service_rate = 1.0 if report.empty_run else report.served / report.ingested
    report.mean_waiting_time = float(np.mean([waiting_time(r) for r in served])) if served else 0.0
    report.mean_total_delay = (float(np.mean([r.dropoff_time - r.earliest_arrival for r in completed]))
                               if completed else 0.0)
    if state.metrics:
        if config.timing_mode == 'wall':
            report.mean_computation = float(np.mean([m.compute_seconds for m in state.metrics]))
        else:
            report.mean_computation = float(np.mean([m.compute_steps for m in state.metrics]))
    report.epochs = len(state.metrics)
    report.served_ids = [r.id for r in served]
    report.metrics = list(state.metrics)
    return report


def save_report(report, directory):
    """report.json, epochs.jsonl and summary.csv under ``directory``."""
    os.makedirs(directory, exist_ok=True)
    write_json(os.path.join(directory, 'report.json'), report.to_dict())
    write_jsonl(os.path.join(directory, 'epochs.jsonl'), [m.to_record() for m in report.metrics])
    pd.DataFrame([report.summary()]).to_csv(os.path.join(directory, 'summary.csv'), index=False)
    return directory
