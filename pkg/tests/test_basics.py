import logging
import math

import pandas as pd
import pytest

from app.exceptions import ConfigError, NetworkLoadError, QueryError, RequestStateError
from app.models import (
    CostParams, Request, RequestState, VehicleState, system_cost, total_delay, waiting_time,
)
from app.network import Network, load_network, read_network, write_network
from app.simulator import SimConfig
from app.utils import Budget, log_event, standard_error


def _frames(edges):
    nodes = pd.DataFrame({'node_id': ['A', 'B', 'C'], 'x': [0.0, 1.0, 2.0], 'y': [0.0, 0.0, 0.0]})
    return nodes, pd.DataFrame(edges, columns=['from', 'to', 'travel_time_seconds'])


def test_load_network_remaps_ids():
    nodes, edges = _frames([('A', 'B', 60), ('B', 'C', 60)])
    net = load_network(nodes, edges)
    assert net.n == 3
    assert len(net.edges) == 2
    assert net.index_of == {'A': 0, 'B': 1, 'C': 2}
    assert net.travel_time(0, 2) == 120.0
    assert net.travel_time(0, 0) == 0.0
    assert net.travel_time(2, 0) == math.inf


def test_load_network_rejects_bad_records():
    nodes, edges = _frames([('A', 'Z', 60)])
    with pytest.raises(NetworkLoadError, match="'Z'"):
        load_network(nodes, edges)

    nodes, edges = _frames([('A', 'B', 0)])
    with pytest.raises(NetworkLoadError, match='must be > 0'):
        load_network(nodes, edges)

    nodes = pd.DataFrame({'node_id': ['A', 'A'], 'x': [0, 1], 'y': [0, 0]})
    with pytest.raises(NetworkLoadError, match='duplicate'):
        load_network(nodes, pd.DataFrame(columns=['from', 'to', 'travel_time_seconds']))


def test_shortest_path(line_net):
    assert line_net.shortest_path(0, 2) == [0, 1, 2]
    assert line_net.shortest_path(1, 1) == [1]
    with pytest.raises(QueryError):
        line_net.travel_time(0, 7)


def test_shortest_path_tie_break():
    # 0 -> 1 -> 3 and 0 -> 2 -> 3 both take 120 s
    net = Network([0, 1, 0, 1], [0, 0, 1, 1], [(0, 1, 60), (1, 3, 60), (0, 2, 60), (2, 3, 60)])
    assert net.shortest_path(0, 3) == [0, 1, 3]
    with pytest.raises(QueryError):
        net.shortest_path(3, 0)


def test_network_metric_properties(grid_net):
    lazy = Network(grid_net.xs, grid_net.ys, grid_net.edges, eager=False)
    for a in range(grid_net.n):
        for b in range(grid_net.n):
            assert lazy.travel_time(a, b) == grid_net.travel_time(a, b)
            path = grid_net.shortest_path(a, b)
            assert sum(grid_net.edge_time(u, v) for u, v in zip(path, path[1:])) == grid_net.travel_time(a, b)
            for c in (0, 5, 15):
                assert grid_net.travel_time(a, c) <= grid_net.travel_time(a, b) + grid_net.travel_time(b, c)


def test_network_files_round_trip(tmp_path, grid_net):
    write_network(grid_net, tmp_path / 'nodes.csv', tmp_path / 'edges.csv')
    loaded = read_network(tmp_path / 'nodes.csv', tmp_path / 'edges.csv')
    assert loaded.external_ids == grid_net.external_ids
    assert loaded.edges == grid_net.edges
    assert list(loaded.xs) == list(grid_net.xs)


def test_request_validation():
    with pytest.raises(ValueError):
        Request(0, 1, 1, 0.0, 120.0, 240.0)
    with pytest.raises(ValueError):
        Request(0, 1, 2, 0.0, 0.0, 240.0)
    with pytest.raises(ValueError):
        Request(0, 1, 2, 0.0, 120.0, 60.0)


def test_request_lifecycle():
    r = Request(0, 1, 2, 100.0, 120.0, 240.0, direct_time=100.0)
    with pytest.raises(RequestStateError):
        waiting_time(r)
    with pytest.raises(RequestStateError):
        r.transition(RequestState.COMPLETED)
    r.transition(RequestState.ASSIGNED)
    r.transition(RequestState.PENDING)
    r.transition(RequestState.ASSIGNED)
    r.mark_picked_up(150.0, vehicle_id=3)
    assert waiting_time(r) == 50.0
    with pytest.raises(RequestStateError):
        total_delay(r)
    r.mark_dropped_off(250.0)
    assert r.state is RequestState.COMPLETED
    # waiting counts toward delay: 250 - (100 + 100)
    assert total_delay(r) == 50.0


def test_immediate_service_has_no_wait_or_delay():
    r = Request(0, 0, 1, 0.0, 120.0, 240.0, direct_time=100.0)
    r.transition(RequestState.ASSIGNED)
    r.mark_picked_up(0.0, 0)
    r.mark_dropped_off(100.0)
    assert waiting_time(r) == 0.0
    assert total_delay(r) == 0.0


def test_system_cost():
    params = CostParams(10000.0)
    assert system_cost([50, 30], [], 1, params) == 10080
    assert system_cost([], [], 0, params) == 0
    assert system_cost([0, 0, 0], [], 0, params) == 0
    assert CostParams.default(300.0, 600.0).unassigned_penalty == 9000.0


def test_vehicle_rebalance_target_only_when_empty():
    v = VehicleState(id=0, capacity=2, current_node=0)
    assert v.is_idle
    v.set_rebalance_target(2)
    assert not v.is_idle and v.is_empty
    busy = VehicleState(id=1, capacity=2, current_node=0, onboard=frozenset({4}))
    with pytest.raises(RequestStateError):
        busy.set_rebalance_target(2)
    with pytest.raises(ValueError):
        VehicleState(id=2, capacity=0, current_node=0)


def test_sim_config_parsing():
    config = SimConfig.from_mapping({'OMEGA_S': '240', 'delta_s': '480', 'weight_by_probability': 'yes',
                                     'max_trip_size': 'none', 'variant': 'original'})
    assert config.omega_s == 240.0
    assert config.weight_by_probability is True
    assert config.max_trip_size is None
    assert config.formulation == 'baseline'
    assert not config.use_cache and not config.prune
    assert config.cost_params.unassigned_penalty == 10 * (240.0 + 480.0)
    assert SimConfig(variant='speedup_proactive').formulation == 'one_to_one'


def test_sim_config_rejects_bad_values():
    with pytest.raises(ConfigError, match='unknown config key'):
        SimConfig.from_mapping({'omega': '240'})
    with pytest.raises(ConfigError):
        SimConfig.from_mapping({'fleet_size': '2.5'})
    with pytest.raises(ConfigError, match='delta_s'):
        SimConfig(omega_s=300.0, delta_s=200.0)
    with pytest.raises(ConfigError, match='variant'):
        SimConfig(variant='fastest')


def test_sim_config_from_app_config(app):
    config = SimConfig.from_app_config(app.config, {'seed': 7})
    assert config.fleet_size == app.config['FLEET_SIZE']
    assert config.omega_s == app.config['OMEGA_S']
    assert config.seed == 7


def test_log_event_format(caplog):
    logger = logging.getLogger('app.test')
    with caplog.at_level(logging.INFO, logger='app.test'):
        log_event(logger, 'EPOCH', time=30.0, epoch=1)
    assert caplog.records[-1].getMessage() == 'EPOCH epoch=1 time=30.0'


def test_budget_counts_steps():
    assert Budget().unlimited
    run = Budget(steps=2).fresh()
    assert not run.exhausted
    run.spend(2)
    assert run.exhausted
    assert Budget(steps=0).fresh().exhausted
    with pytest.raises(ValueError):
        Budget(steps=-1)


def test_standard_error():
    assert standard_error([1.0]) == 0.0
    assert standard_error([1.0, 3.0]) == pytest.approx(1.0)
