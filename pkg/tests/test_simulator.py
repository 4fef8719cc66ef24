from dataclasses import replace

import pandas as pd
import pytest

from app.exceptions import ConfigError, InvariantViolation
from app.models import DemandRecord, RequestState
from app.network import Network
from app.oracles import cache_suite, exactness_suite
from app.scenario import ScenarioSpec, synthesize
from app.simulator import SimConfig, _epoch_of, advance, expire, initial_fleet, new_state, run, save_report, step
from app.utils import read_jsonl


@pytest.fixture(scope='module')
def small():
    spec = ScenarioSpec(grid_rows=5, grid_cols=5, rate_per_epoch=1.0, horizon_s=600.0, history_days=3,
                        sim=SimConfig(fleet_size=5, capacity=3, omega_s=240.0, delta_s=480.0, partitions=2))
    net, demand, history = synthesize(spec, seed=1)
    return spec.sim, net, demand, history


def _one_vehicle(**changes):
    values = dict(fleet_size=1, capacity=4, omega_s=120.0, delta_s=240.0, variant='speedup')
    values.update(changes)
    return SimConfig(**values)


def test_advance_leaves_residual_time(make_vehicle):
    net = Network([0, 1], [0, 0], [(0, 1, 70.0), (1, 0, 70.0)])
    vehicle = make_vehicle(0, 0)
    vehicle.set_rebalance_target(1)
    assert advance([vehicle], 0.0, 30.0, net, {}) == []
    assert (vehicle.next_node, vehicle.arrival_at_next) == (1, 70.0)
    assert vehicle.time_to(1, 30.0, net) == 40.0
    advance([vehicle], 30.0, 30.0, net, {})
    events = advance([vehicle], 60.0, 30.0, net, {})
    assert events == [(70.0, 'rebalanced', 0, None)]
    assert vehicle.rebalance_target is None and vehicle.current_node == 1
    with pytest.raises(ValueError):
        advance([vehicle], 90.0, 0.0, net, {})


def test_expire_uses_strict_bound(make_request):
    waiting = make_request(0, 0, 1, request_time=0.0, max_wait=120.0)
    kept, rejected = expire([waiting], 120.0)
    assert kept == [waiting] and rejected == []
    kept, rejected = expire([waiting], 121.0)
    assert rejected == [waiting]
    assert waiting.state is RequestState.REJECTED


def test_epoch_of():
    assert _epoch_of(0.0, 30.0) == 1
    assert _epoch_of(10.0, 30.0) == 1
    assert _epoch_of(30.0, 30.0) == 1
    assert _epoch_of(30.5, 30.0) == 2


def test_single_request_hand_trace(line_net):
    report = run(_one_vehicle(), line_net, [DemandRecord(10.0, 1, 2)], fleet_nodes=[0])
    assert report.ingested == report.served == report.completed == 1
    assert report.service_rate == 1.0
    # assigned at t=30, picked up at 90, dropped off at 150
    assert report.mean_waiting_time == 80.0
    assert report.mean_total_delay == 80.0
    first = report.metrics[0]
    assert (first.new, first.assigned, first.rv_edges) == (1, 1, 1)


def test_same_trace_without_speedups(line_net):
    report = run(_one_vehicle(variant='original'), line_net, [DemandRecord(10.0, 1, 2)], fleet_nodes=[0])
    assert report.mean_waiting_time == 80.0
    assert report.mean_total_delay == 80.0


def test_empty_run(line_net):
    report = run(_one_vehicle(), line_net, [], fleet_nodes=[0])
    assert report.empty_run
    assert report.service_rate == 1.0
    assert report.epochs == 0


def test_unreachable_request_is_rejected(line_net):
    config = _one_vehicle(omega_s=60.0, delta_s=120.0)
    report = run(config, line_net, [DemandRecord(10.0, 2, 1)], fleet_nodes=[0])
    assert report.service_rate == 0.0
    assert report.rejected == 1
    assert report.metrics[0].rebalance_tasks == 1


def test_step_rejects_requests_from_another_epoch(line_net):
    state = new_state(_one_vehicle(), line_net, fleet_nodes=[0])
    step(state, [DemandRecord(10.0, 1, 2)])
    with pytest.raises(InvariantViolation):
        step(state, [DemandRecord(10.0, 1, 2)])


def test_run_rejects_negative_times(line_net):
    with pytest.raises(ConfigError):
        run(_one_vehicle(), line_net, [DemandRecord(-1.0, 1, 2)])


def test_proactive_needs_demand_history(line_net):
    with pytest.raises(ConfigError, match='demand'):
        new_state(_one_vehicle(variant='speedup_proactive'), line_net)


def test_initial_fleet_is_seeded(grid_net):
    config = SimConfig(fleet_size=6, seed=3)
    first = [v.current_node for v in initial_fleet(config, grid_net)]
    again = [v.current_node for v in initial_fleet(config, grid_net)]
    assert first == again
    assert len(first) == 6


def test_runs_are_deterministic(small):
    config, net, demand, history = small
    first = run(config, net, demand)
    second = run(config, net, demand)
    assert first.to_dict() == second.to_dict()
    assert [m.to_record() for m in first.metrics] == [m.to_record() for m in second.metrics]


def test_conservation_across_variants(small):
    config, net, demand, history = small
    for variant in ('original', 'speedup', 'speedup_proactive'):
        report = run(replace(config, variant=variant), net, demand, history=history)
        assert report.ingested == len(demand)
        assert report.ingested == report.completed + report.onboard_at_end + report.rejected
        assert report.served_ids == sorted(report.served_ids)
        assert 0.0 <= report.service_rate <= 1.0
        if variant == 'speedup_proactive':
            assert all(m.virtual_requests >= 0 for m in report.metrics)


def test_speedups_do_not_change_assignments(small):
    config, net, demand, _ = small
    summary = exactness_suite(config, net, demand)
    assert summary['failures'] == 0
    assert summary['epochs'] > 0


def test_cache_never_drops_a_feasible_vehicle(small):
    config, net, demand, _ = small
    summary = cache_suite(config, net, demand, samples=100, seed=0)
    assert summary['failures'] == 0


def test_wall_timing_records_seconds(small):
    config, net, demand, _ = small
    report = run(replace(config, timing_mode='wall'), net, demand[:5])
    assert all(m.compute_seconds is not None for m in report.metrics)


def test_save_report(tmp_path, line_net):
    report = run(_one_vehicle(), line_net, [DemandRecord(10.0, 1, 2)], fleet_nodes=[0])
    save_report(report, tmp_path)
    assert len(read_jsonl(tmp_path / 'epochs.jsonl')) == report.epochs
    summary = pd.read_csv(tmp_path / 'summary.csv')
    assert summary.loc[0, 'service_rate'] == 1.0
    assert (tmp_path / 'report.json').exists()
