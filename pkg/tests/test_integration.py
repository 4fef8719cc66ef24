import json
import os
from dataclasses import replace

import pandas as pd
import pytest

from app.models import DemandRecord
from app.network import Network, write_network
from app.scenario import write_requests
from app.simulator import SimConfig, run
from run import compare, fit_demand_command, generate, oracle, simulate

SMALL = os.path.join(os.path.dirname(__file__), '..', 'scenarios', 'small.env')
SHORT = ['--scenario', SMALL, '--set', 'horizon_s=300']


@pytest.fixture(scope='module')
def generated(runner, tmp_path_factory):
    out = tmp_path_factory.mktemp('scenario')
    result = runner.invoke(generate, SHORT + ['--seed', '0', '--out', str(out)])
    assert result.exit_code == 0, result.output
    return out


def test_generate_writes_every_file(generated):
    for name in ('nodes.csv', 'edges.csv', 'demand.csv'):
        assert (generated / name).exists()
    assert sorted(os.listdir(generated / 'history')) == ['day_01.csv', 'day_02.csv', 'day_03.csv']
    assert len(pd.read_csv(generated / 'nodes.csv')) == 36


def test_simulate_saves_a_report(runner, tmp_path):
    result = runner.invoke(simulate, SHORT + ['--variant', 'speedup', '--seed', '0', '--out', str(tmp_path)])
    assert result.exit_code == 0, result.output
    with open(tmp_path / 'report.json') as fh:
        report = json.load(fh)
    assert report['variant'] == 'speedup'
    assert '"service_rate"' in result.output
    assert (tmp_path / 'epochs.jsonl').exists() and (tmp_path / 'summary.csv').exists()


def test_simulate_from_files_with_a_fitted_model(runner, generated, tmp_path):
    files = ['--set', f'node_file={generated / "nodes.csv"}', '--set', f'edge_file={generated / "edges.csv"}',
             '--set', f'demand_file={generated / "demand.csv"}']
    history = ','.join(str(generated / 'history' / name) for name in sorted(os.listdir(generated / 'history')))
    table = tmp_path / 'demand_model.csv'
    result = runner.invoke(fit_demand_command, SHORT + files + ['--set', f'history_files={history}',
                                                                '--out', str(table)])
    assert result.exit_code == 0, result.output
    assert list(pd.read_csv(table).columns) == ['cluster_id', 'bin_index', 'count_value', 'probability']

    result = runner.invoke(simulate, SHORT + files + ['--variant', 'speedup_proactive', '--demand-model', str(table),
                                                      '--out', str(tmp_path / 'run')])
    assert result.exit_code == 0, result.output
    assert (tmp_path / 'run' / 'report.json').exists()


def test_compare_writes_the_table(runner, tmp_path):
    result = runner.invoke(compare, SHORT + ['--variants', 'original,speedup', '--seeds', '0-1',
                                             '--out', str(tmp_path)])
    assert result.exit_code == 0, result.output
    table = pd.read_csv(tmp_path / 'comparison.csv')
    assert len(table) == 2 * 2 + 2
    assert 'speedup vs original' in result.output


def test_oracle_suites_pass(runner, tmp_path):
    out = tmp_path / 'oracle.json'
    result = runner.invoke(oracle, ['--suite', 'pdp', '--suite', 'marginal', '--scale', '0.01', '--out', str(out)])
    assert result.exit_code == 0, result.output
    with open(out) as fh:
        records = json.load(fh)
    assert [r['suite'] for r in records] == ['pdp', 'marginal']
    assert all(r['passed'] for r in records)


@pytest.mark.parametrize('args', [
    ['--set', 'omega=240'],
    ['--set', 'omega_s'],
    ['--set', 'delta_s=10'],
])
def test_config_errors_exit_2(runner, args):
    result = runner.invoke(simulate, SHORT + args)
    assert result.exit_code == 2
    assert 'config error' in result.output


def test_bad_seed_list_exits_2(runner, tmp_path):
    result = runner.invoke(compare, SHORT + ['--seeds', 'a-b', '--out', str(tmp_path)])
    assert result.exit_code == 2


def test_data_errors_exit_3(runner, generated, tmp_path):
    bad = tmp_path / 'demand.csv'
    bad.write_text('request_time_s,origin_node,dest_node\n10,0,404\n')
    files = ['--set', f'node_file={generated / "nodes.csv"}', '--set', f'edge_file={generated / "edges.csv"}',
             '--set', f'demand_file={bad}']
    result = runner.invoke(simulate, SHORT + files + ['--out', str(tmp_path / 'run')])
    assert result.exit_code == 3
    assert "unknown node '404'" in result.output


def test_report_browser(app, client, runner):
    result = runner.invoke(simulate, SHORT + ['--variant', 'original', '--seed', '2'])
    assert result.exit_code == 0, result.output
    assert os.path.isfile(os.path.join(app.config['OUTPUT_DIR'], 'original_seed2', 'report.json'))

    listing = client.get('/reports/').get_json()
    assert [entry['run'] for entry in listing] == ['original_seed2']
    assert client.get('/reports/?variant=speedup').get_json() == []

    detail = client.get('/reports/original_seed2')
    assert detail.status_code == 200
    assert detail.get_json()['seed'] == 2

    page = client.get('/reports/original_seed2/epochs?offset=1&limit=2').get_json()
    assert page['run'] == 'original_seed2'
    assert len(page['epochs']) <= 2
    assert page['epochs'][0]['epoch'] == 2

    assert client.get('/reports/original_seed2/epochs?offset=-1').status_code == 400
    missing = client.get('/reports/nothing_here')
    assert missing.status_code == 404
    assert missing.get_json() == {'error': 'not found'}
    assert client.get('/reports/../secrets').status_code == 404


@pytest.fixture(scope='module')
def corridor(tmp_path_factory):
    """
    Five nodes in a row, 60 s apart; one request 2 -> 4 at t = 310 every day.
    The whole corridor is one cluster represented by node 2.
    """
    edges = []
    for u in range(4):
        edges += [(u, u + 1, 60.0), (u + 1, u, 60.0)]
    net = Network([0.0, 0.5, 1.0, 1.5, 2.0], [0.0] * 5, edges)
    demand = [DemandRecord(310.0, 2, 4)]
    history = [list(demand), list(demand)]
    out = tmp_path_factory.mktemp('corridor')
    write_network(net, out / 'nodes.csv', out / 'edges.csv')
    write_requests(demand, out / 'demand.csv', net)
    for day in (1, 2):
        write_requests(demand, out / f'day_{day}.csv', net)
    files = ['--set', f'node_file={out / "nodes.csv"}', '--set', f'edge_file={out / "edges.csv"}',
             '--set', f'demand_file={out / "demand.csv"}',
             '--set', f'history_files={out / "day_1.csv"},{out / "day_2.csv"}']
    return net, demand, history, files


def test_proactive_rebalancing_prepositions_the_vehicle(corridor):
    net, demand, history, _ = corridor
    base = SimConfig(fleet_size=1, omega_s=60.0, delta_s=120.0)
    # from node 0 the pickup at node 2 is 120 s away, beyond the 60 s wait
    reactive = run(replace(base, variant='speedup'), net, demand, history=history, fleet_nodes=[0])
    proactive = run(replace(base, variant='speedup_proactive'), net, demand, history=history, fleet_nodes=[0])
    assert reactive.service_rate == 0.0
    assert reactive.rejected == 1
    assert proactive.service_rate == 1.0
    assert proactive.mean_waiting_time == 20.0
    assert proactive.metrics[0].rebalance_tasks == 1


def test_proactive_never_serves_less_across_seeds(runner, corridor, tmp_path):
    files = corridor[3]
    result = runner.invoke(compare, files + ['--set', 'fleet_size=1', '--set', 'omega_s=60', '--set', 'delta_s=120',
                                             '--variants', 'speedup,speedup_proactive', '--seeds', '0-3',
                                             '--out', str(tmp_path)])
    assert result.exit_code == 0, result.output
    assert 'service_rate_se' in result.output
    table = pd.read_csv(tmp_path / 'comparison.csv', dtype={'seed': str})
    runs = table[table['seed'] != 'all'].set_index(['method', 'seed'])
    for seed in ('0', '1', '2', '3'):
        assert runs.loc[('speedup_proactive', seed), 'service_rate'] >= runs.loc[('speedup', seed), 'service_rate']
    means = table[table['seed'] == 'all'].set_index('method')
    gain = means.loc['speedup_proactive', 'service_rate'] - means.loc['speedup', 'service_rate']
    assert gain >= 0.0
    assert means.loc['speedup_proactive', 'service_rate'] == 1.0
    assert means.loc['speedup_proactive', 'service_rate_se'] == 0.0
    assert means.loc['speedup', 'service_rate_se'] >= 0.0
