import json
import os

import click
from flask import current_app

from app import create_app
from app.decorators import exits_on_error
from app.exceptions import ConfigError
from app.oracles import SUITES, run_suites
from app.rebalance import build_clusters, fit_demand, load_demand, save_demand
from app.scenario import ScenarioSpec, format_table, generate_scenario, load_scenario, run_experiment
from app.simulator import VARIANTS, SimConfig, run as run_simulation, save_report
from app.utils import dumps

app = create_app(os.getenv('FLASK_CONFIG') or 'default')


def _defaults():
    """Simulation keys of the application config, lower-cased."""
    return {name: current_app.config[name.upper()] for name in SimConfig.keys()
            if name.upper() in current_app.config}


def _settings(pairs):
    overrides = {}
    for pair in pairs:
        key, sep, value = pair.partition('=')
        if not sep:
            raise ConfigError(f'expected key=value, got {pair!r}')
        overrides[key.strip()] = value.strip()
    return overrides


def load_spec(scenario, overrides):
    overrides = {k: v for k, v in overrides.items() if v is not None}
    if scenario:
        return ScenarioSpec.from_file(scenario, overrides=overrides, defaults=_defaults())
    values = _defaults()
    values.update(overrides)
    return ScenarioSpec.from_mapping(values)


def _seeds(text):
    """'3' -> [3]; '0-9' -> [0..9]; '1,4,7' -> [1, 4, 7]."""
    seeds = []
    try:
        for part in text.split(','):
            first, sep, last = part.strip().partition('-')
            seeds += list(range(int(first), int(last) + 1)) if sep else [int(first)]
    except ValueError:
        raise ConfigError(f'bad seed list {text!r}') from None
    return seeds


scenario_option = click.option('--scenario', type=click.Path(), default=None, help='key = value scenario file.')
set_option = click.option('--set', 'pairs', multiple=True, help='Override one key, e.g. --set omega_s=240.')


@app.cli.command("generate")
@scenario_option
@set_option
@click.option('--seed', type=int, default=0)
@click.option('--out', 'out_dir', type=click.Path(), required=True)
@exits_on_error
def generate(scenario, pairs, seed, out_dir):
    """Writes a synthetic grid, its request stream and history days."""
    spec = load_spec(scenario, _settings(pairs))
    files = generate_scenario(spec, seed, out_dir)
    print(f'Scenario written to {out_dir}: {len(files.history)} history days.')


@app.cli.command("fit-demand")
@scenario_option
@set_option
@click.option('--seed', type=int, default=None)
@click.option('--out', 'out_path', type=click.Path(), required=True)
@exits_on_error
def fit_demand_command(scenario, pairs, seed, out_path):
    """Fits the per-cluster, per-bin demand table from the history days."""
    spec = load_spec(scenario, _settings(pairs))
    net, _, history = load_scenario(spec, seed)
    clusters = build_clusters(net, spec.sim.alpha_miles)
    model = fit_demand(history, clusters, spec.sim.bin_seconds)
    os.makedirs(os.path.dirname(os.path.abspath(out_path)), exist_ok=True)
    save_demand(model, out_path)
    print(f'Demand table for {clusters.k} clusters written to {out_path}.')


@app.cli.command("simulate")
@scenario_option
@set_option
@click.option('--variant', type=click.Choice(VARIANTS), default=None)
@click.option('--seed', type=int, default=None)
@click.option('--demand-model', type=click.Path(exists=True), default=None, help='Table written by fit-demand.')
@click.option('--out', 'out_dir', type=click.Path(), default=None)
@exits_on_error
def simulate(scenario, pairs, variant, seed, demand_model, out_dir):
    """Simulates one variant on one seed and saves its report."""
    overrides = _settings(pairs)
    overrides.update(variant=variant, seed=seed)
    spec = load_spec(scenario, overrides)
    config = spec.sim
    net, demand, history = load_scenario(spec, config.seed)
    model = load_demand(demand_model, config.bin_seconds) if demand_model else None
    report = run_simulation(config, net, demand, history=history, demand_model=model)
    out_dir = out_dir or os.path.join(current_app.config['OUTPUT_DIR'], f'{config.variant}_seed{config.seed}')
    save_report(report, out_dir)
    print(dumps(report.summary()))


@app.cli.command("compare")
@scenario_option
@set_option
@click.option('--variants', default=','.join(VARIANTS), help='Comma separated variant names.')
@click.option('--seeds', default='0-9', help="Seed list such as '0-9' or '1,4,7'.")
@click.option('--out', 'out_dir', type=click.Path(), default=None)
@exits_on_error
def compare(scenario, pairs, variants, seeds, out_dir):
    """Runs every variant on every seed and writes the comparison table."""
    spec = load_spec(scenario, _settings(pairs))
    names = [v.strip() for v in variants.split(',') if v.strip()]
    unknown = [v for v in names if v not in VARIANTS]
    if unknown or not names:
        raise ConfigError(f'unknown variants {unknown}; expected some of {VARIANTS}')
    out_dir = out_dir or os.path.join(current_app.config['OUTPUT_DIR'], 'compare')
    table, changes = run_experiment(spec, names, _seeds(seeds), out_dir)
    print(format_table(table, changes), end='')


@app.cli.command("oracle")
@scenario_option
@set_option
@click.option('--suite', 'suites', multiple=True, type=click.Choice(SUITES), help='Defaults to every suite.')
@click.option('--seed', type=int, default=0)
@click.option('--scale', type=float, default=1.0, help='Multiplies every instance count.')
@click.option('--out', 'out_path', type=click.Path(), default=None)
@exits_on_error
def oracle(scenario, pairs, suites, seed, scale, out_path):
    """Runs the brute-force verification suites; exits 1 when any fails."""
    if not scale > 0:
        raise ConfigError('scale must be > 0')
    triple = None
    if scenario or 'cache' in suites or 'exactness' in suites:
        spec = load_spec(scenario, _settings(pairs))
        net, demand, _ = load_scenario(spec, spec.sim.seed)
        triple = (spec.sim, net, demand)
    results = run_suites(list(suites or SUITES), seed=seed, scale=scale, scenario=triple)
    for record in results:
        print(json.dumps(record, sort_keys=True))
    if out_path:
        with open(out_path, 'w') as fh:
            fh.write(dumps(results))
            fh.write('\n')
    if not all(record['passed'] for record in results):
        raise SystemExit(1)


if __name__ == '__main__':
    app.run(debug=True)
