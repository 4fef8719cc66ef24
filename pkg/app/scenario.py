"""
Scenarios: a network, a request stream, and history days, either read from
files or generated (grid network, Poisson demand with a moving hotspot).
Experiments run every (variant, seed) pair and tabulate the results.
"""
import logging
import math
import os
from dataclasses import dataclass, field, replace

import numpy as np
import pandas as pd
from dotenv import dotenv_values

from app.exceptions import ConfigError, DataError
from app.models import DemandRecord
from app.network import Network, read_network, write_network
from app.simulator import SimConfig, run, save_report
from app.utils import log_event, standard_error

logger = logging.getLogger(__name__)

REQUEST_COLUMNS = ('request_time_s', 'origin_node', 'dest_node')
METRICS = ('computation', 'service_rate', 'waiting_time', 'total_delay')
REPORT_FIELDS = {
    'computation': 'mean_computation',
    'service_rate': 'service_rate',
    'waiting_time': 'mean_waiting_time',
    'total_delay': 'mean_total_delay',
}


@dataclass
class ScenarioSpec:
    # network: files, or a rows x cols grid
    node_file: str = None
    edge_file: str = None
    grid_rows: int = 15
    grid_cols: int = 15
    edge_seconds: float = 60.0
    cell_miles: float = 0.25
    # demand: a file, or the Poisson generator
    demand_file: str = None
    history_files: list = field(default_factory=list)
    rate_per_epoch: float = 4.0
    horizon_s: float = 6 * 3600.0
    hotspot_period_s: float = 1800.0
    hotspot_share: float = 0.6
    history_days: int = 5
    sim: SimConfig = field(default_factory=SimConfig)

    _PARSERS = {
        'node_file': str, 'edge_file': str, 'grid_rows': int, 'grid_cols': int, 'edge_seconds': float,
        'cell_miles': float, 'demand_file': str, 'rate_per_epoch': float, 'horizon_s': float,
        'hotspot_period_s': float, 'hotspot_share': float, 'history_days': int,
    }

    def __post_init__(self):
        self.validate()

    @property
    def synthetic_network(self):
        return self.node_file is None

    @property
    def synthetic_demand(self):
        return self.demand_file is None

    def validate(self):
        if (self.node_file is None) != (self.edge_file is None):
            raise ConfigError('node_file and edge_file must be given together')
        for path in [self.node_file, self.edge_file, self.demand_file] + list(self.history_files):
            if path is not None and not os.path.exists(path):
                raise ConfigError(f'referenced file does not exist: {path}')
        if self.synthetic_network:
            if self.grid_rows < 1 or self.grid_cols < 1 or self.grid_rows * self.grid_cols < 2:
                raise ConfigError('grid needs at least two nodes')
            if not self.edge_seconds > 0 or not self.cell_miles > 0:
                raise ConfigError('edge_seconds and cell_miles must be > 0')
        if self.synthetic_demand:
            if self.rate_per_epoch < 0 or not self.horizon_s > 0 or not self.hotspot_period_s > 0:
                raise ConfigError('rate_per_epoch must be >= 0; horizon_s and hotspot_period_s > 0')
            if not 0 <= self.hotspot_share <= 1:
                raise ConfigError('hotspot_share must be within [0, 1]')
            if self.history_days < 0:
                raise ConfigError('history_days must be >= 0')

    @classmethod
    def from_mapping(cls, mapping, base_dir='.'):
        scenario, sim = {}, {}
        for key, raw in mapping.items():
            name = key.strip().lower()
            if raw is None or str(raw).strip() == '':
                continue
            if name == 'history_files':
                scenario[name] = [_resolve(base_dir, p.strip()) for p in str(raw).split(',') if p.strip()]
            elif name in cls._PARSERS:
                try:
                    value = cls._PARSERS[name](raw)
                except (TypeError, ValueError):
                    raise ConfigError(f'bad value for {name}: {raw!r}') from None
                if name.endswith('_file'):
                    value = _resolve(base_dir, value)
                scenario[name] = value
            else:
                sim[name] = raw
        return cls(sim=SimConfig.from_mapping(sim), **scenario)

    @classmethod
    def from_file(cls, path, overrides=None, defaults=None):
        """
        ``key = value`` lines layered over ``defaults`` (e.g. the application
        config); ``overrides`` (e.g. CLI flags) win over the file.
        """
        if not os.path.exists(path):
            raise ConfigError(f'scenario file not found: {path}')
        values = dict(defaults or {})
        values.update(dotenv_values(path))
        values.update(overrides or {})
        return cls.from_mapping(values, base_dir=os.path.dirname(os.path.abspath(path)))

    def with_sim(self, **changes):
        return replace(self, sim=replace(self.sim, **changes))


def _resolve(base_dir, path):
    return path if os.path.isabs(path) else os.path.join(base_dir, path)


@dataclass
class ScenarioFiles:
    nodes: str
    edges: str
    demand: str
    history: list


def grid_network(rows, cols, edge_seconds, cell_miles=0.25):
    """Nodes row-major, coordinates in miles, both directions between 4-neighbours."""
    xs, ys, edges = [], [], []
    for r in range(rows):
        for c in range(cols):
            xs.append(c * cell_miles)
            ys.append(r * cell_miles)
    for r in range(rows):
        for c in range(cols):
            u = r * cols + c
            if c + 1 < cols:
                edges += [(u, u + 1, edge_seconds), (u + 1, u, edge_seconds)]
            if r + 1 < rows:
                edges += [(u, u + cols, edge_seconds), (u + cols, u, edge_seconds)]
    return Network(xs, ys, edges)


def _quadrants(net):
    """Node lists of the four quadrants in the order the hotspot visits them."""
    mid_x = (net.xs.min() + net.xs.max()) / 2.0
    mid_y = (net.ys.min() + net.ys.max()) / 2.0
    east, north = net.xs >= mid_x, net.ys >= mid_y
    masks = [east & north, ~east & north, ~east & ~north, east & ~north]
    return [np.nonzero(mask)[0] for mask in masks]


def hotspot_quadrant(t, period):
    return int(t // period) % 4


def poisson_demand(spec, net, rng):
    """
    Per epoch a Poisson count of requests with uniform times inside it. A
    share of origins falls in the current hotspot quadrant, which moves every
    hotspot_period_s; the rest are uniform. Destinations are uniform.
    """
    epoch = spec.sim.epoch_s
    quadrants = _quadrants(net)
    records = []
    for k in range(int(math.ceil(spec.horizon_s / epoch))):
        count = int(rng.poisson(spec.rate_per_epoch))
        times = np.sort(rng.uniform(k * epoch, (k + 1) * epoch, size=count))
        for t in times:
            quadrant = quadrants[hotspot_quadrant(t, spec.hotspot_period_s)]
            if quadrant.size and rng.random() < spec.hotspot_share:
                origin = int(quadrant[rng.integers(quadrant.size)])
            else:
                origin = int(rng.integers(net.n))
            destination = int(rng.integers(net.n - 1))
            if destination >= origin:
                destination += 1
            records.append(DemandRecord(float(t), origin, destination))
    return records


def read_requests(path, net):
    try:
        frame = pd.read_csv(path, sep=None, engine='python', dtype={'origin_node': str, 'dest_node': str})
    except pd.errors.EmptyDataError:
        return []
    except (OSError, pd.errors.ParserError) as e:
        raise DataError(f'cannot read request file {path}: {e}') from e
    missing = [c for c in REQUEST_COLUMNS if c not in frame.columns]
    if missing:
        raise DataError(f'request file {path} is missing columns {missing}')
    records = []
    for index, row in frame.iterrows():
        line = index + 2
        try:
            t = float(row['request_time_s'])
        except (TypeError, ValueError):
            raise DataError(f'{path} row {line}: request time {row["request_time_s"]!r} is not a number') from None
        if not math.isfinite(t) or t < 0:
            raise DataError(f'{path} row {line}: request time must be finite and >= 0')
        origin, dest = str(row['origin_node']), str(row['dest_node'])
        for node in (origin, dest):
            if node not in net.index_of:
                raise DataError(f'{path} row {line}: unknown node {node!r}')
        if origin == dest:
            raise DataError(f'{path} row {line}: origin equals destination')
        records.append(DemandRecord(t, net.index_of[origin], net.index_of[dest]))
    return records


def write_requests(records, path, net):
    frame = pd.DataFrame(
        [(rec.request_time, net.external_ids[rec.origin], net.external_ids[rec.destination]) for rec in records],
        columns=list(REQUEST_COLUMNS))
    frame.to_csv(path, index=False)


def synthesize(spec, seed):
    """In-memory network, demand, and history days for ``seed``."""
    net = grid_network(spec.grid_rows, spec.grid_cols, spec.edge_seconds, spec.cell_miles)
    demand = poisson_demand(spec, net, np.random.default_rng([seed, 0]))
    history = [poisson_demand(spec, net, np.random.default_rng([seed, day]))
               for day in range(1, spec.history_days + 1)]
    return net, demand, history


def generate_scenario(spec, seed, out_dir):
    net, demand, history = synthesize(spec, seed)
    os.makedirs(os.path.join(out_dir, 'history'), exist_ok=True)
    files = ScenarioFiles(
        nodes=os.path.join(out_dir, 'nodes.csv'),
        edges=os.path.join(out_dir, 'edges.csv'),
        demand=os.path.join(out_dir, 'demand.csv'),
        history=[os.path.join(out_dir, 'history', f'day_{d:02d}.csv') for d in range(1, len(history) + 1)])
    write_network(net, files.nodes, files.edges)
    write_requests(demand, files.demand, net)
    for path, day in zip(files.history, history):
        write_requests(day, path, net)
    log_event(logger, 'SCENARIO_GENERATED', seed=seed, nodes=net.n, edges=len(net.edges),
              requests=len(demand), history_days=len(history), out=out_dir)
    return files


def load_scenario(spec, seed=None):
    """(net, demand, history) from files, generating whatever the scenario leaves synthetic."""
    seed = spec.sim.seed if seed is None else seed
    if spec.synthetic_network or spec.synthetic_demand:
        net, demand, history = synthesize(spec, seed)
    if not spec.synthetic_network:
        net = read_network(spec.node_file, spec.edge_file)
    if not spec.synthetic_demand:
        demand = read_requests(spec.demand_file, net)
        history = [read_requests(p, net) for p in spec.history_files]
    return net, demand, history


def run_experiment(spec, variants, seeds, out_dir=None):
    """
    Every (variant, seed) run, one row each in seed-major order, then one
    row per variant with seed 'all' holding the means and, in the *_se
    columns, their standard errors. Returns (table, changes) where changes
    holds the relative change of each variant's means against 'original'.
    """
    rows = []
    for seed in seeds:
        net, demand, history = load_scenario(spec, seed)
        for variant in variants:
            config = replace(spec.sim, variant=variant, seed=seed)
            report = run(config, net, demand, history=history)
            if out_dir is not None:
                save_report(report, os.path.join(out_dir, 'runs', f'{variant}_seed{seed}'))
            row = {'method': variant, 'seed': str(seed)}
            row.update({metric: getattr(report, name) for metric, name in REPORT_FIELDS.items()})
            rows.append(row)
            log_event(logger, 'EXPERIMENT_RUN', variant=variant, seed=seed, service_rate=report.service_rate)

    columns = ['method', 'seed'] + [c for metric in METRICS for c in (metric, f'{metric}_se')]
    runs = pd.DataFrame(rows, columns=['method', 'seed'] + list(METRICS))
    aggregates = []
    for variant in variants:
        subset = runs[runs['method'] == variant]
        row = {'method': variant, 'seed': 'all'}
        for metric in METRICS:
            row[metric] = float(subset[metric].mean())
            row[f'{metric}_se'] = standard_error(subset[metric])
        aggregates.append(row)
    table = pd.concat([runs, pd.DataFrame(aggregates)], ignore_index=True).reindex(columns=columns)

    changes = pd.DataFrame(columns=['method'] + list(METRICS))
    if 'original' in variants:
        base = {m: float(runs[runs['method'] == 'original'][m].mean()) for m in METRICS}
        records = []
        for variant in variants:
            if variant == 'original':
                continue
            record = {'method': f'{variant} vs original'}
            for metric in METRICS:
                value = float(runs[runs['method'] == variant][metric].mean())
                record[metric] = (value - base[metric]) / base[metric] if base[metric] else float('nan')
            records.append(record)
        changes = pd.DataFrame(records, columns=['method'] + list(METRICS))

    if out_dir is not None:
        write_comparison(table, changes, out_dir)
    return table, changes


def format_table(table, changes):
    text = table.to_string(index=False, float_format=lambda v: f'{v:.4f}')
    if len(changes):
        text += '\n\nrelative change\n' + changes.to_string(index=False, float_format=lambda v: f'{v:+.2%}')
    return text + '\n'


def write_comparison(table, changes, out_dir):
    os.makedirs(out_dir, exist_ok=True)
    table.to_csv(os.path.join(out_dir, 'comparison.csv'), index=False)
    if len(changes):
        changes.to_csv(os.path.join(out_dir, 'comparison_changes.csv'), index=False)
    with open(os.path.join(out_dir, 'comparison.txt'), 'w') as fh:
        fh.write(format_table(table, changes))
