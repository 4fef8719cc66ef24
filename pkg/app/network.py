"""
Static road network with memoized shortest-path travel times.

Travel times never change during a run; every other module relies on this
for the exactness of the feasibility cache.
"""
import heapq
import logging
import math
import threading

import numpy as np
import pandas as pd

from app.exceptions import NetworkLoadError, QueryError

logger = logging.getLogger(__name__)

UNREACHABLE = math.inf
EAGER_NODE_LIMIT = 2000

NODE_COLUMNS = ('node_id', 'x', 'y')
EDGE_COLUMNS = ('from', 'to', 'travel_time_seconds')


def _dijkstra(source, adjacency, n):
    dist = [UNREACHABLE] * n
    dist[source] = 0.0
    heap = [(0.0, source)]
    done = [False] * n
    while heap:
        d, u = heapq.heappop(heap)
        if done[u]:
            continue
        done[u] = True
        for v, w in adjacency[u]:
            nd = d + w
            if nd < dist[v]:
                dist[v] = nd
                heapq.heappush(heap, (nd, v))
    return dist


class Network:
    """
    Directed network over dense node ids 0..N-1. Coordinates are planar miles.
    """

    def __init__(self, xs, ys, edges, external_ids=None, eager=None):
        self.n = len(xs)
        self.xs = np.asarray(xs, dtype=float)
        self.ys = np.asarray(ys, dtype=float)
        self.external_ids = list(external_ids) if external_ids is not None else [str(i) for i in range(self.n)]
        self.index_of = {ext: i for i, ext in enumerate(self.external_ids)}

        best = {}
        for u, v, t in edges:
            if (u, v) not in best or t < best[(u, v)]:
                best[(u, v)] = float(t)
        self.edges = sorted((u, v, t) for (u, v), t in best.items())
        self._edge_time = best
        self._out = [[] for _ in range(self.n)]
        self._in = [[] for _ in range(self.n)]
        for u, v, t in self.edges:
            self._out[u].append((v, t))
            self._in[v].append((u, t))

        self._rows = {}
        self._to_rows = {}
        self._lock = threading.Lock()

        self.eager = self.n <= EAGER_NODE_LIMIT if eager is None else eager
        if self.eager:
            for a in range(self.n):
                self._rows[a] = _dijkstra(a, self._out, self.n)
            logger.debug('all-pairs travel times computed for %d nodes', self.n)

    def __len__(self):
        return self.n

    def _check(self, node):
        if not isinstance(node, (int, np.integer)) or not 0 <= node < self.n:
            raise QueryError(f'invalid node id {node!r}')

    def times_from(self, a):
        """Shortest travel times from ``a`` to every node (memoized row)."""
        row = self._rows.get(a)
        if row is None:
            computed = _dijkstra(a, self._out, self.n)
            with self._lock:
                row = self._rows.setdefault(a, computed)
        return row

    def _times_to(self, b):
        row = self._to_rows.get(b)
        if row is None:
            if self.eager:
                computed = [self._rows[a][b] for a in range(self.n)]
            else:
                computed = _dijkstra(b, self._in, self.n)
            with self._lock:
                row = self._to_rows.setdefault(b, computed)
        return row

    def travel_time(self, a, b):
        self._check(a)
        self._check(b)
        if a == b:
            return 0.0
        return self.times_from(a)[b]

    def edge_time(self, u, v):
        try:
            return self._edge_time[(u, v)]
        except KeyError:
            raise QueryError(f'no edge {u}->{v}') from None

    def shortest_path(self, a, b):
        """
        Node sequence a..b of a shortest path. Among equal-cost paths the one
        with the smallest next node id at every step wins.
        """
        if self.travel_time(a, b) == UNREACHABLE:
            raise QueryError(f'node {b} is unreachable from node {a}')
        to_b = self._times_to(b)
        path = [a]
        u = a
        while u != b:
            remaining = to_b[u]
            tol = 1e-9 * max(1.0, remaining)
            for v, w in self._out[u]:
                if abs(w + to_b[v] - remaining) <= tol:
                    u = v
                    break
            else:
                raise QueryError(f'no shortest-path successor from {u} towards {b}')
            path.append(u)
        return path

    def nearest_node(self, x, y, candidates=None):
        nodes = np.arange(self.n) if candidates is None else np.asarray(list(candidates))
        d2 = (self.xs[nodes] - x) ** 2 + (self.ys[nodes] - y) ** 2
        return int(nodes[int(np.argmin(d2))])

    def coordinates(self, node):
        return float(self.xs[node]), float(self.ys[node])

    def to_frames(self):
        nodes = pd.DataFrame({'node_id': self.external_ids, 'x': self.xs, 'y': self.ys})
        edges = pd.DataFrame(
            [(self.external_ids[u], self.external_ids[v], t) for u, v, t in self.edges],
            columns=list(EDGE_COLUMNS))
        return nodes, edges


def _require_columns(frame, columns, what):
    missing = [c for c in columns if c not in frame.columns]
    if missing:
        raise NetworkLoadError(f'{what} file is missing columns {missing}')


def load_network(node_records, edge_records, eager=None):
    """
    Build a validated Network from node and edge tables (DataFrames).
    External ids are remapped to dense indices in order of appearance.
    """
    nodes = pd.DataFrame(node_records)
    edges = pd.DataFrame(edge_records)
    if 'travel_time' in edges.columns and 'travel_time_seconds' not in edges.columns:
        edges = edges.rename(columns={'travel_time': 'travel_time_seconds'})
    _require_columns(nodes, NODE_COLUMNS, 'node')
    _require_columns(edges, EDGE_COLUMNS, 'edge')

    external_ids, xs, ys = [], [], []
    index_of = {}
    for row in nodes.itertuples(index=False):
        node_id = str(row.node_id)
        if node_id in index_of:
            raise NetworkLoadError(f'duplicate node id {node_id!r}', record=row)
        try:
            x, y = float(row.x), float(row.y)
        except (TypeError, ValueError):
            raise NetworkLoadError(f'node {node_id!r} has non-numeric coordinates', record=row) from None
        index_of[node_id] = len(external_ids)
        external_ids.append(node_id)
        xs.append(x)
        ys.append(y)

    parsed = []
    for i, (src, dst, seconds) in enumerate(zip(edges['from'], edges['to'], edges['travel_time_seconds'])):
        src, dst = str(src), str(dst)
        for endpoint in (src, dst):
            if endpoint not in index_of:
                raise NetworkLoadError(
                    f'edge {i} ({src}->{dst}) references unknown node {endpoint!r}', record=(src, dst, seconds))
        try:
            seconds = float(seconds)
        except (TypeError, ValueError):
            raise NetworkLoadError(f'edge {i} ({src}->{dst}) has non-numeric travel time', record=(src, dst, seconds)) from None
        if not seconds > 0 or math.isinf(seconds):
            raise NetworkLoadError(
                f'edge {i} ({src}->{dst}) travel time must be > 0, got {seconds}', record=(src, dst, seconds))
        parsed.append((index_of[src], index_of[dst], seconds))

    net = Network(xs, ys, parsed, external_ids=external_ids, eager=eager)
    logger.info('network loaded: %d nodes, %d edges', net.n, len(net.edges))
    return net


def read_network(node_path, edge_path, eager=None):
    try:
        nodes = pd.read_csv(node_path, sep=None, engine='python', dtype={'node_id': str})
        edges = pd.read_csv(edge_path, sep=None, engine='python', dtype={'from': str, 'to': str})
    except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError) as e:
        raise NetworkLoadError(f'cannot read network files: {e}') from e
    return load_network(nodes, edges, eager=eager)


def write_network(net, node_path, edge_path):
    nodes, edges = net.to_frames()
    nodes.to_csv(node_path, index=False)
    edges.to_csv(edge_path, index=False)
