"""
Spatio-temporal demand model for proactive rebalancing.

Nodes are clustered so that each cluster covers roughly one walking disc
(2*pi*alpha^2). Per (cluster, time-of-day bin) the empirical distribution of
daily request counts gives, for the i-th possible request, the probability
that at least i requests appear. Virtual requests above p_min become
rebalancing targets at the cluster's representative node.
"""
import logging
import math
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from app.exceptions import DataError
from app.utils import convex_hull_area, kmeans_labels, log_event

logger = logging.getLogger(__name__)

DEMAND_COLUMNS = ('cluster_id', 'bin_index', 'count_value', 'probability')
NORMALIZATION_TOL = 1e-9
CLUSTER_SEED = 0


@dataclass
class ClusterModel:
    k: int
    centroids: np.ndarray
    labels: np.ndarray              # node index -> cluster
    representatives: list           # cluster -> node nearest its centroid

    def cluster_of(self, node):
        return int(self.labels[node])

    def members(self, cluster):
        return [int(n) for n in np.nonzero(self.labels == cluster)[0]]


def cluster_count(area, alpha):
    if not alpha > 0:
        raise ValueError('alpha must be > 0')
    return max(1, int(math.floor(area / (2.0 * math.pi * alpha ** 2) + 0.5)))


def build_clusters(net, alpha, seed=CLUSTER_SEED):
    points = np.column_stack([net.xs, net.ys])
    area = convex_hull_area(points)
    k = min(cluster_count(area, alpha), net.n)
    labels, centroids = kmeans_labels(points, k, seed)
    representatives = []
    for c in range(k):
        members = np.nonzero(labels == c)[0]
        cx, cy = centroids[c]
        if members.size == 0:
            representatives.append(net.nearest_node(cx, cy))
        else:
            representatives.append(net.nearest_node(cx, cy, candidates=members))
    log_event(logger, 'CLUSTERS', k=k, area=round(area, 6), alpha=alpha)
    return ClusterModel(k, np.asarray(centroids, dtype=float), np.asarray(labels, dtype=int), representatives)


@dataclass
class DemandHistogram:
    """P(n | cluster, bin); pairs never observed carry P(0) = 1."""
    bin_seconds: float = 300.0
    distributions: dict = field(default_factory=dict)   # (cluster, bin) -> probabilities over 0..n_max
    n_days: int = 0

    def bin_of(self, t):
        return int(t // self.bin_seconds)

    def distribution(self, cluster, bin_index):
        return self.distributions.get((cluster, bin_index), np.array([1.0]))

    def to_frame(self):
        rows = []
        for (cluster, bin_index) in sorted(self.distributions):
            for n, p in enumerate(self.distributions[(cluster, bin_index)]):
                if p > 0:
                    rows.append((cluster, bin_index, n, float(p)))
        return pd.DataFrame(rows, columns=list(DEMAND_COLUMNS))


def fit_demand(history_days, clusters, bin_seconds=300.0):
    """
    ``history_days`` is a list of request streams, one per day, with times
    measured from the start of that day.
    """
    history_days = [list(day) for day in history_days]
    model = DemandHistogram(bin_seconds=bin_seconds, n_days=len(history_days))
    if not history_days:
        logger.warning('no demand history: every cluster gets P(0) = 1')
        return model
    per_day = []
    keys = set()
    for day in history_days:
        counts = {}
        for record in day:
            key = (clusters.cluster_of(record.origin), model.bin_of(record.request_time))
            counts[key] = counts.get(key, 0) + 1
        keys.update(counts)
        per_day.append(counts)
    for key in sorted(keys):
        observed = np.array([counts.get(key, 0) for counts in per_day])
        model.distributions[key] = np.bincount(observed) / len(per_day)
    log_event(logger, 'DEMAND_FIT', days=len(history_days), pairs=len(keys), bin_seconds=bin_seconds)
    return model


def save_demand(model, path):
    model.to_frame().to_csv(path, index=False)


def load_demand(path, bin_seconds=300.0):
    try:
        frame = pd.read_csv(path, sep=None, engine='python')
    except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError) as e:
        raise DataError(f'cannot read demand table {path}: {e}') from e
    missing = [c for c in DEMAND_COLUMNS if c not in frame.columns]
    if missing:
        raise DataError(f'demand table is missing columns {missing}')
    model = DemandHistogram(bin_seconds=bin_seconds)
    for (cluster, bin_index), group in frame.groupby(['cluster_id', 'bin_index'], sort=True):
        counts = group['count_value'].astype(int).to_numpy()
        if (counts < 0).any():
            raise DataError(f'negative count in demand table for cluster {cluster}, bin {bin_index}')
        probs = np.zeros(counts.max() + 1)
        np.add.at(probs, counts, group['probability'].astype(float).to_numpy())
        if abs(probs.sum() - 1.0) > NORMALIZATION_TOL:
            raise DataError(f'probabilities for cluster {cluster}, bin {bin_index} sum to {probs.sum()}')
        model.distributions[(int(cluster), int(bin_index))] = probs
    return model


def marginal_probabilities(distribution):
    """p_i = sum_{n >= i} P(n) for i = 1..n_max."""
    P = np.asarray(distribution, dtype=float)
    if P.size == 0 or abs(P.sum() - 1.0) > NORMALIZATION_TOL:
        raise DataError(f'count distribution sums to {P.sum()}, expected 1')
    suffix = np.cumsum(P[::-1])[::-1]
    return [float(p) for p in suffix[1:]]


@dataclass(frozen=True)
class VirtualRequest:
    cluster: int
    node: int
    probability: float
    rank: int


def generate_virtual_requests(model, clusters, now, p_min=0.75, lookahead_bins=1):
    """Rank-i virtual requests with p_i > p_min, for the bin ``lookahead_bins`` ahead."""
    bin_index = model.bin_of(now) + lookahead_bins
    virtuals = []
    for c in range(clusters.k):
        for rank, p in enumerate(marginal_probabilities(model.distribution(c, bin_index)), start=1):
            if not p > p_min:
                break
            virtuals.append(VirtualRequest(c, clusters.representatives[c], p, rank))
    return virtuals


def suppress_served_virtuals(virtuals, idle, omega, net, now=0.0, mode='per_vehicle'):
    """
    An idle vehicle within omega/2 of a cluster's representative covers one
    of its virtual requests (the lowest-probability one first). A vehicle
    covers at most one request overall; clusters, in id order, take their
    nearest free vehicles. In 'cluster' mode one such vehicle covers the
    whole cluster.
    """
    if mode not in ('per_vehicle', 'cluster'):
        raise ValueError(f'unknown suppression mode {mode!r}')
    threshold = omega / 2.0
    by_cluster = {}
    for vr in virtuals:
        by_cluster.setdefault(vr.cluster, []).append(vr)
    free = sorted(idle, key=lambda v: v.id)
    kept = []
    for cluster in sorted(by_cluster):
        group = sorted(by_cluster[cluster], key=lambda vr: vr.rank)
        node = group[0].node
        if mode == 'cluster':
            drop = len(group) if any(v.time_to(node, now, net) <= threshold for v in idle) else 0
        else:
            nearby = []
            for v in free:
                t = v.time_to(node, now, net)
                if t <= threshold:
                    nearby.append((t, v.id))
            nearby.sort()
            drop = min(len(nearby), len(group))
            used = {vid for _, vid in nearby[:drop]}
            free = [v for v in free if v.id not in used]
        kept.extend(group[:len(group) - drop])
    return kept
