import json
import logging
import math
import os
import time
import warnings

import numpy as np
from scipy.spatial import ConvexHull, QhullError
from sklearn.cluster import KMeans
from sklearn.exceptions import ConvergenceWarning


def log_event(logger, action, **details):
    """
    Emit one structured line: ``ACTION key=value ...`` with keys sorted.
    """
    if not logger.isEnabledFor(logging.INFO):
        return
    fields = ' '.join(f'{key}={details[key]}' for key in sorted(details))
    logger.info('%s %s', action, fields)


class Budget:
    """
    Exploration budget counted in decision steps, wall-clock seconds, or both.
    With neither limit set the budget never runs out.
    """

    def __init__(self, steps=None, seconds=None):
        if steps is not None and steps < 0:
            raise ValueError('step budget must be >= 0')
        if seconds is not None and seconds < 0:
            raise ValueError('time budget must be >= 0')
        self.steps = steps
        self.seconds = seconds
        self.used = 0
        self._deadline = None

    @property
    def unlimited(self):
        return self.steps is None and self.seconds is None

    def fresh(self):
        budget = Budget(self.steps, self.seconds)
        if budget.seconds is not None:
            budget._deadline = time.perf_counter() + budget.seconds
        return budget

    def spend(self, n=1):
        self.used += n

    @property
    def exhausted(self):
        if self.steps is not None and self.used >= self.steps:
            return True
        if self._deadline is not None and time.perf_counter() >= self._deadline:
            return True
        return False


def kmeans_labels(points, k, seed, max_iter=100):
    """
    K-means with k-means++ seeding and a fixed seed. Returns (labels, centroids).
    Fewer points than clusters gives one singleton cluster per point.
    """
    points = np.asarray(points, dtype=float).reshape(-1, 2)
    n = len(points)
    if n == 0:
        return np.zeros(0, dtype=int), np.zeros((0, 2))
    if n <= k:
        return np.arange(n), points.copy()
    model = KMeans(n_clusters=k, init='k-means++', n_init=1, max_iter=max_iter,
                   tol=0.0, random_state=seed, algorithm='lloyd')
    with warnings.catch_warnings():
        # duplicate coordinates leave fewer distinct clusters than k
        warnings.simplefilter('ignore', ConvergenceWarning)
        labels = model.fit_predict(points)
    return labels.astype(int), model.cluster_centers_


def convex_hull_area(points):
    """Planar hull area; fewer than three non-collinear points have none."""
    pts = np.unique(np.asarray(points, dtype=float).reshape(-1, 2), axis=0)
    if len(pts) < 3:
        return 0.0
    try:
        # in two dimensions the hull's "volume" is its area
        return float(ConvexHull(pts).volume)
    except QhullError:
        return 0.0


def standard_error(values):
    values = list(values)
    if len(values) < 2:
        return 0.0
    return float(np.std(values, ddof=1) / math.sqrt(len(values)))


def dumps(obj):
    return json.dumps(obj, indent=2, sort_keys=True)


def write_json(path, obj):
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, 'w') as fh:
        fh.write(dumps(obj))
        fh.write('\n')


def write_jsonl(path, records):
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, 'w') as fh:
        for record in records:
            fh.write(json.dumps(record, sort_keys=True))
            fh.write('\n')


def read_jsonl(path):
    with open(path) as fh:
        return [json.loads(line) for line in fh if line.strip()]
