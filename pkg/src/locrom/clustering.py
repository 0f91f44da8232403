"""k-means over snapshot vectors and elbow selection of the cluster count."""

import logging
from dataclasses import dataclass, field

import numpy as np

from ._parallel import pmap
from .errors import ElbowUndefinedError, InvalidAssignmentError, InvalidInputError, InvalidKError

log = logging.getLogger(__name__)

DEFAULT_RESTARTS = 10
DEFAULT_MAX_ITER = 300
DEFAULT_ALPHA = 0.05


@dataclass(frozen=True)
class ClusterModel:
    K: int
    assignment: np.ndarray
    means: np.ndarray  # N x K, column k is the mean of cluster k
    variance: float
    seed: int = 0
    restarts_used: int = 1
    iterations: int = 0
    history: tuple = field(default=(), compare=False)  # variance after every Lloyd step

    def members(self, k):
        return np.flatnonzero(self.assignment == k)


@dataclass(frozen=True)
class ElbowScan:
    k_values: np.ndarray
    variances: np.ndarray
    chosen_K: int
    alpha: float
    flagged: bool = False  # True when no K met the rule and k_max was taken
    models: tuple = field(default=(), compare=False, repr=False)

    def model_for(self, k):
        return self.models[list(self.k_values).index(k)]

    def to_csv(self):
        lines = ["k,variance,chosen"]
        for k, v in zip(self.k_values, self.variances):
            lines.append(f"{int(k)},{float(v)!r},{int(k == self.chosen_K)}")
        return "\n".join(lines) + "\n"


def _columns(data):
    X = getattr(data, "matrix", data)
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[None, :]
    return X


def variance(data, assignment, means):
    """Sum over clusters of squared distances from members to their mean."""
    X = _columns(data)
    assignment = np.asarray(assignment)
    means = np.asarray(means, dtype=np.float64)
    if means.ndim == 1:
        means = means[None, :]
    if assignment.shape != (X.shape[1],):
        raise InvalidAssignmentError("assignment length must equal the number of snapshots")
    if assignment.size and (assignment.min() < 0 or assignment.max() >= means.shape[1]):
        raise InvalidAssignmentError("cluster index out of range")
    diff = X - means[:, assignment]
    return float(np.sum(diff * diff))


def _sq_dists(X, Z):
    # S x K matrix of squared distances, computed from explicit differences
    d = X[:, :, None] - Z[:, None, :]
    return np.einsum("nsk,nsk->sk", d, d)


def _plusplus(X, k, rng):
    S = X.shape[1]
    idx = [int(rng.integers(S))]
    d2 = _sq_dists(X, X[:, idx])[:, 0]
    for _ in range(1, k):
        total = d2.sum()
        j = int(rng.integers(S)) if total == 0 else int(rng.choice(S, p=d2 / total))
        idx.append(j)
        d2 = np.minimum(d2, _sq_dists(X, X[:, [j]])[:, 0])
    return X[:, idx].copy()


def _means(X, labels, k):
    Z = np.zeros((X.shape[0], k))
    for j in range(k):
        Z[:, j] = X[:, labels == j].mean(axis=1)
    return Z


def _repair_empty(X, labels, Z, k):
    """Move the point farthest from its center into each empty cluster."""
    counts = np.bincount(labels, minlength=k)
    for j in np.flatnonzero(counts == 0):
        d = np.sum((X - Z[:, labels]) ** 2, axis=0)
        movable = counts[labels] > 1
        d = np.where(movable, d, -1.0)
        s = int(np.argmax(d))
        counts[labels[s]] -= 1
        labels[s] = j
        counts[j] = 1
        Z[:, j] = X[:, s]
    return labels


def _lloyd(X, k, max_iter, rng):
    Z = _plusplus(X, k, rng)
    labels = None
    history = []
    it = 0
    for it in range(1, max_iter + 1):
        new = np.argmin(_sq_dists(X, Z), axis=1)  # ties -> lowest index
        new = _repair_empty(X, new, Z, k)
        Z = _means(X, new, k)
        history.append(variance(X, new, Z))
        if labels is not None and np.array_equal(new, labels):
            labels = new
            break
        labels = new
    return labels, Z, history, it


def kmeans(data, k, restarts=DEFAULT_RESTARTS, max_iter=DEFAULT_MAX_ITER, seed=0):
    """Best-of-``restarts`` Lloyd iterations with k-means++ seeding.

    ``data`` is a SnapshotSet or an N x S array whose columns are the points.
    Restart r draws from ``default_rng([seed, r])`` so the result does not
    depend on scheduling.
    """
    X = _columns(data)
    S = X.shape[1]
    if k < 2:
        raise InvalidKError(f"k must be >= 2, got {k}")
    if k > S:
        raise InvalidKError(f"k={k} exceeds the number of snapshots S={S}")
    if restarts < 1:
        raise InvalidInputError("restarts must be >= 1")

    def run(r):
        return _lloyd(X, k, max_iter, np.random.default_rng([seed, r]))

    runs = pmap(run, range(restarts))
    best = min(range(restarts), key=lambda r: (runs[r][2][-1], r))
    labels, Z, history, it = runs[best]
    return ClusterModel(k, labels, Z, history[-1], seed, restarts, it, tuple(history))


def elbow_select(data, k_max, alpha=DEFAULT_ALPHA, restarts=DEFAULT_RESTARTS, seed=0,
                 max_iter=DEFAULT_MAX_ITER):
    """Scan k = 2..k_max and pick the smallest K >= 3 whose variance drop
    V(K-1) - V(K) is at most ``alpha`` times the drop V(2) - V(3)."""
    X = _columns(data)
    if not 0.0 < alpha < 1.0:
        raise InvalidInputError("alpha must lie in (0, 1)")
    if k_max < 3:
        raise InvalidInputError("k_max must be >= 3 for an elbow scan")
    if k_max > X.shape[1]:
        raise InvalidKError(f"k_max={k_max} exceeds S={X.shape[1]}")
    ks = np.arange(2, k_max + 1)
    models = [kmeans(X, int(k), restarts, max_iter, seed) for k in ks]
    V = np.array([m.variance for m in models])
    ref = V[0] - V[1]
    if ref <= 1e-12 * max(V[0], np.finfo(float).tiny):
        raise ElbowUndefinedError(
            "variance does not drop from 2 to 3 clusters; choose K manually")
    chosen, flagged = int(k_max), True
    for i in range(1, len(ks)):
        if V[i - 1] - V[i] <= alpha * ref:
            chosen, flagged = int(ks[i]), False
            break
    if flagged:
        log.warning("no elbow found up to k_max=%d; using k_max", k_max)
    return ElbowScan(ks, V, chosen, alpha, flagged, tuple(models))
