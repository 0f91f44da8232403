"""Pick the local basis for a new parameter from the induced parameter clusters.

Two criteria are available: distance to the cluster's parameter mean, and
distance to its midrange minus its radius (negative inside the cluster's
parameter interval).
"""

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError

CRITERIA = ("parameter_mean", "midrange_radius")
_ALIASES = {"mean": "parameter_mean", "midrange": "midrange_radius"}


class ExtrapolationWarning(UserWarning):
    pass


def criterion_name(crit):
    name = _ALIASES.get(crit, crit)
    if name not in CRITERIA:
        raise InvalidInputError(f"unknown criterion {crit!r}; use mean or midrange")
    return name


@dataclass(frozen=True)
class ParameterClustering:
    K: int
    cluster_params: tuple  # K arrays, each (n_k, M)
    means: np.ndarray      # K x M
    midranges: np.ndarray  # K x M
    radii: np.ndarray      # K, largest per-component half-width
    lower: np.ndarray      # M, hull of all samples
    upper: np.ndarray

    @property
    def M(self):
        return self.means.shape[1]


def _as_points(params):
    p = np.asarray(getattr(params, "points", params), dtype=np.float64)
    return p[:, None] if p.ndim == 1 else p


def induce_parameter_clusters(params, clusters):
    P = _as_points(params)
    assignment = np.asarray(getattr(clusters, "assignment", clusters))
    if len(P) != len(assignment):
        raise InvalidInputError(f"{len(P)} parameters but {len(assignment)} assignments")
    K = int(getattr(clusters, "K", assignment.max() + 1))
    groups, means, mids, radii = [], [], [], []
    for k in range(K):
        g = P[assignment == k]
        if len(g) == 0:
            raise InvalidInputError(f"cluster {k} has no parameters")
        lo, hi = g.min(axis=0), g.max(axis=0)
        groups.append(g)
        means.append(g.mean(axis=0))
        mids.append(0.5 * (lo + hi))
        radii.append(float(np.max(0.5 * (lo + hi) - lo)))
    return ParameterClustering(K, tuple(groups), np.array(means), np.array(mids), np.array(radii),
                               P.min(axis=0), P.max(axis=0))


def scores(theta, pc, crit):
    """Per-cluster score to minimize, after clamping theta into the sample hull."""
    crit = criterion_name(crit)
    t = np.clip(np.atleast_1d(np.asarray(theta, dtype=np.float64)), pc.lower, pc.upper)
    if crit == "parameter_mean":
        return np.linalg.norm(pc.means - t, axis=1)
    return np.linalg.norm(pc.midranges - t, axis=1) - pc.radii


def is_extrapolation(theta, pc):
    t = np.atleast_1d(np.asarray(theta, dtype=np.float64))
    return bool(np.any(t < pc.lower) or np.any(t > pc.upper))


def assign(theta, pc, crit="midrange_radius"):
    """Cluster index minimizing the criterion score; ties go to the lowest index."""
    if is_extrapolation(theta, pc):
        warnings.warn(f"theta={theta} outside the sampled range; clamped for assignment",
                      ExtrapolationWarning, stacklevel=2)
    return int(np.argmin(scores(theta, pc, crit)))


def switch_points(pc, crit, lo=None, hi=None, tol=1e-6, resolution=4000):
    """Parameter values (1-D) where the assigned cluster changes, by bisection."""
    if pc.M != 1:
        raise InvalidInputError("switch points are defined for a single parameter")
    lo = float(pc.lower[0]) if lo is None else float(lo)
    hi = float(pc.upper[0]) if hi is None else float(hi)

    def f(t):
        return int(np.argmin(scores(t, pc, crit)))

    grid = np.linspace(lo, hi, resolution + 1)
    labels = [f(t) for t in grid]
    out = []
    for i in range(resolution):
        if labels[i] == labels[i + 1]:
            continue
        a, b = grid[i], grid[i + 1]
        la = labels[i]
        while b - a > tol:
            m = 0.5 * (a + b)
            if f(m) == la:
                a = m
            else:
                b = m
        out.append(0.5 * (a + b))
    return out
