"""Per-cluster POD bases from the thin SVD of each cluster's snapshot matrix."""

import csv
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import textio
from ._parallel import pmap
from .errors import CorruptStoreError, DegenerateClusterError, InvalidInputError
from .linalg import RANK_RTOL, load_matrix, save_matrix, thin_svd

log = logging.getLogger(__name__)

DEFAULT_ENERGY_TOL = 1e-8


@dataclass(frozen=True)
class TruncationRule:
    kind: str = "energy"
    fixed_L: int = 1
    energy_tol: float = DEFAULT_ENERGY_TOL

    def __post_init__(self):
        if self.kind not in ("fixed", "energy"):
            raise InvalidInputError(f"unknown truncation rule {self.kind!r}")
        if self.kind == "fixed" and self.fixed_L < 1:
            raise InvalidInputError("fixed_L must be >= 1")
        if self.kind == "energy" and not 0.0 <= self.energy_tol < 1.0:
            raise InvalidInputError("energy_tol must lie in [0, 1)")

    def describe(self):
        return f"fixed:{self.fixed_L}" if self.kind == "fixed" else f"energy:{self.energy_tol!r}"


@dataclass(frozen=True)
class LocalBasis:
    cluster_id: object
    basis: np.ndarray
    singular_values: np.ndarray
    truncation_rule_used: str = ""

    @property
    def L(self):
        return self.basis.shape[1]

    @property
    def N(self):
        return self.basis.shape[0]


def numerical_rank(singular_values):
    s = np.asarray(singular_values)
    if s.size == 0 or s[0] == 0.0:
        return 0
    return int(np.count_nonzero(s > RANK_RTOL * s[0]))


def choose_L(singular_values, rule):
    rank = numerical_rank(singular_values)
    if rule.kind == "fixed":
        return max(1, min(rule.fixed_L, rank))
    e = np.asarray(singular_values) ** 2
    # tail[L] = sum of squared singular values beyond the first L
    tail = np.concatenate([np.cumsum(e[::-1])[::-1], [0.0]])
    L = int(np.argmax(tail <= rule.energy_tol * e.sum()))
    return max(1, min(L, rank))


def _fix_signs(U):
    """Flip columns so each one's largest-magnitude entry is positive."""
    idx = np.argmax(np.abs(U), axis=0)
    signs = np.where(U[idx, np.arange(U.shape[1])] < 0, -1.0, 1.0)
    return U * signs


def pod_basis(S_k, rule, cluster_id=None):
    """POD basis of one snapshot matrix (columns are snapshots)."""
    S_k = np.asarray(S_k, dtype=np.float64)
    if not np.any(S_k):
        raise DegenerateClusterError(f"cluster {cluster_id}: all snapshots are zero")
    svd = thin_svd(S_k)
    L = choose_L(svd.singular_values, rule)
    return LocalBasis(cluster_id, _fix_signs(svd.left[:, :L]), svd.singular_values, rule.describe())


def build_local_bases(snapshots, clusters, rule=TruncationRule()):
    X = np.asarray(getattr(snapshots, "matrix", snapshots))
    if clusters.assignment.shape != (X.shape[1],):
        raise InvalidInputError("cluster assignment does not match the snapshot set")

    def one(k):
        return pod_basis(X[:, clusters.assignment == k], rule, cluster_id=k)

    return pmap(one, range(clusters.K))


def global_basis(snapshots, L, cluster_id="global"):
    """POD basis of all snapshots with exactly L modes (capped at the rank)."""
    X = np.asarray(getattr(snapshots, "matrix", snapshots))
    svd = thin_svd(X)
    rank = numerical_rank(svd.singular_values)
    if L > rank:
        log.warning("requested %d global modes but rank is %d; truncating", L, rank)
        L = rank
    return LocalBasis(cluster_id, _fix_signs(svd.left[:, :L]), svd.singular_values, f"fixed:{L}")


def project_coeffs(basis, u):
    Psi = getattr(basis, "basis", basis)
    u = np.asarray(u, dtype=np.float64)
    if u.shape[0] != Psi.shape[0]:
        raise InvalidInputError(f"vector length {u.shape[0]} != basis rows {Psi.shape[0]}")
    return Psi.T @ u


def lift(basis, a):
    Psi = getattr(basis, "basis", basis)
    a = np.asarray(a, dtype=np.float64)
    if a.shape[0] != Psi.shape[1]:
        raise InvalidInputError(f"coefficient length {a.shape[0]} != basis size {Psi.shape[1]}")
    return Psi @ a


def projection_error(basis, X):
    """Sum over columns of |x - Psi Psi^T x|^2."""
    Psi = getattr(basis, "basis", basis)
    R = X - Psi @ (Psi.T @ X)
    return float(np.sum(R * R))


def save_bases(path, bases, rule):
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    for b in bases:
        save_matrix(path / f"basis_{b.cluster_id}.mat", b.basis)
        with open(path / f"spectrum_{b.cluster_id}.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["index", "singular_value"])
            for i, s in enumerate(b.singular_values, 1):
                w.writerow([i, repr(float(s))])
    textio.write_ini(path / "bases_meta.txt", {
        "bases": {
            "K": len(bases),
            "rule": rule.describe() if hasattr(rule, "describe") else str(rule),
            "ids": ", ".join(str(b.cluster_id) for b in bases),
            "L": ", ".join(str(b.L) for b in bases),
        }
    })


def load_bases(path):
    path = Path(path)
    cp = textio.read_ini(path / "bases_meta.txt")
    try:
        sec = cp["bases"]
        ids = textio.parse_words(sec["ids"])
        Ls = [int(x) for x in textio.parse_words(sec["L"])]
        rule = sec["rule"]
        K = int(sec["K"])
    except (KeyError, ValueError) as exc:
        raise CorruptStoreError(f"{path}/bases_meta.txt: {exc}") from exc
    if len(ids) != K or len(Ls) != K:
        raise CorruptStoreError(f"{path}/bases_meta.txt: K={K} disagrees with lists")
    out = []
    for cid, L in zip(ids, Ls):
        B = load_matrix(path / f"basis_{cid}.mat")
        if B.shape[1] != L:
            raise CorruptStoreError(f"basis_{cid}.mat has {B.shape[1]} columns, header says {L}")
        with open(path / f"spectrum_{cid}.csv") as fh:
            rows = list(csv.reader(fh))[1:]
        sv = np.array([float(r[1]) for r in rows])
        out.append(LocalBasis(int(cid) if cid.isdigit() else cid, B, sv, rule))
    return out
