"""Snapshot generation by branch-aware continuation, and the snapshot store."""

import itertools
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import textio
from ._parallel import pmap
from .errors import CorruptStoreError, SnapshotGenerationError
from .fom import DEFAULT_MAX_ITER, DEFAULT_STEADY_TOL, SteadySolveReport, build_model, steady_solve
from .linalg import load_matrix, save_matrix
from .sampling import ParameterSet

log = logging.getLogger(__name__)

STORE_VERSION = "1"


@dataclass(frozen=True)
class SnapshotSet:
    model_name: str
    parameters: ParameterSet
    matrix: np.ndarray
    branch_ids: list
    solve_reports: list
    steady_tol: float = DEFAULT_STEADY_TOL
    model_spec: dict = None

    @property
    def N(self):
        return self.matrix.shape[0]

    @property
    def S(self):
        return self.matrix.shape[1]

    @property
    def thetas(self):
        return np.asarray(self.parameters.points, dtype=np.float64)


def _solve_segment(model, segment, steady_tol, max_iter):
    branch = segment[0][1]
    out = []
    u = None
    for theta, _ in segment:
        init = model.branch_seed(theta, branch) if u is None else u
        rep = steady_solve(model, theta, init, steady_tol, max_iter, branch_id=branch)
        if not rep.converged:
            raise SnapshotGenerationError(
                f"steady solve at theta={theta!r} on branch {branch} did not converge "
                f"(residual {rep.final_residual_norm:.3e} after {rep.iterations} iterations)",
                theta=theta,
            )
        out.append(rep)
        u = rep.solution
    return out


def generate_snapshots(model, params, steady_tol=DEFAULT_STEADY_TOL, max_iter=DEFAULT_MAX_ITER):
    """Steady solutions at every sample, ordered by parameter.

    Consecutive samples on the same branch are chained (each solve starts from
    the previous solution); a new branch restarts from the model's seed.
    """
    thetas = np.asarray(params.points, dtype=np.float64)
    if np.any(np.diff(thetas) <= 0):
        raise SnapshotGenerationError("parameter set must be strictly increasing")
    tagged = [(float(t), model.branch_for(float(t))) for t in thetas]
    segments = [list(g) for _, g in itertools.groupby(tagged, key=lambda x: x[1])]
    reports = list(itertools.chain.from_iterable(
        pmap(lambda seg: _solve_segment(model, seg, steady_tol, max_iter), segments)))
    matrix = np.column_stack([r.solution for r in reports]) if reports else np.zeros((model.dim, 0))
    log.info("generated %d snapshots for %s", len(reports), model.name)
    return SnapshotSet(
        model_name=model.name,
        parameters=params,
        matrix=matrix,
        branch_ids=[b for _, b in tagged],
        solve_reports=reports,
        steady_tol=steady_tol,
        model_spec=model.spec,
    )


def save_snapshots(snaps, path):
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    save_matrix(path / "snapshots.mat", snaps.matrix)
    sections = {
        "snapshots": {
            "version": STORE_VERSION,
            "model_name": snaps.model_name,
            "N": snaps.N,
            "S": snaps.S,
            "steady_tol": textio.fmt(snaps.steady_tol),
            "parameters": textio.fmt_list(snaps.thetas),
            "branch_ids": ", ".join(snaps.branch_ids),
            "iterations": ", ".join(str(r.iterations) for r in snaps.solve_reports),
            "residuals": textio.fmt_list(r.final_residual_norm for r in snaps.solve_reports),
        }
    }
    if snaps.model_spec:
        sections["model"] = textio.model_spec_to_section(snaps.model_spec)
    textio.write_ini(path / "meta.txt", sections)


def load_snapshots(path):
    path = Path(path)
    cp = textio.read_ini(path / "meta.txt")
    try:
        sec = cp["snapshots"]
        if sec["version"] != STORE_VERSION:
            raise CorruptStoreError(f"{path}: unsupported store version {sec['version']}")
        N, S = int(sec["N"]), int(sec["S"])
        thetas = textio.parse_floats(sec["parameters"])
        branch_ids = textio.parse_words(sec["branch_ids"])
        iters = [int(x) for x in textio.parse_words(sec["iterations"])]
        resid = textio.parse_floats(sec["residuals"])
        steady_tol = float(sec["steady_tol"])
        model_name = sec["model_name"]
    except (KeyError, ValueError) as exc:
        raise CorruptStoreError(f"{path}/meta.txt: {exc}") from exc
    if not (len(thetas) == len(branch_ids) == len(iters) == len(resid) == S):
        raise CorruptStoreError(f"{path}/meta.txt: list lengths disagree with S={S}")
    matrix = load_matrix(path / "snapshots.mat")
    if matrix.shape != (N, S):
        raise CorruptStoreError(f"{path}: header says {N}x{S}, matrix is {matrix.shape[0]}x{matrix.shape[1]}")
    if not np.all(np.isfinite(matrix)):
        raise CorruptStoreError(f"{path}: non-finite snapshot entries")
    reports = [SteadySolveReport(matrix[:, s], iters[s], resid[s], resid[s] <= steady_tol, branch_ids[s])
               for s in range(S)]
    spec = textio.model_spec_from_section(cp["model"]) if cp.has_section("model") else None
    return SnapshotSet(model_name, ParameterSet(np.asarray(thetas)), matrix, branch_ids, reports,
                       steady_tol, spec)


def verify_snapshots(snaps, model=None):
    """Residual norm of every column against the (re-assembled) model."""
    model = model if model is not None else build_model(snaps.model_spec)
    return np.array([np.linalg.norm(model.residual(snaps.matrix[:, s], t))
                     for s, t in enumerate(snaps.thetas)])
