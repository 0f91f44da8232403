"""Offline/online orchestration over an artifact directory.

Layout written by :func:`run_offline`::

    manifest.txt          K, tags, observable index, store version
    config.txt            the resolved configuration
    snapshots/            snapshots.mat + meta.txt
    clusters/             clusters.txt (assignment, variance) + means.mat
    elbow.csv             only when K was chosen by the elbow rule
    bases/local, bases/global
    roms/<tag>/           reduced operators + init.mat (training thetas / coefficients)
    offline_report.txt    K, L_k, global sizes, switch points
"""

import csv
import io
import logging
import shutil
import tempfile
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import textio
from ._parallel import pmap
from .assignment import (CRITERIA, ExtrapolationWarning, assign, criterion_name,
                         induce_parameter_clusters, is_extrapolation, switch_points)
from .clustering import elbow_select, kmeans
from .config import PipelineConfig, load_config, parse_config, write_config
from .errors import (CorruptStoreError, DuplicatePointError, EmptyReportError, InvalidInputError,
                     LocromError, SingularJacobianError, StageError)
from .fom import build_model, steady_solve
from .linalg import load_matrix, save_matrix
from .podbasis import build_local_bases, global_basis, load_bases, project_coeffs, save_bases
from .rom import load_reduced_model, project_model, relative_error, save_reduced_model, solve_rom
from .sampling import generate_samples
from .snapshots import generate_snapshots, load_snapshots, save_snapshots

log = logging.getLogger(__name__)

STORE_VERSION = "1"
BIFURCATION_THRESHOLD = 1e-4
DIAGRAM_HEADER = ("theta", "observable", "basis_used", "converged", "extrapolation")
ERROR_HEADER = ("theta", "cluster", "fom_converged", "error_kind",
                "local_error", "local_converged",
                "global1_error", "global1_converged",
                "global2_error", "global2_converged")


def _g(x):
    return f"{float(x):.17g}"


class _Stage:
    """Context manager tagging any library failure with the stage name."""

    def __init__(self, name):
        self.name = name

    def __enter__(self):
        log.info("stage %s", self.name)

    def __exit__(self, exc_type, exc, tb):
        if exc is not None and isinstance(exc, (LocromError, OSError)) and not isinstance(exc, StageError):
            raise StageError(self.name, exc) from exc
        return False


# ---------------------------------------------------------------- offline


def run_offline(config, out=None):
    """Run every offline stage and write the artifact directory.

    ``config`` is a :class:`PipelineConfig` or a path to a config file. The
    directory is assembled in a temporary sibling and renamed into place, so
    a failing stage leaves nothing behind.
    """
    if not isinstance(config, PipelineConfig):
        with _Stage("config"):
            config = load_config(config)
    out = Path(out if out is not None else (config.output_dir or "artifacts"))
    if out.exists() and any(out.iterdir()) and not (out / "manifest.txt").exists():
        raise StageError("output", InvalidInputError(f"{out} exists and is not an artifact directory"))
    out.parent.mkdir(parents=True, exist_ok=True)
    tmp = Path(tempfile.mkdtemp(prefix=f".{out.name}-", dir=out.parent))
    try:
        _offline_into(config, tmp)
    except BaseException:
        shutil.rmtree(tmp, ignore_errors=True)
        raise
    if out.exists():
        shutil.rmtree(out)
    tmp.rename(out)
    return out


def _offline_into(cfg, root):
    write_config(root / "config.txt", cfg)

    with _Stage("model"):
        model = build_model(cfg.model)
    with _Stage("sampling"):
        params = generate_samples(cfg.sampling)
    with _Stage("snapshots"):
        snaps = generate_snapshots(model, params, cfg.steady_tol, cfg.max_iter)
        save_snapshots(snaps, root / "snapshots")

    with _Stage("clustering"):
        scan = None
        if cfg.k is None:
            scan = elbow_select(snaps, min(cfg.k_max, snaps.S), cfg.alpha, cfg.restarts, cfg.seed,
                                cfg.kmeans_max_iter)
            clusters = scan.model_for(scan.chosen_K)
            (root / "elbow.csv").write_text(scan.to_csv())
        else:
            clusters = kmeans(snaps, cfg.k, cfg.restarts, cfg.kmeans_max_iter, cfg.seed)
        _save_clusters(root / "clusters", clusters, snaps.thetas)

    with _Stage("bases"):
        local = build_local_bases(snaps, clusters, cfg.truncation)
        Ls = [b.L for b in local]
        g1 = global_basis(snaps, sum(Ls), "global1")
        g2 = global_basis(snaps, max(Ls), "global2")
        save_bases(root / "bases" / "local", local, cfg.truncation)
        save_bases(root / "bases" / "global", [g1, g2], "pod")

    with _Stage("rom"):
        tags = [f"local_{b.cluster_id}" for b in local] + ["global1", "global2"]
        roms = pmap(lambda tb: project_model(model, tb[1], tb[0]), list(zip(tags, local + [g1, g2])))
        thetas = snaps.thetas
        for rm in roms:
            if rm.tag.startswith("local_"):
                cols = clusters.members(rm.basis.cluster_id)
            else:
                cols = np.arange(snaps.S)
            coeffs = project_coeffs(rm.basis, snaps.matrix[:, cols])
            save_reduced_model(root / "roms" / rm.tag, rm)
            save_matrix(root / "roms" / rm.tag / "init.mat", np.vstack([thetas[cols], coeffs]))

    with _Stage("assignment"):
        pc = induce_parameter_clusters(params, clusters)
        switches = {c: switch_points(pc, c) for c in CRITERIA}

    with _Stage("report"):
        textio.write_ini(root / "manifest.txt", {"artifacts": {
            "version": STORE_VERSION,
            "model_name": model.name,
            "N": model.dim,
            "K": clusters.K,
            "observable_index": model.observable_index,
            "tags": ", ".join(rm.tag for rm in roms),
        }})
        report = {
            "K": clusters.K,
            "K_source": "elbow" if scan is not None else "fixed",
            "elbow_flagged": int(scan.flagged) if scan is not None else 0,
            "S": snaps.S,
            "N": snaps.N,
            "variance": textio.fmt(clusters.variance),
            "L": ", ".join(str(L) for L in Ls),
            "global1_size": g1.L,
            "global2_size": g2.L,
            "truncation": cfg.truncation.describe(),
            "cluster_theta_ranges": ", ".join(
                f"{textio.fmt(p.min())}:{textio.fmt(p.max())}" for p in pc.cluster_params),
        }
        for c in CRITERIA:
            report[f"switch_points_{c}"] = textio.fmt_list(switches[c])
        textio.write_ini(root / "offline_report.txt", {"offline": report})


def _save_clusters(path, clusters, thetas):
    path.mkdir(parents=True, exist_ok=True)
    save_matrix(path / "means.mat", clusters.means)
    textio.write_ini(path / "clusters.txt", {"clusters": {
        "K": clusters.K,
        "assignment": ", ".join(str(int(a)) for a in clusters.assignment),
        "thetas": textio.fmt_list(thetas),
        "variance": textio.fmt(clusters.variance),
        "seed": clusters.seed,
        "restarts": clusters.restarts_used,
        "iterations": clusters.iterations,
    }})


# ---------------------------------------------------------------- loading


@dataclass(frozen=True)
class Artifacts:
    root: Path
    config: PipelineConfig
    K: int
    observable_index: int
    thetas: np.ndarray
    assignment: np.ndarray
    roms: dict        # tag -> ReducedModel with its basis attached
    inits: dict       # tag -> (thetas, coefficient matrix L x n)
    param_clusters: object

    def local(self, k):
        return self.roms[f"local_{k}"]

    def initial_guess(self, tag, theta):
        """Coefficients of the training snapshot nearest in parameter."""
        ts, coeffs = self.inits[tag]
        return coeffs[:, int(np.argmin(np.abs(ts - theta)))].copy()

    def snapshots(self):
        return load_snapshots(self.root / "snapshots")


def load_artifacts(root):
    """Load and cross-check everything the online stage needs."""
    root = Path(root)
    if not root.is_dir():
        raise CorruptStoreError(f"{root}: no such artifact directory")
    try:
        man = textio.read_ini(root / "manifest.txt")["artifacts"]
        if man["version"] != STORE_VERSION:
            raise CorruptStoreError(f"{root}: unsupported artifact version {man['version']}")
        K, N, obs = int(man["K"]), int(man["N"]), int(man["observable_index"])
        tags = textio.parse_words(man["tags"])
        config = parse_config((root / "config.txt").read_text())
        cl = textio.read_ini(root / "clusters" / "clusters.txt")["clusters"]
        assignment = np.array([int(a) for a in textio.parse_words(cl["assignment"])])
        thetas = np.array(textio.parse_floats(cl["thetas"]))
        local = load_bases(root / "bases" / "local")
        glob = load_bases(root / "bases" / "global")
        bases = {f"local_{b.cluster_id}": b for b in local}
        bases.update({b.cluster_id: b for b in glob})
        roms, inits = {}, {}
        for tag in tags:
            if tag not in bases:
                raise CorruptStoreError(f"{root}: no basis stored for reduced model {tag}")
            b = bases[tag]
            if b.N != N:
                raise CorruptStoreError(f"{root}: basis {tag} has {b.N} rows, expected {N}")
            roms[tag] = load_reduced_model(root / "roms" / tag, basis=b)
            init = load_matrix(root / "roms" / tag / "init.mat")
            if init.shape[0] != b.L + 1:
                raise CorruptStoreError(f"{root}/roms/{tag}/init.mat: wrong row count")
            inits[tag] = (init[0].copy(), init[1:].copy())
    except (KeyError, ValueError, OSError) as exc:
        raise CorruptStoreError(f"{root}: {exc}") from exc
    if len(assignment) != len(thetas) or set(assignment.tolist()) != set(range(K)):
        raise CorruptStoreError(f"{root}: cluster assignment inconsistent with K={K}")
    if any(f"local_{k}" not in roms for k in range(K)) or not {"global1", "global2"} <= roms.keys():
        raise CorruptStoreError(f"{root}: missing reduced models")
    if not 0 <= obs < N:
        raise CorruptStoreError(f"{root}: observable index {obs} outside [0, {N})")
    pc = induce_parameter_clusters(thetas, assignment)
    return Artifacts(root, config, K, obs, thetas, assignment, roms, inits, pc)


def _ensure_loaded(artifacts):
    if isinstance(artifacts, Artifacts):
        return artifacts
    with _Stage("load"):
        return load_artifacts(artifacts)


# ---------------------------------------------------------------- online


@dataclass(frozen=True)
class DiagramRow:
    theta: float
    observable: float
    basis_used: int
    converged: bool
    extrapolation: bool
    iterations: int = 0


@dataclass(frozen=True)
class BifurcationDiagram:
    rows: tuple
    criterion: str

    @property
    def thetas(self):
        return np.array([r.theta for r in self.rows])

    @property
    def observables(self):
        return np.array([r.observable for r in self.rows])

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(DIAGRAM_HEADER)
        for r in self.rows:
            w.writerow([_g(r.theta), _g(r.observable), r.basis_used, int(r.converged), int(r.extrapolation)])
        return buf.getvalue()

    def write(self, path):
        Path(path).write_text(self.to_csv())


def _sorted_thetas(thetas):
    t = np.sort(np.asarray(list(thetas), dtype=np.float64))
    if t.size and np.any(np.diff(t) <= 0):
        raise DuplicatePointError("theta list contains duplicates")
    if not np.all(np.isfinite(t)):
        raise InvalidInputError("theta list contains non-finite values")
    return t


def theta_range(lo, hi, count):
    if count < 0:
        raise InvalidInputError("count must be >= 0")
    if count == 1:
        return np.array([float(lo)])
    if count > 1 and not lo < hi:
        raise InvalidInputError(f"empty range [{lo}, {hi}]")
    return np.linspace(float(lo), float(hi), count)


def _online_point(art, theta, crit):
    cfg = art.config
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ExtrapolationWarning)
        k = assign(theta, art.param_clusters, crit)
    tag = f"local_{k}"
    rm = art.roms[tag]
    rep = solve_rom(rm, theta, art.initial_guess(tag, theta), cfg.rom_tol, cfg.rom_max_iter, cfg.rom_method)
    # only the observable's row of the basis is touched
    obs = float(rm.basis.basis[art.observable_index] @ rep.coeffs)
    return DiagramRow(float(theta), obs, k, rep.converged,
                      is_extrapolation(theta, art.param_clusters), rep.iterations)


def run_online(artifacts, thetas, criterion=None):
    """Assign, solve and evaluate the observable at every requested theta."""
    art = _ensure_loaded(artifacts)
    with _Stage("online"):
        crit = criterion_name(criterion or art.config.criterion)
        t = _sorted_thetas(thetas)
        rows = pmap(lambda x: _online_point(art, x, crit), t)
    return BifurcationDiagram(tuple(rows), crit)


def estimate_bifurcation(diagram, threshold=BIFURCATION_THRESHOLD):
    """First converged theta whose |observable| exceeds ``threshold``."""
    for r in diagram.rows:
        if r.converged and abs(r.observable) > threshold:
            return r.theta
    return None


# ---------------------------------------------------------------- errors


@dataclass(frozen=True)
class ErrorRow:
    theta: float
    cluster: int
    fom_converged: bool
    error_kind: str        # "relative", or "absolute" when the full solution is zero
    errors: tuple          # local, global1, global2
    converged: tuple


@dataclass(frozen=True)
class ErrorReport:
    rows: tuple
    criterion: str
    notes: tuple = ()

    def _included(self):
        return [r for r in self.rows if r.fom_converged]

    @property
    def mean(self):
        inc = self._included()
        return tuple(float(np.mean([r.errors[i] for r in inc])) if inc else float("nan") for i in range(3))

    @property
    def max(self):
        inc = self._included()
        return tuple(float(np.max([r.errors[i] for r in inc])) if inc else float("nan") for i in range(3))

    def column(self, name):
        i = ("local", "global1", "global2").index(name)
        return np.array([r.errors[i] for r in self.rows])

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(ERROR_HEADER)
        for r in self.rows:
            row = [_g(r.theta), r.cluster, int(r.fom_converged), r.error_kind]
            for e, c in zip(r.errors, r.converged):
                row += [_g(e), int(c)]
            w.writerow(row)
        for name, agg in (("mean", self.mean), ("max", self.max)):
            row = [name, "", "", ""]
            for e in agg:
                row += [_g(e), ""]
            w.writerow(row)
        for note in self.notes:
            buf.write(f"# {note}\n")
        return buf.getvalue()

    def write(self, path):
        Path(path).write_text(self.to_csv())


def default_held_out(thetas, count=10):
    """Midpoints of ``count`` equal bins over the training range, minus collisions."""
    lo, hi = float(np.min(thetas)), float(np.max(thetas))
    pts = lo + (np.arange(count) + 0.5) * (hi - lo) / count
    return np.array([p for p in pts if np.min(np.abs(thetas - p)) > 1e-12])


def _error(u_full, u_rom, absolute):
    if absolute:
        return float(np.linalg.norm(u_rom - u_full))
    return relative_error(u_full, u_rom)


def run_errors(artifacts, held_out=None, criterion=None):
    """Local vs Global-1/Global-2 errors against full-order solves."""
    art = _ensure_loaded(artifacts)
    cfg = art.config
    with _Stage("errors"):
        crit = criterion_name(criterion or cfg.criterion)
        held = default_held_out(art.thetas) if held_out is None else _sorted_thetas(held_out)
        if held.size == 0:
            raise EmptyReportError("no held-out parameters")
        clash = [t for t in held if np.min(np.abs(art.thetas - t)) <= 1e-12]
        if clash:
            raise InvalidInputError(f"held-out values coincide with training samples: {clash}")
        model = build_model(cfg.model)

        def one(theta):
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", ExtrapolationWarning)
                k = assign(theta, art.param_clusters, crit)
            branch = model.branch_for(theta)
            try:
                fom = steady_solve(model, theta, model.branch_seed(theta, branch),
                                   cfg.steady_tol, cfg.max_iter, branch)
                u, ok = fom.solution, fom.converged
            except SingularJacobianError as exc:
                u, ok = exc.iterate, False
            absolute = float(np.linalg.norm(u)) == 0.0
            errs, convs = [], []
            for tag in (f"local_{k}", "global1", "global2"):
                rm = art.roms[tag]
                rep = solve_rom(rm, theta, art.initial_guess(tag, theta),
                                cfg.rom_tol, cfg.rom_max_iter, cfg.rom_method)
                # non-converged solves still report the last iterate's error
                errs.append(_error(u, rm.basis.basis @ rep.coeffs, absolute))
                convs.append(rep.converged)
            return ErrorRow(float(theta), k, ok, "absolute" if absolute else "relative",
                            tuple(errs), tuple(convs))

        rows = tuple(pmap(one, held))
    notes = tuple(f"full-order solve did not converge at theta={_g(r.theta)}; row excluded from aggregates"
                  for r in rows if not r.fom_converged)
    for n in notes:
        log.warning(n)
    return ErrorReport(rows, crit, notes)


# ---------------------------------------------------------------- elbow


def rescan_elbow(artifacts, k_max, alpha):
    """Re-run the elbow scan on stored snapshots without touching the artifacts."""
    root = artifacts.root if isinstance(artifacts, Artifacts) else Path(artifacts)
    with _Stage("load"):
        snaps = load_snapshots(root / "snapshots")
        cfg = parse_config((root / "config.txt").read_text())
    with _Stage("clustering"):
        return elbow_select(snaps, k_max, alpha, cfg.restarts, cfg.seed, cfg.kmeans_max_iter)
