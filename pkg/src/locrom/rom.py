"""Galerkin-projected reduced models and their fixed-point solver."""

import logging
import math
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from . import textio
from .errors import (
    CorruptStoreError,
    InconsistentDecompositionError,
    InvalidInputError,
    SingularMatrixError,
    UndefinedRelativeError,
)
from .linalg import load_matrix, load_tensor, lu_solve, save_matrix, save_tensor
from .podbasis import LocalBasis, global_basis

log = logging.getLogger(__name__)

DEFAULT_ROM_TOL = 1e-10
DEFAULT_ROM_MAX_ITER = 3000


@dataclass(frozen=True)
class ReducedModel:
    tag: str
    A0: np.ndarray
    A1: np.ndarray
    f0: np.ndarray
    f1: np.ndarray
    Q: np.ndarray = None
    C: np.ndarray = None
    quad_param_scaled: bool = False
    cubic_param_scaled: bool = False
    lag_param_linear: bool = False
    basis: LocalBasis = None

    @property
    def L(self):
        return self.A0.shape[0]

    @property
    def is_linear(self):
        return self.Q is None and self.C is None

    def _sq(self, theta):
        return theta if self.quad_param_scaled else 1.0

    def _sc(self, theta):
        return theta if self.cubic_param_scaled else 1.0

    def residual(self, a, theta):
        r = (self.A0 + theta * self.A1) @ a - (self.f0 + theta * self.f1)
        if self.Q is not None:
            r += self._sq(theta) * np.einsum("ijk,j,k->i", self.Q, a, a)
        if self.C is not None:
            r += self._sc(theta) * np.einsum("ijkl,j,k,l->i", self.C, a, a, a)
        return r

    def jacobian(self, a, theta):
        J = self.A0 + theta * self.A1
        if self.Q is not None:
            J = J + self._sq(theta) * (np.einsum("ijk,j->ik", self.Q, a) + np.einsum("ijk,k->ij", self.Q, a))
        if self.C is not None:
            J = J + self._sc(theta) * (np.einsum("ijkl,k,l->ij", self.C, a, a)
                                       + np.einsum("ijkl,j,l->ik", self.C, a, a)
                                       + np.einsum("ijkl,j,k->il", self.C, a, a))
        return J

    def frozen_system(self, a, theta):
        """Picard linearization at ``a``: nonlinear factors frozen, last slot unknown."""
        return self._picard_step(theta)(a)

    def _picard_step(self, theta):
        # theta-dependent pieces are fixed for a whole solve
        L = self.L
        lag = self.lag_param_linear
        M0 = self.A0 if lag else self.A0 + theta * self.A1
        rhs0 = self.f0 + theta * self.f1
        tA1 = theta * self.A1
        Q = None if self.Q is None else self._sq(theta) * self.Q.reshape(L, L, L)
        C = None if self.C is None else self._sc(theta) * self.C.reshape(L, L * L, L)

        def system(a):
            M = M0.copy()
            if Q is not None:
                M += np.einsum("ijk,j->ik", Q, a)
            if C is not None:
                M += np.einsum("ijl,j->il", C, np.outer(a, a).ravel())
            return M, (rhs0 - tA1 @ a if lag else rhs0)

        return system


@dataclass(frozen=True)
class RomSolveReport:
    coeffs: np.ndarray
    iterations: int
    converged: bool
    final_increment: float
    basis_used: object = None
    message: str = ""


def project_model(model, basis, tag=None):
    """Galerkin projection of the model's operators onto ``basis``."""
    ops = getattr(model, "operators", model)
    Psi = np.asarray(getattr(basis, "basis", basis), dtype=np.float64)
    if Psi.shape[0] != ops.dim:
        raise InvalidInputError(f"basis has {Psi.shape[0]} rows, model dimension is {ops.dim}")
    if ops.quad_param_scaled and ops.quad_tensor is None:
        raise InconsistentDecompositionError("quadratic term flagged but no quadratic tensor stored")
    if ops.cubic_param_scaled and ops.cubic_tensor is None:
        raise InconsistentDecompositionError("cubic term flagged but no cubic tensor stored")
    tag = tag if tag is not None else str(getattr(basis, "cluster_id", "basis"))
    return ReducedModel(
        tag=tag,
        A0=Psi.T @ ops.linear_const @ Psi,
        A1=Psi.T @ ops.linear_param @ Psi,
        f0=Psi.T @ ops.load_const,
        f1=Psi.T @ ops.load_param,
        Q=None if ops.quad_tensor is None else ops.quad_tensor.project(Psi),
        C=None if ops.cubic_tensor is None else ops.cubic_tensor.project(Psi),
        quad_param_scaled=ops.quad_param_scaled,
        cubic_param_scaled=ops.cubic_param_scaled,
        lag_param_linear=ops.lag_param_linear,
        basis=basis if isinstance(basis, LocalBasis) else None,
    )


def _increment(a_next, a):
    # relative for O(1) states, absolute near zero
    d = a_next - a
    return math.sqrt(d @ d) / max(math.sqrt(a_next @ a_next), 1.0)


def solve_rom(rm, theta, init, rom_tol=DEFAULT_ROM_TOL, max_iter=DEFAULT_ROM_MAX_ITER, method="picard"):
    """Solve the reduced steady system.

    ``picard`` freezes the nonlinear factors at the current iterate and solves
    the resulting L x L system; ``newton`` uses the reduced Jacobian.
    Non-convergence (including a singular linear system) is reported, not
    raised; the report then carries the last iterate.
    """
    if method not in ("picard", "newton"):
        raise InvalidInputError(f"unknown method {method!r}")
    a = np.array(init, dtype=np.float64)
    if a.shape != (rm.L,):
        raise InvalidInputError(f"init must have length {rm.L}")

    if rm.is_linear:
        try:
            a = lu_solve(rm.A0 + theta * rm.A1, rm.f0 + theta * rm.f1)
        except SingularMatrixError as exc:
            return RomSolveReport(a, 1, False, np.inf, rm.tag, f"singular reduced matrix: {exc}")
        return RomSolveReport(a, 1, True, 0.0, rm.tag)

    inc = np.inf
    frozen = rm._picard_step(theta)
    for it in range(1, max_iter + 1):
        try:
            if method == "picard":
                a_next = lu_solve(*frozen(a))
            else:
                a_next = a + lu_solve(rm.jacobian(a, theta), -rm.residual(a, theta))
        except SingularMatrixError as exc:
            return RomSolveReport(a, it, False, inc, rm.tag, f"singular linear system: {exc}")
        except InvalidInputError as exc:  # overflow in the frozen matrix
            return RomSolveReport(a, it, False, inc, rm.tag, f"linear system not finite: {exc}")
        if not np.all(np.isfinite(a_next)):
            return RomSolveReport(a, it, False, inc, rm.tag, "iterate became non-finite")
        inc = _increment(a_next, a)
        a = a_next
        if inc <= rom_tol:
            return RomSolveReport(a, it, True, inc, rm.tag)
    return RomSolveReport(a, max_iter, False, inc, rm.tag, f"no convergence after {max_iter} iterations")


def relative_error(u_full, u_rom):
    """|u_full - u_rom| / |u_full| (uniform grid weights cancel)."""
    u_full = np.asarray(u_full, dtype=np.float64)
    u_rom = np.asarray(u_rom, dtype=np.float64)
    if u_full.shape != u_rom.shape:
        raise InvalidInputError("vectors differ in length")
    nf = float(np.linalg.norm(u_full))
    if nf == 0.0:
        raise UndefinedRelativeError("full-order solution has zero norm")
    return float(np.linalg.norm(u_full - u_rom)) / nf


def global_bases(snapshots, local_bases):
    """Global-1 (sum of local sizes) and Global-2 (largest local size) POD bases."""
    Ls = [b.L for b in local_bases]
    return (global_basis(snapshots, sum(Ls), "global1"),
            global_basis(snapshots, max(Ls), "global2"))


def build_global_roms(model, snapshots, local_bases):
    g1, g2 = global_bases(snapshots, local_bases)
    return project_model(model, g1, "global1"), project_model(model, g2, "global2")


def save_reduced_model(path, rm):
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    save_matrix(path / "A0.mat", rm.A0)
    save_matrix(path / "A1.mat", rm.A1)
    save_matrix(path / "f.mat", np.column_stack([rm.f0, rm.f1]))
    if rm.Q is not None:
        save_tensor(path / "Q.ten", rm.Q)
    if rm.C is not None:
        save_tensor(path / "C.ten", rm.C)
    textio.write_ini(path / "rom_meta.txt", {"rom": {
        "tag": rm.tag,
        "L": rm.L,
        "has_quad": int(rm.Q is not None),
        "has_cubic": int(rm.C is not None),
        "quad_param_scaled": int(rm.quad_param_scaled),
        "cubic_param_scaled": int(rm.cubic_param_scaled),
        "lag_param_linear": int(rm.lag_param_linear),
    }})


def load_reduced_model(path, basis=None):
    path = Path(path)
    cp = textio.read_ini(path / "rom_meta.txt")
    try:
        sec = cp["rom"]
        L = int(sec["L"])
        flags = {k: bool(int(sec[k])) for k in
                 ("has_quad", "has_cubic", "quad_param_scaled", "cubic_param_scaled", "lag_param_linear")}
        tag = sec["tag"]
    except (KeyError, ValueError) as exc:
        raise CorruptStoreError(f"{path}/rom_meta.txt: {exc}") from exc
    A0, A1, F = load_matrix(path / "A0.mat"), load_matrix(path / "A1.mat"), load_matrix(path / "f.mat")
    if A0.shape != (L, L) or A1.shape != (L, L) or F.shape != (L, 2):
        raise CorruptStoreError(f"{path}: reduced operator shapes disagree with L={L}")
    Q = C = None
    try:
        if flags["has_quad"]:
            Q = load_tensor(path / "Q.ten")
        if flags["has_cubic"]:
            C = load_tensor(path / "C.ten")
    except FileNotFoundError as exc:
        raise InconsistentDecompositionError(f"{path}: missing tensor file {exc.filename}") from exc
    if (Q is not None and Q.shape != (L,) * 3) or (C is not None and C.shape != (L,) * 4):
        raise CorruptStoreError(f"{path}: tensor shapes disagree with L={L}")
    if basis is not None and basis.L != L:
        raise CorruptStoreError(f"{path}: basis has {basis.L} columns, reduced model has {L}")
    return ReducedModel(tag, A0, A1, F[:, 0].copy(), F[:, 1].copy(), Q, C,
                        flags["quad_param_scaled"], flags["cubic_param_scaled"], flags["lag_param_linear"],
                        basis)
