"""Full-order models with polynomial residuals and the steady Newton solver.

Every model exposes its discrete residual through an ``OperatorDecomposition``

    r(u, t) = (A0 + t A1) u + sQ(t) Q:(u,u) + sC(t) C:(u,u,u) - (f0 + t f1)

where ``sQ``/``sC`` are 1 or ``t`` depending on whether the tensor is stored
parameter-free. The two built-in models discretize the steady
Chafee-Infante problem ``u'' + t (u - u^3) = 0`` with zero Dirichlet ends.
"""

import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    InvalidInputError,
    InvalidScheduleError,
    OutOfDomainError,
    SingularJacobianError,
    SingularMatrixError,
)
from .linalg import lu_solve

log = logging.getLogger(__name__)

DEFAULT_STEADY_TOL = 1e-10
DEFAULT_MAX_ITER = 100
DEFAULT_SEED_AMPLITUDE = 1.0
DEFAULT_MODAL_SCHEDULE = ((12.0, 45.0, 1), (45.0, 95.0, 2), (95.0, 120.0, 3))


@dataclass(frozen=True)
class SparseTensor:
    """COO tensor of order 3 or 4; ``indices`` is (nnz, order)."""

    shape: tuple
    indices: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        idx = np.asarray(self.indices, dtype=np.int64)
        if idx.ndim != 2 or idx.shape[1] != len(self.shape):
            raise InvalidInputError("indices must be (nnz, order)")
        if idx.size and (idx.min() < 0 or np.any(idx.max(axis=0) >= np.asarray(self.shape))):
            raise InvalidInputError("tensor index out of bounds")
        object.__setattr__(self, "indices", idx)
        object.__setattr__(self, "values", np.asarray(self.values, dtype=np.float64))

    @property
    def order(self):
        return len(self.shape)

    def to_dense(self):
        T = np.zeros(self.shape)
        np.add.at(T, tuple(self.indices.T), self.values)
        return T

    def apply(self, u):
        """Full contraction over every trailing slot with ``u``."""
        idx, v = self.indices, self.values.copy()
        for slot in range(1, self.order):
            v = v * u[idx[:, slot]]
        out = np.zeros(self.shape[0])
        np.add.at(out, idx[:, 0], v)
        return out

    def jacobian(self, u):
        """Derivative of ``apply`` at ``u`` as a dense matrix."""
        n = self.shape[0]
        J = np.zeros((n, n))
        idx = self.indices
        for slot in range(1, self.order):
            v = self.values.copy()
            for other in range(1, self.order):
                if other != slot:
                    v = v * u[idx[:, other]]
            np.add.at(J, (idx[:, 0], idx[:, slot]), v)
        return J

    def project(self, basis):
        """Galerkin projection ``T_r[a,b,..] = sum T[i,j,..] Psi[i,a] Psi[j,b] ..``."""
        rows = [basis[self.indices[:, s]] for s in range(self.order)]
        if self.order == 3:
            return np.einsum("n,na,nb,nc->abc", self.values, *rows, optimize=True)
        if self.order == 4:
            return np.einsum("n,na,nb,nc,nd->abcd", self.values, *rows, optimize=True)
        raise InvalidInputError(f"unsupported tensor order {self.order}")


@dataclass(frozen=True)
class OperatorDecomposition:
    dim: int
    linear_const: np.ndarray
    linear_param: np.ndarray
    load_const: np.ndarray
    load_param: np.ndarray
    quad_tensor: SparseTensor = None
    cubic_tensor: SparseTensor = None
    quad_param_scaled: bool = False
    cubic_param_scaled: bool = False
    # Picard split: move t*A1 to the right-hand side (needed when the load is zero).
    lag_param_linear: bool = False

    def __post_init__(self):
        n = self.dim
        for name in ("linear_const", "linear_param"):
            if np.shape(getattr(self, name)) != (n, n):
                raise InvalidInputError(f"{name} must be {n}x{n}")
        for name in ("load_const", "load_param"):
            if np.shape(getattr(self, name)) != (n,):
                raise InvalidInputError(f"{name} must have length {n}")
        for t, order in ((self.quad_tensor, 3), (self.cubic_tensor, 4)):
            if t is not None and (t.order != order or any(s != n for s in t.shape)):
                raise InvalidInputError(f"order-{order} tensor must have all dims {n}")

    def scale(self, which, theta):
        flag = self.quad_param_scaled if which == "quad" else self.cubic_param_scaled
        return theta if flag else 1.0

    def residual(self, u, theta):
        r = (self.linear_const + theta * self.linear_param) @ u
        if self.quad_tensor is not None:
            r += self.scale("quad", theta) * self.quad_tensor.apply(u)
        if self.cubic_tensor is not None:
            r += self.scale("cubic", theta) * self.cubic_tensor.apply(u)
        return r - (self.load_const + theta * self.load_param)

    def jacobian(self, u, theta):
        J = self.linear_const + theta * self.linear_param
        if self.quad_tensor is not None:
            J = J + self.scale("quad", theta) * self.quad_tensor.jacobian(u)
        if self.cubic_tensor is not None:
            J = J + self.scale("cubic", theta) * self.cubic_tensor.jacobian(u)
        return J


@dataclass(frozen=True)
class SteadySolveReport:
    solution: np.ndarray
    iterations: int
    final_residual_norm: float
    converged: bool
    branch_id: str = None


class FullOrderModel:
    """Base class: a parameterized polynomial residual plus branch protocol.

    Subclasses provide ``branch_seed``, ``branch_for`` and ``spec``.
    """

    name = "abstract"

    def __init__(self, operators, parameter_domain, grid, observable_index):
        self.operators = operators
        self.parameter_domain = (float(parameter_domain[0]), float(parameter_domain[1]))
        self.grid = np.asarray(grid, dtype=np.float64)
        self.observable_index = int(observable_index)

    @property
    def dim(self):
        return self.operators.dim

    def in_domain(self, theta):
        lo, hi = self.parameter_domain
        return lo <= theta <= hi

    def residual(self, u, theta):
        return self.operators.residual(np.asarray(u, dtype=np.float64), theta)

    def jacobian(self, u, theta):
        return self.operators.jacobian(np.asarray(u, dtype=np.float64), theta)

    def observable(self, u):
        return float(u[self.observable_index])

    def branch_seed(self, theta, branch_id):
        raise NotImplementedError

    def branch_for(self, theta):
        raise NotImplementedError

    @property
    def spec(self):
        raise NotImplementedError


def laplacian_eigenvalue(k, n_interior, domain_length=1.0):
    """k-th eigenvalue of the centered-difference Dirichlet operator -D2."""
    h = domain_length / (n_interior + 1)
    return 4.0 / h**2 * np.sin(k * np.pi * h / (2.0 * domain_length)) ** 2


def _chafee_infante_operators(n, length):
    h = length / (n + 1)
    A0 = (np.diag(-2.0 * np.ones(n)) + np.diag(np.ones(n - 1), 1) + np.diag(np.ones(n - 1), -1)) / h**2
    i = np.arange(n)
    cubic = SparseTensor((n, n, n, n), np.stack([i, i, i, i], axis=1), -np.ones(n))
    ops = OperatorDecomposition(
        dim=n,
        linear_const=A0,
        linear_param=np.eye(n),
        load_const=np.zeros(n),
        load_param=np.zeros(n),
        cubic_tensor=cubic,
        cubic_param_scaled=True,
        lag_param_linear=True,
    )
    return ops, np.arange(1, n + 1) * h


class _ChafeeInfanteModel(FullOrderModel):
    def __init__(self, n_interior, domain_length, parameter_domain, observable_fraction, seed_amplitude):
        n_interior = int(n_interior)
        if n_interior < 8:
            raise InvalidInputError(f"n_interior must be >= 8, got {n_interior}")
        if domain_length <= 0:
            raise InvalidInputError("domain_length must be positive")
        ops, x = _chafee_infante_operators(n_interior, float(domain_length))
        obs = int(np.argmin(np.abs(x - observable_fraction * domain_length)))
        super().__init__(ops, parameter_domain, x, obs)
        self.n_interior = n_interior
        self.domain_length = float(domain_length)
        self.seed_amplitude = float(seed_amplitude)

    def mode(self, k):
        return np.sin(k * np.pi * self.grid / self.domain_length)


class PitchforkModel(_ChafeeInfanteModel):
    """Supercritical pitchfork at the first Laplacian eigenvalue.

    Below the critical value only ``u = 0`` exists; above it the ``upper`` and
    ``lower`` branches are mirror images. ``branch_for`` follows ``branch``
    above the threshold and the trivial state below it.
    """

    name = "pitchfork"
    BRANCHES = ("upper", "lower", "trivial")

    def __init__(self, n_interior, domain_length=1.0, branch="lower",
                 parameter_domain=(0.0, 1000.0), seed_amplitude=DEFAULT_SEED_AMPLITUDE):
        if branch not in self.BRANCHES:
            raise InvalidInputError(f"unknown branch {branch!r}")
        super().__init__(n_interior, domain_length, parameter_domain, 0.3, seed_amplitude)
        self.branch = branch
        self.critical_parameter = laplacian_eigenvalue(1, self.n_interior, self.domain_length)

    def branch_seed(self, theta, branch_id):
        if branch_id == "trivial":
            return np.zeros(self.dim)
        if branch_id not in self.BRANCHES:
            raise InvalidInputError(f"unknown branch {branch_id!r}")
        sign = 1.0 if branch_id == "upper" else -1.0
        return sign * self.seed_amplitude * self.mode(1)

    def branch_for(self, theta):
        return self.branch if theta > self.critical_parameter else "trivial"

    @property
    def spec(self):
        return {
            "name": self.name,
            "n_interior": self.n_interior,
            "domain_length": self.domain_length,
            "branch": self.branch,
            "seed_amplitude": self.seed_amplitude,
            "parameter_domain": self.parameter_domain,
        }


class ModalModel(_ChafeeInfanteModel):
    """Same operators, but the seeded mode count jumps at schedule boundaries."""

    name = "modal"

    def __init__(self, n_interior, branch_schedule=DEFAULT_MODAL_SCHEDULE, domain_length=1.0,
                 seed_amplitude=DEFAULT_SEED_AMPLITUDE):
        schedule = tuple((float(lo), float(hi), int(k)) for lo, hi, k in branch_schedule)
        _check_schedule(schedule, domain_length)
        super().__init__(n_interior, domain_length, (schedule[0][0], schedule[-1][1]), 0.7, seed_amplitude)
        self.schedule = schedule

    def branch_for(self, theta):
        for i, (lo, hi, k) in enumerate(self.schedule):
            last = i == len(self.schedule) - 1
            if lo <= theta < hi or (last and theta == hi):
                return f"mode{k}"
        raise OutOfDomainError(f"theta={theta} outside the branch schedule", [theta])

    def branch_seed(self, theta, branch_id):
        if not branch_id.startswith("mode"):
            raise InvalidInputError(f"unknown branch {branch_id!r}")
        return self.seed_amplitude * self.mode(int(branch_id[4:]))

    @property
    def spec(self):
        return {
            "name": self.name,
            "n_interior": self.n_interior,
            "domain_length": self.domain_length,
            "schedule": self.schedule,
            "seed_amplitude": self.seed_amplitude,
        }


def _check_schedule(schedule, length):
    if not schedule:
        raise InvalidScheduleError("empty branch schedule")
    prev_hi = -np.inf
    for lo, hi, k in schedule:
        if not lo < hi:
            raise InvalidScheduleError(f"interval [{lo}, {hi}) is empty")
        if lo < prev_hi:
            raise InvalidScheduleError("schedule intervals must be disjoint and ordered")
        if k < 1:
            raise InvalidScheduleError(f"mode {k} must be >= 1")
        threshold = (k * np.pi / length) ** 2
        if not threshold < lo:
            raise InvalidScheduleError(
                f"mode {k} needs theta > {threshold:.4g} but its interval starts at {lo}")
        prev_hi = hi


def make_pitchfork_model(n_interior, domain_length=1.0, **kwargs):
    return PitchforkModel(n_interior, domain_length, **kwargs)


def make_modal_model(n_interior, branch_schedule=DEFAULT_MODAL_SCHEDULE, **kwargs):
    return ModalModel(n_interior, branch_schedule, **kwargs)


def build_model(spec):
    """Rebuild a model from its ``spec`` dictionary."""
    spec = dict(spec)
    name = spec.pop("name")
    if name == "pitchfork":
        if "parameter_domain" in spec:
            spec["parameter_domain"] = tuple(spec["parameter_domain"])
        return PitchforkModel(**spec)
    if name == "modal":
        spec["branch_schedule"] = spec.pop("schedule", DEFAULT_MODAL_SCHEDULE)
        return ModalModel(**spec)
    raise InvalidInputError(f"unknown model {name!r}")


def steady_solve(model, theta, init, steady_tol=DEFAULT_STEADY_TOL, max_iter=DEFAULT_MAX_ITER,
                 branch_id=None):
    """Damped Newton on the steady residual.

    Each step halves its length until the residual norm decreases. Running out
    of iterations, or a step that cannot reduce the residual at all, yields a
    non-converged report rather than an exception.
    """
    if not model.in_domain(theta):
        raise OutOfDomainError(f"theta={theta} outside {model.parameter_domain}", [theta])
    if steady_tol <= 0:
        raise InvalidInputError("steady_tol must be positive")
    u = np.array(init, dtype=np.float64)
    if u.shape != (model.dim,):
        raise InvalidInputError(f"init must have length {model.dim}")
    r = model.residual(u, theta)
    nr = float(np.linalg.norm(r))
    it = 0
    while nr > steady_tol and it < max_iter:
        try:
            du = lu_solve(model.jacobian(u, theta), -r)
        except SingularMatrixError as exc:
            raise SingularJacobianError(f"singular Jacobian at theta={theta}: {exc}", iterate=u) from exc
        step, best = 1.0, None
        while step >= 2.0**-30:
            trial = u + step * du
            rt = model.residual(trial, theta)
            nt = float(np.linalg.norm(rt))
            if best is None or nt < best[2]:
                best = (trial, rt, nt)
            if nt < nr:
                break
            step *= 0.5
        it += 1
        if best[2] >= nr:
            log.debug("Newton stagnated at residual %.3e (theta=%r)", nr, theta)
            break
        u, r, nr = best
    return SteadySolveReport(u, it, nr, nr <= steady_tol, branch_id)


def count_sign_changes(u, rel_tol=1e-8):
    """Interior sign changes, ignoring entries below rel_tol * max|u|."""
    u = np.asarray(u)
    scale = np.abs(u).max() if u.size else 0.0
    if scale == 0.0:
        return 0
    s = np.sign(u[np.abs(u) > rel_tol * scale])
    return int(np.count_nonzero(s[1:] != s[:-1]))
