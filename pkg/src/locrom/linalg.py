"""Small dense linear algebra kernels and the binary matrix container.

Matrices are plain 2-D float64 numpy arrays in memory; the column-major
layout only matters at the file boundary (``LROMMAT1``).
"""

import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (
    CorruptStoreError,
    InvalidInputError,
    NumericalFailureError,
    SingularMatrixError,
)

__all__ = [
    "ThinSvd",
    "thin_svd",
    "lu_factor",
    "lu_solve",
    "jacobi_eigh",
    "smallest_eigenpair",
    "save_matrix",
    "load_matrix",
    "save_tensor",
    "load_tensor",
    "export_csv",
    "RANK_RTOL",
]

MATRIX_MAGIC = b"LROMMAT1"
TENSOR_MAGIC = b"LROMTEN1"
# singular values below RANK_RTOL * sigma_max count as zero for rank decisions
RANK_RTOL = 1e-12
MAX_SWEEPS = 60


def _as_finite_matrix(A, name="A"):
    A = np.asarray(A, dtype=np.float64)
    if A.ndim != 2:
        raise InvalidInputError(f"{name} must be 2-D, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise InvalidInputError(f"{name} contains non-finite entries")
    return A


@dataclass(frozen=True)
class ThinSvd:
    left: np.ndarray
    singular_values: np.ndarray
    right: np.ndarray

    @property
    def rank(self):
        """Numerical rank: count of values above RANK_RTOL * sigma_max."""
        s = self.singular_values
        if s.size == 0 or s[0] == 0.0:
            return 0
        return int(np.count_nonzero(s > RANK_RTOL * s[0]))

    def reconstruct(self, L=None):
        L = len(self.singular_values) if L is None else L
        return (self.left[:, :L] * self.singular_values[:L]) @ self.right[:, :L].T


def _round_robin(n):
    """Tournament schedule: n-1 rounds of n/2 disjoint pairs (n even)."""
    players = list(range(n))
    rounds = []
    for _ in range(n - 1):
        half = n // 2
        p = np.array(players[:half])
        q = np.array(players[half:][::-1])
        rounds.append((np.minimum(p, q), np.maximum(p, q)))
        players = [players[0]] + [players[-1]] + players[1:-1]
    return rounds


def _complete_orthonormal(U, done):
    """Fill columns of U not flagged in ``done`` with an orthonormal completion."""
    m = U.shape[0]
    for j in np.flatnonzero(~done):
        Q = U[:, done]
        best, best_norm = None, -1.0
        for i in range(m):
            e = np.zeros(m)
            e[i] = 1.0
            for _ in range(2):
                e -= Q @ (Q.T @ e)
            nrm = np.linalg.norm(e)
            if nrm > best_norm:
                best, best_norm = e, nrm
            if nrm > 0.5:
                break
        U[:, j] = best / best_norm
        done[j] = True
    return U


def _one_sided_jacobi(A):
    """Hestenes one-sided Jacobi for a tall matrix (rows >= cols)."""
    m, n = A.shape
    W = A.copy()
    V = np.eye(n)
    if n == 1:
        return W, V
    n_even = n + (n % 2)
    if n_even != n:
        W = np.hstack([W, np.zeros((m, 1))])
        V = np.pad(V, ((0, 1), (0, 1)))
    rounds = _round_robin(n_even)
    tol = max(m, 1) * np.finfo(float).eps
    # columns below this squared norm are roundoff; thin_svd completes them later
    floor = (tol * np.linalg.norm(A)) ** 2
    for _ in range(MAX_SWEEPS):
        rotated = False
        for p, q in rounds:
            Wp, Wq = W[:, p], W[:, q]
            alpha = np.einsum("ij,ij->j", Wp, Wp)
            beta = np.einsum("ij,ij->j", Wq, Wq)
            gamma = np.einsum("ij,ij->j", Wp, Wq)
            active = (np.abs(gamma) > tol * np.sqrt(alpha * beta)) & (np.minimum(alpha, beta) > floor)
            if not np.any(active):
                continue
            rotated = True
            g = np.where(active, gamma, 1.0)
            zeta = (beta - alpha) / (2.0 * g)
            with np.errstate(over="ignore"):
                t = np.where(zeta >= 0, 1.0, -1.0) / (np.abs(zeta) + np.sqrt(1.0 + zeta * zeta))
            c = np.where(active, 1.0 / np.sqrt(1.0 + t * t), 1.0)
            s = np.where(active, c * t, 0.0)
            W[:, p], W[:, q] = c * Wp - s * Wq, s * Wp + c * Wq
            Vp, Vq = V[:, p], V[:, q]
            V[:, p], V[:, q] = c * Vp - s * Vq, s * Vp + c * Vq
        if not rotated:
            return W[:, :n], V[:n, :n]
    raise NumericalFailureError(f"one-sided Jacobi did not converge in {MAX_SWEEPS} sweeps")


def thin_svd(A):
    """Thin SVD ``A = left @ diag(s) @ right.T`` with r = min(rows, cols).

    Singular values are returned in non-increasing order. Left vectors that
    belong to exactly-zero singular values are replaced by an orthonormal
    completion so ``left`` always has orthonormal columns.
    """
    A = _as_finite_matrix(A)
    m, n = A.shape
    if min(m, n) < 1:
        raise InvalidInputError("thin_svd needs a non-empty matrix")
    if m < n:
        t = thin_svd(A.T)
        return ThinSvd(t.right, t.singular_values, t.left)

    W, V = _one_sided_jacobi(A)
    sigma = np.linalg.norm(W, axis=0)
    order = np.argsort(-sigma, kind="stable")
    sigma, W, V = sigma[order], W[:, order], V[:, order]
    # Columns at roundoff level carry no direction; complete them instead.
    floor = m * np.finfo(float).eps * np.linalg.norm(A)
    good = sigma > floor
    U = np.zeros((m, n))
    U[:, good] = W[:, good] / sigma[good]
    if not np.all(good):
        U = _complete_orthonormal(U, good.copy())
    return ThinSvd(U, sigma, V)


def lu_factor(A):
    """Row-pivoted LU. Returns (packed LU, permutation vector)."""
    A = _as_finite_matrix(A)
    n = A.shape[0]
    if A.shape[1] != n:
        raise InvalidInputError(f"lu_factor needs a square matrix, got {A.shape}")
    LU = A.copy()
    perm = np.arange(n)
    thresh = 1e-14 * np.linalg.norm(A)
    for k in range(n):
        p = k + int(np.argmax(np.abs(LU[k:, k])))
        if abs(LU[p, k]) <= thresh or LU[p, k] == 0.0:
            raise SingularMatrixError(f"pivot {LU[p, k]:.3e} at column {k} below {thresh:.3e}")
        if p != k:
            LU[[k, p]] = LU[[p, k]]
            perm[[k, p]] = perm[[p, k]]
        LU[k + 1:, k] /= LU[k, k]
        LU[k + 1:, k + 1:] -= np.outer(LU[k + 1:, k], LU[k, k + 1:])
    return LU, perm


SMALL_N = 8


def _lu_solve_small(A, b):
    # Same elimination on Python floats; numpy call overhead dominates at
    # reduced-model sizes.
    n = len(A)
    M = A.tolist()
    y = b.tolist()
    thresh = 1e-14 * math.sqrt(sum(v * v for row in M for v in row))
    for k in range(n):
        p = max(range(k, n), key=lambda i: abs(M[i][k]))
        piv = M[p][k]
        if abs(piv) <= thresh or piv == 0.0:
            raise SingularMatrixError(f"pivot {piv:.3e} at column {k} below {thresh:.3e}")
        if p != k:
            M[k], M[p] = M[p], M[k]
            y[k], y[p] = y[p], y[k]
        rk = M[k]
        for i in range(k + 1, n):
            ri = M[i]
            f = ri[k] / piv
            if f != 0.0:
                for j in range(k + 1, n):
                    ri[j] -= f * rk[j]
                y[i] -= f * y[k]
    for i in range(n - 1, -1, -1):
        ri = M[i]
        acc = y[i]
        for j in range(i + 1, n):
            acc -= ri[j] * y[j]
        y[i] = acc / ri[i]
    return np.array(y)


def lu_solve(A, b, factored=None):
    """Solve ``A x = b`` by partial-pivoting LU.

    ``factored`` may carry a previous ``lu_factor(A)`` result to skip the
    factorization.
    """
    b = np.asarray(b, dtype=np.float64)
    if factored is None:
        A = np.asarray(A, dtype=np.float64)
        if A.ndim != 2 or A.shape[0] > SMALL_N or not math.isfinite(float(np.sum(A * A))):
            A = _as_finite_matrix(A)
        n = A.shape[0]
        if A.shape[1] != n:
            raise InvalidInputError(f"lu_solve needs a square matrix, got {A.shape}")
        if b.shape != (n,):
            raise InvalidInputError(f"rhs length {b.shape[0]} != {n}")
        if n <= SMALL_N:
            return _lu_solve_small(A, b)
    LU, perm = factored if factored is not None else lu_factor(A)
    n = LU.shape[0]
    if b.shape[0] != n:
        raise InvalidInputError(f"rhs length {b.shape[0]} != {n}")
    y = b[perm].copy()
    for i in range(1, n):
        y[i] -= LU[i, :i] @ y[:i]
    for i in range(n - 1, -1, -1):
        y[i] = (y[i] - LU[i, i + 1:] @ y[i + 1:]) / LU[i, i]
    return y


def jacobi_eigh(A, tol=None, max_sweeps=MAX_SWEEPS):
    """Full eigendecomposition of a symmetric matrix by parallel cyclic Jacobi.

    Returns eigenvalues ascending and the matching orthonormal eigenvectors
    as columns.
    """
    A = _as_finite_matrix(A)
    n = A.shape[0]
    if A.shape[1] != n:
        raise InvalidInputError("jacobi_eigh needs a square matrix")
    scale = max(np.abs(A).max(), 1.0)
    if np.abs(A - A.T).max() > 1e-12 * scale:
        raise InvalidInputError("matrix is not symmetric within 1e-12")
    M = 0.5 * (A + A.T)
    V = np.eye(n)
    if n > 1:
        n_even = n + (n % 2)
        if n_even != n:
            M = np.pad(M, ((0, 1), (0, 1)))
            V = np.pad(V, ((0, 1), (0, 1)))
        rounds = _round_robin(n_even)
        fro = np.linalg.norm(M)
        tol = n_even * np.finfo(float).eps * fro if tol is None else tol
        for _ in range(max_sweeps):
            off = M - np.diag(np.diag(M))
            if np.abs(off).max() <= tol:
                break
            for p, q in rounds:
                apq = M[p, q]
                active = np.abs(apq) > tol
                if not np.any(active):
                    continue
                app, aqq = M[p, p], M[q, q]
                a = np.where(active, apq, 1.0)
                tau = (aqq - app) / (2.0 * a)
                t = np.where(tau >= 0, 1.0, -1.0) / (np.abs(tau) + np.sqrt(1.0 + tau * tau))
                c = np.where(active, 1.0 / np.sqrt(1.0 + t * t), 1.0)
                s = np.where(active, c * t, 0.0)
                Mp, Mq = M[:, p], M[:, q]
                M[:, p], M[:, q] = c * Mp - s * Mq, s * Mp + c * Mq
                Mp, Mq = M[p, :], M[q, :]
                M[p, :], M[q, :] = c[:, None] * Mp - s[:, None] * Mq, s[:, None] * Mp + c[:, None] * Mq
                Vp, Vq = V[:, p], V[:, q]
                V[:, p], V[:, q] = c * Vp - s * Vq, s * Vp + c * Vq
        else:
            raise NumericalFailureError(f"Jacobi eigensolver did not converge in {max_sweeps} sweeps")
        M, V = M[:n, :n], V[:n, :n]
    w = np.diag(M).copy()
    order = np.argsort(w, kind="stable")
    return w[order], V[:, order]


def smallest_eigenpair(A):
    """Algebraically smallest eigenvalue and a unit eigenvector of symmetric A.

    The vector's first non-negligible entry is made positive.
    """
    w, V = jacobi_eigh(A)
    v = V[:, 0].copy()
    big = np.flatnonzero(np.abs(v) > 1e-12 * np.abs(v).max())
    if v[big[0]] < 0:
        v = -v
    return float(w[0]), v


def save_matrix(path, A):
    A = np.asarray(A, dtype=np.float64)
    if A.ndim != 2:
        raise InvalidInputError("save_matrix expects a 2-D array")
    with open(path, "wb") as fh:
        fh.write(MATRIX_MAGIC)
        fh.write(struct.pack("<QQ", *A.shape))
        fh.write(A.astype("<f8").tobytes(order="F"))


def load_matrix(path):
    data = Path(path).read_bytes()
    if len(data) < 24 or data[:8] != MATRIX_MAGIC:
        raise CorruptStoreError(f"{path}: bad magic or truncated header")
    rows, cols = struct.unpack("<QQ", data[8:24])
    body = data[24:]
    if len(body) != 8 * rows * cols:
        raise CorruptStoreError(f"{path}: expected {rows}x{cols} values, found {len(body)} bytes")
    A = np.frombuffer(body, dtype="<f8").reshape((rows, cols), order="F")
    return A.astype(np.float64)


def save_tensor(path, T):
    T = np.asarray(T, dtype=np.float64)
    with open(path, "wb") as fh:
        fh.write(TENSOR_MAGIC)
        fh.write(struct.pack("<Q", T.ndim))
        fh.write(struct.pack(f"<{T.ndim}Q", *T.shape))
        fh.write(T.astype("<f8").tobytes(order="F"))


def load_tensor(path):
    data = Path(path).read_bytes()
    if len(data) < 16 or data[:8] != TENSOR_MAGIC:
        raise CorruptStoreError(f"{path}: bad magic or truncated header")
    (order,) = struct.unpack("<Q", data[8:16])
    head = 16 + 8 * order
    if len(data) < head:
        raise CorruptStoreError(f"{path}: truncated shape header")
    shape = struct.unpack(f"<{order}Q", data[16:head])
    body = data[head:]
    if len(body) != 8 * int(np.prod(shape, dtype=np.int64)):
        raise CorruptStoreError(f"{path}: payload does not match shape {shape}")
    return np.frombuffer(body, dtype="<f8").reshape(shape, order="F").astype(np.float64)


def export_csv(path, A):
    """Human-readable mirror of a matrix, one row per line, 17 digits."""
    np.savetxt(path, np.atleast_2d(np.asarray(A, dtype=np.float64)), fmt="%.17g", delimiter=",")
