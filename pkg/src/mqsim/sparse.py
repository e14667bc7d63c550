"""Sparse solver kernels: Jacobi-PCG, SPD direct solve, dominant eigenvalue."""

from __future__ import annotations

import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np
import scipy.io
import scipy.sparse as sp
import scipy.sparse.linalg as spla


class SolverError(RuntimeError):
    pass


@dataclass
class SolveStats:
    iterations: int
    residual: float  # final ||b - A x|| / ||b||
    converged: bool
    wall_time: float


def jacobi_inverse(A: sp.spmatrix) -> np.ndarray:
    """Inverse diagonal of ``A``; empty rows get zero."""
    diag = A.diagonal()
    nonempty = np.diff(sp.csr_matrix(A).indptr) > 0
    if np.any(diag[nonempty] <= 0):
        bad = int(np.flatnonzero(nonempty & (diag <= 0))[0])
        raise ValueError(f"Jacobi preconditioner undefined: diagonal entry {bad} is {diag[bad]:.3e}")
    return np.where(diag > 0, 1.0 / np.where(diag > 0, diag, 1.0), 0.0)


def pcg_jacobi(A: sp.spmatrix, b: np.ndarray, x0: np.ndarray | None = None, rel_tol: float = 1e-10,
               max_iter: int | None = None, inv_diag: np.ndarray | None = None) -> tuple[np.ndarray, SolveStats]:
    """Preconditioned CG with the diagonal of ``A``.

    Works for singular symmetric positive semidefinite ``A`` as long as ``b``
    lies in its range: the update ``x - x0`` stays in the Krylov space of
    ``D^-1 A``, which is D-orthogonal to the kernel.
    """
    start = time.perf_counter()
    n = A.shape[0]
    b = np.asarray(b, dtype=float)
    if A.shape != (n, n) or b.shape != (n,):
        raise ValueError(f"dimension mismatch: A {A.shape}, b {b.shape}")
    if inv_diag is None:
        inv_diag = jacobi_inverse(A)
    max_iter = max_iter if max_iter is not None else max(10 * n, 100)

    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return np.zeros(n), SolveStats(0, 0.0, True, time.perf_counter() - start)
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
    r = b - A @ x if x0 is not None else b.copy()
    rnorm = np.linalg.norm(r)
    if rnorm <= rel_tol * bnorm:
        return x, SolveStats(0, rnorm / bnorm, True, time.perf_counter() - start)

    z = inv_diag * r
    p = z.copy()
    rz = r @ z
    it = 0
    converged = False
    while it < max_iter:
        q = A @ p
        pq = p @ q
        if pq <= 1e-300 or not np.isfinite(pq):
            break
        alpha = rz / pq
        x += alpha * p
        r -= alpha * q
        it += 1
        rnorm = np.linalg.norm(r)
        if rnorm <= rel_tol * bnorm:
            converged = True
            break
        z = inv_diag * r
        rz_new = r @ z
        p *= rz_new / rz
        p += z
        rz = rz_new
    return x, SolveStats(it, rnorm / bnorm, converged, time.perf_counter() - start)


class Factorization:
    """Sparse LDL^T-style factorization of an SPD matrix (no pivoting)."""

    def __init__(self, A: sp.spmatrix):
        A = sp.csc_matrix(A)
        n = A.shape[0]
        if A.shape != (n, n):
            raise ValueError("matrix must be square")
        if n and abs(A - A.T).max() > 1e-12 * abs(A).max():
            raise ValueError("matrix is not symmetric")
        self.n = n
        if n == 0:
            self._lu = None
            return
        # symmetric ordering + diagonal pivots only: U's diagonal holds the LDL^T pivots
        try:
            self._lu = spla.splu(A, permc_spec="MMD_AT_PLUS_A", diag_pivot_thresh=0.0,
                                 options={"SymmetricMode": True})
        except RuntimeError as exc:
            raise ValueError(f"factorization failed, matrix is not positive definite: {exc}") from None
        pivots = self._lu.U.diagonal()
        if np.any(pivots <= 0) or not np.all(np.isfinite(pivots)):
            k = int(np.flatnonzero(~(pivots > 0))[0])
            raise ValueError(f"non-positive pivot {pivots[k]:.3e} at step {k}: matrix is not positive definite")

    def solve(self, b: np.ndarray) -> np.ndarray:
        b = np.asarray(b, dtype=float)
        if self.n == 0:
            return np.zeros(0)
        return self._lu.solve(b)


def factorize_spd(A: sp.spmatrix) -> Factorization:
    return Factorization(A)


@dataclass
class EigenEstimate:
    value: float
    vector: np.ndarray
    iterations: int
    converged: bool
    history: list[float]


def power_iteration_lambda_max(apply: Callable[[np.ndarray], np.ndarray], dim: int, rel_tol: float = 1e-3,
                               max_iter: int = 1000, mass: sp.spmatrix | None = None,
                               v0: np.ndarray | None = None, seed: int = 0) -> EigenEstimate:
    """Dominant eigenvalue of ``apply`` by power iteration with Rayleigh quotients.

    With ``mass`` given, quotients use the M inner product, which makes them
    monotone for operators of the form M^-1 K with K symmetric.
    """
    if dim == 0:
        return EigenEstimate(0.0, np.zeros(0), 0, True, [])
    if v0 is None or np.linalg.norm(v0) == 0:
        v = np.random.default_rng(seed).standard_normal(dim)
    else:
        v = np.array(v0, dtype=float)

    def inner(a, b):
        return a @ (mass @ b) if mass is not None else a @ b

    v /= np.sqrt(inner(v, v))
    history: list[float] = []
    lam_old = None
    for it in range(1, max_iter + 1):
        w = apply(v)
        lam = float(inner(v, w))
        history.append(lam)
        wn = np.sqrt(max(inner(w, w), 0.0))
        if wn == 0.0:
            return EigenEstimate(0.0, v, it, True, history)
        if lam_old is not None and abs(lam - lam_old) <= rel_tol * abs(lam):
            return EigenEstimate(lam, w / wn, it, True, history)
        lam_old = lam
        v = w / wn
    return EigenEstimate(history[-1], v, max_iter, False, history)


def write_matrix_market(path: str | Path, a) -> None:
    a = a.reshape(-1, 1) if isinstance(a, np.ndarray) and a.ndim == 1 else a
    scipy.io.mmwrite(str(path), a)


def read_matrix_market(path: str | Path):
    out = scipy.io.mmread(str(path))
    if sp.issparse(out):
        return out.tocsr()
    out = np.asarray(out)
    return out[:, 0] if out.ndim == 2 and out.shape[1] == 1 else out
