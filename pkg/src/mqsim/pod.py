"""Snapshot subspace that seeds PCG for a sequence of related right-hand sides."""

from __future__ import annotations

from collections import deque
from typing import Callable

import numpy as np

DROP_TOL = 1e-12


class PodBasis:
    """Orthonormal basis of the last ``max_size`` snapshots.

    ``operator`` applies the system matrix; the Galerkin guess minimizes the
    energy-norm error over span(Q). Basis vectors are stored as rows.
    """

    def __init__(self, dim: int, operator: Callable[[np.ndarray], np.ndarray], max_size: int = 10):
        if max_size < 1:
            raise ValueError("max_size must be at least 1")
        self.dim = dim
        self.operator = operator
        self.max_size = max_size
        # images A x are carried along so that rebuilding needs no operator calls
        self.snapshots: deque[tuple[np.ndarray, np.ndarray]] = deque(maxlen=max_size)
        self._rows = np.zeros((max_size, dim))
        self._arows = np.zeros((max_size, dim))
        self._k = 0
        self.reduced = np.zeros((0, 0))

    @property
    def size(self) -> int:
        return self._k

    @property
    def Q(self) -> np.ndarray:
        """Basis as (dim, size) columns."""
        return self._rows[: self._k].T

    def add_snapshot(self, x: np.ndarray) -> None:
        x = np.asarray(x, dtype=float)
        if x.shape != (self.dim,):
            raise ValueError(f"snapshot has shape {x.shape}, expected ({self.dim},)")
        if not np.any(x):
            return
        evicting = len(self.snapshots) == self.max_size
        self.snapshots.append((x.copy(), self.operator(x)))
        if evicting:
            self._k = 0
            for sx, sax in self.snapshots:
                self._append(sx, sax)
        else:
            self._append(*self.snapshots[-1])
        k = self._k
        r = self._rows[:k] @ self._arows[:k].T
        self.reduced = 0.5 * (r + r.T)

    def _append(self, x: np.ndarray, ax: np.ndarray) -> None:
        """Gram-Schmidt against the current rows, applied twice; ``ax`` follows along."""
        k = self._k
        Q, AQ = self._rows[:k], self._arows[:k]
        norm0 = np.linalg.norm(x)
        v = x.copy()
        av = ax.copy()
        if k:
            for _ in range(2):
                c = Q @ v
                v -= c @ Q
                av -= c @ AQ
        nv = np.linalg.norm(v)
        if nv < DROP_TOL * norm0:
            return
        self._rows[k] = v / nv
        self._arows[k] = av / nv
        self._k = k + 1

    def initial_guess(self, rhs: np.ndarray) -> np.ndarray:
        """x0 = Q z with (Q^T A Q) z = Q^T rhs; zero for an empty or degenerate basis."""
        k = self._k
        if k == 0:
            return np.zeros(self.dim)
        Q = self._rows[:k]
        z, *_ = np.linalg.lstsq(self.reduced, Q @ rhs, rcond=1e-12)
        if not np.all(np.isfinite(z)):
            return np.zeros(self.dim)
        return z @ Q

    def orthonormality_error(self) -> float:
        k = self._k
        if k == 0:
            return 0.0
        Q = self._rows[:k]
        return float(np.max(np.abs(Q @ Q.T - np.eye(k))))
