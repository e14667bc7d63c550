"""Schur-complement reduction of the eddy-current DAE to an ODE in a_c.

Eliminating the non-conductive unknowns with K_n^+ gives

    M_c a_c' = -(K_cn K_n^+ j + K_S a_c),   K_S = K_c - K_cn K_n^+ K_cn^T
    a_n      = K_n^+ j - K_n^+ K_cn^T a_c

K_S is only ever applied; every K_n^+ action is one PCG solve.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .fem import BlockSystem
from .pod import PodBasis
from .sparse import EigenEstimate, SolveStats, SolverError, factorize_spd, jacobi_inverse, pcg_jacobi, power_iteration_lambda_max


@dataclass(frozen=True)
class Excitation:
    """Source current i(t) = amplitude * (1 - exp(-t / time_constant)) in A."""

    amplitude: float = 5.64
    time_constant: float = 0.5

    def __call__(self, t: float) -> float:
        return self.amplitude * (1.0 - math.exp(-t / self.time_constant))


DEFAULT_PCG_TOL = 1e-8


def precompute_unit_source(system: BlockSystem, rel_tol: float = DEFAULT_PCG_TOL) -> np.ndarray:
    """Solve K_n x = j_unit once; the transient source is this vector times i(t)."""
    x, stats = pcg_jacobi(system.K_n, system.j_unit, rel_tol=rel_tol)
    if not stats.converged:
        raise SolverError(f"unit-source solve did not converge: residual {stats.residual:.3e} "
                          f"after {stats.iterations} iterations")
    return x


@dataclass
class DaeResidual:
    conductive: float  # ||M a' + K_c a_c + K_cn a_n|| relative
    nonconductive: float  # ||K_cn^T a_c + K_n a_n - j|| relative
    conductive_abs: float
    nonconductive_abs: float


class SchurOdeOperator:
    """Evaluates f(t, a_c) with a frozen K_c snapshot.

    Not reentrant: it keeps scratch state (POD basis, last coupling solve)
    and counters. Use one instance per integration run.
    """

    def __init__(self, system: BlockSystem, excitation: Excitation | None = None, pcg_tol: float = DEFAULT_PCG_TOL,
                 pod_size: int | None = 10, pcg_max_iter: int | None = None):
        self.system = system
        self.excitation = excitation or Excitation()
        self.pcg_tol = pcg_tol
        self.pcg_max_iter = pcg_max_iter
        self.M_factor = factorize_spd(system.M_c)
        self._kn_inv_diag = jacobi_inverse(system.K_n)
        self.K_c = system.K_c
        self.kc_version = 0
        self.x_unit = precompute_unit_source(system, pcg_tol)
        self.cn_x_unit = system.K_cn @ self.x_unit
        self.pod = PodBasis(system.n_n, system.K_n.__matmul__, pod_size) if pod_size else None
        self.f_evals = 0
        self.pcg_iterations = 0
        self.pcg_solves = 0
        self.matrix_updates = 0
        # set to a list to record (rhs, stats, basis size used for the guess) per K_n solve
        self.solve_log: list[tuple[np.ndarray, SolveStats, int]] | None = None
        self._last_coupling: tuple[np.ndarray, np.ndarray] | None = None

    @property
    def is_linear(self) -> bool:
        return self.system.is_linear

    @property
    def dim(self) -> int:
        return self.system.n_c

    def _solve_kn(self, rhs: np.ndarray, guess: bool) -> np.ndarray:
        use_pod = guess and self.pod is not None
        x0 = self.pod.initial_guess(rhs) if use_pod else None
        x, stats = pcg_jacobi(self.system.K_n, rhs, x0=x0, rel_tol=self.pcg_tol, max_iter=self.pcg_max_iter,
                               inv_diag=self._kn_inv_diag)
        self.pcg_iterations += stats.iterations
        self.pcg_solves += 1
        if self.solve_log is not None:
            self.solve_log.append((rhs.copy(), stats, self.pod.size if use_pod else 0))
        if not stats.converged:
            raise SolverError(f"K_n solve did not converge: residual {stats.residual:.3e} "
                              f"after {stats.iterations} iterations")
        return x

    def _coupling_solve(self, a_c: np.ndarray, snapshot: bool) -> np.ndarray:
        """y = K_n^+ K_cn^T a_c, reusing the previous solve for an identical a_c."""
        last = self._last_coupling
        if last is not None and np.array_equal(last[0], a_c):
            return last[1]
        y = self._solve_kn(self.system.K_cn.T @ a_c, guess=True)
        if snapshot and self.pod is not None:
            self.pod.add_snapshot(y)
        self._last_coupling = (a_c.copy(), y)
        return y

    def schur_apply(self, v: np.ndarray) -> np.ndarray:
        """K_S v without POD involvement (used for spectral estimates and checks)."""
        y = self._solve_kn(self.system.K_cn.T @ v, guess=False)
        return self.K_c @ v - self.system.K_cn @ y

    def apply_f(self, t: float, a_c: np.ndarray) -> np.ndarray:
        a_c = np.asarray(a_c, dtype=float)
        if a_c.shape != (self.dim,):
            raise ValueError(f"a_c has shape {a_c.shape}, expected ({self.dim},)")
        y = self._coupling_solve(a_c, snapshot=True)
        s = self.K_c @ a_c - self.system.K_cn @ y + self.excitation(t) * self.cn_x_unit
        self.f_evals += 1
        return -self.M_factor.solve(s)

    def recover_an(self, a_c: np.ndarray, t: float) -> np.ndarray:
        a_c = np.asarray(a_c, dtype=float)
        y = self._coupling_solve(a_c, snapshot=False)
        return self.excitation(t) * self.x_unit - y

    def full_state(self, a_c: np.ndarray, t: float) -> np.ndarray:
        return self.system.partition.scatter(a_c, self.recover_an(a_c, t))

    def dae_residual(self, a_c: np.ndarray, a_n: np.ndarray, da_dt: np.ndarray, t: float) -> DaeResidual:
        sysm = self.system
        m_term = sysm.M_c @ da_dt
        k_term = self.K_c @ a_c
        r1 = m_term + k_term + sysm.K_cn @ a_n
        j = self.excitation(t) * sysm.j_unit
        cn_term = sysm.K_cn.T @ a_c
        r2 = cn_term + sysm.K_n @ a_n - j
        s1 = np.linalg.norm(m_term) + np.linalg.norm(k_term)
        s2 = np.linalg.norm(j) + np.linalg.norm(cn_term)
        n1, n2 = float(np.linalg.norm(r1)), float(np.linalg.norm(r2))
        return DaeResidual(n1 / s1 if s1 > 0 else n1, n2 / s2 if s2 > 0 else n2, n1, n2)

    def update_stiffness(self, a_c: np.ndarray) -> None:
        """Replace the frozen K_c by one assembled at ``a_c``."""
        self.K_c = self.system.stiffness_c(a_c)
        self.kc_version += 1
        self.matrix_updates += 1

    def lambda_max(self, v0: np.ndarray | None = None, rel_tol: float = 1e-3, seed: int = 0,
                   max_iter: int = 1000) -> EigenEstimate:
        """Dominant eigenvalue of M_c^-1 K_S for the frozen K_c."""
        return power_iteration_lambda_max(lambda v: self.M_factor.solve(self.schur_apply(v)), self.dim,
                                          rel_tol=rel_tol, max_iter=max_iter, mass=self.system.M_c,
                                          v0=v0, seed=seed)
