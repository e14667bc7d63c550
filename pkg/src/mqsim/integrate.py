"""Explicit Euler and Runge-Kutta-Chebyshev time stepping for the reduced ODE.

The drivers keep K_c frozen between update events; an update is triggered
after a full step once the conductor solution has drifted by more than
``update_tol`` (relative, Euclidean) from the state the matrix was built at.
An implicit Euler solve of the full block DAE serves as the reference.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .fem import BlockSystem
from .schur import Excitation, SchurOdeOperator
from .sparse import SolverError, pcg_jacobi

RKC_DAMPING = 2.0 / 13.0
RKC_STABILITY = 0.653

Rhs = Callable[[float, np.ndarray], np.ndarray]
Observer = Callable[[float, np.ndarray, np.ndarray], tuple]


class InstabilityError(RuntimeError):
    def __init__(self, message: str, step: int, result: "RunResult | None" = None):
        super().__init__(message)
        self.step = step
        self.result = result


class PicardError(RuntimeError):
    def __init__(self, message: str, history: list[float]):
        super().__init__(message)
        self.history = history


def euler_max_step(lambda_max: float) -> float:
    if not lambda_max > 0:
        raise ValueError(f"lambda_max must be positive, got {lambda_max}")
    return 2.0 / lambda_max


def rkc_max_step(s: int, lambda_max: float) -> float:
    if s < 2:
        raise ValueError(f"RKC needs at least 2 stages, got {s}")
    if not lambda_max > 0:
        raise ValueError(f"lambda_max must be positive, got {lambda_max}")
    return RKC_STABILITY * s * s / lambda_max


def chebyshev_values(s: int, x: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """T_j(x), T_j'(x), T_j''(x) for j = 0..s by three-term recurrences."""
    T = np.zeros(s + 1)
    dT = np.zeros(s + 1)
    ddT = np.zeros(s + 1)
    T[0] = 1.0
    if s >= 1:
        T[1], dT[1] = x, 1.0
    for j in range(2, s + 1):
        T[j] = 2 * x * T[j - 1] - T[j - 2]
        dT[j] = 2 * T[j - 1] + 2 * x * dT[j - 1] - dT[j - 2]
        ddT[j] = 4 * dT[j - 1] + 2 * x * ddT[j - 1] - ddT[j - 2]
    return T, dT, ddT


@dataclass(frozen=True)
class RkcCoefficients:
    """Stage coefficients of the s-stage damped RKC method.

    Arrays are indexed by stage number; entries that the scheme does not use
    (e.g. ``mu[0]``, ``mu[1]``) are zero.
    """

    s: int
    eps: float
    w0: float
    w1: float
    b: np.ndarray
    mu: np.ndarray
    nu: np.ndarray
    mu_tilde: np.ndarray
    gamma_tilde: np.ndarray
    c: np.ndarray

    @property
    def mu_tilde_1(self) -> float:
        return float(self.mu_tilde[1])

    @property
    def chebyshev_boundary(self) -> float:
        """-z where the shifted Chebyshev argument w0 + w1 z reaches -1."""
        return (1.0 + self.w0) / self.w1


def rkc_coefficients(s: int, eps: float = RKC_DAMPING) -> RkcCoefficients:
    if s < 2:
        raise ValueError(f"RKC needs at least 2 stages, got {s}")
    w0 = 1.0 + eps / (s * s)
    T, dT, ddT = chebyshev_values(s, w0)
    w1 = dT[s] / ddT[s]
    b = np.zeros(s + 1)
    b[2:] = ddT[2:] / dT[2:] ** 2
    b[0] = b[1] = b[2]
    mu = np.zeros(s + 1)
    nu = np.zeros(s + 1)
    mu_t = np.zeros(s + 1)
    gam_t = np.zeros(s + 1)
    mu_t[1] = b[1] * w1
    for j in range(2, s + 1):
        mu[j] = 2 * b[j] * w0 / b[j - 1]
        nu[j] = -b[j] / b[j - 2]
        mu_t[j] = 2 * b[j] * w1 / b[j - 1]
        gam_t[j] = -(1 - b[j - 1] * T[j - 1]) * mu_t[j]
    c = np.zeros(s + 1)
    for j in range(2, s):
        c[j] = w1 * ddT[j] / dT[j]
    c[s] = 1.0
    c[1] = c[2] / dT[2]
    return RkcCoefficients(s, eps, w0, w1, b, mu, nu, mu_t, gam_t, c)


def _check_finite(y: np.ndarray, step: int) -> None:
    if not np.all(np.isfinite(y)):
        raise InstabilityError(f"non-finite solution in step {step}", step)


def step_euler(t: float, y: np.ndarray, tau: float, f: Rhs, step: int = 0) -> np.ndarray:
    if not tau > 0:
        raise ValueError("tau must be positive")
    dy = f(t, y)
    _check_finite(dy, step)
    return y + tau * dy


def step_rkc(t: float, y: np.ndarray, tau: float, coeffs: RkcCoefficients, f: Rhs, step: int = 0) -> np.ndarray:
    """One RKC step; exactly ``coeffs.s`` evaluations of ``f``."""
    if not tau > 0:
        raise ValueError("tau must be positive")
    y0 = y
    f0 = f(t, y0)
    _check_finite(f0, step)
    y_prev2 = y0
    y_prev = y0 + coeffs.mu_tilde[1] * tau * f0
    for j in range(2, coeffs.s + 1):
        fj = f(t + coeffs.c[j - 1] * tau, y_prev)
        _check_finite(fj, step)
        mu, nu = coeffs.mu[j], coeffs.nu[j]
        # (1 - mu - nu) y0 + mu y_{j-1} + nu y_{j-2}, written as an increment on y0
        yj = (y0 + mu * (y_prev - y0) + nu * (y_prev2 - y0)
              + coeffs.mu_tilde[j] * tau * fj + coeffs.gamma_tilde[j] * tau * f0)
        y_prev2, y_prev = y_prev, yj
    return y_prev


def stability_polynomial(coeffs: RkcCoefficients, z):
    """R_s(z): one RKC step applied to y' = lambda y with tau * lambda = z, y0 = 1.

    ``z`` may be a scalar or an array (real or complex); the result matches its shape.
    """
    z = np.asarray(z)
    y0 = np.ones(z.shape, dtype=np.result_type(z, float)).ravel()
    out = step_rkc(0.0, y0, 1.0, coeffs, lambda t, y: z.ravel() * y).reshape(z.shape)
    return out.item() if out.ndim == 0 else out


def needs_matrix_update(a_star: np.ndarray, a_i: np.ndarray, tol: float = 0.005) -> bool:
    """True iff ||a* - a_i|| / ||a*|| exceeds ``tol``; a zero reference always updates."""
    ref = np.linalg.norm(a_star)
    diff = np.linalg.norm(np.asarray(a_star) - np.asarray(a_i))
    if ref == 0.0:
        return True
    return diff / ref > tol


@dataclass(frozen=True)
class Scheme:
    kind: str  # "euler" or "rkc"
    stages: int = 1

    def __post_init__(self):
        if self.kind not in ("euler", "rkc"):
            raise ValueError(f"unknown explicit scheme {self.kind!r}")
        if self.kind == "rkc" and self.stages < 2:
            raise ValueError("RKC needs at least 2 stages")

    @classmethod
    def parse(cls, text: str) -> "Scheme":
        name, _, arg = text.partition(":")
        name = name.strip().lower()
        if name == "euler":
            return cls("euler", 1)
        if name == "rkc":
            return cls("rkc", int(arg) if arg else 10)
        raise ValueError(f"unknown explicit scheme {text!r}")

    @property
    def label(self) -> str:
        return "euler" if self.kind == "euler" else f"rkc{self.stages}"


@dataclass(frozen=True)
class ExplicitConfig:
    end_time: float
    output_interval: float
    update_tol: float = 0.005
    safety: float = 0.9
    lambda_inflation: float = 1.05
    lambda_rtol: float = 1e-3
    seed: int = 0
    keep_states: bool = False

    def __post_init__(self):
        if self.end_time < 0:
            raise ValueError("end_time must be non-negative")
        if not self.output_interval > 0:
            raise ValueError("output_interval must be positive")
        if self.update_tol < 0:
            raise ValueError("update_tol must be non-negative")


@dataclass
class OutputRecord:
    step: int
    t: float
    tau: float
    i_source: float
    probes: tuple
    f_evals: int
    pcg_iters: int
    matrix_updated: int  # K_c reassemblies since the previous record
    lambda_max: float


@dataclass
class RunResult:
    label: str
    records: list[OutputRecord] = field(default_factory=list)
    states: list[np.ndarray] = field(default_factory=list)
    steps: int = 0
    f_evals: int = 0
    pcg_iterations: int = 0
    matrix_updates: int = 0
    lambda_estimates: int = 0
    wall_time: float = 0.0
    failure: str | None = None

    def probe_array(self) -> np.ndarray:
        return np.array([r.probes for r in self.records], dtype=float)

    def times(self) -> np.ndarray:
        return np.array([r.t for r in self.records])


def _output_times(end_time: float, interval: float) -> list[float]:
    n = int(math.floor(end_time / interval + 1e-9))
    times = [k * interval for k in range(1, n + 1)]
    if not times or end_time - times[-1] > 1e-12 * max(end_time, 1.0):
        times.append(end_time)
    return [t for t in times if t > 0]


def stable_step(scheme: Scheme, lambda_max: float, safety: float) -> float:
    """Safety-scaled step bound; RKC is additionally capped at its Chebyshev interval."""
    if lambda_max <= 0:
        return math.inf
    if scheme.kind == "euler":
        return safety * euler_max_step(lambda_max)
    bound = min(RKC_STABILITY * scheme.stages ** 2, rkc_coefficients(scheme.stages).chebyshev_boundary)
    return safety * bound / lambda_max


def run_explicit(operator: SchurOdeOperator, scheme: Scheme, config: ExplicitConfig,
                 observe: Observer | None = None, a0: np.ndarray | None = None) -> RunResult:
    """Integrate from ``a0`` (default zero) to ``config.end_time``.

    ``observe(t, a_c, a_n)`` returns the probe tuple recorded at output times.
    Raises :class:`InstabilityError` carrying the partial result.
    """
    start = time.perf_counter()
    result = RunResult(scheme.label)
    coeffs = rkc_coefficients(scheme.stages) if scheme.kind == "rkc" else None
    a = np.zeros(operator.dim) if a0 is None else np.array(a0, dtype=float)
    t = 0.0
    a_star = a.copy()
    stale = True
    eig_vec = None
    lam = 0.0
    tau = math.inf
    updates_since = 0
    f0_evals, f0_pcg = operator.f_evals, operator.pcg_iterations

    def record(step: int, h: float) -> None:
        nonlocal updates_since
        a_n = operator.recover_an(a, t)
        probes = tuple(observe(t, a, a_n)) if observe is not None else ()
        result.records.append(OutputRecord(step, t, h, operator.excitation(t), probes,
                                           operator.f_evals - f0_evals, operator.pcg_iterations - f0_pcg,
                                           updates_since, lam))
        if config.keep_states:
            result.states.append(a.copy())
        updates_since = 0

    def rhs(tt: float, y: np.ndarray) -> np.ndarray:
        return operator.apply_f(tt, y)

    record(0, 0.0)
    step = 0
    h = 0.0
    try:
        for target in _output_times(config.end_time, config.output_interval):
            while target - t > 1e-12 * target:
                if stale:
                    est = operator.lambda_max(v0=eig_vec, rel_tol=config.lambda_rtol, seed=config.seed)
                    eig_vec = est.vector
                    lam = est.value * config.lambda_inflation
                    tau = stable_step(scheme, lam, config.safety)
                    stale = False
                    result.lambda_estimates += 1
                n_sub = max(1, math.ceil((target - t) / tau - 1e-9))
                h = (target - t) / n_sub
                version = operator.kc_version
                step += 1
                if coeffs is None:
                    a = step_euler(t, a, h, rhs, step)
                else:
                    a = step_rkc(t, a, h, coeffs, rhs, step)
                if operator.kc_version != version:
                    raise RuntimeError("K_c changed inside a time step")
                _check_finite(a, step)
                t = target if n_sub == 1 else t + h
                if not operator.is_linear and needs_matrix_update(a_star, a, config.update_tol):
                    operator.update_stiffness(a)
                    a_star = a.copy()
                    stale = True
                    updates_since += 1
                    result.matrix_updates += 1
            record(step, h)
    except InstabilityError as exc:
        exc.step = exc.step or step
        result.failure = str(exc)
        _finish(result, operator, step, start, f0_evals, f0_pcg)
        exc.result = result
        raise
    except SolverError as exc:
        result.failure = str(exc)
        _finish(result, operator, step, start, f0_evals, f0_pcg)
        raise
    _finish(result, operator, step, start, f0_evals, f0_pcg)
    return result


def _finish(result: RunResult, operator: SchurOdeOperator, step: int, start: float, f0: int, p0: int) -> None:
    result.steps = step
    result.f_evals = operator.f_evals - f0
    result.pcg_iterations = operator.pcg_iterations - p0
    result.wall_time = time.perf_counter() - start


def implicit_euler_oracle(system: BlockSystem, tau: float, end_time: float, output_interval: float | None = None,
                          excitation: Excitation | None = None, observe: Observer | None = None,
                          picard_tol: float = 1e-8, max_picard: int = 50, pcg_tol: float = 1e-12,
                          keep_states: bool = False, x0: np.ndarray | None = None) -> RunResult:
    """Backward Euler on the full block DAE with Picard iteration on the reluctivity.

    Outputs are written every ``output_interval`` (a multiple of ``tau``).
    ``x0`` is the initial (a_c, a_n) in block order, zero by default.
    """
    if not tau > 0:
        raise ValueError("tau must be positive")
    start = time.perf_counter()
    excitation = excitation or Excitation()
    output_interval = output_interval or tau
    every = max(1, int(round(output_interval / tau)))
    if abs(every * tau - output_interval) > 1e-9 * output_interval:
        raise ValueError("output_interval must be a multiple of tau")
    n_steps = int(round(end_time / tau))
    if abs(n_steps * tau - end_time) > 1e-9 * max(end_time, tau):
        raise ValueError("end_time must be a multiple of tau")
    nc = system.n_c
    result = RunResult("implicit")
    x = np.zeros(nc + system.n_n) if x0 is None else np.array(x0, dtype=float)
    if x.shape != (nc + system.n_n,):
        raise ValueError(f"x0 has shape {x.shape}, expected ({nc + system.n_n},)")
    kc = system.stiffness_c(x[:nc])
    reassemblies = 0
    pcg_total = 0

    def record(step: int, t: float) -> None:
        nonlocal reassemblies
        probes = tuple(observe(t, x[:nc], x[nc:])) if observe is not None else ()
        result.records.append(OutputRecord(step, t, tau if step else 0.0, excitation(t), probes, 0, pcg_total,
                                           reassemblies, math.nan))
        if keep_states:
            result.states.append(x[:nc].copy())
        reassemblies = 0

    record(0, 0.0)
    for k in range(1, n_steps + 1):
        t_new = k * tau
        rhs = np.concatenate([system.M_c @ x[:nc] / tau, excitation(t_new) * system.j_unit])
        history = []
        for it in range(max_picard):
            if it > 0:
                kc = system.stiffness_c(x[:nc])
                reassemblies += 1
            A = system.full_matrix(kc, 1.0 / tau)
            x_new, stats = pcg_jacobi(A, rhs, x0=x, rel_tol=pcg_tol)
            pcg_total += stats.iterations
            if not stats.converged:
                raise SolverError(f"oracle block solve failed in step {k}: residual {stats.residual:.3e}")
            nrm = np.linalg.norm(x_new)
            change = np.linalg.norm(x_new - x) / nrm if nrm > 0 else 0.0
            history.append(change)
            x = x_new
            if system.is_linear or change <= picard_tol:
                break
        else:
            raise PicardError(f"Picard iteration did not converge in step {k}", history)
        if not system.is_linear:
            # the next step starts from K_c at the converged state
            kc = system.stiffness_c(x[:nc])
            reassemblies += 1
        if k % every == 0 or k == n_steps:
            record(k, t_new)
    result.steps = n_steps
    result.pcg_iterations = pcg_total
    result.wall_time = time.perf_counter() - start
    return result
