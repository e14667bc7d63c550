"""Nonlinear 2D eddy-current simulation with explicit time stepping of the Schur-reduced ODE."""

from .fem import BlockSystem, Materials, assemble, compute_B, probe_average
from .integrate import (ExplicitConfig, InstabilityError, RunResult, Scheme, implicit_euler_oracle,
                        rkc_coefficients, run_explicit)
from .material import BrauerCurve, LinearCurve, TableCurve, reluctivity
from .mesh import FLAT_2D, BenchmarkGeometry, Mesh, RegionTag, generate_benchmark_mesh, refine_uniform
from .problem import Problem, ProblemSpec, trajectory_deviation
from .schur import Excitation, SchurOdeOperator

__version__ = "0.1.0"
