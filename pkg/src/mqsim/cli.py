"""Command-line entry point: ``run``, ``stability``, ``compare`` and ``mesh-dump``.

Runs are described by a TOML file; every key is optional and command-line
flags override the file. Example::

    [mesh]
    resolution = 2
    order = 1

    [material]
    model = "brauer"        # or "linear" (nu / mu_r) or "table" (path)

    [source]
    amplitude = 5.64
    turns = 162
    time_constant = 0.5

    [run]
    scheme = "rkc"          # euler | rkc | implicit
    stages = 10
    end_time = 0.15
    output_interval = 1e-3

    [compare]
    schemes = ["euler", "rkc:10"]

Lengths are in meters, times in seconds.
"""

from __future__ import annotations

import argparse
import contextlib
import csv
import math
import os
import sys
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Sequence

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .fem import Materials
from .integrate import (RKC_STABILITY, ExplicitConfig, InstabilityError, RunResult, Scheme, euler_max_step,
                        implicit_euler_oracle, rkc_max_step, run_explicit, stable_step)
from .material import NU0, BHCurve, BrauerCurve, LinearCurve, load_table_curve, saturation_check
from .mesh import FLAT_2D, BenchmarkGeometry, GeometryError, Rect, RegionTag, write_vtk
from .problem import Problem, ProblemSpec, plate_slices, trajectory_deviation
from .schur import DEFAULT_PCG_TOL, Excitation
from .sparse import SolverError

STABILITY_STAGES = (2, 5, 10, 20, 50)
EXIT_OK, EXIT_FAILED, EXIT_CONFIG = 0, 1, 2


class ConfigError(ValueError):
    def __init__(self, message: str, line: int | None = None, path: str | None = None):
        where = f"{path or '<config>'}:{line}: " if line else (f"{path}: " if path else "")
        super().__init__(where + message)
        self.line = line


@dataclass
class RunConfig:
    geometry: BenchmarkGeometry = FLAT_2D
    resolution: int = 2
    order: int = 1
    curve: BHCurve = field(default_factory=BrauerCurve)
    kappa: float = 7.505e6
    amplitude: float = 5.64
    turns: int = 162
    time_constant: float = 0.5
    scheme: str = "euler"  # "euler", "rkc" or "implicit"
    stages: int = 10
    implicit_tau: float = 1e-3
    end_time: float = 0.15
    output_interval: float = 1e-3
    probes: tuple[Rect, ...] | None = None
    update_tol: float = 0.005
    safety: float = 0.9
    pcg_tol: float = DEFAULT_PCG_TOL
    pod_size: int = 10
    lambda_rtol: float = 1e-3
    seed: int = 0
    compare: tuple[str, ...] = ("euler", "rkc:10")
    oracle_tau: float = 1e-3
    out: Path | None = None
    vtk: bool = False

    def validate(self) -> None:
        if self.end_time < 0:
            raise ConfigError(f"end_time must be non-negative, got {self.end_time}")
        if not self.output_interval > 0:
            raise ConfigError("output_interval must be positive")
        if self.scheme not in ("euler", "rkc", "implicit"):
            raise ConfigError(f"unknown scheme {self.scheme!r} (expected euler, rkc or implicit)")
        if self.scheme == "rkc" and self.stages < 2:
            raise ConfigError(f"rkc needs stages >= 2, got {self.stages}")
        if self.resolution < 1:
            raise ConfigError("resolution must be a positive integer")
        if self.order not in (1, 2):
            raise ConfigError(f"order must be 1 or 2, got {self.order}")
        if self.probes is not None and len(self.probes) == 0:
            raise ConfigError("probes must not be empty")
        if not self.safety > 0:
            raise ConfigError("safety must be positive")
        if self.update_tol < 0:
            raise ConfigError("update_tol must be non-negative")
        for name in ("implicit_tau", "oracle_tau", "pcg_tol", "lambda_rtol", "kappa", "time_constant"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive")

    def spec(self) -> ProblemSpec:
        mats = Materials(conductor=self.curve, kappa=self.kappa, turns=self.turns)
        return ProblemSpec(self.geometry, self.resolution, self.order, mats,
                           Excitation(self.amplitude, self.time_constant), self.probes)

    def explicit(self) -> ExplicitConfig:
        return ExplicitConfig(self.end_time, self.output_interval, self.update_tol, self.safety,
                              lambda_rtol=self.lambda_rtol, seed=self.seed)

    def scheme_label(self) -> str:
        return {"euler": "euler", "rkc": f"rkc:{self.stages}", "implicit": "implicit"}[self.scheme]


# --- config file -----------------------------------------------------------

def _key_lines(text: str) -> dict[tuple[str, str], int]:
    """Map (section, key) to the 1-based line where the key is assigned."""
    out: dict[tuple[str, str], int] = {}
    section = ""
    for no, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if line.startswith("[") and line.endswith("]"):
            section = line.strip("[]").strip()
            out[(section, "")] = no
        elif "=" in line:
            key = line.split("=", 1)[0].strip().strip('"')
            out.setdefault((section, key), no)
    return out


_NUM = (int, float)
_SCHEMA: dict[str, dict[str, Any]] = {
    "geometry": {"air_box": "rect", "plate": "rect", "coil_plus": "rect", "coil_minus": "rect",
                 "near_cell": _NUM, "grading": _NUM},
    "mesh": {"resolution": int, "order": int},
    "material": {"model": str, "k1": _NUM, "k2": _NUM, "k3": _NUM, "nu": _NUM, "mu_r": _NUM, "path": str,
                 "kappa": _NUM},
    "source": {"amplitude": _NUM, "turns": int, "time_constant": _NUM},
    "run": {"scheme": str, "stages": int, "tau": _NUM, "end_time": _NUM, "output_interval": _NUM,
            "update_tol": _NUM, "safety": _NUM, "seed": int},
    "solver": {"pcg_tol": _NUM, "pod_size": int, "lambda_rtol": _NUM},
    "probes": {"rects": "rects"},
    "compare": {"schemes": "strings", "oracle_tau": _NUM},
    "output": {"dir": str, "vtk": bool},
}


def _check_type(value: Any, kind: Any) -> bool:
    if kind == "rect":
        return (isinstance(value, list) and len(value) == 4
                and all(isinstance(v, _NUM) and not isinstance(v, bool) for v in value))
    if kind == "rects":
        return isinstance(value, list) and all(_check_type(v, "rect") for v in value)
    if kind == "strings":
        return isinstance(value, list) and all(isinstance(v, str) for v in value)
    if kind is bool:
        return isinstance(value, bool)
    return isinstance(value, kind) and not isinstance(value, bool)


def parse_config(text: str, path: str | None = None, base_dir: Path | None = None) -> RunConfig:
    """Parse TOML text into a validated :class:`RunConfig`; errors carry line numbers."""
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"invalid TOML: {exc}", getattr(exc, "lineno", None), path) from None
    lines = _key_lines(text)

    def fail(msg: str, section: str, key: str = "") -> ConfigError:
        return ConfigError(msg, lines.get((section, key)) or lines.get((section, "")), path)

    for section, body in data.items():
        if section not in _SCHEMA or not isinstance(body, dict):
            raise fail(f"unknown section [{section}]", section)
        for key, value in body.items():
            if key not in _SCHEMA[section]:
                raise fail(f"unknown key {key!r} in [{section}]", section, key)
            if not _check_type(value, _SCHEMA[section][key]):
                raise fail(f"bad value for {section}.{key}: {value!r}", section, key)

    cfg = RunConfig()
    get = lambda s, k, d=None: data.get(s, {}).get(k, d)  # noqa: E731

    geo = data.get("geometry", {})
    if geo:
        kw = {k: (tuple(float(x) for x in v) if isinstance(v, list) else float(v)) for k, v in geo.items()}
        geometry = replace(FLAT_2D, **kw)
        try:
            geometry.validate()
        except GeometryError as exc:
            raise fail(str(exc), "geometry") from None
        cfg.geometry = geometry

    cfg.resolution = get("mesh", "resolution", cfg.resolution)
    cfg.order = get("mesh", "order", cfg.order)

    model = get("material", "model", "brauer")
    try:
        if model == "brauer":
            d = BrauerCurve()
            cfg.curve = BrauerCurve(get("material", "k1", d.k1), get("material", "k2", d.k2),
                                    get("material", "k3", d.k3))
        elif model == "linear":
            if get("material", "nu") is not None:
                nu = float(get("material", "nu"))
            else:
                nu = NU0 / float(get("material", "mu_r", 1000.0))
            cfg.curve = LinearCurve(nu)
        elif model == "table":
            table = get("material", "path")
            if table is None:
                raise fail("material model 'table' needs a path", "material", "model")
            p = Path(table)
            if not p.is_absolute() and base_dir is not None:
                p = base_dir / p
            cfg.curve = load_table_curve(p)
        else:
            raise fail(f"unknown material model {model!r}", "material", "model")
    except ConfigError:
        raise
    except (ValueError, OSError) as exc:
        raise fail(f"material: {exc}", "material") from None
    cfg.kappa = float(get("material", "kappa", cfg.kappa))

    cfg.amplitude = float(get("source", "amplitude", cfg.amplitude))
    cfg.turns = get("source", "turns", cfg.turns)
    cfg.time_constant = float(get("source", "time_constant", cfg.time_constant))

    scheme = get("run", "scheme")
    if scheme is not None:
        try:
            s = _scheme_kind(scheme)
        except ValueError as exc:
            raise fail(str(exc), "run", "scheme") from None
        cfg.scheme, stages = s
        if stages:
            cfg.stages = stages
    cfg.stages = get("run", "stages", cfg.stages)
    cfg.implicit_tau = float(get("run", "tau", cfg.implicit_tau))
    cfg.end_time = float(get("run", "end_time", cfg.end_time))
    cfg.output_interval = float(get("run", "output_interval", cfg.output_interval))
    cfg.update_tol = float(get("run", "update_tol", cfg.update_tol))
    cfg.safety = float(get("run", "safety", cfg.safety))
    cfg.seed = get("run", "seed", cfg.seed)

    cfg.pcg_tol = float(get("solver", "pcg_tol", cfg.pcg_tol))
    cfg.pod_size = get("solver", "pod_size", cfg.pod_size)
    cfg.lambda_rtol = float(get("solver", "lambda_rtol", cfg.lambda_rtol))

    rects = get("probes", "rects")
    if rects is not None:
        cfg.probes = tuple(tuple(float(x) for x in r) for r in rects)
    schemes = get("compare", "schemes")
    if schemes is not None:
        for sch in schemes:
            try:
                _scheme_kind(sch)
            except ValueError as exc:
                raise fail(str(exc), "compare", "schemes") from None
        cfg.compare = tuple(schemes)
    cfg.oracle_tau = float(get("compare", "oracle_tau", cfg.oracle_tau))
    out = get("output", "dir")
    if out is not None:
        cfg.out = Path(out) if Path(out).is_absolute() or base_dir is None else base_dir / out
    cfg.vtk = get("output", "vtk", cfg.vtk)

    try:
        cfg.validate()
    except ConfigError as exc:
        key = _FIELD_KEYS.get(str(exc).split()[0], ("", ""))
        raise fail(str(exc), *key) from None
    return cfg


_FIELD_KEYS = {
    "end_time": ("run", "end_time"), "output_interval": ("run", "output_interval"), "rkc": ("run", "stages"),
    "unknown": ("run", "scheme"), "resolution": ("mesh", "resolution"), "order": ("mesh", "order"),
    "probes": ("probes", "rects"), "safety": ("run", "safety"), "update_tol": ("run", "update_tol"),
    "implicit_tau": ("run", "tau"), "oracle_tau": ("compare", "oracle_tau"), "pcg_tol": ("solver", "pcg_tol"),
    "lambda_rtol": ("solver", "lambda_rtol"), "kappa": ("material", "kappa"),
    "time_constant": ("source", "time_constant"),
}


def _scheme_kind(text: str) -> tuple[str, int | None]:
    name, _, arg = text.strip().lower().partition(":")
    if name == "implicit":
        return "implicit", None
    if name == "euler":
        return "euler", None
    if name == "rkc":
        if not arg:
            return "rkc", None
        if not arg.isdigit():
            raise ValueError(f"bad stage count in scheme {text!r}")
        return "rkc", int(arg)
    raise ValueError(f"unknown scheme {text!r} (expected euler, rkc[:s] or implicit)")


def load_config(path: str | Path) -> RunConfig:
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc.strerror}", path=str(p)) from None
    return parse_config(text, str(p), p.parent)


def apply_overrides(cfg: RunConfig, args: argparse.Namespace) -> RunConfig:
    if getattr(args, "scheme", None):
        schemes = args.scheme
        if args.command == "compare":
            cfg.compare = tuple(schemes)
        else:
            try:
                kind, stages = _scheme_kind(schemes[-1])
            except ValueError as exc:
                raise ConfigError(str(exc)) from None
            cfg.scheme = kind
            if stages:
                cfg.stages = stages
    for name in ("stages", "order", "resolution", "seed"):
        value = getattr(args, name, None)
        if value is not None:
            setattr(cfg, name, value)
    if getattr(args, "out", None):
        cfg.out = Path(args.out)
    cfg.validate()
    return cfg


# --- running ---------------------------------------------------------------

CSV_BASE = ["step", "t", "tau", "i_source"]
CSV_TAIL = ["f_evals", "pcg_iters", "matrix_updated", "lambda_max"]


def csv_header(n_probes: int = 3) -> list[str]:
    return CSV_BASE + [f"probe_S{k + 1}" for k in range(n_probes)] + CSV_TAIL


def _fmt(x: float) -> str:
    return repr(float(x))


def write_csv(path: Path | None, result: RunResult, n_probes: int, stream=None) -> None:
    """Write the run's records; ``path=None`` writes to ``stream``."""
    def emit(fh):
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(csv_header(n_probes))
        for r in result.records:
            w.writerow([r.step, _fmt(r.t), _fmt(r.tau), _fmt(r.i_source), *(_fmt(p) for p in r.probes),
                        r.f_evals, r.pcg_iters, r.matrix_updated, _fmt(r.lambda_max)])
    if path is None:
        emit(stream or sys.stdout)
    else:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="") as fh:
            emit(fh)


class _Observer:
    """Probe averages at output times, optionally with VTK field snapshots."""

    def __init__(self, problem: Problem, vtk_dir: Path | None, label: str):
        self.problem = problem
        self.vtk_dir = vtk_dir
        self.label = label.replace(":", "")
        self.count = 0
        if vtk_dir is not None:
            vtk_dir.mkdir(parents=True, exist_ok=True)

    def __call__(self, t: float, a_c: np.ndarray, a_n: np.ndarray) -> tuple[float, ...]:
        probes = self.problem.observe(t, a_c, a_n)
        if self.vtk_dir is not None:
            p = self.problem
            full = p.system.partition.scatter(a_c, a_n)
            B = p.flux(a_c, a_n)
            write_vtk(self.vtk_dir / f"{self.label}_{self.count:05d}.vtk", p.mesh,
                      point_data={"A_z": full[: p.mesh.n_vertices]},
                      cell_data={"B": B, "B_mag": np.hypot(B[:, 0], B[:, 1])},
                      title=f"{self.label} t={t!r}")
        self.count += 1
        return probes


def execute(problem: Problem, cfg: RunConfig, scheme: str, observe=None) -> RunResult:
    """Run one scheme ("euler", "rkc:s" or "implicit"); failures are stored in the result."""
    observe = observe or problem.observe
    kind, stages = _scheme_kind(scheme)
    if kind == "implicit":
        return implicit_euler_oracle(problem.system, cfg.implicit_tau, cfg.end_time, cfg.output_interval, problem.spec.excitation, observe)
    sch = Scheme("rkc", stages or cfg.stages) if kind == "rkc" else Scheme("euler")
    op = problem.operator(pcg_tol=cfg.pcg_tol, pod_size=cfg.pod_size or None)
    try:
        return run_explicit(op, sch, cfg.explicit(), observe=observe)
    except InstabilityError as exc:
        return exc.result or RunResult(sch.label, failure=str(exc))
    except SolverError as exc:
        return RunResult(sch.label, failure=str(exc))


def summary_lines(result: RunResult, cfg: RunConfig) -> list[str]:
    lines = [f"scheme: {result.label}",
             f"mesh: resolution {cfg.resolution}, order {cfg.order}",
             f"end_time: {cfg.end_time!r} s",
             f"steps: {result.steps}",
             f"f_evals: {result.f_evals}",
             f"pcg_iterations: {result.pcg_iterations}",
             f"matrix_updates: {result.matrix_updates}",
             f"lambda_estimates: {result.lambda_estimates}",
             f"wall_time: {result.wall_time:.3f} s",
             f"status: {'FAILED: ' + result.failure if result.failure else 'ok'}"]
    return ["[summary]"] + ["  " + s for s in lines]


@contextlib.contextmanager
def thread_limit():
    """Cap BLAS/OpenMP pools at MQS_THREADS workers when set."""
    raw = os.environ.get("MQS_THREADS", "").strip()
    if not raw:
        yield
        return
    try:
        n = int(raw)
        if n < 1:
            raise ValueError
    except ValueError:
        raise ConfigError(f"MQS_THREADS must be a positive integer, got {raw!r}") from None
    try:
        from threadpoolctl import threadpool_limits
    except ImportError:
        yield
        return
    with threadpool_limits(limits=n):
        yield


def cmd_run(cfg: RunConfig, out=None) -> int:
    out = out or sys.stdout
    problem = Problem(cfg.spec())
    label = cfg.scheme_label()
    vtk_dir = cfg.out / "vtk" if (cfg.vtk and cfg.out) else None
    result = execute(problem, cfg, label, _Observer(problem, vtk_dir, label))
    n_probes = len(problem.probes)
    if cfg.out is not None:
        csv_path = cfg.out / f"{label.replace(':', '')}.csv"
        write_csv(csv_path, result, n_probes)
        lines = summary_lines(result, cfg) + [f"  csv: {csv_path}"]
        (cfg.out / "summary.txt").write_text("\n".join(lines) + "\n")
    else:
        write_csv(None, result, n_probes, stream=out)
        lines = summary_lines(result, cfg)
    print("\n".join(lines), file=sys.stderr if cfg.out is None else out)
    return EXIT_FAILED if result.failure else EXIT_OK


@dataclass
class StabilityRow:
    scheme: str
    tau_raw: float
    tau_safe: float
    steps_raw: int
    evals_raw: int
    steps_safe: int
    evals_safe: int


def stability_table(lambda_max: float, end_time: float, safety: float = 0.9,
                    stages: Sequence[int] = STABILITY_STAGES) -> list[StabilityRow]:
    """Step bounds and predicted f-evaluation counts over ``end_time``."""
    rows = []
    for s in (1, *stages):
        tau = euler_max_step(lambda_max) if s == 1 else rkc_max_step(s, lambda_max)
        steps = [math.ceil(end_time / (f * tau) - 1e-9) if end_time > 0 else 0 for f in (1.0, safety)]
        rows.append(StabilityRow("euler" if s == 1 else f"rkc:{s}", tau, safety * tau,
                                 steps[0], steps[0] * s, steps[1], steps[1] * s))
    return rows


def cmd_stability(cfg: RunConfig, out=None) -> int:
    out = out or sys.stdout
    problem = Problem(cfg.spec())
    op = problem.operator(pcg_tol=cfg.pcg_tol, pod_size=None)
    est = op.lambda_max(rel_tol=cfg.lambda_rtol, seed=cfg.seed)
    p = lambda s="": print(s, file=out)  # noqa: E731
    p(f"lambda_max: {est.value:.6e} 1/s ({est.iterations} power iterations, "
      f"{'converged' if est.converged else 'NOT converged'})")
    p(f"dofs: n_c {problem.system.n_c}, n_n {problem.system.n_n}")
    p(f"end_time: {cfg.end_time!r} s, safety factor {cfg.safety}")
    p(f"RKC bound: tau <= {RKC_STABILITY}*s^2/lambda")
    p()
    p(f"{'scheme':<8} {'tau_max':>12} {'tau_safe':>12} {'steps':>8} {'evals':>9} {'steps_safe':>10} "
      f"{'evals_safe':>10} {'tau_driver':>12}")
    for row in stability_table(est.value, cfg.end_time, cfg.safety):
        kind, _, s = row.scheme.partition(":")
        sch = Scheme(kind, int(s) if s else 1)
        driver = stable_step(sch, est.value * ExplicitConfig(1.0, 1.0).lambda_inflation, cfg.safety)
        p(f"{row.scheme:<8} {row.tau_raw:12.5e} {row.tau_safe:12.5e} {row.steps_raw:8d} {row.evals_raw:9d} "
          f"{row.steps_safe:10d} {row.evals_safe:10d} {driver:12.5e}")
    return EXIT_OK if est.converged else EXIT_FAILED


def cmd_compare(cfg: RunConfig, out=None) -> int:
    out = out or sys.stdout
    schemes = list(cfg.compare)
    if len(schemes) < 2:
        raise ConfigError("compare needs at least two schemes")
    problem = Problem(cfg.spec())
    ref = implicit_euler_oracle(problem.system, cfg.oracle_tau, cfg.end_time, cfg.output_interval,
                                problem.spec.excitation, problem.observe)
    results: list[tuple[str, RunResult]] = []
    seen: dict[str, int] = {}
    for sch in schemes:
        seen[sch] = seen.get(sch, 0) + 1
        name = sch if seen[sch] == 1 else f"{sch}#{seen[sch]}"
        results.append((name, execute(problem, cfg, sch)))
    n_probes = len(problem.probes)
    if cfg.out is not None:
        write_csv(cfg.out / "implicit_oracle.csv", ref, n_probes)
        for name, r in results:
            write_csv(cfg.out / f"{name.replace(':', '').replace('#', '_')}.csv", r, n_probes)

    p = lambda s="": print(s, file=out)  # noqa: E731
    p(f"reference: implicit Euler, tau {cfg.oracle_tau!r} s ({ref.wall_time:.3f} s)")
    p(f"err = max|B_ref - B| / max|B_ref| over {len(ref.records)} output times and {n_probes} probes")
    p()
    p(f"{'scheme':<10} {'err_vs_ref':>11} {'steps':>8} {'f_evals':>9} {'pcg_iters':>10} {'updates':>8} "
      f"{'lambdas':>8} {'wall_s':>9}  status")
    ref_b = ref.probe_array()
    for name, r in results:
        err = trajectory_deviation(ref_b, r.probe_array()) if not r.failure else math.nan
        p(f"{name:<10} {err:11.4e} {r.steps:8d} {r.f_evals:9d} {r.pcg_iterations:10d} {r.matrix_updates:8d} "
          f"{r.lambda_estimates:8d} {r.wall_time:9.3f}  {'FAILED: ' + r.failure if r.failure else 'ok'}")
    p()
    p("pairwise err (row = reference)")
    names = [n for n, _ in results]
    p(" " * 10 + "".join(f"{n:>12}" for n in names))
    for na, ra in results:
        cells = []
        for nb, rb in results:
            ok = not (ra.failure or rb.failure)
            cells.append(f"{trajectory_deviation(ra.probe_array(), rb.probe_array()) if ok else math.nan:12.4e}")
        p(f"{na:<10}" + "".join(cells))
    return EXIT_FAILED if any(r.failure for _, r in results) else EXIT_OK


def cmd_mesh_dump(cfg: RunConfig, out=None) -> int:
    out = out or sys.stdout
    problem = Problem(cfg.spec())
    mesh, system = problem.mesh, problem.system
    p = lambda s="": print(s, file=out)  # noqa: E731
    p(f"vertices: {mesh.n_vertices}")
    p(f"triangles: {mesh.n_triangles}")
    for tag in sorted(set(int(r) for r in mesh.regions)):
        p(f"  {RegionTag(tag).name.lower()}: {int(np.sum(mesh.regions == tag))} triangles, "
          f"area {mesh.region_area(RegionTag(tag)):.6e} m^2")
    p(f"order: {cfg.order}, dofs: {system.space.n_dofs} (conductor {system.n_c}, "
      f"non-conductor {system.n_n}, dirichlet {len(system.partition.dirichlet)})")
    issues = saturation_check(cfg.curve)
    p(f"material check: {'ok' if not issues else '; '.join(issues)}")
    if cfg.out is not None:
        cfg.out.mkdir(parents=True, exist_ok=True)
        write_vtk(cfg.out / "mesh.vtk", mesh)
        files = system.export_matrix_market(cfg.out / "matrices")
        p(f"wrote {cfg.out / 'mesh.vtk'} and {len(files)} matrix files")
    return EXIT_OK


COMMANDS = {"run": cmd_run, "stability": cmd_stability, "compare": cmd_compare, "mesh-dump": cmd_mesh_dump}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mqsim", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_ in (("run", "integrate one scheme and write the probe CSV"),
                        ("stability", "report lambda_max and stable step sizes"),
                        ("compare", "run several schemes against the implicit reference"),
                        ("mesh-dump", "print mesh statistics and export mesh/matrices")):
        sp = sub.add_parser(name, help=help_)
        sp.add_argument("--config", help="TOML run configuration")
        sp.add_argument("--scheme", action="append",
                        help="euler, rkc[:s] or implicit (repeat for compare)")
        sp.add_argument("--stages", type=int, help="RKC stage count s")
        sp.add_argument("--order", type=int, choices=(1, 2), help="finite element order")
        sp.add_argument("--resolution", type=int, help="mesh resolution level")
        sp.add_argument("--out", help="output directory")
        sp.add_argument("--seed", type=int, help="seed for the power-iteration start vector")
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config) if args.config else RunConfig()
        cfg = apply_overrides(cfg, args)
        with thread_limit():
            return COMMANDS[args.command](cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
