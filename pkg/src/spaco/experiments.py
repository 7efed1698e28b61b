"""Experiment configuration and seeded runners that write CSV outputs.

A configuration is a flat text file of ``section.key = value`` lines::

    experiment.kind = convergence
    problem.name = nonlinear
    solver.alpha0 = 0.05
    variant.fast = alpha0=0.2

Runs are independent jobs identified by sorted keys, so results do not
depend on execution order or on the number of worker processes.
"""

from __future__ import annotations

import csv
import enum
import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Callable, Iterable, Optional, Sequence

import numpy as np

from spaco.benchmarks import basin_errors, classify_basin, make_problem
from spaco.diagnostics import DiagConfig, format_number, write_trace_csv
from spaco.problem import ConstrainedMinimaxProblem
from spaco.schedules import Schedule, validate
from spaco.solvers import RunTrace, StopCriteria, StopReason, gda_fp_run, minminmax_run, spaco_run


class ConfigError(ValueError):
    pass


class ExperimentKind(enum.Enum):
    CONVERGENCE = "convergence"
    BASIN_GRID = "basin"
    ABLATION = "ablation"


PROBLEMS = ("toy2d", "nonlinear", "linear")
SOLVERS = ("spaco", "gda_fp", "minminmax")

# Tuned hyperparameters for the synthetic problems.
SOLVER_DEFAULTS: dict[tuple[str, str], dict[str, Any]] = {
    ("spaco", "toy2d"): dict(rho0=10.0, alpha0=0.1, beta0=0.1, sigma0=1e-4),
    ("spaco", "nonlinear"): dict(rho0=10.0, alpha0=0.1, beta0=0.1, sigma0=1e-4),
    ("spaco", "linear"): dict(rho0=20.0, alpha0=0.01, beta0=0.1, sigma0=1e-4),
    ("gda_fp", "toy2d"): dict(rho=20.0, alpha=0.001, beta=0.01),
    ("gda_fp", "nonlinear"): dict(rho=20.0, alpha=0.001, beta=0.01),
    ("gda_fp", "linear"): dict(rho=20.0, alpha=0.001, beta=0.01),
    ("minminmax", "toy2d"): dict(alpha=0.01, beta=0.01, gamma=0.1, inner_steps=1),
    ("minminmax", "nonlinear"): dict(alpha=0.01, beta=0.01, gamma=0.1, inner_steps=1),
    ("minminmax", "linear"): dict(alpha=0.001, beta=0.1, gamma=0.1, inner_steps=1),
}
SOLVER_KEYS = {
    "spaco": {f.name for f in fields(Schedule)},
    "gda_fp": {"rho", "alpha", "beta"},
    "minminmax": {"alpha", "beta", "gamma", "inner_steps", "lambda0", "lambda_cap"},
}

TRACE_META_SUFFIX = ".meta.json"
AGGREGATE_COLUMNS = ("k", "runs", "eps_x_median", "eps_x_q25", "eps_x_q75",
                     "eps_y_median", "eps_y_q25", "eps_y_q75")
BASIN_COLUMNS = ("x0_1", "x0_2", "class", "E_opt", "E_spur")
ABLATION_COLUMNS = ("variant", "mean_iterations", "std_iterations", "success_count", "repetitions")


@dataclass(frozen=True)
class ProblemSpec:
    name: str = "nonlinear"
    n: Optional[int] = None
    delta: float = 1.0
    seed: int = 0

    def build(self) -> ConstrainedMinimaxProblem:
        return make_problem(self.name, self.n, self.delta, self.seed)


@dataclass(frozen=True)
class GridSpec:
    low: float = -0.75
    high: float = 0.75
    resolution: int = 25
    radius: float = 0.1

    def axis(self) -> np.ndarray:
        return np.linspace(self.low, self.high, self.resolution)


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything needed to reproduce one experiment.

    ``solver_params`` override the per-problem defaults in
    :data:`SOLVER_DEFAULTS`; ``variants`` are ``(label, overrides)`` pairs
    used by ablations.
    """

    kind: ExperimentKind = ExperimentKind.CONVERGENCE
    problem: ProblemSpec = ProblemSpec()
    solver: str = "spaco"
    solver_params: dict[str, Any] = field(default_factory=dict)
    stop: StopCriteria = StopCriteria(max_iters=10_000)
    diag: DiagConfig = DiagConfig(kkt=False)
    repetitions: int = 10
    seed: int = 0
    output: str = "results"
    init: str = "uniform"
    grid: GridSpec = GridSpec()
    variants: tuple[tuple[str, dict[str, Any]], ...] = ()

    def __post_init__(self) -> None:
        if self.problem.name not in PROBLEMS:
            raise ConfigError(f"unknown problem {self.problem.name!r}; expected one of {', '.join(PROBLEMS)}")
        if self.solver not in SOLVERS:
            raise ConfigError(f"unknown solver {self.solver!r}; expected one of {', '.join(SOLVERS)}")
        if self.repetitions < 1:
            raise ConfigError(f"repetitions must be >= 1, got {self.repetitions}")
        if self.grid.resolution < 2:
            raise ConfigError(f"grid resolution must be >= 2, got {self.grid.resolution}")
        if self.init not in ("uniform", "zero"):
            raise ConfigError(f"init must be 'uniform' or 'zero', got {self.init!r}")
        for key in self.solver_params:
            self._check_key(key)
        for label, overrides in self.variants:
            for key in overrides:
                self._check_key(key, f"variant {label!r}: ")
        if self.solver == "spaco":
            for label, overrides in (("base", {}),) + tuple(self.variants):
                res = validate(self.schedule(overrides))
                if not res.ok:
                    raise ConfigError(f"schedule for {label}: " + "; ".join(res.violations))

    def _check_key(self, key: str, where: str = "") -> None:
        if key not in SOLVER_KEYS[self.solver]:
            raise ConfigError(f"{where}unknown {self.solver} parameter {key!r}; "
                              f"expected one of {', '.join(sorted(SOLVER_KEYS[self.solver]))}")

    def params(self, overrides: Optional[dict[str, Any]] = None) -> dict[str, Any]:
        out = dict(SOLVER_DEFAULTS[(self.solver, self.problem.name)])
        out.update(self.solver_params)
        out.update(overrides or {})
        return out

    def schedule(self, overrides: Optional[dict[str, Any]] = None) -> Schedule:
        return Schedule(**self.params(overrides))

    def with_overrides(self, **changes: Any) -> "ExperimentConfig":
        return replace(self, **changes)


# --- config text -----------------------------------------------------------

def _parse_scalar(text: str) -> Any:
    low = text.lower()
    if low in ("true", "yes", "on"):
        return True
    if low in ("false", "no", "off"):
        return False
    if low in ("none", "null", ""):
        return None
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        return text


def _parse_overrides(text: str, where: str) -> dict[str, Any]:
    out: dict[str, Any] = {}
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        if "=" not in part:
            raise ConfigError(f"{where}: expected key=value, got {part!r}")
        key, value = (s.strip() for s in part.split("=", 1))
        out[key] = _parse_scalar(value)
    return out


def parse_config_text(text: str) -> dict[str, Any]:
    """Parse ``section.key = value`` lines into a flat dict (later lines win,
    except ``variant.*`` keys, which keep their file order)."""
    out: dict[str, Any] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'section.key = value', got {raw!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if "." not in key:
            raise ConfigError(f"line {lineno}: key {key!r} needs a section prefix")
        if key.startswith("variant."):
            out[key] = _parse_overrides(value, f"line {lineno}")
        else:
            out[key] = _parse_scalar(value)
    return out


def _take(flat: dict[str, Any], key: str, default: Any, kind: Callable[[Any], Any]) -> Any:
    if key not in flat or flat[key] is None:
        return default
    value = flat.pop(key)
    try:
        return kind(value)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{key}: {exc}") from None


def _opt_float(v: Any) -> Optional[float]:
    return None if v is None else float(v)


def _as_bool(v: Any) -> bool:
    if isinstance(v, bool):
        return v
    raise ValueError(f"expected true or false, got {v!r}")


def config_from_flat(flat: dict[str, Any]) -> ExperimentConfig:
    flat = dict(flat)
    kind_text = _take(flat, "experiment.kind", "convergence", str)
    try:
        kind = ExperimentKind(kind_text)
    except ValueError:
        raise ConfigError(f"experiment.kind must be one of convergence, basin, ablation; got {kind_text!r}") from None
    name = _take(flat, "problem.name", "toy2d" if kind is ExperimentKind.BASIN_GRID else "nonlinear", str)
    problem = ProblemSpec(
        name=name,
        n=_take(flat, "problem.n", None, int),
        delta=_take(flat, "problem.delta", 0.0 if name == "toy2d" else 1.0, float),
        seed=_take(flat, "problem.seed", 0, int),
    )
    basin = kind is ExperimentKind.BASIN_GRID
    ablation = kind is ExperimentKind.ABLATION
    stop_defaults = dict(max_iters=30_000 if ablation else 10_000,
                         target_eps=1e-4 if ablation else None,
                         residual_tol=1e-6 if basin else None,
                         residual_measure="kkt" if basin else "gap")
    try:
        stop = StopCriteria(
            max_iters=_take(flat, "stop.max_iters", stop_defaults["max_iters"], int),
            target_eps=_take(flat, "stop.target_eps", stop_defaults["target_eps"], _opt_float),
            residual_tol=_take(flat, "stop.residual_tol", stop_defaults["residual_tol"], _opt_float),
            residual_measure=_take(flat, "stop.residual_measure", stop_defaults["residual_measure"], str),
        )
        diag = DiagConfig(
            stride=_take(flat, "diag.stride", 10 if basin else 1, int),
            inner_tol=_take(flat, "diag.inner_tol", 1e-4, float),
            kkt=_take(flat, "diag.kkt", basin, _as_bool),
            merit=_take(flat, "diag.merit", False, _as_bool),
            gap=_take(flat, "diag.gap", False, _as_bool),
            gap_samples=_take(flat, "diag.gap_samples", 1000, int),
            phi_lower=_take(flat, "diag.phi_lower", None, _opt_float),
        )
        grid = GridSpec(
            low=_take(flat, "grid.low", -0.75, float),
            high=_take(flat, "grid.high", 0.75, float),
            resolution=_take(flat, "grid.resolution", 25, int),
            radius=_take(flat, "grid.radius", 0.1, float),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    solver = _take(flat, "solver.name", "spaco", str)
    solver_params = {k.split(".", 1)[1]: flat.pop(k) for k in sorted(flat) if k.startswith("solver.")}
    variants = tuple((k.split(".", 1)[1], flat.pop(k)) for k in list(flat) if k.startswith("variant."))
    cfg = ExperimentConfig(
        kind=kind,
        problem=problem,
        solver=solver,
        solver_params=solver_params,
        stop=stop,
        diag=diag,
        repetitions=_take(flat, "experiment.repetitions", 1 if basin else 10, int),
        seed=_take(flat, "experiment.seed", 0, int),
        output=_take(flat, "experiment.output", "results", str),
        init=_take(flat, "experiment.init", "zero" if basin else "uniform", str),
        grid=grid,
        variants=variants,
    )
    if flat:
        raise ConfigError(f"unknown config keys: {', '.join(sorted(flat))}")
    return cfg


def load_config(path: os.PathLike | str) -> ExperimentConfig:
    return config_from_flat(parse_config_text(Path(path).read_text()))


# --- single runs -----------------------------------------------------------

def initial_point(problem: ConstrainedMinimaxProblem, seed: int, mode: str = "uniform") -> tuple[np.ndarray, np.ndarray]:
    """Uniform draw from ``X x Y`` (or the origin projected onto the boxes)."""
    if mode == "zero":
        return problem.set_x.project(np.zeros(problem.dim_x)), problem.set_y.project(np.zeros(problem.dim_y))
    rng = np.random.default_rng([seed, 0])
    return problem.set_x.sample(rng), problem.set_y.sample(rng)


def run_solver(problem: ConstrainedMinimaxProblem, cfg: ExperimentConfig, init: Sequence[np.ndarray],
               seed: int, overrides: Optional[dict[str, Any]] = None) -> RunTrace:
    p = cfg.params(overrides)
    if cfg.solver == "spaco":
        return spaco_run(problem, Schedule(**p), init, cfg.stop, cfg.diag, seed=seed)
    if cfg.solver == "gda_fp":
        return gda_fp_run(problem, p["rho"], p["alpha"], p["beta"], init, cfg.stop, cfg.diag, seed=seed)
    lam0 = p.get("lambda0")
    if lam0 is not None and len(init) == 2:
        init = (init[0], init[1], np.full(problem.num_constraints, float(lam0)))
    return minminmax_run(problem, p["alpha"], p["beta"], p["gamma"], int(p["inner_steps"]), init, cfg.stop,
                         cfg.diag, seed=seed, lambda_cap=p.get("lambda_cap", 1e6))


def trace_meta(trace: RunTrace) -> dict[str, Any]:
    meta = dict(trace.header)
    meta.update(stop_reason=trace.stop_reason.value, iterations=trace.iterations,
                lambda_cap_hit=trace.lambda_cap_hit)
    if trace.abort_message:
        meta["abort_message"] = trace.abort_message
    return {k: (format_number(v) if isinstance(v, float) else v) for k, v in meta.items()}


def _write_csv(path: Path, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> None:
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([v if isinstance(v, str) else format_number(v) for v in row])


def _map(fn: Callable, jobs: Sequence[Any], threads: int) -> list[Any]:
    if threads <= 1 or len(jobs) <= 1:
        return [fn(job) for job in jobs]
    with ProcessPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, jobs))


@dataclass
class ExperimentResult:
    paths: list[Path]
    failures: list[str]

    @property
    def ok(self) -> bool:
        return not self.failures


# --- convergence -----------------------------------------------------------

def _convergence_job(job: tuple[ExperimentConfig, int]) -> RunTrace:
    cfg, seed = job
    problem = cfg.problem.build()
    trace = run_solver(problem, cfg, initial_point(problem, seed, cfg.init), seed)
    trace.final_state.rng = None  # generators need not cross process boundaries
    return trace


def aggregate_traces(traces: Sequence[RunTrace]) -> list[tuple]:
    """Per-k median and interquartile range of the error metrics."""
    by_k: dict[int, list[tuple[float, float]]] = {}
    for tr in traces:
        for row in tr.rows:
            if row.eps_x is not None:
                by_k.setdefault(row.k, []).append((row.eps_x, row.eps_y))
    out = []
    for k in sorted(by_k):
        vals = np.array(by_k[k])
        qx = np.percentile(vals[:, 0], [50, 25, 75])
        qy = np.percentile(vals[:, 1], [50, 25, 75])
        out.append((k, len(vals), *qx, *qy))
    return out


def run_convergence(cfg: ExperimentConfig, out_dir: Path, threads: int = 1) -> ExperimentResult:
    out_dir.mkdir(parents=True, exist_ok=True)
    seeds = [cfg.seed + r for r in range(cfg.repetitions)]
    traces = _map(_convergence_job, [(cfg, s) for s in seeds], threads)
    paths, failures = [], []
    for seed, tr in zip(seeds, traces):
        path = out_dir / f"trace_seed{seed}.csv"
        with path.open("w", newline="") as fh:
            write_trace_csv(tr.rows, fh)
        meta = out_dir / f"trace_seed{seed}{TRACE_META_SUFFIX}"
        meta.write_text(json.dumps(trace_meta(tr), sort_keys=True, indent=1) + "\n")
        paths += [path, meta]
        if tr.stop_reason is StopReason.ABORTED:
            failures.append(f"seed {seed}: {tr.abort_message}")
    agg = out_dir / "aggregate.csv"
    _write_csv(agg, AGGREGATE_COLUMNS, aggregate_traces(traces))
    paths.append(agg)
    return ExperimentResult(paths, failures)


# --- basin grid ------------------------------------------------------------

def _basin_job(job: tuple[ExperimentConfig, float, float]) -> tuple[str, float, float, Optional[str]]:
    cfg, a, b = job
    problem = cfg.problem.build()
    x0 = np.array([a, b])
    y0 = initial_point(problem, cfg.seed, cfg.init)[1]
    trace = run_solver(problem, cfg, (x0, y0), cfg.seed)
    st = trace.final_state
    e_opt, e_spur = basin_errors(problem, st.x, st.y)
    cls = classify_basin(problem, st.x, st.y, cfg.grid.radius)
    return cls.value, e_opt, e_spur, trace.abort_message


def basin_grid_rows(cfg: ExperimentConfig, threads: int = 1) -> tuple[list[tuple], list[str]]:
    problem = cfg.problem.build()
    if problem.dim_x != 2:
        raise ConfigError(f"basin grids need a 2-d x variable; {problem.name!r} has {problem.dim_x}")
    if problem.reference is None or not problem.reference.spurious_points:
        raise ConfigError(f"problem {problem.name!r} has no registered spurious points")
    axis = cfg.grid.axis()
    cells = [(float(a), float(b)) for a in axis for b in axis]
    results = _map(_basin_job, [(cfg, a, b) for a, b in cells], threads)
    rows, failures = [], []
    for (a, b), (cls, e_opt, e_spur, abort) in zip(cells, results):
        rows.append((a, b, cls, e_opt, e_spur))
        if abort:
            failures.append(f"cell ({a}, {b}): {abort}")
    return rows, failures


def run_basin_grid(cfg: ExperimentConfig, out_dir: Path, threads: int = 1) -> ExperimentResult:
    out_dir.mkdir(parents=True, exist_ok=True)
    rows, failures = basin_grid_rows(cfg, threads)
    path = out_dir / f"basin_{cfg.solver}.csv"
    _write_csv(path, BASIN_COLUMNS, rows)
    return ExperimentResult([path], failures)


# --- ablation --------------------------------------------------------------

BASE_VARIANT = "base"


def variant_label(overrides: dict[str, Any]) -> str:
    return ";".join(f"{k}={format_number(v) if isinstance(v, float) else v}" for k, v in overrides.items()) or BASE_VARIANT


def _ablation_job(job: tuple[ExperimentConfig, dict[str, Any], int]) -> tuple[int, bool, Optional[str]]:
    cfg, overrides, seed = job
    problem = cfg.problem.build()
    trace = run_solver(problem, cfg, initial_point(problem, seed, cfg.init), seed, overrides)
    return trace.iterations, trace.stop_reason is StopReason.TARGET_EPS, trace.abort_message


@dataclass(frozen=True)
class AblationRow:
    """Iterations to target per variant; unsuccessful runs count at the budget."""

    variant: str
    iterations: tuple[int, ...]
    successes: int

    @property
    def mean(self) -> float:
        return float(np.mean(self.iterations))

    @property
    def std(self) -> float:
        return float(np.std(self.iterations))

    def fields(self) -> tuple:
        return (self.variant, self.mean, self.std, self.successes, len(self.iterations))


def ablation_rows(cfg: ExperimentConfig, threads: int = 1) -> tuple[list[AblationRow], list[str]]:
    if cfg.stop.target_eps is None:
        raise ConfigError("ablation needs stop.target_eps")
    variants = [(BASE_VARIANT, {})] + [(label, dict(ov)) for label, ov in cfg.variants]
    seeds = [cfg.seed + r for r in range(cfg.repetitions)]
    jobs = [(cfg, ov, s) for _, ov in variants for s in seeds]
    results = _map(_ablation_job, jobs, threads)
    rows, failures = [], []
    for i, (label, _) in enumerate(variants):
        chunk = results[i * len(seeds):(i + 1) * len(seeds)]
        rows.append(AblationRow(label, tuple(r[0] for r in chunk), sum(r[1] for r in chunk)))
        failures += [f"{label}, seed {s}: {r[2]}" for s, r in zip(seeds, chunk) if r[2]]
    return rows, failures


def run_ablation(cfg: ExperimentConfig, out_dir: Path, threads: int = 1) -> ExperimentResult:
    out_dir.mkdir(parents=True, exist_ok=True)
    rows, failures = ablation_rows(cfg, threads)
    path = out_dir / "ablation.csv"
    _write_csv(path, ABLATION_COLUMNS, [r.fields() for r in rows])
    return ExperimentResult([path], failures)


RUNNERS = {
    ExperimentKind.CONVERGENCE: run_convergence,
    ExperimentKind.BASIN_GRID: run_basin_grid,
    ExperimentKind.ABLATION: run_ablation,
}


def table1_variants() -> tuple[tuple[str, dict[str, Any]], ...]:
    """The one-factor-at-a-time variants around the base nonlinear setting."""
    specs = [dict(alpha0=0.05), dict(alpha0=0.2), dict(beta0=0.05), dict(beta0=0.2),
             dict(rho0=5.0), dict(rho0=20.0), dict(t=0.03, s=0.12), dict(t=0.07, s=0.28)]
    return tuple((variant_label(s), s) for s in specs)


def read_csv_rows(path: os.PathLike | str) -> tuple[list[str], list[list[str]]]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]

