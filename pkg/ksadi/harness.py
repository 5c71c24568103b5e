"""Experiment runners: spatial and temporal convergence studies, the ADI versus
five-point benchmark, and free simulations with streamed diagnostics.

Runners return in-memory results; writing them is left to `ksadi.render`.
Long loops report progress through an optional `progress(text)` callback.
"""
import math
import os
import time
import warnings
from dataclasses import dataclass, field
from typing import Callable, Dict, List, NamedTuple, Optional

import numpy as np
from ksadi.diagnostics import DiagnosticsRecord, record
from ksadi.exceptions import (
    ConfigurationError,
    ConvergenceWarning,
    DomainError,
    FieldError,
    NumericalAbort,
)
from ksadi.grid import (
    Field,
    GridSpec,
    State,
    make_grid,
    read_field,
    sample_field,
    write_field,
    zeros,
)
from ksadi.manufactured import DEFAULT_CASE, ManufacturedCase
from ksadi.schemes import AdiWorkspace, PositivityReport, SchemeConfig, SchemeKind, step

Progress = Callable[[str], None]
CLOSURE_NOTE = "boundary nodes pinned to the exact solution (Dirichlet closure)"
RATIO_NOTE = "ratio = error(coarse) / error(fine); about 2**p for order p"


def _quiet(text: str) -> None:
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str
    xmin: float
    xmax: float
    ymin: float
    ymax: float
    nx: int
    ny: int
    bc: str
    dx_list: List[float]
    dt_list: List[float]
    dt: float
    final_time: float
    scheme: str
    epsilon: float
    cg_tol: float
    cg_maxiter: int
    output_dir: str
    format: str
    cadence: int
    snapshot_times: List[float]
    seed: int
    threads: int
    reference: str
    benchmark_grids: List[int]
    initial: str
    initial_mass: float
    initial_width: float
    initial_rho: str
    initial_c: str
    closure: str
    bootstrap: bool

    @classmethod
    def from_dict(cls, config: dict) -> "ExperimentConfig":
        """Builds the typed configuration from a validated `ksadi.config` dictionary."""
        try:
            return cls(**config)
        except TypeError as error:
            raise ConfigurationError(f"Incomplete experiment configuration: {error}") from error

    def grid(self, nx: Optional[int] = None, ny: Optional[int] = None) -> GridSpec:
        return make_grid(
            self.xmin, self.xmax, self.ymin, self.ymax, nx or self.nx, ny or self.ny, self.bc
        )

    def grid_for_spacing(self, dx: float) -> GridSpec:
        return self.grid(
            _intervals(self.xmax - self.xmin, dx, "dx_list"),
            _intervals(self.ymax - self.ymin, dx, "dx_list"),
        )

    def scheme_config(
        self, dt: float, scheme: Optional[str] = None, case: Optional[ManufacturedCase] = None
    ) -> SchemeConfig:
        forcing = closure = None
        if case is not None:
            forcing = case.forcing()
            closure = case.closure() if self.closure == "dirichlet" else None
        return SchemeConfig(
            epsilon=self.epsilon,
            dt=dt,
            scheme=scheme or self.scheme,
            cg_tol=self.cg_tol,
            cg_maxiter=self.cg_maxiter or None,
            forcing=forcing,
            closure=closure,
            threads=self.threads,
        )


def _intervals(length: float, spacing: float, key: str) -> int:
    count = int(round(length / spacing))
    if count < 3 or abs(count * spacing - length) > 1e-9 * length:
        raise ConfigurationError(
            f"Spacing {spacing!r} does not divide the domain length {length!r}", key=key
        )
    return count


def step_count(final_time: float, dt: float) -> int:
    """Number of steps of size `dt` reaching `final_time`, which must be a multiple of `dt`."""
    steps = int(round(final_time / dt))
    if steps < 1 or abs(steps * dt - final_time) > 1e-9 * final_time:
        raise ConfigurationError(
            f"final_time {final_time!r} is not a multiple of dt {dt!r}", key="final_time"
        )
    return steps


class ConvergenceRow(NamedTuple):
    resolution: float
    max_error_rho: float
    max_error_c: float
    ratio_rho: Optional[float] = None
    ratio_c: Optional[float] = None


@dataclass
class ConvergenceReport:
    rows: List[ConvergenceRow]
    label: str = "resolution"
    metadata: Dict = field(default_factory=dict)


def build_convergence_report(
    resolutions: List[float],
    errors_rho: List[float],
    errors_c: List[float],
    label: str,
    metadata: Optional[dict] = None,
) -> ConvergenceReport:
    """Rows in the given order; ratios compare each row with the previous one."""
    rows = []
    for index, (resolution, error_rho, error_c) in enumerate(
        zip(resolutions, errors_rho, errors_c)
    ):
        ratio_rho = ratio_c = None
        if index:
            ratio_rho = _ratio(errors_rho[index - 1], error_rho)
            ratio_c = _ratio(errors_c[index - 1], error_c)
        rows.append(
            ConvergenceRow(float(resolution), float(error_rho), float(error_c), ratio_rho, ratio_c)
        )
    growing = [row.resolution for row in rows if row.ratio_rho is not None and row.ratio_rho < 1.0]
    if growing:
        warnings.warn(
            f"Density error grows under refinement at {label} = {growing}",
            ConvergenceWarning,
            stacklevel=2,
        )
    return ConvergenceReport(rows, label=label, metadata={"note": RATIO_NOTE, **(metadata or {})})


def _ratio(coarse: float, fine: float) -> Optional[float]:
    return float(coarse / fine) if fine > 0 else None


def integrate(
    state: State,
    cfg: SchemeConfig,
    steps: int,
    ws: Optional[AdiWorkspace] = None,
    on_step: Optional[Callable[[State, State], None]] = None,
) -> State:
    """Advances `state` by `steps` steps, calling `on_step(previous, current)` after each."""
    if ws is None and cfg.scheme is SchemeKind.ADI_SECOND_ORDER:
        ws = AdiWorkspace()
    for _ in range(steps):
        previous, state = state, step(state, cfg, ws)
        if on_step is not None:
            on_step(previous, state)
    return state


def _manufactured_run(
    config: ExperimentConfig, grid: GridSpec, dt: float, scheme: str, case: ManufacturedCase
) -> State:
    cfg = config.scheme_config(dt, scheme, case)
    ws = AdiWorkspace(bootstrap=config.bootstrap)
    if not config.bootstrap:
        ws.rho_prev = sample_field(grid, lambda x, y: case.rho_exact(x, y, -dt))
    return integrate(case.exact_state(grid, 0.0), cfg, step_count(config.final_time, dt), ws)


def _errors(state: State, case: ManufacturedCase, t: float) -> tuple:
    exact = case.exact_state(state.grid, t)
    return (
        float(np.max(np.abs(state.rho.values - exact.rho.values))),
        float(np.max(np.abs(state.c.values - exact.c.values))),
    )


def _metadata(config: ExperimentConfig, **extra) -> dict:
    metadata = {
        "experiment": config.experiment,
        "epsilon": config.epsilon,
        "final_time": config.final_time,
        "domain": [config.xmin, config.xmax, config.ymin, config.ymax],
        "bc": config.bc,
    }
    if config.closure == "dirichlet":
        metadata["closure"] = CLOSURE_NOTE
    metadata.update(extra)
    return metadata


def run_convergence_space(
    config: ExperimentConfig, case: ManufacturedCase = DEFAULT_CASE, progress: Progress = _quiet
) -> ConvergenceReport:
    """Max-norm errors at `final_time` for every spacing in `dx_list` at fixed `dt`."""
    if not config.dx_list:
        raise ConfigurationError("dx_list must not be empty", key="dx_list")
    errors_rho, errors_c = [], []
    for dx in config.dx_list:
        progress(f"convergence in space: dx={dx:g}")
        grid = config.grid_for_spacing(dx)
        state = _manufactured_run(config, grid, config.dt, config.scheme, case)
        error_rho, error_c = _errors(state, case, config.final_time)
        errors_rho.append(error_rho)
        errors_c.append(error_c)
    return build_convergence_report(
        config.dx_list,
        errors_rho,
        errors_c,
        "dx",
        _metadata(config, scheme=config.scheme, dt=config.dt),
    )


def run_convergence_time(
    config: ExperimentConfig,
    order: int,
    case: ManufacturedCase = DEFAULT_CASE,
    progress: Progress = _quiet,
) -> ConvergenceReport:
    """Max-norm errors at `final_time` for every step in `dt_list` on a fixed grid.

    With `reference = "fine-step"` the error is measured against a run with a four
    times smaller step on the same grid, which removes the spatial error.
    """
    if order not in (1, 2):
        raise ConfigurationError(f"order must be 1 or 2, got {order!r}", key="order")
    if not config.dt_list:
        raise ConfigurationError("dt_list must not be empty", key="dt_list")
    scheme = SchemeKind.ADI_FIRST_ORDER.value if order == 1 else SchemeKind.ADI_SECOND_ORDER.value
    grid = config.grid()
    errors_rho, errors_c = [], []
    for dt in config.dt_list:
        progress(f"convergence in time (order {order}): dt={dt:g}")
        state = _manufactured_run(config, grid, dt, scheme, case)
        if config.reference == "fine-step":
            reference = _manufactured_run(config, grid, dt / 4.0, scheme, case)
            errors_rho.append(float(np.max(np.abs(state.rho.values - reference.rho.values))))
            errors_c.append(float(np.max(np.abs(state.c.values - reference.c.values))))
        else:
            error_rho, error_c = _errors(state, case, config.final_time)
            errors_rho.append(error_rho)
            errors_c.append(error_c)
    metadata = _metadata(config, scheme=scheme, dx=grid.dx, dy=grid.dy, reference=config.reference)
    return build_convergence_report(config.dt_list, errors_rho, errors_c, "dt", metadata)


class BenchmarkRow(NamedTuple):
    n: int
    unknowns: int
    adi_seconds: float
    five_point_seconds: float
    speedup: float
    max_difference: float


@dataclass
class BenchmarkReport:
    rows: List[BenchmarkRow]
    fit_exponent: Optional[float] = None
    threads: int = 0
    metadata: Dict = field(default_factory=dict)


def fit_exponent(unknowns: List[int], seconds: List[float]) -> Optional[float]:
    """Slope of `log(seconds)` against `log(unknowns)`; 1 means linear scaling."""
    if len(unknowns) < 2:
        return None
    slope, _ = np.polyfit(np.log(unknowns), np.log(seconds), 1)
    return float(slope)


def initial_state(config: ExperimentConfig, grid: Optional[GridSpec] = None) -> State:
    """Initial data for simulations and benchmarks.

    - `gaussian`: `rho` a Gaussian of mass `initial_mass` and width `initial_width`
      centred in the domain, `c = 0`
    - `zero`: both fields zero
    - `random`: seeded positive `rho` in `[0.5, 1.5)` and `c` in `[0, 1)`
    - `file`: fields read from `initial_rho` / `initial_c` snapshots (their grid wins)
    """
    if config.initial == "file":
        rho = read_field(config.initial_rho)
        c = read_field(config.initial_c) if config.initial_c else zeros(rho.grid)
        return State(rho, c)
    grid = grid or config.grid()
    if config.initial == "zero":
        return State(zeros(grid), zeros(grid))
    if config.initial == "random":
        rng = np.random.default_rng(config.seed)
        rho = Field(grid, 0.5 + rng.random(grid.shape))
        return State(rho, Field(grid, rng.random(grid.shape)))
    centre_x = 0.5 * (config.xmin + config.xmax)
    centre_y = 0.5 * (config.ymin + config.ymax)
    width2 = config.initial_width**2
    peak = config.initial_mass / (2.0 * math.pi * width2)
    rho = sample_field(
        grid,
        lambda x, y: peak * np.exp(-((x - centre_x) ** 2 + (y - centre_y) ** 2) / (2.0 * width2)),
    )
    return State(rho, zeros(grid))


def _timed(state: State, cfg: SchemeConfig, steps: int) -> tuple:
    started = time.perf_counter()
    final = integrate(state, cfg, steps)
    return final, time.perf_counter() - started


def run_benchmark(config: ExperimentConfig, progress: Progress = _quiet) -> BenchmarkReport:
    """Times the stepping loop of the first-order ADI scheme and of the five-point
    scheme with conjugate gradients on every grid in `benchmark_grids`.
    Setup and output are excluded from the timings.
    """
    if not config.benchmark_grids:
        raise ConfigurationError("benchmark_grids must not be empty", key="benchmark_grids")
    steps = step_count(config.final_time, config.dt)
    rows = []
    for n in config.benchmark_grids:
        grid = config.grid(n, n)
        state = initial_state(config, grid)
        progress(f"benchmark {n}x{n}: ADI")
        adi_config = config.scheme_config(config.dt, SchemeKind.ADI_FIRST_ORDER.value)
        adi, adi_seconds = _timed(state, adi_config, steps)
        progress(f"benchmark {n}x{n}: five-point")
        five_point, five_point_seconds = _timed(
            state, config.scheme_config(config.dt, SchemeKind.FIVE_POINT.value), steps
        )
        difference = float(np.max(np.abs(adi.rho.values - five_point.rho.values)))
        rows.append(
            BenchmarkRow(
                n,
                2 * n * n,
                adi_seconds,
                five_point_seconds,
                five_point_seconds / adi_seconds,
                difference,
            )
        )
    exponent = fit_exponent([row.unknowns for row in rows], [row.adi_seconds for row in rows])
    metadata = _metadata(config, dt=config.dt, steps=steps, cg_tol=config.cg_tol)
    return BenchmarkReport(rows, fit_exponent=exponent, threads=config.threads, metadata=metadata)


@dataclass
class SimulationResult:
    final_state: State
    records: List[DiagnosticsRecord]
    snapshots: List[str]
    positivity: List[PositivityReport]
    steps: int


def _snapshot(output_dir: str, state: State, tag: str) -> List[str]:
    os.makedirs(output_dir, exist_ok=True)
    paths = []
    for name, values in (("rho", state.rho), ("c", state.c)):
        path = os.path.join(output_dir, f"{name}_{tag}.csv")
        write_field(values, path)
        paths.append(path)
    return paths


def run_simulation(
    config: ExperimentConfig,
    writer: Optional[Callable[[DiagnosticsRecord], None]] = None,
    progress: Progress = _quiet,
) -> SimulationResult:
    """Steps the configured scheme to `final_time` from the configured initial data.

    Diagnostics go to `writer` every `cadence` steps (and at `t = 0`), snapshots of both
    fields are written at each of `snapshot_times`. Negative densities only show up in
    `min_rho`; their entropy counts as zero. A non-finite field or a domain error aborts
    the run after the last good state has been written to `output_dir`.
    """
    state = initial_state(config)
    cfg = config.scheme_config(config.dt)
    steps = step_count(config.final_time, config.dt)
    ws = AdiWorkspace(bootstrap=config.bootstrap)
    pending = sorted(config.snapshot_times)
    records: List[DiagnosticsRecord] = []
    snapshots: List[str] = []
    positivity: List[PositivityReport] = []

    def emit(entry: DiagnosticsRecord) -> None:
        records.append(entry)
        if writer is not None:
            writer(entry)

    emit(record(state, clip_negative=True))
    while pending and pending[0] <= state.t:
        snapshots.extend(_snapshot(config.output_dir, state, f"t{pending.pop(0):.6g}"))
    for index in range(1, steps + 1):
        due = index % config.cadence == 0 or index == steps
        try:
            with np.errstate(over="ignore", invalid="ignore"):
                next_state = step(state, cfg, ws)
                entry = record(next_state, state, cfg, clip_negative=True) if due else None
        except (FieldError, DomainError):
            paths = _snapshot(config.output_dir, state, "last_good")
            raise NumericalAbort(state.t, paths[0]) from None
        state = next_state
        if ws.positivity is not None and cfg.scheme is SchemeKind.ADI_SECOND_ORDER:
            positivity.append(ws.positivity)
        if entry is not None:
            emit(entry)
        while pending and pending[0] <= state.t + 0.5 * config.dt:
            snapshots.extend(_snapshot(config.output_dir, state, f"t{pending.pop(0):.6g}"))
        if index % max(1, steps // 100) == 0:
            progress(f"simulate: t={state.t:.6g} / {config.final_time:g}")
    return SimulationResult(state, records, snapshots, positivity, steps)
