"""This module defines the programmatic API that can be used to run `ksadi` experiments.

   Every function here maps 1:1 onto a CLI subcommand. Each one merges the experiment
   presets with the optional config file and explicit arguments, runs the experiment,
   writes its report into `out` and returns the in-memory result.
"""
import os
from typing import Any, Callable, Dict

from ksadi import config, harness, logo, render
from ksadi.exceptions import ConfigurationError
from ksadi.harness import BenchmarkReport, ConvergenceReport, SimulationResult
from yaspin import yaspin


def experiment_configuration(
    experiment: str = "simulate",
    config_file: str = "",
    out: str = None,  # type: ignore
    format: str = None,  # type: ignore
    threads: int = None,  # type: ignore
    seed: int = None,  # type: ignore
) -> dict:
    """Returns the fully merged configuration of an experiment.

    - *experiment*: One of `convergence-space`, `convergence-time-1`, `convergence-time-2`,
      `benchmark`, `simulate`.
    - *config_file*: A [TOML](https://github.com/toml-lang/toml#toml) or `key = value` file.
    - *out*: The directory reports and snapshots are written into.
    - *format*: `csv` or `json`.
    - *threads*: Threads used for line solves (`0` runs them sequentially).
    - *seed*: Seed for randomized initial data.
    """
    overrides: Dict[str, Any] = {"format": format, "threads": threads, "seed": seed}
    if out:
        overrides["output_dir"] = out
    return config.experiment(experiment, config_file or None, **overrides)


def _settings(experiment: str, config_file: str, out: str, format: str, threads: int, seed: int):
    return harness.ExperimentConfig.from_dict(
        experiment_configuration(experiment, config_file, out, format, threads, seed)
    )


def _spin(spinner) -> Callable[[str], None]:
    def update(text: str) -> None:
        spinner.text = text

    return update


def _print_convergence(report: ConvergenceReport, path: str) -> None:
    print(logo.ascii_art)
    print(f"{report.label:>10} {'error rho':>12} {'ratio':>7} {'error c':>12} {'ratio':>7}")
    for row in report.rows:
        ratio_rho = f"{row.ratio_rho:7.3f}" if row.ratio_rho is not None else " " * 7
        ratio_c = f"{row.ratio_c:7.3f}" if row.ratio_c is not None else " " * 7
        print(
            f"{row.resolution:>10g} {row.max_error_rho:12.4e} {ratio_rho} "
            f"{row.max_error_c:12.4e} {ratio_c}"
        )
    print(f"Report successfully written to `{os.path.abspath(path)}` !")


def convergence_space(
    config_file: str = "",
    out: str = None,  # type: ignore
    format: str = None,  # type: ignore
    threads: int = None,  # type: ignore
    seed: int = None,  # type: ignore
) -> ConvergenceReport:
    """Runs the spatial convergence study of the first-order ADI scheme against the
    exact Gaussian solution and writes `convergence_space.{csv,json}`.

    - *config_file*: A [TOML](https://github.com/toml-lang/toml#toml) or `key = value` file.
    - *out*: The directory the report is written into.
    - *format*: `csv` or `json`.
    - *threads*: Threads used for line solves (`0` runs them sequentially).
    - *seed*: Seed for randomized initial data.
    """
    settings = _settings("convergence-space", config_file, out, format, threads, seed)
    with yaspin(text="Running the spatial convergence study") as spinner:
        report = harness.run_convergence_space(settings, progress=_spin(spinner))
        spinner.ok("Done")
    path = render.write_convergence_report(
        report,
        render.output_path(settings.output_dir, "convergence_space", settings.format),
        settings.format,
    )
    _print_convergence(report, path)
    return report


def convergence_time(
    order: int = 1,
    config_file: str = "",
    out: str = None,  # type: ignore
    format: str = None,  # type: ignore
    threads: int = None,  # type: ignore
    seed: int = None,  # type: ignore
) -> ConvergenceReport:
    """Runs the temporal convergence study of the first-order (`order=1`) or
    second-order (`order=2`) ADI scheme and writes `convergence_time_<order>.{csv,json}`.

    - *order*: `1` or `2`.
    - *config_file*: A [TOML](https://github.com/toml-lang/toml#toml) or `key = value` file.
    - *out*: The directory the report is written into.
    - *format*: `csv` or `json`.
    - *threads*: Threads used for line solves (`0` runs them sequentially).
    - *seed*: Seed for randomized initial data.
    """
    order = int(order)
    if order not in (1, 2):
        raise ConfigurationError(f"order must be 1 or 2, got {order!r}", key="order")
    settings = _settings(f"convergence-time-{order}", config_file, out, format, threads, seed)
    with yaspin(text=f"Running the order {order} temporal convergence study") as spinner:
        report = harness.run_convergence_time(settings, order, progress=_spin(spinner))
        spinner.ok("Done")
    path = render.write_convergence_report(
        report,
        render.output_path(settings.output_dir, f"convergence_time_{order}", settings.format),
        settings.format,
    )
    _print_convergence(report, path)
    return report


def benchmark(
    config_file: str = "",
    out: str = None,  # type: ignore
    format: str = None,  # type: ignore
    threads: int = None,  # type: ignore
    seed: int = None,  # type: ignore
) -> BenchmarkReport:
    """Times first-order ADI against the five-point scheme solved by conjugate
    gradients on every configured grid and writes `benchmark.{csv,json}`.

    - *config_file*: A [TOML](https://github.com/toml-lang/toml#toml) or `key = value` file.
    - *out*: The directory the report is written into.
    - *format*: `csv` or `json`.
    - *threads*: Threads used for ADI line solves (`0` runs them sequentially).
    - *seed*: Seed for randomized initial data.
    """
    settings = _settings("benchmark", config_file, out, format, threads, seed)
    with yaspin(text="Running the efficiency benchmark") as spinner:
        report = harness.run_benchmark(settings, progress=_spin(spinner))
        spinner.ok("Done")
    path = render.write_benchmark_report(
        report,
        render.output_path(settings.output_dir, "benchmark", settings.format),
        settings.format,
    )
    print(logo.ascii_art)
    print(f"{'grid':>6} {'unknowns':>10} {'ADI [s]':>10} {'5-point [s]':>12} {'speedup':>8}")
    for row in report.rows:
        print(
            f"{row.n:>6} {row.unknowns:>10} {row.adi_seconds:10.3f} "
            f"{row.five_point_seconds:12.3f} {row.speedup:8.2f}"
        )
    if report.fit_exponent is not None:
        print(f"ADI time grows like unknowns^{report.fit_exponent:.2f}")
    print(f"Report successfully written to `{os.path.abspath(path)}` !")
    return report


def simulate(
    config_file: str = "",
    out: str = None,  # type: ignore
    format: str = None,  # type: ignore
    threads: int = None,  # type: ignore
    seed: int = None,  # type: ignore
) -> SimulationResult:
    """Steps the configured scheme to the final time, streaming diagnostics into
    `diagnostics.{csv,json}` and writing field snapshots at the configured times.

    - *config_file*: A [TOML](https://github.com/toml-lang/toml#toml) or `key = value` file.
    - *out*: The directory diagnostics and snapshots are written into.
    - *format*: `csv` or `json` for the diagnostics stream.
    - *threads*: Threads used for line solves (`0` runs them sequentially).
    - *seed*: Seed for randomized initial data.
    """
    settings = _settings("simulate", config_file, out, format, threads, seed)
    path = render.output_path(settings.output_dir, "diagnostics", settings.format)
    with render.DiagnosticsWriter(path, settings.format) as writer:
        with yaspin(text=f"Simulating with {settings.scheme}") as spinner:
            result = harness.run_simulation(settings, writer=writer, progress=_spin(spinner))
            spinner.ok("Done")
    final = result.records[-1] if result.records else None
    print(logo.ascii_art)
    if final is not None:
        print(
            f"t={final.t:g} mass={final.mass_rho:.12g} min rho={final.min_rho:.3e} "
            f"energy={final.energy:.6g}"
        )
    if result.positivity and not all(report.guaranteed for report in result.positivity):
        print("Positivity conditions of the second-order scheme failed on some steps")
    print(f"Diagnostics successfully written to `{os.path.abspath(path)}` !")
    return result
