import os
import warnings

import numpy as np
import pytest
from ksadi import config, exceptions, harness
from ksadi.grid import State, make_grid, read_field, write_field
from ksadi.manufactured import ManufacturedCase
from ksadi.schemes import SchemeConfig


def _config(name, **overrides):
    return harness.ExperimentConfig.from_dict(config.experiment(name, **overrides))


def test_from_dict_needs_every_key():
    with pytest.raises(exceptions.ConfigurationError):
        harness.ExperimentConfig.from_dict({"experiment": "simulate"})


def test_grid_for_spacing():
    settings = _config("convergence-space")
    grid = settings.grid_for_spacing(0.05)
    assert grid.shape == (41, 41)
    with pytest.raises(exceptions.ConfigurationError):
        settings.grid_for_spacing(0.3)


def test_step_count():
    assert harness.step_count(1e-5, 1e-6) == 10
    assert harness.step_count(0.04, 0.00125) == 32
    with pytest.raises(exceptions.ConfigurationError):
        harness.step_count(0.1, 0.03)


def test_scheme_config_wiring():
    settings = _config("convergence-time-2", cg_maxiter=0)
    cfg = settings.scheme_config(0.01, case=ManufacturedCase())
    assert cfg.scheme.value == "adi2"
    assert cfg.cg_maxiter is None
    assert cfg.forcing is not None and cfg.closure is not None
    assert settings.scheme_config(0.01).forcing is None


def test_build_convergence_report():
    report = harness.build_convergence_report([0.1, 0.05], [4e-3, 1e-3], [2e-3, 1e-3], "dx")
    assert report.rows[0].ratio_rho is None
    assert report.rows[1].ratio_rho == pytest.approx(4.0)
    assert report.rows[1].ratio_c == pytest.approx(2.0)
    assert report.label == "dx"
    assert "ratio" in report.metadata["note"]

    single = harness.build_convergence_report([0.01], [1.0], [1.0], "dt")
    assert len(single.rows) == 1 and single.rows[0].ratio_c is None


def test_build_convergence_report_warns_on_growing_error():
    with pytest.warns(exceptions.ConvergenceWarning):
        harness.build_convergence_report([0.1, 0.05], [1e-3, 2e-3], [1e-3, 1e-4], "dx")


def test_exact_solution_as_numeric_has_no_error():
    case = ManufacturedCase()
    grid = make_grid(-1, 1, -1, 1, 10, 10)
    assert harness._errors(case.exact_state(grid, 0.3), case, 0.3) == (0.0, 0.0)


def test_integrate_calls_back():
    settings = _config("simulate", initial="random", nx=5, ny=5, seed=3)
    calls = []
    state = harness.initial_state(settings)
    final = harness.integrate(
        state,
        SchemeConfig(epsilon=1.0, dt=0.01, scheme="adi2"),
        3,
        on_step=lambda a, b: calls.append(b.t),
    )
    assert calls == pytest.approx([0.01, 0.02, 0.03])
    assert final.t == pytest.approx(0.03)


def test_initial_states(temporary_dir):
    gaussian = harness.initial_state(_config("simulate", nx=40, ny=40))
    mass = gaussian.rho.values.sum() * gaussian.grid.dx * gaussian.grid.dy
    assert mass == pytest.approx(6.0, rel=1e-3)
    assert not gaussian.c.values.any()

    zero = harness.initial_state(_config("simulate", initial="zero", nx=4, ny=4))
    assert not zero.rho.values.any()

    first = harness.initial_state(_config("simulate", initial="random", seed=11, nx=4, ny=4))
    second = harness.initial_state(_config("simulate", initial="random", seed=11, nx=4, ny=4))
    assert np.array_equal(first.rho.values, second.rho.values)
    assert first.rho.min() >= 0.5

    path = os.path.join(temporary_dir, "rho.csv")
    write_field(first.rho, path)
    loaded = harness.initial_state(_config("simulate", initial="file", initial_rho=path))
    assert np.array_equal(loaded.rho.values, first.rho.values)
    assert not loaded.c.values.any()


def test_convergence_space_small():
    settings = _config("convergence-space", dx_list=[0.5, 0.25], final_time=1e-5)
    report = harness.run_convergence_space(settings)
    assert [row.resolution for row in report.rows] == [0.5, 0.25]
    assert all(row.max_error_rho > 0 for row in report.rows)
    assert report.metadata["closure"] == harness.CLOSURE_NOTE
    assert report.label == "dx"


def test_convergence_space_matches_published_errors():
    settings = _config("convergence-space", dx_list=[0.1, 0.05])
    report = harness.run_convergence_space(settings)
    coarse, fine = report.rows
    assert coarse.max_error_rho == pytest.approx(2.1261e-7, rel=0.25)
    assert coarse.max_error_c == pytest.approx(4.9951e-8, rel=0.25)
    assert 3.6 <= fine.ratio_rho <= 4.4
    assert 3.6 <= fine.ratio_c <= 4.4


@pytest.mark.slow
def test_convergence_space_full_protocol():
    report = harness.run_convergence_space(_config("convergence-space"))
    for row in report.rows[1:]:
        assert 3.6 <= row.ratio_rho <= 4.4
        assert 3.6 <= row.ratio_c <= 4.4


def test_convergence_time_rejects_bad_order():
    with pytest.raises(exceptions.ConfigurationError):
        harness.run_convergence_time(_config("convergence-time-1"), 3)


def test_convergence_time_single_step_has_no_ratios():
    settings = _config("convergence-time-1", nx=10, ny=10, dt_list=[0.05], final_time=0.1)
    report = harness.run_convergence_time(settings, 1)
    assert len(report.rows) == 1
    assert report.rows[0].ratio_rho is None
    assert report.metadata["reference"] == "exact"


def test_convergence_time_fine_step_reference_first_order():
    settings = _config(
        "convergence-time-1",
        nx=20,
        ny=20,
        dt_list=[0.02, 0.01],
        final_time=0.04,
        reference="fine-step",
    )
    report = harness.run_convergence_time(settings, 1)
    assert 1.6 <= report.rows[1].ratio_rho <= 2.4


def test_convergence_time_fine_step_reference_second_order():
    settings = _config(
        "convergence-time-2",
        nx=20,
        ny=20,
        dt_list=[0.01, 0.005],
        final_time=0.04,
        reference="fine-step",
    )
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", exceptions.PositivityWarning)
        report = harness.run_convergence_time(settings, 2)
    assert 3.0 <= report.rows[1].ratio_rho <= 5.0


@pytest.mark.slow
@pytest.mark.parametrize("order,low,high", [(1, 1.8, 2.3), (2, 3.5, 4.7)])
def test_convergence_time_full_protocol(order, low, high):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", exceptions.PositivityWarning)
        report = harness.run_convergence_time(_config(f"convergence-time-{order}"), order)
    for row in report.rows[1:]:
        assert low <= row.ratio_rho <= high
        assert low <= row.ratio_c <= high


def test_fit_exponent():
    assert harness.fit_exponent([10], [1.0]) is None
    assert harness.fit_exponent([10, 100, 1000], [0.1, 1.0, 10.0]) == pytest.approx(1.0)


def test_benchmark_small():
    settings = _config("benchmark", benchmark_grids=[8, 16], dt=0.01, final_time=0.05)
    report = harness.run_benchmark(settings)
    assert [row.n for row in report.rows] == [8, 16]
    assert [row.unknowns for row in report.rows] == [128, 512]
    assert all(row.adi_seconds > 0 and row.five_point_seconds > 0 for row in report.rows)
    assert report.fit_exponent is not None
    assert report.rows[0].max_difference < 1e-2


@pytest.mark.slow
def test_benchmark_scaling_and_speedup():
    settings = _config("benchmark", benchmark_grids=[80, 160])
    report = harness.run_benchmark(settings)
    assert 0.9 <= report.fit_exponent <= 1.3
    assert report.rows[-1].speedup >= 3.0
    assert report.rows[0].max_difference < 1e-3


@pytest.mark.slow
def test_benchmark_speedup_on_the_largest_grid():
    settings = _config("benchmark", benchmark_grids=[80, 160, 320])
    report = harness.run_benchmark(settings)
    assert report.rows[-1].n == 320
    assert report.rows[-1].speedup >= 3.0
    assert 0.9 <= report.fit_exponent <= 1.3


def test_simulation_of_zero_data_is_flat(temporary_dir):
    settings = _config(
        "simulate", initial="zero", nx=6, ny=6, dt=0.01, final_time=0.05, output_dir=temporary_dir
    )
    seen = []
    result = harness.run_simulation(settings, writer=seen.append)
    assert result.steps == 5
    assert len(result.records) == 6
    assert seen == result.records
    assert all(entry.mass_rho == 0 and entry.energy == 0 for entry in result.records)


def test_simulation_cadence_and_snapshots(temporary_dir):
    settings = _config(
        "simulate",
        initial="random",
        nx=6,
        ny=6,
        dt=0.01,
        final_time=0.1,
        cadence=4,
        snapshot_times=[0.05],
        output_dir=temporary_dir,
        scheme="adi2",
    )
    result = harness.run_simulation(settings)
    assert [round(entry.t, 6) for entry in result.records] == [0.0, 0.04, 0.08, 0.1]
    assert len(result.snapshots) == 2
    assert read_field(result.snapshots[0]).grid == settings.grid()
    assert len(result.positivity) == 9
    masses = [entry.mass_rho for entry in result.records]
    assert masses == pytest.approx([masses[0]] * len(masses), rel=1e-12)


def test_subcritical_blob_with_five_point(temporary_dir):
    settings = _config(
        "simulate",
        nx=16,
        ny=16,
        dt=1e-3,
        final_time=0.02,
        scheme="five-point",
        initial_mass=2.0,
        initial_width=0.3,
        output_dir=temporary_dir,
    )
    result = harness.run_simulation(settings)
    assert all(entry.min_rho >= -1e-13 for entry in result.records)
    energies = [entry.energy for entry in result.records]
    assert all(later <= earlier + 1e-8 for earlier, later in zip(energies, energies[1:]))


def _small_random_run(output_dir):
    return _config(
        "simulate", initial="random", nx=4, ny=4, dt=0.01, final_time=0.03, output_dir=output_dir
    )


def test_simulation_aborts_with_last_good_snapshot(temporary_dir, mocker):
    settings = _small_random_run(temporary_dir)
    real_step = harness.step
    calls = {"count": 0}

    def failing(state, cfg, ws=None):
        calls["count"] += 1
        if calls["count"] == 2:
            raise exceptions.FieldError("Field holds non-finite value nan")
        return real_step(state, cfg, ws)

    mocker.patch("ksadi.harness.step", side_effect=failing)
    with pytest.raises(exceptions.NumericalAbort) as error:
        harness.run_simulation(settings)
    assert error.value.t == pytest.approx(0.01)
    assert os.path.exists(error.value.snapshot)
    assert read_field(error.value.snapshot).grid == settings.grid()


def test_simulation_keeps_running_through_negative_density(temporary_dir, mocker):
    settings = _small_random_run(temporary_dir)
    real_step = harness.step

    def undershooting(state, cfg, ws=None):
        after = real_step(state, cfg, ws)
        values = after.rho.values.copy()
        values[1, 2] = -0.01
        return State(after.rho.with_values(values), after.c, after.t)

    mocker.patch("ksadi.harness.step", side_effect=undershooting)
    result = harness.run_simulation(settings)
    assert result.steps == 3
    assert len(result.records) == 4
    assert all(entry.min_rho == pytest.approx(-0.01) for entry in result.records[1:])
    assert all(np.isfinite(entry.energy) for entry in result.records)


def test_simulation_turns_domain_errors_into_aborts(temporary_dir, mocker):
    settings = _small_random_run(temporary_dir)
    failure = exceptions.DomainError("M must be positive", index=(0, 0))
    mocker.patch("ksadi.harness.step", side_effect=failure)
    with pytest.raises(exceptions.NumericalAbort) as error:
        harness.run_simulation(settings)
    assert error.value.t == 0.0
    initial = harness.initial_state(settings).rho.values
    assert np.array_equal(read_field(error.value.snapshot).values, initial)


def test_snapshot_at_time_zero_holds_initial_data(temporary_dir):
    settings = _config(
        "simulate",
        initial="random",
        nx=6,
        ny=6,
        dt=0.01,
        final_time=0.02,
        snapshot_times=[0.0],
        output_dir=temporary_dir,
    )
    result = harness.run_simulation(settings)
    assert len(result.snapshots) == 2
    initial = harness.initial_state(settings)
    assert np.array_equal(read_field(result.snapshots[0]).values, initial.rho.values)
    assert np.array_equal(read_field(result.snapshots[1]).values, initial.c.values)
