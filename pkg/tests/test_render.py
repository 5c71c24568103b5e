import json
import os

import pytest
from ksadi import exceptions, render
from ksadi.diagnostics import DiagnosticsRecord
from ksadi.harness import BenchmarkReport, BenchmarkRow, build_convergence_report

RECORDS = [
    DiagnosticsRecord(0.0, 6.000000000000001, 0.0, 1e-300, 0.0, -3.1415926535897931),
    DiagnosticsRecord(
        0.1, 6.000000000000001, 0.6, 2.5e-7, 1e-3, -3.2, -0.058500000000000003, -0.0612
    ),
]


def _convergence():
    return build_convergence_report(
        [0.1, 0.05, 0.025], [2.1261e-7, 5.3292e-8, 1.3336e-8], [4.9951e-8, 1.2491e-8, 3.1234e-9],
        "dx", {"experiment": "convergence-space"},
    )


@pytest.mark.parametrize("fmt", render.FORMATS)
def test_convergence_report_round_trip(temporary_dir, fmt):
    report = _convergence()
    path = render.write_convergence_report(
        report,
        render.output_path(os.path.join(temporary_dir, "nested"), "convergence_space", fmt),
        fmt,
    )
    assert path.endswith("." + fmt)
    loaded = render.read_convergence_report(path)
    assert loaded.rows == report.rows
    assert loaded.label == "dx"
    assert loaded.metadata == report.metadata


def test_convergence_csv_layout(temporary_dir):
    path = render.write_convergence_report(
        _convergence(), os.path.join(temporary_dir, "report.csv")
    )
    with open(path) as report:
        lines = report.read().splitlines()
    assert lines[0].startswith(render.METADATA_PREFIX)
    assert json.loads(lines[0][2:])["label"] == "dx"
    assert lines[1] == ",".join(render.CONVERGENCE_COLUMNS)
    assert lines[2].endswith(",,")


@pytest.mark.parametrize("fmt", render.FORMATS)
def test_benchmark_report_round_trip(temporary_dir, fmt):
    report = BenchmarkReport(
        [
            BenchmarkRow(80, 12800, 0.81, 4.2, 4.2 / 0.81, 3.1e-9),
            BenchmarkRow(160, 51200, 3.3, 29.5, 29.5 / 3.3, 2e-9),
        ],
        fit_exponent=1.02,
        threads=2,
        metadata={"dt": 0.001},
    )
    path = render.write_benchmark_report(
        report, os.path.join(temporary_dir, "benchmark." + fmt), fmt
    )
    loaded = render.read_benchmark_report(path)
    assert loaded.rows == report.rows
    assert loaded.fit_exponent == 1.02
    assert loaded.threads == 2
    assert loaded.metadata == {"dt": 0.001}


@pytest.mark.parametrize("fmt", render.FORMATS)
def test_diagnostics_stream_round_trip(temporary_dir, fmt):
    path = render.output_path(temporary_dir, "diagnostics", fmt)
    with render.DiagnosticsWriter(path, fmt) as writer:
        for entry in RECORDS:
            writer(entry)
    assert render.read_diagnostics(path) == RECORDS


def test_diagnostics_stream_is_flushed_per_record(temporary_dir):
    path = os.path.join(temporary_dir, "diagnostics.csv")
    with render.DiagnosticsWriter(path) as writer:
        writer.write(RECORDS[0])
        with open(path) as partial:
            assert len(partial.read().splitlines()) == 2


def test_diagnostics_writer_needs_context(temporary_dir):
    writer = render.DiagnosticsWriter(os.path.join(temporary_dir, "diagnostics.csv"))
    with pytest.raises(RuntimeError):
        writer.write(RECORDS[0])


def test_unknown_format(temporary_dir):
    with pytest.raises(exceptions.ConfigurationError):
        render.output_path(temporary_dir, "report", "xlsx")
    with pytest.raises(exceptions.ConfigurationError):
        render.DiagnosticsWriter(os.path.join(temporary_dir, "d.parquet"), "parquet")


def test_missing_metadata_header(temporary_dir):
    path = os.path.join(temporary_dir, "report.csv")
    with open(path, "w") as report:
        report.write("resolution,max_error_rho\n")
    with pytest.raises(exceptions.ConfigurationError):
        render.read_convergence_report(path)
