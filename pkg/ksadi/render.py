"""Defines how experiment results are written to and read back from disk.

Floats are written with 17 significant digits, so every CSV value parses back to
the exact double that was written. JSON output relies on `json`'s shortest
round-trip representation.
"""
import csv
import json
import os
from typing import IO, Any, Dict, List, Optional

from ksadi.diagnostics import COLUMNS, DiagnosticsRecord
from ksadi.exceptions import ConfigurationError
from ksadi.harness import BenchmarkReport, BenchmarkRow, ConvergenceReport, ConvergenceRow

FORMATS = ("csv", "json")
METADATA_PREFIX = "# "
CONVERGENCE_COLUMNS = ("resolution", "max_error_rho", "max_error_c", "ratio_rho", "ratio_c")
BENCHMARK_COLUMNS = (
    "n",
    "unknowns",
    "adi_seconds",
    "five_point_seconds",
    "speedup",
    "max_difference",
)


def _number(value: Optional[float]) -> str:
    return "" if value is None else f"{value:.17g}"


def _parse(value: str) -> Optional[float]:
    return float(value) if value != "" else None


def _check_format(fmt: str) -> str:
    if fmt not in FORMATS:
        raise ConfigurationError(
            f"Unknown output format {fmt!r}; expected one of {list(FORMATS)}", key="format"
        )
    return fmt


def _ensure_parent(path: str) -> None:
    parent = os.path.dirname(os.path.abspath(path))
    os.makedirs(parent, exist_ok=True)


def _write_table(path: str, metadata: dict, columns: tuple, rows: List[tuple]) -> None:
    with open(path, "w", newline="") as output:
        output.write(METADATA_PREFIX + json.dumps(metadata) + "\n")
        writer = csv.writer(output)
        writer.writerow(columns)
        for row in rows:
            writer.writerow(
                [_number(value) if not isinstance(value, int) else value for value in row]
            )


def _read_table(path: str) -> tuple:
    with open(path, newline="") as source:
        header = source.readline()
        if not header.startswith(METADATA_PREFIX):
            raise ConfigurationError(f"'{path}' is missing its metadata header")
        metadata = json.loads(header[len(METADATA_PREFIX) :])
        rows = list(csv.DictReader(source))
    return metadata, rows


def write_convergence_report(report: ConvergenceReport, path: str, fmt: str = "csv") -> str:
    """Writes a convergence report. `ratio_*` is the successive error ratio
    `error(coarse) / error(fine)`: about 4 means second order, about 2 first order.
    """
    _ensure_parent(path)
    metadata = {**report.metadata, "label": report.label}
    if _check_format(fmt) == "json":
        with open(path, "w") as output:
            rows = [row._asdict() for row in report.rows]
            json.dump({"metadata": metadata, "rows": rows}, output, indent=2)
        return path
    _write_table(path, metadata, CONVERGENCE_COLUMNS, [tuple(row) for row in report.rows])
    return path


def read_convergence_report(path: str) -> ConvergenceReport:
    if path.endswith(".json"):
        with open(path) as source:
            content = json.load(source)
        metadata, rows = content["metadata"], [ConvergenceRow(**row) for row in content["rows"]]
    else:
        metadata, table = _read_table(path)
        rows = [
            ConvergenceRow(*(_parse(row[column]) for column in CONVERGENCE_COLUMNS))
            for row in table
        ]
    label = metadata.pop("label", "resolution")
    return ConvergenceReport(rows, label=label, metadata=metadata)


def write_benchmark_report(report: BenchmarkReport, path: str, fmt: str = "csv") -> str:
    _ensure_parent(path)
    metadata = {**report.metadata, "fit_exponent": report.fit_exponent, "threads": report.threads}
    if _check_format(fmt) == "json":
        with open(path, "w") as output:
            rows = [row._asdict() for row in report.rows]
            json.dump({"metadata": metadata, "rows": rows}, output, indent=2)
        return path
    _write_table(path, metadata, BENCHMARK_COLUMNS, [tuple(row) for row in report.rows])
    return path


def read_benchmark_report(path: str) -> BenchmarkReport:
    if path.endswith(".json"):
        with open(path) as source:
            content = json.load(source)
        metadata, rows = content["metadata"], [BenchmarkRow(**row) for row in content["rows"]]
    else:
        metadata, table = _read_table(path)
        rows = [
            BenchmarkRow(
                int(row["n"]),
                int(row["unknowns"]),
                *(_parse(row[key]) for key in BENCHMARK_COLUMNS[2:]),
            )
            for row in table
        ]
    fit_exponent = metadata.pop("fit_exponent", None)
    threads = metadata.pop("threads", 0)
    return BenchmarkReport(rows, fit_exponent=fit_exponent, threads=threads, metadata=metadata)


class DiagnosticsWriter:
    """Streams DiagnosticsRecords as CSV rows or JSON lines, flushing after each record
    so a run that aborts still leaves a complete prefix on disk.
    """

    def __init__(self, path: str, fmt: str = "csv"):
        self.path = path
        self.fmt = _check_format(fmt)
        self._output: Optional[IO[str]] = None
        self._writer: Any = None

    def __enter__(self) -> "DiagnosticsWriter":
        _ensure_parent(self.path)
        self._output = open(self.path, "w", newline="")
        if self.fmt == "csv":
            self._writer = csv.writer(self._output)
            self._writer.writerow(COLUMNS)
        return self

    def __exit__(self, *exc_info) -> None:
        if self._output is not None:
            self._output.close()
            self._output = None

    def __call__(self, record: DiagnosticsRecord) -> None:
        self.write(record)

    def write(self, record: DiagnosticsRecord) -> None:
        if self._output is None:
            raise RuntimeError("DiagnosticsWriter must be used as a context manager")
        if self.fmt == "csv":
            self._writer.writerow([_number(value) for value in record.row()])
        else:
            self._output.write(json.dumps(dict(zip(COLUMNS, record.row()))) + "\n")
        self._output.flush()


def read_diagnostics(path: str) -> List[DiagnosticsRecord]:
    """Reads a diagnostics stream written by DiagnosticsWriter (CSV or JSON lines)."""
    with open(path, newline="") as source:
        first = source.readline()
        source.seek(0)
        if first.lstrip().startswith("{"):
            entries: List[Dict[str, Any]] = [json.loads(line) for line in source if line.strip()]
        else:
            entries = [
                {key: float(value) for key, value in row.items()}
                for row in csv.DictReader(source)
            ]
    return [DiagnosticsRecord(**{column: entry[column] for column in COLUMNS}) for entry in entries]


def output_path(output_dir: str, name: str, fmt: str) -> str:
    """`<output_dir>/<name>.csv` or `<output_dir>/<name>.json`"""
    extension = {"csv": ".csv", "json": ".json"}[_check_format(fmt)]
    return os.path.join(output_dir, name + extension)
