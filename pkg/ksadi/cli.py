"""This module defines CLI interaction when using `ksadi`.

This is powered by [hug](https://github.com/hugapi/hug) which means unless necessary
it should maintain 1:1 compatibility with the programmatic API definition in the
[API module](pdoc:ksadi.api).

- `ksadi convergence-space`: Spatial convergence study of the first-order ADI scheme
- `ksadi convergence-time --order {1|2}`: Temporal convergence study of either ADI scheme
- `ksadi benchmark`: Wall-clock comparison of ADI against the five-point CG scheme
- `ksadi simulate`: Free simulation with streamed diagnostics and field snapshots
- `ksadi experiment-configuration`: Returns back the merged configuration of an experiment

Exit codes: `0` on success, `1` on a numerical failure, `2` on a configuration error.
"""
import sys
from pprint import pprint

import hug
from ksadi import api, logo
from ksadi.exceptions import ConfigurationError, KsadiError

ksadi_api = hug.API(__name__, doc=logo.ascii_art)


def _printed(result):
    """API functions print their own summaries."""
    return None


for command, function in (
    ("convergence-space", api.convergence_space),
    ("convergence-time", api.convergence_time),
    ("benchmark", api.benchmark),
    ("simulate", api.simulate),
):
    hug.cli(name=command, api=ksadi_api, output=_printed)(function)
hug.cli(name="experiment-configuration", api=ksadi_api, output=pprint)(api.experiment_configuration)


def exit_code(error: Exception) -> int:
    if isinstance(error, ConfigurationError):
        return 2
    return 1


def main() -> None:
    """Console entry point translating ksadi errors into exit codes."""
    try:
        ksadi_api.cli()
    except KsadiError as error:
        print(f"ksadi: {error}", file=sys.stderr)
        sys.exit(exit_code(error))
