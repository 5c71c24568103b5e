"""Defines the configuration defaults and load functions used by `ksadi`"""
import os
import warnings
from typing import Any, Dict, List, Optional, Union

from ksadi.exceptions import ConfigurationError
from toml import TomlDecodeError
from toml import load as toml_load

EXPERIMENTS = (
    "convergence-space",
    "convergence-time-1",
    "convergence-time-2",
    "benchmark",
    "simulate",
)

DEFAULTS: Dict[str, Any] = {
    "experiment": "simulate",
    "xmin": -1.0,
    "xmax": 1.0,
    "ymin": -1.0,
    "ymax": 1.0,
    "nx": 64,
    "ny": 64,
    "bc": "neumann",
    "dx_list": [],
    "dt_list": [],
    "dt": 1e-3,
    "final_time": 0.1,
    "scheme": "adi1",
    "epsilon": 1.0,
    "cg_tol": 1e-10,
    "cg_maxiter": 0,
    "output_dir": "ksadi-output",
    "format": "csv",
    "cadence": 1,
    "snapshot_times": [],
    "seed": 0,
    "threads": 0,
    "reference": "exact",
    "benchmark_grids": [],
    "initial": "gaussian",
    "initial_mass": 6.0,
    "initial_width": 0.2,
    "initial_rho": "",
    "initial_c": "",
    "closure": "none",
    "bootstrap": True,
}

EXPERIMENT_DEFAULTS: Dict[str, Dict[str, Any]] = {
    "convergence-space": {
        "dx_list": [0.1, 0.05, 0.025, 0.0125],
        "dt": 1e-6,
        "final_time": 1e-5,
        "scheme": "adi1",
        "closure": "dirichlet",
    },
    "convergence-time-1": {
        "nx": 200,
        "ny": 200,
        "dt_list": [0.05, 0.025, 0.0125, 0.00625],
        "final_time": 0.1,
        "scheme": "adi1",
        "closure": "dirichlet",
    },
    "convergence-time-2": {
        "nx": 200,
        "ny": 200,
        "dt_list": [0.01, 0.005, 0.0025, 0.00125],
        "final_time": 0.04,
        "scheme": "adi2",
        "closure": "dirichlet",
    },
    "benchmark": {
        "xmin": -5.0,
        "xmax": 5.0,
        "ymin": -5.0,
        "ymax": 5.0,
        "dt": 1e-3,
        "final_time": 1.0,
        "benchmark_grids": [80, 160, 320, 640],
        "initial_width": 1.0,
    },
    "simulate": {},
}

FLOAT_KEYS = (
    "xmin",
    "xmax",
    "ymin",
    "ymax",
    "dt",
    "final_time",
    "epsilon",
    "cg_tol",
    "initial_mass",
    "initial_width",
)
INT_KEYS = ("nx", "ny", "cg_maxiter", "cadence", "seed", "threads")
FLOAT_LIST_KEYS = ("dx_list", "dt_list", "snapshot_times")
INT_LIST_KEYS = ("benchmark_grids",)
BOOL_KEYS = ("bootstrap",)
CHOICES = {
    "experiment": EXPERIMENTS,
    "bc": ("periodic", "neumann"),
    "scheme": ("adi1", "five-point", "adi2"),
    "format": ("csv", "json"),
    "reference": ("exact", "fine-step"),
    "initial": ("gaussian", "zero", "random", "file"),
    "closure": ("none", "dirichlet"),
}


def experiment(name: str, config_file: Optional[str] = None, **overrides) -> dict:
    """Returns back the complete configuration for the named experiment.

    Layers, later ones winning: shared defaults, the experiment's presets, the config
    file (if given), then any non-`None` overrides.
    """
    if name not in EXPERIMENT_DEFAULTS:
        raise ConfigurationError(
            f"Unknown experiment {name!r}; expected one of {list(EXPERIMENTS)}", key="experiment"
        )
    experiment_config: Dict[str, Any] = {**DEFAULTS, **EXPERIMENT_DEFAULTS[name]}
    if config_file:
        experiment_config.update(toml(config_file))
    experiment_config.update({key: value for key, value in overrides.items() if value is not None})
    experiment_config["experiment"] = name

    unknown = sorted(set(experiment_config) - set(DEFAULTS))
    if unknown:
        raise ConfigurationError(
            f"Unknown configuration keys: {', '.join(unknown)}", key=unknown[0]
        )
    return validate(experiment_config)


def validate(experiment_config: dict) -> dict:
    """Coerces every value to its expected type and checks ranges and choices."""
    validated = dict(experiment_config)
    for key in FLOAT_KEYS:
        validated[key] = _coerce(key, validated[key], float)
    for key in INT_KEYS:
        validated[key] = _coerce(key, validated[key], int)
    for key in FLOAT_LIST_KEYS:
        validated[key] = [_coerce(key, item, float) for item in _as_list(validated[key])]
    for key in INT_LIST_KEYS:
        validated[key] = [_coerce(key, item, int) for item in _as_list(validated[key])]
    for key in BOOL_KEYS:
        try:
            validated[key] = _str2bool(validated[key])
        except ValueError as error:
            raise ConfigurationError(str(error), key=key) from error
    for key, choices in CHOICES.items():
        validated[key] = str(validated[key]).strip().lower()
        if validated[key] not in choices:
            raise ConfigurationError(
                f"{key} must be one of {list(choices)}, got {validated[key]!r}", key=key
            )

    for key in ("dt", "final_time", "epsilon", "cg_tol", "initial_width"):
        if not validated[key] > 0:
            raise ConfigurationError(f"{key} must be positive, got {validated[key]!r}", key=key)
    for key in ("cg_maxiter", "seed", "threads", "initial_mass"):
        if validated[key] < 0:
            raise ConfigurationError(f"{key} must be nonnegative, got {validated[key]!r}", key=key)
    if validated["cadence"] < 1:
        raise ConfigurationError(
            f"cadence must be at least 1, got {validated['cadence']!r}", key="cadence"
        )
    for key in ("dx_list", "dt_list", "benchmark_grids"):
        if any(not value > 0 for value in validated[key]):
            raise ConfigurationError(
                f"{key} entries must be positive, got {validated[key]!r}", key=key
            )
    if validated["closure"] == "dirichlet" and validated["bc"] == "periodic":
        raise ConfigurationError("Dirichlet closure needs bc = 'neumann'", key="closure")
    if validated["initial"] == "file" and not validated["initial_rho"]:
        raise ConfigurationError(
            "initial = 'file' needs initial_rho (and optionally initial_c)", key="initial_rho"
        )
    return validated


def _coerce(key: str, value: Any, kind: type) -> Any:
    try:
        if kind is int and isinstance(value, float) and not value.is_integer():
            raise ValueError(f"{value!r} is not integral")
        return kind(value)
    except (TypeError, ValueError) as error:
        raise ConfigurationError(
            f"{key} expects {kind.__name__} values, got {value!r}", key=key
        ) from error


def _as_list(value: Union[str, List, tuple]) -> list:
    if isinstance(value, str):
        return [item for item in (part.strip() for part in value.split(",")) if item]
    if isinstance(value, (list, tuple)):
        return list(value)
    return [value]


def _str2bool(value: Union[str, bool]) -> bool:
    """Interpret value as a boolean.

    This code snippet was inspired by <https://stackoverflow.com/a/43357954>.
    """
    if isinstance(value, bool):
        return value
    if value is None:
        return False
    _value = value.strip().lower()
    if _value in ("yes", "true", "t", "y", "1"):
        return True
    elif _value in ("no", "false", "f", "n", "0", ""):
        return False
    raise ValueError(f"{value} is not a valid boolean value")


def toml(location: str) -> dict:
    """Returns back the configuration found within a
    [TOML](https://github.com/toml-lang/toml#toml) config file.

    Keys sit at the top level, or inside a `[tool.ksadi]` section when the file has a
    `[tool]` table (so a project's `pyproject.toml` works as a config file too).
    Files that are not valid TOML are read as plain `key = value` lines, so values
    such as `bc = neumann` need no quotes.
    """
    if not os.path.exists(location):
        warnings.warn(f'\nNo config file found at location: "{location}"', stacklevel=2)
        return {}

    try:
        toml_config = toml_load(location)
    except TomlDecodeError as toml_error:
        return key_values(location, toml_error)
    except OSError as load_config_error:
        raise ConfigurationError(
            f'Config file at "{location}" has errors: {load_config_error}'
        ) from load_config_error

    if "tool" in toml_config:
        return dict(toml_config["tool"].get("ksadi", {}))
    return toml_config


def key_values(location: str, toml_error: Optional[Exception] = None) -> dict:
    """Reads `key = value` lines. Blank lines and `#` comments are skipped, quotes and
    list brackets around a value are dropped; `validate` does the type coercion.
    """
    config: Dict[str, Any] = {}
    with open(location) as config_file:
        for number, line in enumerate(config_file, start=1):
            content = line.split("#", 1)[0].strip()
            if not content:
                continue
            key, separator, value = content.partition("=")
            if not separator or not key.strip():
                raise ConfigurationError(
                    f'Config file at "{location}" has errors: line {number} is not '
                    f"`key = value`: {line.strip()!r}"
                ) from toml_error
            value = value.strip()
            if len(value) >= 2 and value[0] == value[-1] and value[0] in "\"'":
                value = value[1:-1]
            elif value.startswith("[") and value.endswith("]"):
                value = value[1:-1]
            config[key.strip()] = value
    return config
