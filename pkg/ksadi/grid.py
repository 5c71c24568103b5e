"""Defines the discrete domain shared by every operator and scheme in `ksadi`.

Grids are vertex-centered: node `(i, j)` sits at `(xmin + i*dx, ymin + j*dy)`.
Periodic grids own nodes `0..n-1` along each axis (the node at `xmax` is the image
of the node at `xmin`), Neumann grids own nodes `0..n` including both boundaries.
Field values are indexed `values[i, j]`, i.e. axis 0 runs along x.
"""
import json
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Tuple, Union

import numpy as np
from ksadi.exceptions import ConfigurationError, FieldError, SamplingError

FIELD_HEADER_PREFIX = "# "


class BoundaryCondition(str, Enum):
    PERIODIC = "periodic"
    NEUMANN = "neumann"

    @classmethod
    def parse(cls, value: Union[str, "BoundaryCondition"]) -> "BoundaryCondition":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).strip().lower())
        except ValueError:
            raise ConfigurationError(
                f"Unknown boundary condition {value!r}; expected one of "
                f"{[bc.value for bc in cls]}",
                key="bc",
            ) from None


@dataclass(frozen=True)
class GridSpec:
    xmin: float
    xmax: float
    ymin: float
    ymax: float
    nx: int
    ny: int
    bc: BoundaryCondition

    @property
    def dx(self) -> float:
        return (self.xmax - self.xmin) / self.nx

    @property
    def dy(self) -> float:
        return (self.ymax - self.ymin) / self.ny

    @property
    def periodic(self) -> bool:
        return self.bc is BoundaryCondition.PERIODIC

    @property
    def shape(self) -> Tuple[int, int]:
        """Number of owned nodes along x and y."""
        if self.periodic:
            return (self.nx, self.ny)
        return (self.nx + 1, self.ny + 1)

    @property
    def size(self) -> int:
        return self.shape[0] * self.shape[1]

    @property
    def x(self) -> np.ndarray:
        return _axis(self.xmin, self.xmax, self.nx, self.shape[0])

    @property
    def y(self) -> np.ndarray:
        return _axis(self.ymin, self.ymax, self.ny, self.shape[1])

    def coordinates(self) -> Tuple[np.ndarray, np.ndarray]:
        """Returns `(X, Y)` node coordinate arrays shaped like a field on this grid."""
        return np.meshgrid(self.x, self.y, indexing="ij")

    def boundary_mask(self) -> np.ndarray:
        """True on nodes that lie on the boundary of a Neumann-layout grid."""
        mask = np.zeros(self.shape, dtype=bool)
        if not self.periodic:
            mask[0, :] = mask[-1, :] = True
            mask[:, 0] = mask[:, -1] = True
        return mask

    def metadata(self) -> dict:
        return {
            "xmin": self.xmin,
            "xmax": self.xmax,
            "ymin": self.ymin,
            "ymax": self.ymax,
            "nx": self.nx,
            "ny": self.ny,
            "bc": self.bc.value,
        }


def _axis(lower: float, upper: float, intervals: int, count: int) -> np.ndarray:
    # convex combination of the index ratio: nodes 0 and `intervals` land on the bounds exactly
    ratio = np.arange(count, dtype=float) / intervals
    return lower * (1.0 - ratio) + upper * ratio


def make_grid(
    xmin: float,
    xmax: float,
    ymin: float,
    ymax: float,
    nx: int,
    ny: int,
    bc: Union[str, BoundaryCondition] = BoundaryCondition.NEUMANN,
) -> GridSpec:
    """Builds a validated GridSpec.

    - *xmin*, *xmax*, *ymin*, *ymax*: domain bounds.
    - *nx*, *ny*: number of intervals per axis (at least 3).
    - *bc*: `"periodic"` or `"neumann"`.
    """
    values = {"xmin": xmin, "xmax": xmax, "ymin": ymin, "ymax": ymax}
    for key, value in values.items():
        if not np.isfinite(value):
            raise ConfigurationError(f"{key} must be finite, got {value!r}", key=key)
    if not xmax > xmin:
        raise ConfigurationError(f"Degenerate x-range [{xmin}, {xmax}]", key="xmax")
    if not ymax > ymin:
        raise ConfigurationError(f"Degenerate y-range [{ymin}, {ymax}]", key="ymax")
    for key, count in (("nx", nx), ("ny", ny)):
        if int(count) != count or count < 3:
            raise ConfigurationError(f"{key} must be an integer >= 3, got {count!r}", key=key)
    return GridSpec(
        float(xmin),
        float(xmax),
        float(ymin),
        float(ymax),
        int(nx),
        int(ny),
        BoundaryCondition.parse(bc),
    )


@dataclass(frozen=True)
class Field:
    """A nodal scalar array over a GridSpec. Values are read-only once constructed."""

    grid: GridSpec
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        if values.shape != self.grid.shape:
            raise FieldError(
                f"Field shape {values.shape} does not match grid node layout {self.grid.shape}"
            )
        if not np.all(np.isfinite(values)):
            bad = tuple(int(k) for k in np.argwhere(~np.isfinite(values))[0])
            raise FieldError(f"Field holds non-finite value {values[bad]!r} at node {bad}")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    def with_values(self, values: np.ndarray) -> "Field":
        return Field(self.grid, values)

    def min(self) -> float:
        return float(self.values.min())

    def max(self) -> float:
        return float(self.values.max())


@dataclass(frozen=True)
class State:
    """Paired density and concentration at one time level."""

    rho: Field
    c: Field
    t: float = 0.0

    def __post_init__(self):
        if self.rho.grid != self.c.grid:
            raise FieldError("rho and c must live on the same grid")
        if not self.t >= 0:
            raise FieldError(f"State time must be nonnegative, got {self.t!r}")

    @property
    def grid(self) -> GridSpec:
        return self.rho.grid


def zeros(grid: GridSpec) -> Field:
    return Field(grid, np.zeros(grid.shape))


def sample_field(grid: GridSpec, f: Callable) -> Field:
    """Samples `f(x, y)` on every owned node.

    `f` is called once with the coordinate arrays, so it should be written with numpy
    operations; scalar results are broadcast over the grid.
    """
    X, Y = grid.coordinates()
    with np.errstate(all="ignore"):
        values = np.broadcast_to(np.asarray(f(X, Y), dtype=float), grid.shape)
    finite = np.isfinite(values)
    if not finite.all():
        i, j = (int(k) for k in np.argwhere(~finite)[0])
        raise SamplingError((i, j), (float(X[i, j]), float(Y[i, j])), float(values[i, j]))
    return Field(grid, values)


def write_field(field: Field, path: str) -> None:
    """Writes a Field as a one-line JSON header followed by a CSV matrix.
    Each CSV row holds a fixed j, columns run over i.
    """
    with open(path, "w") as snapshot:
        snapshot.write(FIELD_HEADER_PREFIX + json.dumps(field.grid.metadata()) + "\n")
        np.savetxt(snapshot, field.values.T, delimiter=",", fmt="%.17g")


def read_field(path: str) -> Field:
    with open(path) as snapshot:
        header = snapshot.readline()
        if not header.startswith(FIELD_HEADER_PREFIX):
            raise ConfigurationError(f"'{path}' is missing the field metadata header")
        try:
            grid = make_grid(**json.loads(header[len(FIELD_HEADER_PREFIX) :]))
        except (TypeError, ValueError) as error:
            raise ConfigurationError(f"'{path}' has a malformed header: {error}") from error
        values = np.loadtxt(snapshot, delimiter=",", ndmin=2)
    return Field(grid, values.T)
