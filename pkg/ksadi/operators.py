"""Undivided difference operators and the symmetric weighted operators built on them.

All operators are undivided: callers scale them with `mu = dt / dx**2`.
On Neumann grids the half-point fluxes beyond the boundary are zero, so every
operator here is a difference of fluxes and sums to zero over the owned nodes.
"""
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Optional, Union

import numpy as np
from ksadi.exceptions import DomainError, FieldError, SingularSystemError
from ksadi.grid import Field, GridSpec
from ksadi.linalg import CyclicTridiagSystem, TridiagSystem, is_diagonally_dominant


class Direction(Enum):
    X = 0
    Y = 1

    @property
    def axis(self) -> int:
        return self.value

    @property
    def other(self) -> "Direction":
        return Direction.Y if self is Direction.X else Direction.X


@dataclass(frozen=True)
class HalfPointCoeffs:
    """Geometric-mean weights at half points along one direction.

    Entry `k` sits between nodes `k` and `k + 1` along the direction's axis; periodic
    grids also carry the wrap-around half point between the last node and node 0.
    """

    direction: Direction
    values: np.ndarray


def delta(values: np.ndarray, axis: int, periodic: bool) -> np.ndarray:
    """Forward difference `v[k+1] - v[k]` at every materialized half point."""
    if periodic:
        return np.roll(values, -1, axis=axis) - values
    return np.diff(values, axis=axis)


def divergence(flux: np.ndarray, axis: int, periodic: bool) -> np.ndarray:
    """Backward difference of half-point fluxes back onto the nodes."""
    if periodic:
        return flux - np.roll(flux, 1, axis=axis)
    shape = list(flux.shape)
    shape[axis] = 1
    closed = np.zeros(shape)
    return np.concatenate([flux, closed], axis=axis) - np.concatenate([closed, flux], axis=axis)


def check_positive(M: np.ndarray) -> None:
    if not np.all(M > 0):
        index = tuple(int(k) for k in np.argwhere(~(M > 0))[0])
        raise DomainError(
            f"M must be strictly positive, found {M[index]!r} at node {index}", index=index
        )


def _check_same_grid(*fields: Field) -> GridSpec:
    grid = fields[0].grid
    if any(other.grid != grid for other in fields[1:]):
        raise FieldError("Operator inputs must live on the same grid")
    return grid


def apply_delta2(f: Field, direction: Direction) -> Field:
    """Undivided second difference `f[k-1] - 2 f[k] + f[k+1]` along `direction`."""
    axis, periodic = direction.axis, f.grid.periodic
    return f.with_values(divergence(delta(f.values, axis, periodic), axis, periodic))


def half_values(M: np.ndarray, axis: int, periodic: bool) -> np.ndarray:
    check_positive(M)
    if periodic:
        neighbour = np.roll(M, -1, axis=axis)
        return np.sqrt(M * neighbour)
    lower = np.take(M, np.arange(M.shape[axis] - 1), axis=axis)
    upper = np.take(M, np.arange(1, M.shape[axis]), axis=axis)
    return np.sqrt(lower * upper)


def half_point_coeffs(M: Field, direction: Direction) -> HalfPointCoeffs:
    return HalfPointCoeffs(direction, half_values(M.values, direction.axis, M.grid.periodic))


def tau_operator(M: np.ndarray, periodic: bool) -> Callable[[np.ndarray, int], np.ndarray]:
    """Precomputes the weights of `M` once and returns `apply(h, axis)`.
    The schemes apply the same weights many times per step.
    """
    root = np.sqrt(M)
    weights = [half_values(M, axis, periodic) for axis in (0, 1)]

    def apply(h: np.ndarray, axis: int) -> np.ndarray:
        flux = weights[axis] * delta(h / root, axis, periodic)
        return divergence(flux, axis, periodic) / root

    return apply


def tau(M: np.ndarray, h: np.ndarray, axis: int, periodic: bool) -> np.ndarray:
    root = np.sqrt(M)
    flux = half_values(M, axis, periodic) * delta(h / root, axis, periodic)
    return divergence(flux, axis, periodic) / root


def neighbour_ratio(M: np.ndarray, axis: int, periodic: bool) -> np.ndarray:
    """`(sqrt(M[k-1]) + sqrt(M[k+1])) / sqrt(M[k])` per node, written through the
    half-point weights so Neumann boundary nodes only count their interior neighbour.
    """
    weights = half_values(M, axis, periodic)
    return _weight_sum(weights, axis, periodic) / M


def _weight_sum(weights: np.ndarray, axis: int, periodic: bool) -> np.ndarray:
    if periodic:
        return weights + np.roll(weights, 1, axis=axis)
    shape = list(weights.shape)
    shape[axis] = 1
    closed = np.zeros(shape)
    padded_above = np.concatenate([weights, closed], axis=axis)
    return padded_above + np.concatenate([closed, weights], axis=axis)


def apply_tau(M: Field, h: Field, direction: Direction) -> Field:
    """`(1/sqrt(M)) * delta(M_half * delta(h / sqrt(M)))` along `direction`."""
    grid = _check_same_grid(M, h)
    return h.with_values(tau(M.values, h.values, direction.axis, grid.periodic))


def apply_tau_xy(M: Field, h: Field) -> Field:
    return apply_tau(M, apply_tau(M, h, Direction.Y), Direction.X)


def apply_mass_weighted_sum(M: Field, tauh: Field) -> float:
    _check_same_grid(M, tauh)
    return float(np.sum(np.sqrt(M.values) * tauh.values))


def as_lines(values: np.ndarray, direction: Direction) -> np.ndarray:
    """View of a nodal array with the lines of `direction` along the last axis."""
    return np.moveaxis(values, direction.axis, -1)


def from_lines(lines: np.ndarray, direction: Direction) -> np.ndarray:
    return np.moveaxis(lines, -1, direction.axis)


def _line_systems(
    weights: np.ndarray, root: np.ndarray, mu: float, periodic: bool
) -> Union[TridiagSystem, CyclicTridiagSystem]:
    # weights: half-point coefficients per line, root: sqrt(M) per line (line axis last)
    if periodic:
        neighbours = root * np.roll(root, -1, axis=-1)
    else:
        neighbours = root[..., :-1] * root[..., 1:]
    main = 1.0 + mu * _weight_sum(weights, -1, periodic) / (root * root)
    if __debug__:
        # sqrt(M) (1 - mu tau) sqrt(M) has M + mu (a + b) on the diagonal against mu a, mu b
        scaled = _pack(-mu * weights, root * root * main, periodic)
        if not is_diagonally_dominant(scaled):
            raise SingularSystemError("Assembled line systems are not diagonally dominant")
    return _pack(-mu * weights / neighbours, main, periodic)


def _pack(
    coupling: np.ndarray, main: np.ndarray, periodic: bool
) -> Union[TridiagSystem, CyclicTridiagSystem]:
    rhs = np.zeros(main.shape)
    if periodic:
        off = np.ascontiguousarray(coupling[..., :-1])
        corner = np.ascontiguousarray(coupling[..., -1])
        return CyclicTridiagSystem(off, main, off, rhs, corner, corner)
    return TridiagSystem(coupling, main, coupling, rhs)


def _check_mu(mu: float) -> None:
    if not mu >= 0:
        raise DomainError(f"mu must be nonnegative, got {mu!r}")


def assemble_tau_lines(
    M: Union[Field, np.ndarray], mu: float, direction: Direction, periodic: Optional[bool] = None
) -> Union[TridiagSystem, CyclicTridiagSystem]:
    """Coefficients of `(1 - mu * tau)` for every line along `direction`, batched.

    The batch axis runs over the other direction, so `lines[k]` is the k-th line.
    `periodic` is only needed when `M` is given as a bare array.
    """
    _check_mu(mu)
    if isinstance(M, Field):
        periodic = M.grid.periodic
        M = M.values
    weights = as_lines(half_values(M, direction.axis, bool(periodic)), direction)
    return _line_systems(weights, as_lines(np.sqrt(M), direction), mu, bool(periodic))


def assemble_tau_line(
    M: Field, mu: float, line: int, direction: Direction
) -> Union[TridiagSystem, CyclicTridiagSystem]:
    """Coefficients of `(1 - mu * tau)` restricted to a single grid line."""
    lines = assemble_tau_lines(M, mu, direction)
    if not 0 <= line < lines.main.shape[0]:
        raise DomainError(f"Line {line} is outside 0..{lines.main.shape[0] - 1}", index=(line,))
    if isinstance(lines, CyclicTridiagSystem):
        return CyclicTridiagSystem(
            lines.lower[line], lines.main[line], lines.upper[line], lines.rhs[line],
            float(lines.corner_low[line]), float(lines.corner_high[line]),
        )
    return TridiagSystem(lines.lower[line], lines.main[line], lines.upper[line], lines.rhs[line])


def assemble_delta2_lines(
    grid: GridSpec, mu: float, direction: Direction
) -> Union[TridiagSystem, CyclicTridiagSystem]:
    """Coefficients of `(1 - mu * delta2)` for every line along `direction`."""
    _check_mu(mu)
    batch = grid.shape[direction.other.axis]
    m = grid.shape[direction.axis]
    half_count = m if grid.periodic else m - 1
    return _line_systems(np.ones((batch, half_count)), np.ones((batch, m)), mu, grid.periodic)
