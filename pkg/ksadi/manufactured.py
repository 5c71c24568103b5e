"""Exact Gaussian solution of the forced Keller-Segel system used for convergence studies.

    rho(x, y, t) = 4 exp(-(t + x^2 + y^2))
    c(x, y, t)   = exp(-(t + (x^2 + y^2) / 2))

solves `rho_t = lap(rho) - div(rho grad c) + F1` and `eps c_t = lap(c) + rho + F2`.
"""
from dataclasses import dataclass
from typing import Callable

import numpy as np
from ksadi.exceptions import FieldError
from ksadi.grid import Field, GridSpec, State, sample_field
from ksadi.schemes import DirichletClosure, Forcing


def _radius2(x, y):
    return np.square(x) + np.square(y)


def rho_exact(x, y, t: float):
    return 4.0 * np.exp(-(t + _radius2(x, y)))


def c_exact(x, y, t: float):
    return np.exp(-(t + 0.5 * _radius2(x, y)))


def forcing_F1(x, y, t: float):
    r2 = _radius2(x, y)
    return (c_exact(x, y, t) * (3.0 * r2 - 2.0) - 4.0 * r2 + 3.0) * rho_exact(x, y, t)


def forcing_F2(x, y, t: float, epsilon: float):
    return (2.0 - epsilon - _radius2(x, y)) * c_exact(x, y, t) - rho_exact(x, y, t)


@dataclass(frozen=True)
class ManufacturedCase:
    epsilon: float = 1.0

    def rho_exact(self, x, y, t: float):
        return rho_exact(x, y, t)

    def c_exact(self, x, y, t: float):
        return c_exact(x, y, t)

    def F1(self, x, y, t: float):
        return forcing_F1(x, y, t)

    def F2(self, x, y, t: float):
        return forcing_F2(x, y, t, self.epsilon)

    def exact_state(self, grid: GridSpec, t: float) -> State:
        return State(
            sample_field(grid, lambda x, y: rho_exact(x, y, t)),
            sample_field(grid, lambda x, y: c_exact(x, y, t)),
            t,
        )

    def forcing(self) -> Forcing:
        return Forcing(self.F1, self.F2)

    def closure(self) -> DirichletClosure:
        """Boundary nodes pinned to the exact solution. The Gaussian pair does not satisfy
        homogeneous Neumann conditions on a bounded square, so forced runs close with this.
        """
        return DirichletClosure(self.rho_exact, self.c_exact)


DEFAULT_CASE = ManufacturedCase()


def exact_state(grid: GridSpec, t: float, case: ManufacturedCase = DEFAULT_CASE) -> State:
    return case.exact_state(grid, t)


def max_norm_error(numeric: Field, grid: GridSpec, exact: Callable, t: float) -> float:
    """Max over owned nodes of `|numeric - exact(x, y, t)|`."""
    if numeric.grid != grid:
        raise FieldError("Numeric field does not live on the requested grid")
    reference = sample_field(grid, lambda x, y: exact(x, y, t))
    return float(np.max(np.abs(numeric.values - reference.values)))
