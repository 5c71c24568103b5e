import math

import numpy as np
import pytest
from ksadi import exceptions, manufactured
from ksadi.grid import Field, make_grid


def test_exact_state_values():
    grid = make_grid(-1, 1, -1, 1, 2 * 5, 2 * 5)
    state = manufactured.exact_state(grid, 0.0)
    assert state.rho.values[5, 5] == 4.0
    assert state.c.values[5, 5] == 1.0
    assert state.rho.values[-1, -1] == pytest.approx(4 * math.exp(-2))
    assert state.c.values[-1, -1] == pytest.approx(math.exp(-1))


def test_exact_solution_decays_in_time():
    for t in (0.0, 0.3, 1.7):
        assert manufactured.rho_exact(0.4, -0.2, t + 1.0) == pytest.approx(
            math.exp(-1.0) * manufactured.rho_exact(0.4, -0.2, t)
        )
        assert manufactured.c_exact(0.4, -0.2, t + 1.0) == pytest.approx(
            math.exp(-1.0) * manufactured.c_exact(0.4, -0.2, t)
        )


def test_forcing_at_origin():
    assert manufactured.forcing_F1(0.0, 0.0, 0.0) == pytest.approx(4.0)
    assert manufactured.forcing_F2(0.0, 0.0, 0.0, 1.0) == pytest.approx(-3.0)
    case = manufactured.ManufacturedCase(epsilon=0.5)
    assert case.F2(0.0, 0.0, 0.0) == pytest.approx(-2.5)


def _derivatives(f, x, y, t, h=1e-2):
    """Fourth-order central differences: (f_t, f_x, f_y, f_xx + f_yy)."""

    def first(g):
        return (-g(2 * h) + 8 * g(h) - 8 * g(-h) + g(-2 * h)) / (12 * h)

    def second(g):
        return (-g(2 * h) + 16 * g(h) - 30 * g(0.0) + 16 * g(-h) - g(-2 * h)) / (12 * h**2)

    return (
        first(lambda s: f(x, y, t + s)),
        first(lambda s: f(x + s, y, t)),
        first(lambda s: f(x, y + s, t)),
        second(lambda s: f(x + s, y, t)) + second(lambda s: f(x, y + s, t)),
    )


@pytest.mark.parametrize("epsilon", [1.0, 0.3])
def test_forced_system_is_satisfied(epsilon):
    rng = np.random.default_rng(7)
    for x, y, t in zip(rng.uniform(-1, 1, 20), rng.uniform(-1, 1, 20), rng.uniform(0, 1, 20)):
        rho_t, rho_x, rho_y, rho_lap = _derivatives(manufactured.rho_exact, x, y, t)
        c_t, c_x, c_y, c_lap = _derivatives(manufactured.c_exact, x, y, t)
        rho = manufactured.rho_exact(x, y, t)
        drift = rho_x * c_x + rho_y * c_y + rho * c_lap
        assert abs(rho_t - rho_lap + drift - manufactured.forcing_F1(x, y, t)) <= 1e-6
        concentration = epsilon * c_t - c_lap - rho - manufactured.forcing_F2(x, y, t, epsilon)
        assert abs(concentration) <= 1e-6


def test_max_norm_error(neumann_grid):
    exact = manufactured.rho_exact
    sampled = manufactured.exact_state(neumann_grid, 0.2).rho
    assert manufactured.max_norm_error(sampled, neumann_grid, exact, 0.2) == 0.0

    values = np.array(sampled.values)
    values[2, 4] += 1e-3
    error = manufactured.max_norm_error(Field(neumann_grid, values), neumann_grid, exact, 0.2)
    assert error == pytest.approx(1e-3)


def test_max_norm_error_needs_same_grid(neumann_grid, periodic_grid):
    sampled = manufactured.exact_state(neumann_grid, 0.0).rho
    with pytest.raises(exceptions.FieldError):
        manufactured.max_norm_error(sampled, periodic_grid, manufactured.rho_exact, 0.0)


def test_case_builds_forcing_and_closure(neumann_grid):
    case = manufactured.ManufacturedCase()
    forcing = case.forcing()
    assert forcing.density(neumann_grid, 0.0).shape == neumann_grid.shape
    closure = case.closure()
    exact = case.exact_state(neumann_grid, 0.1).c.values
    assert np.array_equal(closure.c_values(neumann_grid, 0.1), exact)
