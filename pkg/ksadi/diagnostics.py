"""Scalar functionals over states: mass, extrema, discrete free energy and the
energy dissipation bound of the unfactored scheme.

Node sums run over every owned node and gradient sums over every half point between
owned nodes. Under the zero-flux closure the owned nodes are exactly the unknowns of
the schemes, which is what makes the summation-by-parts identities exact.
"""
from dataclasses import asdict, dataclass
from typing import Optional, Tuple

import numpy as np
from ksadi.exceptions import DomainError, FieldError
from ksadi.grid import Field, GridSpec, State
from ksadi.operators import delta, divergence, half_values, tau_operator
from ksadi.schemes import SchemeConfig

NEGATIVE_RHO_TOLERANCE = 1e-12
LOG_FLOOR = 1e-300
ENERGY_SLACK = 1e-10

COLUMNS = (
    "t",
    "mass_rho",
    "mass_c",
    "min_rho",
    "min_c",
    "energy",
    "energy_delta",
    "dissipation_bound",
)


@dataclass(frozen=True)
class DiagnosticsRecord:
    t: float
    mass_rho: float
    mass_c: float
    min_rho: float
    min_c: float
    energy: float
    energy_delta: float = 0.0
    dissipation_bound: float = 0.0

    def __post_init__(self):
        for key, value in asdict(self).items():
            if not np.isfinite(value):
                raise FieldError(f"Diagnostics value {key} is not finite: {value!r}")

    def row(self) -> Tuple[float, ...]:
        return tuple(getattr(self, column) for column in COLUMNS)


def inner_k(grid: GridSpec, u: np.ndarray, v: np.ndarray) -> float:
    """Node inner product `dx dy sum u v`."""
    return float(grid.dx * grid.dy * np.sum(u * v))


def inner_m(grid: GridSpec, M: np.ndarray, u: np.ndarray, v: np.ndarray) -> float:
    """`<M delta(u), delta(v)>` over half points in both directions, each direction
    divided by its spacing squared, with geometric-mean `M` at half points.
    """
    total = 0.0
    for axis, spacing in ((0, grid.dx), (1, grid.dy)):
        weights = half_values(M, axis, grid.periodic)
        du = delta(u, axis, grid.periodic)
        dv = delta(v, axis, grid.periodic)
        total += float(np.sum(weights * du * dv)) / spacing**2
    return grid.dx * grid.dy * total


def total_mass(f: Field) -> float:
    grid = f.grid
    return float(grid.dx * grid.dy * np.sum(f.values))


def _entropy(rho: np.ndarray, clip_negative: bool = False) -> np.ndarray:
    scale = max(1.0, float(np.max(np.abs(rho))))
    if not clip_negative and rho.min() < -NEGATIVE_RHO_TOLERANCE * scale:
        index = tuple(int(k) for k in np.unravel_index(int(np.argmin(rho)), rho.shape))
        raise DomainError(f"Density {rho[index]!r} at node {index} is negative", index=index)
    positive = np.clip(rho, 0.0, None)
    safe = np.where(positive > 0, positive, 1.0)
    return np.where(positive > 0, positive * np.log(safe), 0.0)


def discrete_energy(rho: Field, c: Field, clip_negative: bool = False) -> float:
    """`dx dy sum [rho log rho - rho - rho c] + (1/2) |grad c|^2`, with `0 log 0 = 0`.

    Negative densities raise `DomainError` unless `clip_negative` is set, in which case
    they are treated like zeros in the entropy term.
    """
    if rho.grid != c.grid:
        raise FieldError("rho and c must live on the same grid")
    grid = rho.grid
    ones = np.ones(grid.shape)
    bulk = _entropy(rho.values, clip_negative) - rho.values - rho.values * c.values
    return inner_k(grid, bulk, ones) + 0.5 * inner_m(grid, ones, c.values, c.values)


def _log_gap(rho: np.ndarray, c: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    usable = rho > LOG_FLOOR
    gap = np.where(usable, np.log(np.where(usable, rho, 1.0)) - c, 0.0)
    return gap, usable


def dissipation_bound(
    rho_next: Field, c_n: Field, c_next: Field, M_next: Field, cfg: SchemeConfig
) -> float:
    """`-dt <M delta(rho/M), delta(log rho - c)>_m - eps dt <dc/dt, dc/dt>_k`.

    Nodes with `rho <= 1e-300` are dropped from the logarithmic factor; a half point
    contributes only when both of its nodes are usable.
    """
    grid = rho_next.grid
    M = M_next.values
    gap, usable = _log_gap(rho_next.values, c_next.values)
    ratio = rho_next.values / M

    flux_term = 0.0
    for axis, spacing in ((0, grid.dx), (1, grid.dy)):
        weights = half_values(M, axis, grid.periodic)
        both = _pairs_usable(usable, axis, grid.periodic)
        terms = weights * delta(ratio, axis, grid.periodic) * delta(gap, axis, grid.periodic)
        flux_term += float(np.sum(np.where(both, terms, 0.0))) / spacing**2
    flux_term *= grid.dx * grid.dy

    rate = (c_next.values - c_n.values) / cfg.dt
    return -cfg.dt * flux_term - cfg.epsilon * cfg.dt * inner_k(grid, rate, rate)


def _pairs_usable(usable: np.ndarray, axis: int, periodic: bool) -> np.ndarray:
    if periodic:
        return usable & np.roll(usable, -1, axis=axis)
    count = usable.shape[axis]
    lower = np.take(usable, np.arange(count - 1), axis=axis)
    upper = np.take(usable, np.arange(1, count), axis=axis)
    return lower & upper


def verify_dissipation_step(
    before: State, after: State, M_next: Field, cfg: SchemeConfig
) -> Tuple[float, float, bool]:
    """Returns `(energy_delta, bound, satisfied)` for one step.

    The inequality is exact for the unfactored scheme; factored steps violate it by
    splitting terms that vanish as the grid is refined (see `adi_energy_correction`).
    """
    energy_before = discrete_energy(before.rho, before.c)
    energy_delta = discrete_energy(after.rho, after.c) - energy_before
    bound = dissipation_bound(after.rho, before.c, after.c, M_next, cfg)
    satisfied = energy_delta <= bound + ENERGY_SLACK * (1.0 + abs(energy_before))
    return energy_delta, bound, bool(satisfied)


def adi_energy_correction(before: State, after: State, M_next: Field, cfg: SchemeConfig) -> float:
    """Splitting terms of a factored first-order step, so that for unforced runs
    `energy_delta <= bound + correction` up to roundoff.

    `-<mu_x mu_y sqrt(M) tau_x tau_y h_next, log rho_next - c_next>_k`
    `- (eps/dt) <c_next - c_n, mu_x' mu_y' d2x d2y c_next>_k` with `mu' = mu / eps`.
    """
    grid = after.grid
    periodic = grid.periodic
    M = M_next.values
    root = np.sqrt(M)
    mu_x, mu_y = cfg.mu(grid)
    weighted = tau_operator(M, periodic)
    h = after.rho.values / root
    cross = mu_x * mu_y * root * weighted(weighted(h, 1), 0)
    gap, _ = _log_gap(after.rho.values, after.c.values)
    density_term = -inner_k(grid, cross, gap)

    eps_x, eps_y = mu_x / cfg.epsilon, mu_y / cfg.epsilon
    c_next = after.c.values
    mixed = _second(_second(c_next, 1, periodic), 0, periodic)
    concentration_term = -(cfg.epsilon / cfg.dt) * inner_k(
        grid, c_next - before.c.values, eps_x * eps_y * mixed
    )
    return density_term + concentration_term


def _second(values: np.ndarray, axis: int, periodic: bool) -> np.ndarray:
    return divergence(delta(values, axis, periodic), axis, periodic)


def record(
    state: State,
    previous: Optional[State] = None,
    cfg: Optional[SchemeConfig] = None,
    clip_negative: bool = False,
) -> DiagnosticsRecord:
    """Builds the diagnostics row for `state`. The step columns stay zero unless both
    the previous state and the scheme configuration are given.
    `clip_negative` is passed on to `discrete_energy`.
    """
    energy = discrete_energy(state.rho, state.c, clip_negative)
    energy_delta = bound = 0.0
    if previous is not None and cfg is not None:
        M_next = state.c.with_values(np.exp(state.c.values))
        energy_delta = energy - discrete_energy(previous.rho, previous.c, clip_negative)
        bound = dissipation_bound(state.rho, previous.c, state.c, M_next, cfg)
    return DiagnosticsRecord(
        t=state.t,
        mass_rho=total_mass(state.rho),
        mass_c=total_mass(state.c),
        min_rho=state.rho.min(),
        min_c=state.c.min(),
        energy=energy,
        energy_delta=energy_delta,
        dissipation_bound=bound,
    )
