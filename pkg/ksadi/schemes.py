"""Time steppers for the parabolic-parabolic Keller-Segel system.

Every stepper solves the concentration first and then the density, because the density
equation consumes `M = exp(c)` at the new level. Density solves work on
`h = rho / sqrt(M)` and convert back to `rho = h * sqrt(M)` when the step ends.
"""
import warnings
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Optional, Tuple, Union

import numpy as np
from ksadi.exceptions import (
    ConfigurationError,
    FieldError,
    PositivityWarning,
    SchemeStateError,
)
from ksadi.grid import Field, GridSpec, State
from ksadi.linalg import CyclicTridiagSystem, TridiagSystem, solve_cg, solve_lines
from ksadi.operators import (
    Direction,
    as_lines,
    assemble_delta2_lines,
    assemble_tau_lines,
    check_positive,
    delta,
    divergence,
    from_lines,
    neighbour_ratio,
    tau_operator,
)

Source = Callable[[np.ndarray, np.ndarray, float], np.ndarray]
NEGATIVE_DENSITY_TOLERANCE = 1e-13


class SchemeKind(str, Enum):
    ADI_FIRST_ORDER = "adi1"
    FIVE_POINT = "five-point"
    ADI_SECOND_ORDER = "adi2"

    @classmethod
    def parse(cls, value: Union[str, "SchemeKind"]) -> "SchemeKind":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).strip().lower())
        except ValueError:
            raise ConfigurationError(
                f"Unknown scheme {value!r}; expected one of {[kind.value for kind in cls]}",
                key="scheme",
            ) from None


def _sample(source: Source, grid: GridSpec, t: float) -> np.ndarray:
    X, Y = grid.coordinates()
    return np.broadcast_to(np.asarray(source(X, Y, t), dtype=float), grid.shape)


@dataclass(frozen=True)
class Forcing:
    """Source terms `F1` (density) and `F2` (concentration), each called as `F(x, y, t)`."""

    F1: Source
    F2: Source

    def density(self, grid: GridSpec, t: float) -> np.ndarray:
        return _sample(self.F1, grid, t)

    def concentration(self, grid: GridSpec, t: float) -> np.ndarray:
        return _sample(self.F2, grid, t)


@dataclass(frozen=True)
class DirichletClosure:
    """Pins boundary nodes of a Neumann-layout grid to the given functions of `(x, y, t)`."""

    rho: Source
    c: Source

    def rho_values(self, grid: GridSpec, t: float) -> np.ndarray:
        return _sample(self.rho, grid, t)

    def c_values(self, grid: GridSpec, t: float) -> np.ndarray:
        return _sample(self.c, grid, t)


@dataclass(frozen=True)
class SchemeConfig:
    epsilon: float
    dt: float
    scheme: SchemeKind = SchemeKind.ADI_FIRST_ORDER
    cg_tol: float = 1e-10
    cg_maxiter: Optional[int] = None
    forcing: Optional[Forcing] = None
    closure: Optional[DirichletClosure] = None
    threads: int = 0

    def __post_init__(self):
        object.__setattr__(self, "scheme", SchemeKind.parse(self.scheme))
        for key in ("epsilon", "dt", "cg_tol"):
            value = getattr(self, key)
            if not (np.isfinite(value) and value > 0):
                raise ConfigurationError(
                    f"{key} must be positive and finite, got {value!r}", key=key
                )
        if self.cg_maxiter is not None and self.cg_maxiter < 1:
            raise ConfigurationError(
                f"cg_maxiter must be positive, got {self.cg_maxiter!r}", key="cg_maxiter"
            )
        if self.threads < 0:
            raise ConfigurationError(f"threads must be >= 0, got {self.threads!r}", key="threads")

    def mu(self, grid: GridSpec) -> Tuple[float, float]:
        """`(dt / dx**2, dt / dy**2)`"""
        return (self.dt / grid.dx**2, self.dt / grid.dy**2)

    def mu_epsilon(self, grid: GridSpec) -> Tuple[float, float]:
        mu_x, mu_y = self.mu(grid)
        return (mu_x / self.epsilon, mu_y / self.epsilon)


@dataclass(frozen=True)
class PositivityReport:
    """Margins of the sufficient positivity conditions of the second-order scheme.
    A margin below zero means the condition fails; `index_*` locate the minimizing node.
    """

    margin_x: float
    margin_y: float
    margin_c: float
    index_x: Tuple[int, int]
    index_y: Tuple[int, int]

    @property
    def guaranteed(self) -> bool:
        return min(self.margin_x, self.margin_y, self.margin_c) >= 0


@dataclass
class AdiWorkspace:
    """Intermediate fields of the most recent step plus the history the second-order
    scheme needs. With `bootstrap` set, a missing `rho_prev` is produced by one
    first-order step.
    """

    M: Optional[Field] = None
    h: Optional[Field] = None
    cstar: Optional[Field] = None
    hstar: Optional[Field] = None
    c_half: Optional[Field] = None
    rho_half: Optional[Field] = None
    M_half: Optional[Field] = None
    rho_prev: Optional[Field] = None
    bootstrap: bool = True
    positivity: Optional[PositivityReport] = field(default=None, repr=False)


def _closure(cfg: SchemeConfig, grid: GridSpec) -> Optional[DirichletClosure]:
    if cfg.closure is not None and grid.periodic:
        raise ConfigurationError(
            "Dirichlet closure needs a grid that owns its boundary nodes", key="closure"
        )
    return cfg.closure


def _delta2(values: np.ndarray, direction: Direction, periodic: bool) -> np.ndarray:
    axis = direction.axis
    return divergence(delta(values, axis, periodic), axis, periodic)


def _pinned(system: TridiagSystem) -> TridiagSystem:
    parts = (system.lower, system.main, system.upper)
    lower, main, upper = (np.array(part, dtype=float) for part in parts)
    main[..., 0] = main[..., -1] = 1.0
    upper[..., 0] = 0.0
    lower[..., -1] = 0.0
    return TridiagSystem(lower, main, upper, system.rhs)


def _sweep(
    system: Union[TridiagSystem, CyclicTridiagSystem],
    rhs: np.ndarray,
    direction: Direction,
    threads: int,
    pinned: Optional[np.ndarray] = None,
) -> np.ndarray:
    """Solves every line of `direction` at once. `pinned` replaces both end rows of each
    line with identity rows holding the given nodal values.
    """
    lines = np.array(as_lines(rhs, direction))
    if pinned is not None:
        system = _pinned(system)
        ends = as_lines(pinned, direction)
        lines[..., 0] = ends[..., 0]
        lines[..., -1] = ends[..., -1]
    solution = solve_lines(system.with_rhs(lines), threads=threads)
    return np.ascontiguousarray(from_lines(solution, direction))


def _impose(grid: GridSpec, values: np.ndarray, boundary: np.ndarray) -> np.ndarray:
    return np.where(grid.boundary_mask(), boundary, values)


def _warn_if_negative(rho: Field) -> None:
    scale = float(np.max(np.abs(rho.values)))
    if rho.min() < -NEGATIVE_DENSITY_TOLERANCE * scale:
        index = np.unravel_index(int(np.argmin(rho.values)), rho.grid.shape)
        warnings.warn(
            f"Density input has negative value {rho.min():.3e} "
            f"at node {tuple(int(k) for k in index)}",
            PositivityWarning,
            stacklevel=3,
        )


def step_concentration_adi(
    state: State, cfg: SchemeConfig, ws: Optional[AdiWorkspace] = None
) -> Field:
    """One factored step `(1 - mu_x d2x)(1 - mu_y d2y) c_next = c + (dt/eps)(rho + F2)`
    with `mu = dt / (eps * dx**2)`.
    """
    grid = state.grid
    closure = _closure(cfg, grid)
    mu_x, mu_y = cfg.mu_epsilon(grid)
    scale = cfg.dt / cfg.epsilon
    rhs = state.c.values + scale * state.rho.values
    if cfg.forcing is not None:
        rhs = rhs + scale * cfg.forcing.concentration(grid, state.t)

    exact = star = None
    if closure is not None:
        exact = closure.c_values(grid, state.t + cfg.dt)
        star = exact - mu_y * _delta2(exact, Direction.Y, False)

    lines_x = assemble_delta2_lines(grid, mu_x, Direction.X)
    cstar = _sweep(lines_x, rhs, Direction.X, cfg.threads, star)
    lines_y = assemble_delta2_lines(grid, mu_y, Direction.Y)
    c_next = _sweep(lines_y, cstar, Direction.Y, cfg.threads, exact)
    if exact is not None:
        c_next = _impose(grid, c_next, exact)
    if ws is not None:
        ws.cstar = Field(grid, cstar)
    return Field(grid, c_next)


def step_density_adi(
    rho_n: Field,
    M_next: Field,
    cfg: SchemeConfig,
    t: float = 0.0,
    ws: Optional[AdiWorkspace] = None,
) -> Field:
    """One factored step `(1 - mu_x tau_x)(1 - mu_y tau_y) h_next = rho_n / sqrt(M_next)`
    (plus `dt * F1(t) / sqrt(M_next)` when forced), returning `h_next * sqrt(M_next)`.

    `t` is the time level of `rho_n`.
    """
    if rho_n.grid != M_next.grid:
        raise FieldError("rho and M must live on the same grid")
    grid = rho_n.grid
    closure = _closure(cfg, grid)
    M = M_next.values
    check_positive(M)
    _warn_if_negative(rho_n)
    mu_x, mu_y = cfg.mu(grid)
    root = np.sqrt(M)

    rhs = rho_n.values / root
    if cfg.forcing is not None:
        rhs = rhs + cfg.dt * cfg.forcing.density(grid, t) / root

    exact = star = None
    if closure is not None:
        exact = closure.rho_values(grid, t + cfg.dt) / root
        star = exact - mu_y * tau_operator(M, False)(exact, Direction.Y.axis)

    periodic = grid.periodic
    lines_x = assemble_tau_lines(M, mu_x, Direction.X, periodic)
    hstar = _sweep(lines_x, rhs, Direction.X, cfg.threads, star)
    lines_y = assemble_tau_lines(M, mu_y, Direction.Y, periodic)
    h_next = _sweep(lines_y, hstar, Direction.Y, cfg.threads, exact)
    if exact is not None:
        h_next = _impose(grid, h_next, exact)
    if ws is not None:
        ws.M = M_next
        ws.hstar = Field(grid, hstar)
        ws.h = Field(grid, h_next)
    return Field(grid, h_next * root)


def _exp(c: Field) -> Field:
    return c.with_values(np.exp(c.values))


def step_adi_first_order(
    state: State, cfg: SchemeConfig, ws: Optional[AdiWorkspace] = None
) -> State:
    c_next = step_concentration_adi(state, cfg, ws)
    rho_next = step_density_adi(state.rho, _exp(c_next), cfg, t=state.t, ws=ws)
    return State(rho_next, c_next, state.t + cfg.dt)


def _solve_unfactored(
    apply: Callable[[np.ndarray], np.ndarray],
    rhs: np.ndarray,
    cfg: SchemeConfig,
    grid: GridSpec,
    x0: np.ndarray,
    boundary: Optional[np.ndarray] = None,
) -> np.ndarray:
    if boundary is None:
        solution, _ = solve_cg(apply, rhs, tol=cfg.cg_tol, maxiter=cfg.cg_maxiter, x0=x0)
        return solution
    # known boundary values move to the right-hand side; CG runs on the interior nodes
    interior = ~grid.boundary_mask()
    fixed = np.where(interior, 0.0, boundary)

    def restricted(v: np.ndarray) -> np.ndarray:
        return np.where(interior, apply(np.where(interior, v, 0.0)), 0.0)

    reduced = np.where(interior, rhs - apply(fixed), 0.0)
    solution, _ = solve_cg(
        restricted, reduced, tol=cfg.cg_tol, maxiter=cfg.cg_maxiter, x0=np.where(interior, x0, 0.0)
    )
    return np.where(interior, solution, boundary)


def step_five_point(state: State, cfg: SchemeConfig, ws: Optional[AdiWorkspace] = None) -> State:
    """Unfactored implicit step, each system solved by conjugate gradients.

    The density system is symmetric in `h`, so CG runs on `h` directly.
    """
    grid = state.grid
    periodic = grid.periodic
    closure = _closure(cfg, grid)
    t_next = state.t + cfg.dt
    eps_x, eps_y = cfg.mu_epsilon(grid)

    def concentration(v: np.ndarray) -> np.ndarray:
        return (
            v
            - eps_x * _delta2(v, Direction.X, periodic)
            - eps_y * _delta2(v, Direction.Y, periodic)
        )

    scale = cfg.dt / cfg.epsilon
    rhs = state.c.values + scale * state.rho.values
    if cfg.forcing is not None:
        rhs = rhs + scale * cfg.forcing.concentration(grid, state.t)
    boundary = closure.c_values(grid, t_next) if closure is not None else None
    c_next = Field(grid, _solve_unfactored(concentration, rhs, cfg, grid, state.c.values, boundary))

    M_next = _exp(c_next)
    M = M_next.values
    _warn_if_negative(state.rho)
    mu_x, mu_y = cfg.mu(grid)
    root = np.sqrt(M)
    weighted = tau_operator(M, periodic)

    def density(h: np.ndarray) -> np.ndarray:
        return h - mu_x * weighted(h, 0) - mu_y * weighted(h, 1)

    rhs = state.rho.values / root
    if cfg.forcing is not None:
        rhs = rhs + cfg.dt * cfg.forcing.density(grid, state.t) / root
    boundary = closure.rho_values(grid, t_next) / root if closure is not None else None
    h_next = _solve_unfactored(density, rhs, cfg, grid, state.rho.values / root, boundary)
    if ws is not None:
        ws.M = M_next
        ws.h = Field(grid, h_next)
    return State(Field(grid, h_next * root), c_next, t_next)


def check_second_order_positivity(M_half: Field, cfg: SchemeConfig) -> PositivityReport:
    """Evaluates the sufficient conditions under which the second-order scheme keeps
    density and concentration nonnegative.

    - density, first half-step: `1 - (mu_y/2) * (sqrt(M[j-1]) + sqrt(M[j+1])) / sqrt(M[j]) >= 0`
    - density, second half-step: the same along x
    - concentration: `eps >= max(mu_x, mu_y)`, reported as `1 - max(mu_x, mu_y) / eps`
    """
    grid = M_half.grid
    mu_x, mu_y = cfg.mu(grid)
    margins = []
    for mu, direction in ((mu_x, Direction.X), (mu_y, Direction.Y)):
        margin = 1.0 - 0.5 * mu * neighbour_ratio(M_half.values, direction.axis, grid.periodic)
        index = np.unravel_index(int(np.argmin(margin)), grid.shape)
        margins.append((float(margin[index]), tuple(int(k) for k in index)))
    (margin_x, index_x), (margin_y, index_y) = margins
    margin_c = 1.0 - max(mu_x, mu_y) / cfg.epsilon
    return PositivityReport(margin_x, margin_y, margin_c, index_x, index_y)


def step_adi_second_order(state: State, ws: AdiWorkspace, cfg: SchemeConfig) -> State:
    """Additive second-order ADI step with `rho_next` extrapolated as `2 rho_n - rho_prev`
    in the concentration's second half-step. Sources are evaluated at `t_n` in the first
    half-step and at `t_n + dt` in the second.
    """
    if ws.rho_prev is None:
        if not ws.bootstrap:
            raise SchemeStateError(
                "The second-order scheme needs the previous density; "
                "enable bootstrap or set rho_prev"
            )
        next_state = step_adi_first_order(state, cfg, ws)
        ws.rho_prev = state.rho
        return next_state

    grid = state.grid
    periodic = grid.periodic
    closure = _closure(cfg, grid)
    t_n, t_next = state.t, state.t + cfg.dt
    half = 0.5 * cfg.dt
    rho_n, c_n = state.rho.values, state.c.values

    # concentration
    a_x, a_y = (0.5 * mu for mu in cfg.mu_epsilon(grid))
    source_n = (half / cfg.epsilon) * rho_n
    source_next = (half / cfg.epsilon) * (2.0 * rho_n - ws.rho_prev.values)
    if cfg.forcing is not None:
        source_n = source_n + (half / cfg.epsilon) * cfg.forcing.concentration(grid, t_n)
        source_next = source_next + (half / cfg.epsilon) * cfg.forcing.concentration(grid, t_next)

    exact_n = exact_next = midway = None
    if closure is not None:
        exact_n, exact_next = closure.c_values(grid, t_n), closure.c_values(grid, t_next)
        midway = 0.5 * (
            exact_n + a_y * _delta2(exact_n, Direction.Y, False)
            + exact_next - a_y * _delta2(exact_next, Direction.Y, False)
            + source_n - source_next
        )

    rhs = c_n + a_y * _delta2(c_n, Direction.Y, periodic) + source_n
    lines_x = assemble_delta2_lines(grid, a_x, Direction.X)
    c_half = _sweep(lines_x, rhs, Direction.X, cfg.threads, midway)
    rhs = c_half + a_x * _delta2(c_half, Direction.X, periodic) + source_next
    lines_y = assemble_delta2_lines(grid, a_y, Direction.Y)
    c_next = _sweep(lines_y, rhs, Direction.Y, cfg.threads, exact_next)
    if exact_next is not None:
        c_next = _impose(grid, c_next, exact_next)

    # density
    M_half = Field(grid, np.exp(c_half))
    M = M_half.values
    report = check_second_order_positivity(M_half, cfg)
    ws.positivity = report
    if not report.guaranteed:
        warnings.warn(
            f"Positivity conditions fail at t={t_n!r}: margins x={report.margin_x:.3e} "
            f"at {report.index_x}, y={report.margin_y:.3e} at {report.index_y}, "
            f"c={report.margin_c:.3e}",
            PositivityWarning,
            stacklevel=2,
        )
    _warn_if_negative(state.rho)

    b_x, b_y = (0.5 * mu for mu in cfg.mu(grid))
    root = np.sqrt(M)
    weighted = tau_operator(M, periodic)
    source_n = np.zeros(grid.shape)
    source_next = np.zeros(grid.shape)
    if cfg.forcing is not None:
        source_n = half * cfg.forcing.density(grid, t_n) / root
        source_next = half * cfg.forcing.density(grid, t_next) / root

    exact_n = exact_next = midway = None
    if closure is not None:
        exact_n = closure.rho_values(grid, t_n) / root
        exact_next = closure.rho_values(grid, t_next) / root
        midway = 0.5 * (
            exact_n + b_y * weighted(exact_n, 1)
            + exact_next - b_y * weighted(exact_next, 1)
            + source_n - source_next
        )

    h_n = rho_n / root
    rhs = h_n + b_y * weighted(h_n, 1) + source_n
    lines_x = assemble_tau_lines(M, b_x, Direction.X, periodic)
    h_half = _sweep(lines_x, rhs, Direction.X, cfg.threads, midway)
    rhs = h_half + b_x * weighted(h_half, 0) + source_next
    lines_y = assemble_tau_lines(M, b_y, Direction.Y, periodic)
    h_next = _sweep(lines_y, rhs, Direction.Y, cfg.threads, exact_next)
    if exact_next is not None:
        h_next = _impose(grid, h_next, exact_next)

    ws.c_half = Field(grid, c_half)
    ws.M_half = M_half
    ws.rho_half = Field(grid, h_half * root)
    ws.h = Field(grid, h_next)
    ws.rho_prev = state.rho
    return State(Field(grid, h_next * root), Field(grid, c_next), t_next)


def step(state: State, cfg: SchemeConfig, ws: Optional[AdiWorkspace] = None) -> State:
    """Advances `state` by one step of the scheme selected in `cfg`."""
    if cfg.scheme is SchemeKind.FIVE_POINT:
        return step_five_point(state, cfg, ws)
    if cfg.scheme is SchemeKind.ADI_SECOND_ORDER:
        if ws is None:
            raise SchemeStateError(
                "The second-order scheme needs an AdiWorkspace carried across steps"
            )
        return step_adi_second_order(state, ws, cfg)
    return step_adi_first_order(state, cfg, ws)
