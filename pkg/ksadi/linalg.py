"""Direct line solvers and the matrix-free conjugate gradient used by the schemes.

Every tridiagonal system may carry leading batch axes: `main` of shape `(..., m)`
describes `prod(...)` independent lines that are solved in one call. The ADI sweeps
rely on this to solve all lines of a direction at once.
"""
from dataclasses import dataclass
from typing import Callable, Optional, Tuple, Union

import numba
import numpy as np
from ksadi.exceptions import DomainError, IterationLimitError, SingularSystemError
from numba import njit, prange

LinearOperator = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class TridiagSystem:
    lower: np.ndarray
    main: np.ndarray
    upper: np.ndarray
    rhs: np.ndarray

    @property
    def size(self) -> int:
        return self.main.shape[-1]

    def with_rhs(self, rhs: np.ndarray) -> "TridiagSystem":
        return TridiagSystem(self.lower, self.main, self.upper, rhs)


@dataclass(frozen=True)
class CyclicTridiagSystem(TridiagSystem):
    """A tridiagonal system with wrap-around couplings.
    `corner_high` is the entry in the first row / last column,
    `corner_low` the entry in the last row / first column.
    """

    corner_low: Union[float, np.ndarray] = 0.0
    corner_high: Union[float, np.ndarray] = 0.0

    def with_rhs(self, rhs: np.ndarray) -> "CyclicTridiagSystem":
        return CyclicTridiagSystem(
            self.lower, self.main, self.upper, rhs, self.corner_low, self.corner_high
        )


@njit(cache=True)
def _thomas_line(a, b, c, d, x, cp, dp):  # pragma: no cover
    m = b.shape[0]
    if b[0] == 0.0:
        return False
    if m > 1:
        cp[0] = c[0] / b[0]
    dp[0] = d[0] / b[0]
    for i in range(1, m):
        denom = b[i] - a[i - 1] * cp[i - 1]
        if denom == 0.0:
            return False
        if i < m - 1:
            cp[i] = c[i] / denom
        dp[i] = (d[i] - a[i - 1] * dp[i - 1]) / denom
    x[m - 1] = dp[m - 1]
    for i in range(m - 2, -1, -1):
        x[i] = dp[i] - cp[i] * x[i + 1]
    return True


@njit(cache=True)
def _thomas_serial(lower, main, upper, rhs, out, failed):  # pragma: no cover
    batch, m = main.shape
    cp = np.empty(m)
    dp = np.empty(m)
    for line in range(batch):
        failed[line] = not _thomas_line(
            lower[line], main[line], upper[line], rhs[line], out[line], cp, dp
        )


@njit(parallel=True, cache=True)
def _thomas_parallel(lower, main, upper, rhs, out, failed):  # pragma: no cover
    batch, m = main.shape
    for line in prange(batch):
        cp = np.empty(m)
        dp = np.empty(m)
        failed[line] = not _thomas_line(
            lower[line], main[line], upper[line], rhs[line], out[line], cp, dp
        )


def _batched(array: np.ndarray, batch_shape: tuple, length: int) -> np.ndarray:
    batched = np.broadcast_to(array, batch_shape + (length,))
    return np.ascontiguousarray(batched, dtype=float).reshape(-1, length)


def solve_tridiagonal(system: TridiagSystem, threads: int = 0) -> np.ndarray:
    """Solves one or many tridiagonal systems with the Thomas algorithm in O(m) per line.

    - *system*: diagonals and right-hand side, optionally with leading batch axes.
    - *threads*: `0` runs lines sequentially; a positive count runs lines concurrently
      on that many threads.
    """
    rhs = np.asarray(system.rhs, dtype=float)
    m = rhs.shape[-1]
    batch_shape = rhs.shape[:-1]
    main = _batched(system.main, batch_shape, m)
    lower = _batched(system.lower, batch_shape, m - 1)
    upper = _batched(system.upper, batch_shape, m - 1)
    flat_rhs = _batched(rhs, batch_shape, m)
    out = np.empty_like(flat_rhs)
    failed = np.zeros(flat_rhs.shape[0], dtype=np.bool_)
    if threads and threads > 0:
        numba.set_num_threads(min(int(threads), numba.config.NUMBA_NUM_THREADS))
        _thomas_parallel(lower, main, upper, flat_rhs, out, failed)
    else:
        _thomas_serial(lower, main, upper, flat_rhs, out, failed)
    if failed.any():
        raise SingularSystemError(
            f"Zero pivot in tridiagonal line {int(np.argmax(failed))} of {failed.size}"
        )
    return out.reshape(rhs.shape)


def solve_cyclic_tridiagonal(system: CyclicTridiagSystem, threads: int = 0) -> np.ndarray:
    """Solves wrap-around tridiagonal systems through a Sherman-Morrison rank-one
    correction of two Thomas solves.
    """
    rhs = np.asarray(system.rhs, dtype=float)
    m = rhs.shape[-1]
    if m < 3:
        raise SingularSystemError(f"Cyclic systems need at least 3 unknowns, got {m}")
    batch_shape = rhs.shape[:-1]
    main = np.array(np.broadcast_to(system.main, rhs.shape), dtype=float)
    corner_low = np.broadcast_to(np.asarray(system.corner_low, dtype=float), batch_shape)
    corner_high = np.broadcast_to(np.asarray(system.corner_high, dtype=float), batch_shape)

    gamma = np.where(main[..., 0] != 0.0, -main[..., 0], -1.0)
    main[..., 0] -= gamma
    main[..., -1] -= corner_low * corner_high / gamma

    correction = np.zeros(rhs.shape)
    correction[..., 0] = gamma
    correction[..., -1] = corner_low

    lower = np.broadcast_to(system.lower, batch_shape + (m - 1,))
    upper = np.broadcast_to(system.upper, batch_shape + (m - 1,))
    stacked = TridiagSystem(
        np.stack([lower, lower]), np.stack([main, main]), np.stack([upper, upper]),
        np.stack([rhs, correction]),
    )
    y, z = solve_tridiagonal(stacked, threads=threads)

    ratio = corner_high / gamma
    v_dot_y = y[..., 0] + ratio * y[..., -1]
    v_dot_z = z[..., 0] + ratio * z[..., -1]
    denominator = 1.0 + v_dot_z
    trivial = ~np.any(rhs != 0.0, axis=-1)
    singular = (denominator == 0.0) & ~trivial
    if np.any(singular):
        raise SingularSystemError("Sherman-Morrison correction is singular")
    # zero right-hand sides solve to zero even when the wrap-around matrix is singular
    safe = np.where(trivial, 1.0, denominator)
    solution = y - (np.where(trivial, 0.0, v_dot_y) / safe)[..., None] * z
    return np.where(trivial[..., None], 0.0, solution)


def solve_lines(system: TridiagSystem, threads: int = 0) -> np.ndarray:
    """Dispatches to the plain or cyclic solver depending on the system kind."""
    if isinstance(system, CyclicTridiagSystem):
        return solve_cyclic_tridiagonal(system, threads=threads)
    return solve_tridiagonal(system, threads=threads)


def is_diagonally_dominant(system: TridiagSystem) -> bool:
    """True when every row is strictly diagonally dominant."""
    main = np.abs(np.asarray(system.main, dtype=float))
    off = np.zeros(main.shape)
    off[..., 1:] += np.abs(system.lower)
    off[..., :-1] += np.abs(system.upper)
    if isinstance(system, CyclicTridiagSystem):
        off[..., 0] += np.abs(system.corner_high)
        off[..., -1] += np.abs(system.corner_low)
    return bool(np.all(main > off))


def solve_cg(
    apply: LinearOperator,
    rhs: np.ndarray,
    tol: float = 1e-10,
    maxiter: Optional[int] = None,
    x0: Optional[np.ndarray] = None,
) -> Tuple[np.ndarray, int]:
    """Matrix-free conjugate gradient for symmetric positive definite operators.

    Returns `(x, iterations)` with `|rhs - apply(x)| <= tol * |rhs|` in the 2-norm.
    Raises `IterationLimitError` when `maxiter` (default `10 * rhs.size`) is exhausted.
    """
    if not tol > 0:
        raise DomainError(f"CG tolerance must be positive, got {tol!r}")
    rhs = np.asarray(rhs, dtype=float)
    maxiter = 10 * rhs.size if maxiter is None else int(maxiter)
    rhs_norm = np.sqrt(np.vdot(rhs, rhs))
    if rhs_norm == 0.0:
        return np.zeros_like(rhs), 0

    x = np.zeros_like(rhs) if x0 is None else np.array(x0, dtype=float)
    r = rhs - apply(x) if x0 is not None else rhs.copy()
    p = r.copy()
    rr = np.vdot(r, r)
    iterations = 0
    while np.sqrt(rr) > tol * rhs_norm:
        if iterations >= maxiter:
            raise IterationLimitError(iterations, float(np.sqrt(rr) / rhs_norm))
        Ap = apply(p)
        pAp = np.vdot(p, Ap)
        if pAp <= 0.0:
            raise DomainError("Operator is not positive definite along the search direction")
        alpha = rr / pAp
        x += alpha * p
        r -= alpha * Ap
        rr_next = np.vdot(r, r)
        p = r + (rr_next / rr) * p
        rr = rr_next
        iterations += 1
    return x, iterations


def dense_from_operator(apply: LinearOperator, m: int) -> np.ndarray:
    """Materializes a linear operator on length-`m` vectors column by column."""
    dense = np.empty((m, m))
    unit = np.zeros(m)
    for k in range(m):
        unit[k] = 1.0
        dense[:, k] = np.ravel(apply(unit.copy()))
        unit[k] = 0.0
    return dense


def dense_from_tridiag(system: TridiagSystem) -> np.ndarray:
    """Dense matrix of a single (unbatched) line system."""
    main = np.asarray(system.main, dtype=float)
    dense = np.diag(main) + np.diag(np.asarray(system.lower, dtype=float), -1)
    dense += np.diag(np.asarray(system.upper, dtype=float), 1)
    if isinstance(system, CyclicTridiagSystem):
        dense[0, -1] += float(system.corner_high)
        dense[-1, 0] += float(system.corner_low)
    return dense
