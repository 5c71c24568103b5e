"""All ksadi specific exception and warning classes should be defined here"""
from typing import Optional, Tuple


class KsadiError(Exception):
    """Base class for all exceptions returned from ksadi"""

    pass


class ConfigurationError(KsadiError):
    """Thrown when a grid, scheme or experiment is configured with invalid values"""

    def __init__(self, message: str, key: Optional[str] = None):
        super().__init__(message)
        self.key = key


class SamplingError(ConfigurationError):
    """Thrown when a sampled function returns a non-finite value on a grid node"""

    def __init__(self, index: Tuple[int, int], point: Tuple[float, float], value: float):
        super().__init__(
            f"Sampled function returned {value!r} at node {index} (x={point[0]!r}, y={point[1]!r})"
        )
        self.index = index
        self.point = point
        self.value = value


class FieldError(KsadiError):
    """Thrown when a Field would hold non-finite entries or does not match its grid"""

    pass


class DomainError(KsadiError):
    """Thrown when values violate the domain of an operation (for example M <= 0)"""

    def __init__(self, message: str, index: Optional[Tuple[int, ...]] = None):
        super().__init__(message)
        self.index = index


class SingularSystemError(KsadiError):
    """Thrown when a line system hits a zero pivot"""

    pass


class IterationLimitError(KsadiError):
    """Thrown when the conjugate gradient solver exhausts its iteration budget"""

    def __init__(self, iterations: int, residual: float):
        super().__init__(
            f"Conjugate gradient did not converge in {iterations} iterations "
            f"(relative residual {residual:.3e})"
        )
        self.iterations = iterations
        self.residual = residual


class SchemeStateError(KsadiError):
    """Thrown when a time stepper is called without the history it needs"""

    pass


class NumericalAbort(KsadiError):
    """Thrown when a simulation produces a non-finite field.
    The last finite state is persisted to `snapshot` before raising.
    """

    def __init__(self, t: float, snapshot: Optional[str] = None):
        message = f"Non-finite field detected at t={t!r}"
        if snapshot:
            message += f"; last good snapshot written to '{snapshot}'"
        super().__init__(message)
        self.t = t
        self.snapshot = snapshot


class PositivityWarning(UserWarning):
    """Emitted when a density is negative beyond roundoff or a positivity condition fails"""

    pass


class ConvergenceWarning(UserWarning):
    """Emitted when a convergence study produces a suspicious error sequence"""

    pass
