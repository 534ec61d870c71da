"""Exception types shared across the package."""


class FiberSimError(Exception):
    """Base class for all fibersqueeze errors."""


class InvalidParameterError(FiberSimError, ValueError):
    """A physical or numerical parameter violates its precondition."""


class InvalidArgumentError(FiberSimError, ValueError):
    """Arguments are individually valid but mutually inconsistent (e.g. grid mismatch)."""


class NumericalBlowupError(FiberSimError, FloatingPointError):
    """Propagation produced NaN/overflow or exceeded the intensity guard.

    Carries the zero-based step index at which the blowup was detected.
    """

    def __init__(self, message: str, step: int):
        super().__init__(message)
        self.step = step


class UndefinedMeasurementError(FiberSimError):
    """A measurement is undefined (zero-energy output, all slots masked, ...)."""


class ConfigError(FiberSimError, ValueError):
    """Config text failed validation.  ``errors`` lists every problem found."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("\n".join(f"{ctx}: {msg}" for ctx, msg in self.errors))


class EmptySlotWarning(UserWarning):
    """A filter slot does not intersect the grid support; the filtered field is zero."""
