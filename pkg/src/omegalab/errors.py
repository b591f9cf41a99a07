"""Exception types raised across the package."""


class OmegaLabError(Exception):
    """Base class for all package errors."""


class IncomparableFieldsError(OmegaLabError, ValueError):
    pass


class BlowUpError(OmegaLabError, RuntimeError):
    """Solution sup norm crossed the blow-up threshold."""

    def __init__(self, t, norm=None):
        self.t = float(t)
        self.norm = norm
        msg = f"blow-up detected at t={self.t:.6g}"
        if norm is not None:
            msg += f" (sup norm {norm:.3e})"
        super().__init__(msg)


class NumericallyZeroError(OmegaLabError, ValueError):
    pass


class NoStableRadiusError(OmegaLabError, ValueError):
    pass


class InsufficientHorizonError(OmegaLabError, ValueError):
    pass


class FrameCollapseError(OmegaLabError, ArithmeticError):
    pass


class NotHomogeneousError(OmegaLabError, ValueError):
    pass


class InsufficientRecurrenceError(OmegaLabError, RuntimeError):
    pass


class UnboundedOmegaError(OmegaLabError, RuntimeError):
    pass


class FalsificationEvent(OmegaLabError, AssertionError):
    """A structural prediction was violated by the sampled data."""
