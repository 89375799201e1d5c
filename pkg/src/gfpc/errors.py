"""Exception types raised across the package."""


class GfpcError(Exception):
    """Base class for all package errors."""


class InvalidDegreeError(GfpcError, ValueError):
    """Root finding requested on a polynomial of degree zero."""


class DegenerateOrderError(GfpcError, ValueError):
    """Leading coefficient of a characteristic polynomial is zero."""


class DegenerateLoopError(GfpcError):
    """Feedback interconnection 1 + L is identically zero."""


class PoleOnGridError(GfpcError):
    """A frequency sample coincides with an imaginary-axis pole."""

    def __init__(self, omega, message=None):
        self.omega = omega
        super().__init__(message or f"frequency grid hits a pole at omega = {omega} p.u.")


class PowerAngleLimitError(GfpcError, ValueError):
    """Requested power transfer exceeds the static power-angle limit."""


class WrongRegimeError(GfpcError, ValueError):
    """Operation called outside the control regime it is derived for."""


class NoCrossoverError(GfpcError):
    """Loop magnitude never reaches unity (or cubic has no positive real root)."""


class InfeasibleMarginError(GfpcError, ValueError):
    """Gain-margin target outside the admissible interval of the tuning rule."""


class InvalidOperatingPointError(GfpcError, ValueError):
    """Operating point violates a precondition of a closed-form expression."""


class UnstableLoopError(GfpcError):
    """Step response requested for a closed loop with non-decaying poles."""

    def __init__(self, poles, message=None):
        self.poles = list(poles)
        super().__init__(message or f"closed loop is not strictly stable, poles: {self.poles}")


class IncomparableRunsError(GfpcError, ValueError):
    """Two time series do not share any overlapping time range."""


class SelfCheckError(GfpcError):
    """A tuning result failed its numeric verification pass."""

    def __init__(self, message, measured_gm=None, measured_pm_deg=None):
        self.measured_gm = measured_gm
        self.measured_pm_deg = measured_pm_deg
        super().__init__(message)


class NumericalError(GfpcError):
    """An iterative solve failed to converge; carries the final residual."""

    def __init__(self, message, residual=None):
        self.residual = residual
        super().__init__(message)


class ConfigError(GfpcError, ValueError):
    """Malformed configuration input; carries the offending line number."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
