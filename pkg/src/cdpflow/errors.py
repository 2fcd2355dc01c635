"""Exception hierarchy shared by every cdpflow module."""


class CdpflowError(Exception):
    """Base class for all library errors."""


class InvalidGrid(CdpflowError, ValueError):
    pass


class InvalidParameter(CdpflowError, ValueError):
    pass


class NonFinite(CdpflowError, FloatingPointError):
    """A field contains NaN or Inf samples."""


class GridMismatch(CdpflowError, ValueError):
    pass


class NonDifferentiable(CdpflowError, ValueError):
    """The exponent function is clamped at the requested concentration."""


class DegeneratePair(CdpflowError, ValueError):
    pass


class DegenerateDirection(CdpflowError, ValueError):
    pass


class BlowUpBeforeT(CdpflowError, ArithmeticError):
    """The local Gronwall bracket ``1 - alpha*c0*Phi**alpha*t`` is no longer positive."""

    def __init__(self, t, bracket):
        super().__init__(f"Gronwall bracket {bracket:.3e} <= 0 at t={t:.6g}")
        self.t = t
        self.bracket = bracket


class BlowUpDetected(CdpflowError, RuntimeError):
    """Raised by the solver once a monitored norm leaves the admissible range."""

    def __init__(self, message, t=None, state=None):
        super().__init__(message)
        self.t = t
        self.state = state


class UnderResolved(CdpflowError, ValueError):
    pass


class EmptyRun(CdpflowError, ValueError):
    pass


class FitFailure(CdpflowError, RuntimeError):
    pass


class ConfigError(CdpflowError, ValueError):
    """Invalid run configuration; ``key`` and ``line`` locate the offending entry."""

    def __init__(self, message, key=None, line=None):
        super().__init__(message)
        self.message = message
        self.key = key
        self.line = line

    def __str__(self):
        loc = []
        if self.key is not None:
            loc.append(f"key '{self.key}'")
        if self.line is not None:
            loc.append(f"line {self.line}")
        return f"{self.message} ({', '.join(loc)})" if loc else self.message
