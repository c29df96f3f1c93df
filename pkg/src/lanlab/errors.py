"""Exception types raised across the package."""


class LanlabError(Exception):
    """Base class for every error raised by lanlab."""


class InvalidParameterError(LanlabError, ValueError):
    pass


class DomainError(LanlabError, ValueError):
    pass


class UnsupportedError(LanlabError, NotImplementedError):
    pass


class PreconditionError(LanlabError, ValueError):
    pass


class EllipticityError(LanlabError, ArithmeticError):
    pass


class TruncationError(LanlabError, ArithmeticError):
    pass


class AccuracyError(LanlabError, ArithmeticError):
    pass


class NoRootError(LanlabError, ArithmeticError):
    pass


class NumericError(LanlabError, ArithmeticError):
    """Numeric failure tied to an observation index ``k`` when one is known."""

    def __init__(self, message, k=None):
        super().__init__(message)
        self.k = k


class SimulationDivergedError(LanlabError, ArithmeticError):
    def __init__(self, message, step):
        super().__init__(message)
        self.step = step


class ValidationError(LanlabError, ValueError):
    """Configuration rejected; ``fields`` lists the offending keys."""

    def __init__(self, fields):
        self.fields = dict(fields)
        msg = "; ".join(f"{k}: {v}" for k, v in self.fields.items())
        super().__init__(f"invalid configuration: {msg}")
