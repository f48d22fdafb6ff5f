"""Exception hierarchy shared by all valleon modules."""


class ValleonError(Exception):
    """Base class for every error raised by the package."""


class InvalidParameterError(ValleonError, ValueError):
    pass


class InvalidPathError(ValleonError, ValueError):
    pass


class DegenerateBandError(ValleonError):
    """Raised when the two bands touch where a gap is required."""

    def __init__(self, message, k=None):
        super().__init__(message)
        self.k = k


class DegenerateVortexError(ValleonError):
    pass


class TooNarrowError(ValleonError, ValueError):
    pass


class OutOfRangeError(ValleonError, ValueError):
    pass


class InvalidGeometryError(ValleonError, ValueError):
    pass


class InvalidCarrierError(ValleonError, ValueError):
    pass


class StepSizeError(ValleonError):
    pass


class ResidualTooLargeError(ValleonError):
    def __init__(self, residual):
        super().__init__(f"run under-converged: residual norm {residual:.3e} >= 0.05")
        self.residual = residual


class NonUnitarizableError(ValleonError):
    def __init__(self, correction):
        super().__init__(f"polar correction {correction:.3e} exceeds 0.1")
        self.correction = correction


class InvalidCircuitError(ValleonError, ValueError):
    pass


class InvalidOverlapError(ValleonError, ValueError):
    pass


class FitFailureError(ValleonError):
    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class UnsupportedFormatError(ValleonError, ValueError):
    pass


class ConfigError(ValleonError):
    """Carries every validation problem found in a config, not just the first."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))
