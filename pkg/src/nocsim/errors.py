"""Exception types raised across the toolkit."""


class NocError(Exception):
    pass


class NonPowerOfTwo(NocError, ValueError):
    pass


class TargetUnreachable(NocError):
    """Codeword search ended outside tolerance. ``best`` holds the closest book found."""

    def __init__(self, message, best=None, max_error=None):
        super().__init__(message)
        self.best = best
        self.max_error = max_error


class FormatError(NocError, ValueError):
    pass


class LengthMismatch(NocError, ValueError):
    pass


class OddLength(NocError, ValueError):
    pass


class ShapeMismatch(NocError, ValueError):
    pass


class NonFiniteActivation(NocError, FloatingPointError):
    pass


class DegenerateFeature(NocError, ValueError):
    pass


class DivergenceDetected(NocError):
    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class TooManyUsers(NocError, ValueError):
    pass


class RankDeficient(NocError, ValueError):
    pass


class ConfigError(NocError, ValueError):
    pass
