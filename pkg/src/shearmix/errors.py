"""Exception types raised across the package."""


class ShearmixError(Exception):
    """Base class for all package errors."""


class ProfileError(ShearmixError):
    pass


class DegenerateCritical(ProfileError):
    """A located critical point has vanishing second derivative."""


class NonPeriodic(ProfileError):
    """Tabulated profile endpoints disagree."""


class NoCriticalPoints(ProfileError):
    pass


class GridTooCoarse(ShearmixError):
    pass


class ZeroMode(ShearmixError):
    """The k = 0 mode is the plain heat equation and is not reduced."""


class AliasingError(ShearmixError):
    def __init__(self, t, fraction):
        self.t = t
        self.fraction = fraction
        super().__init__(f"spectral tail fraction {fraction:.3e} exceeds tolerance at t={t:.6g}")


class UnresolvedBump(ShearmixError):
    pass


class NonFinite(ShearmixError):
    pass


class EquivalenceViolation(ShearmixError):
    pass


class StrideTooCoarse(ShearmixError):
    pass


class NegativePhi(ShearmixError):
    pass


class NoFeasibleBeta(ShearmixError):
    pass


class Underflow(ShearmixError):
    pass


class InsufficientPoints(ShearmixError):
    pass


class Unbounded(ShearmixError):
    pass


class MissingData(ShearmixError):
    pass


class ConfigError(ShearmixError):
    pass
