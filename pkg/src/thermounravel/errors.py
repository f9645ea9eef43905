"""Exception and warning types raised by the simulation engine."""


class ThermoUnravelError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(ThermoUnravelError):
    """Malformed or inconsistent configuration."""


class NumericalError(ThermoUnravelError):
    """Base class for numerical failures (CLI exit code 2)."""


class DimensionMismatch(NumericalError, ValueError):
    pass


class NotHermitian(NumericalError, ValueError):
    pass


class NoConvergence(NumericalError):
    pass


class DomainError(NumericalError, ValueError):
    """A scalar function was evaluated outside its domain."""


class NonPositiveEigenvalue(NumericalError, ValueError):
    pass


class InvalidDensityMatrix(NumericalError, ValueError):
    pass


class StepTooLarge(NumericalError, ValueError):
    pass


class ZeroBracket(NumericalError, ValueError):
    """The energy-energy bracket vanishes but the unraveling needs it."""


class DegenerateCoupling(NumericalError):
    """The normalization bracket fixing alpha is not positive."""


class EnsembleCollapse(NumericalError):
    """Mean squared norm of the ensemble left its admissible window."""


class PositivityLost(UserWarning):
    """Density matrix acquired a significantly negative eigenvalue."""


class TraceDrift(UserWarning):
    """Trace of an integrated density matrix moved away from one."""
