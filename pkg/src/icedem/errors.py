"""Exception types shared across the package."""


class IceDemError(Exception):
    """Base class for all package errors."""


class ConfigError(IceDemError, ValueError):
    """Invalid scene, scenario, dataset or parameter file."""


class NumericalError(IceDemError, ArithmeticError):
    """A non-finite value appeared during a simulation step."""


class FitError(IceDemError, ValueError):
    """Calibration input that cannot be fitted (degenerate or inconsistent)."""


class ScenarioError(IceDemError, RuntimeError):
    """A scenario ran but could not produce its result (e.g. no bond formed)."""
