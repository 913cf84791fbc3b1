"""Exception hierarchy shared by every module.

The CLI maps ``ConfigError`` to exit code 2 and ``NumericsError`` to exit
code 3, so new errors should subclass one of the two families.
"""


class SteklovError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(SteklovError, ValueError):
    pass


class NumericsError(SteklovError, ArithmeticError):
    pass


class GeometryError(NumericsError):
    pass


class ParseError(ConfigError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class ShapeError(ConfigError):
    pass


class ContractError(ConfigError):
    pass


class DegeneracyError(NumericsError):
    pass


class CompatibilityError(NumericsError):
    pass


class TrackingError(NumericsError):
    pass


class RootError(NumericsError):
    pass


class DomainError(ConfigError):
    pass


class FitError(NumericsError):
    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class FloorWarning(UserWarning):
    """Residuals stopped decreasing; the discretization error dominates."""
