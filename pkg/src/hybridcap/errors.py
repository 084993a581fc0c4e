"""Exception hierarchy shared by all modules."""


class HybridCapError(Exception):
    """Base class for every error raised by this package."""


class ConfigurationError(HybridCapError, ValueError):
    """Invalid user-facing parameters. CLI exit status 1."""

    def __init__(self, message, field=None):
        super().__init__(message if field is None else f"{field}: {message}")
        self.field = field


class InvalidTopologyError(ConfigurationError):
    pass


class DomainError(ConfigurationError):
    """An argument lies outside the domain of the operation."""


class EnumerationGuardError(ConfigurationError):
    """Exhaustive enumeration would exceed the state-space guard."""

    def __init__(self, states, guard):
        super().__init__(
            f"state space C^N = {states} exceeds the enumeration guard {guard}",
            field="enumeration",
        )
        self.states = states
        self.guard = guard


class NumericalError(HybridCapError, ArithmeticError):
    """Numerical failure. CLI exit status 2."""


class ConvergenceError(NumericalError):
    def __init__(self, message, residual=None, iterations=None):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


class OptimizationError(NumericalError):
    pass


class FormulaRangeError(NumericalError):
    """A closed-form probability left [0, 1] by more than the clamp tolerance."""
