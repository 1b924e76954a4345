"""Exception hierarchy shared across the package."""


class SLHNetError(Exception):
    """Base class for all errors raised by this package."""


class SpaceError(SLHNetError):
    """Label/dimension mismatch when embedding or combining operators."""


class ConstructionError(SLHNetError):
    """Invalid arguments to an elementary operator or state constructor."""


class ValidationError(SLHNetError):
    """A component parameter or state violates a documented constraint."""


class CompositionError(SLHNetError):
    """An SLH composition rule was applied to incompatible operands."""


class AlgebraicLoopError(CompositionError):
    """Feedback reduction hit a singular (I - S_xy) loop operator."""


class NotLinearError(SLHNetError):
    """A triple fed to the linear-analysis extractor is not linear."""

    def __init__(self, message, offending=None, residual=None):
        super().__init__(message)
        self.offending = offending
        self.residual = residual


class UnrealizableError(SLHNetError):
    """A state-space model failed the physical-realizability conditions."""


class UnsupportedConfigurationError(SLHNetError):
    """The requested equation of motion does not exist for this triple."""


class AssumptionError(SLHNetError):
    """An adiabatic-elimination structural assumption does not hold."""


class SteadyStateError(SLHNetError):
    """The Liouvillian null space is empty or degenerate."""


class TraceDriftError(SLHNetError):
    """Trace of the density matrix drifted beyond tolerance during a run."""


class TruncationGuardError(SLHNetError):
    """Top Fock level of an oscillator factor got populated beyond the guard."""

    def __init__(self, message, label=None, population=None):
        super().__init__(message)
        self.label = label
        self.population = population


class ParseError(SLHNetError):
    """Syntax or semantic error in a network description, with position."""

    def __init__(self, message, line=None, column=None):
        self.line = line
        self.column = column
        if line is not None:
            message = f"{line}:{column}: {message}"
        super().__init__(message)


class ElaborationError(SLHNetError):
    """A parsed network could not be elaborated into a triple."""
