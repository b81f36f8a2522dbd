class Z2Error(Exception):
    """Base class for every error raised by the toolkit."""


class GeometryError(Z2Error, ValueError):
    pass


class ParameterError(Z2Error, ValueError):
    pass


class SizeGuardError(Z2Error):
    pass


class EntropyBudgetError(SizeGuardError):
    def __init__(self, message, rank):
        super().__init__(message)
        self.rank = rank


class UndefinedCreutzRatio(Z2Error):
    """A Wilson loop expectation entering the ratio is not positive."""

    def __init__(self, message, expectations):
        super().__init__(message)
        self.expectations = expectations


class SpectraConvergenceError(Z2Error):
    def __init__(self, message, residual):
        super().__init__(message)
        self.residual = residual


class OptimizerAbort(Z2Error):
    """Line search stopped making progress; carries the best point seen."""

    def __init__(self, message, params, energy):
        super().__init__(message)
        self.params = params
        self.energy = energy


class EmptyEstimateError(Z2Error):
    pass


class FitError(Z2Error):
    def __init__(self, message, residuals=None):
        super().__init__(message)
        self.residuals = residuals


class ConfigError(Z2Error):
    def __init__(self, message, filename=None, line=None):
        location = f"{filename}:{line}: " if filename and line else ""
        super().__init__(f"{location}{message}")
        self.filename = filename
        self.line = line


class CircuitError(Z2Error):
    pass
