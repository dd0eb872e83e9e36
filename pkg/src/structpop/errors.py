"""Exception hierarchy shared by all structpop modules."""


class StructPopError(Exception):
    """Base class for every error raised by structpop."""


class ArgumentError(StructPopError, ValueError):
    pass


class BracketError(StructPopError, ValueError):
    pass


class ConvergenceError(StructPopError, RuntimeError):
    pass


class EvaluationError(StructPopError, ValueError):
    def __init__(self, message, point=None):
        super().__init__(message)
        self.point = point


class BoundaryZeroError(StructPopError, RuntimeError):
    def __init__(self, message, point=None):
        super().__init__(message)
        self.point = point


class NumericalError(StructPopError, RuntimeError):
    pass


class ConfigurationError(StructPopError, ValueError):
    def __init__(self, message, field=None):
        super().__init__(message)
        self.field = field


class ModelError(StructPopError, ValueError):
    def __init__(self, message, point=None):
        super().__init__(message)
        self.point = point


class RouteError(StructPopError, ValueError):
    pass


class SpectralAnomalyError(StructPopError, RuntimeError):
    def __init__(self, message, spectrum_head=None):
        super().__init__(message)
        self.spectrum_head = spectrum_head


class AssemblyError(StructPopError, RuntimeError):
    def __init__(self, message, location=None):
        super().__init__(message)
        self.location = location


class InconsistencyError(StructPopError, RuntimeError):
    def __init__(self, message, values=None):
        super().__init__(message)
        self.values = values


class StepSizeError(StructPopError, ValueError):
    def __init__(self, message, admissible=None):
        super().__init__(message)
        self.admissible = admissible


class StiffnessError(StructPopError, RuntimeError):
    pass


class RangeError(StructPopError, OverflowError):
    pass


class FitError(StructPopError, ValueError):
    pass


class OscillationError(FitError):
    """The deviation from equilibrium changes sign inside the fit window.

    Use :func:`structpop.simulator.measure_envelope_growth_rate` instead.
    """
