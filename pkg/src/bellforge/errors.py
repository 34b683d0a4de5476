"""Exception hierarchy shared by all bellforge modules."""


class BellforgeError(Exception):
    """Base class for every error raised by the package."""


class DomainError(BellforgeError, ValueError):
    """A scalar expression was evaluated outside its domain (pole, sqrt < 0)."""


class UnboundParameterError(BellforgeError, KeyError):
    """A scalar expression references a parameter with no assigned value."""


class ScenarioMismatchError(BellforgeError, ValueError):
    pass


class WordLengthError(BellforgeError, ValueError):
    """A monomial exceeded the configured per-party word length cap."""


class DimensionMismatchError(BellforgeError, ValueError):
    pass


class NotHermitianError(BellforgeError, ValueError):
    pass


class NotEigenvectorError(BellforgeError, ValueError):
    pass


class NonStationaryError(BellforgeError, ValueError):
    pass


class DegenerateSpectrumError(BellforgeError, ValueError):
    pass


class MissingSymbolError(BellforgeError, KeyError):
    pass


class NoSolutionError(BellforgeError, RuntimeError):
    """Root finding did not reach the residual tolerance from any start."""


class RegionError(BellforgeError, ValueError):
    """Family parameters fall outside the kind's validity region.

    ``constraint`` names the violated condition.
    """

    def __init__(self, constraint: str):
        super().__init__(constraint)
        self.constraint = constraint


class SolverError(BellforgeError, RuntimeError):
    def __init__(self, status: str, message: str = ""):
        super().__init__(f"{status}: {message}" if message else status)
        self.status = status


class BudgetError(BellforgeError, ValueError):
    """Enumeration would exceed the strategy budget."""


class RelationError(BellforgeError, ValueError):
    """Self-testing relations are not satisfied on the given realization."""
