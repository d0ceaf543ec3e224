class AbcError(Exception):
    """Base class for errors raised by this package."""


class DomainError(AbcError, ValueError):
    pass


class InsufficientDataError(AbcError, ValueError):
    pass


class DegenerateScenarioError(AbcError, ValueError):
    pass


class ShapeError(AbcError, ValueError):
    pass


class EmptyPosteriorError(AbcError, RuntimeError):
    """No reference-table row fell inside the tolerance."""

    def __init__(self, msg: str, replication: int | None = None):
        super().__init__(msg if replication is None else f"replication {replication}: {msg}")
        self.replication = replication


class SingularDesignError(AbcError, ArithmeticError):
    pass


class DivergenceError(AbcError, ArithmeticError):
    pass


class DegenerateScaleError(AbcError, ArithmeticError):
    pass


class NonConvergenceError(AbcError, RuntimeError):
    def __init__(self, msg: str, trace=None):
        super().__init__(msg)
        self.trace = trace


class DegenerateCurveError(AbcError, ValueError):
    pass


class DegenerateShapeError(AbcError, ArithmeticError):
    pass


class ConfigError(AbcError, ValueError):
    pass
