"""Exception types raised by refractor_forge."""


class RefractorError(Exception):
    """Base class for all package errors."""


class ConfigError(RefractorError, ValueError):
    """A scene or option violates a modelling assumption.

    ``assumption`` names the violated condition (``"H1"``, ``"conservation"``,
    ...) and ``witness`` optionally carries the offending data, e.g. the
    direction/target pair that breaks an inner-product bound.
    """

    def __init__(self, message, assumption=None, witness=None):
        super().__init__(message)
        self.assumption = assumption
        self.witness = witness


class NumericalError(RefractorError, ArithmeticError):
    """A numerical routine produced a non-finite value."""

    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = index


class NonConvergence(RefractorError):
    """The solver exhausted its iteration budget."""

    def __init__(self, message, history=None):
        super().__init__(message)
        self.history = history if history is not None else []


class InfeasibleAnchor(ConfigError):
    """The anchor parameter lies outside its admissible interval."""

    def __init__(self, message, interval=None):
        super().__init__(message, assumption="anchor")
        self.interval = interval
