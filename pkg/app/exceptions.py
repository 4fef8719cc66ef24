class SimulatorError(Exception):
    """Base class for every error raised by the ridepooling package."""


class ConfigError(SimulatorError):
    pass


class DataError(SimulatorError):
    pass


class NetworkLoadError(DataError):
    """A node or edge record was rejected while loading a network."""

    def __init__(self, message, record=None):
        super().__init__(message)
        self.record = record


class QueryError(SimulatorError):
    pass


class RequestStateError(SimulatorError):
    pass


class InvariantViolation(SimulatorError):
    pass


class RouteError(InvariantViolation):
    pass
