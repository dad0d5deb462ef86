"""Exception hierarchy. Each maps to one CLI exit code where relevant."""


class SSFLError(Exception):
    pass


class InvalidInputError(SSFLError, ValueError):
    pass


class CapacityError(SSFLError):
    """A class has too few samples for the requested assignment."""

    def __init__(self, message, klass=None):
        super().__init__(message)
        self.klass = klass


class ContractError(SSFLError, RuntimeError):
    pass


class UndefinedValueError(SSFLError, ArithmeticError):
    pass


class TrainingDivergedError(SSFLError, FloatingPointError):
    def __init__(self, message, round_index=None):
        super().__init__(message)
        self.round_index = round_index


class ConfigError(SSFLError):
    pass


class DatasetError(SSFLError):
    """Missing, malformed, or invalid dataset input."""
