"""Exception types raised across the simulator."""


class InvalidParameterError(ValueError):
    pass


class InsufficientPilotError(InvalidParameterError):
    pass


class SingularChannelError(ArithmeticError):
    pass


class NumericFaultError(ArithmeticError):
    pass


class TrainingDivergedError(NumericFaultError):
    def __init__(self, epoch, message=None):
        self.epoch = epoch
        super().__init__(message or f"training diverged at epoch {epoch}")
