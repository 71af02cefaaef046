"""Exception hierarchy shared by all simulator modules."""


class SimError(Exception):
    """Base class; ``code`` is the machine-readable error name."""

    code = "SimError"

    def __init__(self, message: str = ""):
        super().__init__(message or self.code)
        self.message = message or self.code


class CapacityExceeded(SimError):
    code = "CapacityExceeded"


class ZeroLengthPayload(SimError):
    code = "ZeroLengthPayload"


class OverlapDetected(SimError):
    code = "OverlapDetected"


class InvalidRing(SimError):
    code = "InvalidRing"


class OutOfAperture(SimError):
    code = "OutOfAperture"


class IncompleteTrace(SimError):
    code = "IncompleteTrace"


class ScenarioIncomplete(SimError):
    code = "ScenarioIncomplete"


class EmptySamples(SimError):
    code = "EmptySamples"


class ConfigInvalid(SimError):
    code = "ConfigInvalid"


class CalibrationDiverged(SimError):
    code = "CalibrationDiverged"


class BadArgs(SimError):
    code = "BadArgs"
