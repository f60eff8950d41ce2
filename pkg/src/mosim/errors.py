"""Exception classes shared across the simulator."""


class SimulationError(Exception):
    """Base class for all simulator errors."""


class SchedulingInPast(SimulationError):
    pass


class TimeOverflow(SimulationError):
    pass


class AddressOutOfRange(SimulationError):
    pass


class PartsOutOfRange(SimulationError):
    pass


class ConfigError(SimulationError):
    pass


class BusLocked(SimulationError):
    pass


class DoubleGrant(SimulationError):
    pass


class ReleaseWithoutOwnership(SimulationError):
    pass


class CidExhausted(SimulationError):
    pass


class QueueFull(SimulationError):
    pass


class UnknownCid(SimulationError):
    pass


class ModeChangeWhileBusy(SimulationError):
    pass


class PrpPoolExhausted(SimulationError):
    pass


class CapacityExhausted(SimulationError):
    pass


class ParseError(SimulationError):
    def __init__(self, message, line_no=None):
        super().__init__(message if line_no is None else "line %d: %s" % (line_no, message))
        self.line_no = line_no


class UnsortedTrace(SimulationError):
    pass
