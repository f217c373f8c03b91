"""Exception types shared across the package."""


class ThermopticError(Exception):
    """Base class for all package-specific errors."""


class CopRangeError(ThermopticError):
    """Supply temperature outside the COP curve's validity interval."""


class DegenerateParamsError(ThermopticError):
    """Parameter set makes a derived quantity numerically singular."""


class HeterogeneousRacksError(ThermopticError):
    """Operation requires racks with identical power characteristics."""


class CapacityError(ThermopticError):
    """Requested total workload outside [0, sum(dmax)]."""


class ActiveSetError(ThermopticError):
    """Active-set search failed to certify an optimal setpoint."""


class NotHurwitzError(ThermopticError):
    """System matrix has an eigenvalue with nonnegative real part."""


class DivergenceError(ThermopticError):
    """Simulation state became non-finite."""

    def __init__(self, message, time=None, last_state=None):
        super().__init__(message)
        self.time = time
        self.last_state = last_state


class ConfigError(ThermopticError):
    """Configuration document is malformed or fails its schema."""
