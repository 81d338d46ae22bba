"""Exception and warning types raised by the simulator."""


class SimulationError(RuntimeError):
    """Base class for run-time failures that abort a trajectory."""


class DegenerateMap(SimulationError):
    """The flow map lost invertibility: min J fell to the floor."""


class NonConvergedGhost(SimulationError):
    """The local Navier-slip wall solve is singular."""


class ProjectionFailed(SimulationError):
    pass


class DtViolation(SimulationError):
    pass


class ImplicitSolveFailed(SimulationError):
    pass


class InsufficientHistory(ValueError):
    """Not enough snapshots to form the requested backward time differences."""


class SingularRecovery(SimulationError):
    pass


class NonPositiveValue(ValueError):
    pass


class SnapshotError(ValueError):
    """Corrupt, truncated or unsupported snapshot file."""


class ConfigError(ValueError):
    """Invalid run configuration; the message names the offending key."""


class TruncationBreach(UserWarning):
    """Disturbance reached the upper tenth of the truncated slab."""
