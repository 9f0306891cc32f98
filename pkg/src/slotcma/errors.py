"""Exception hierarchy shared by all pipeline stages."""


class SlotCmaError(Exception):
    """Base class for every error raised by this package."""


class GeometryError(SlotCmaError, ValueError):
    """Invalid plate, slot or observation geometry."""


class ResolutionError(SlotCmaError, ValueError):
    """Requested mesh resolution cannot represent the plate."""


class TopologyError(SlotCmaError, ValueError):
    """Mesh connectivity is not a 2-manifold."""


class ConsistencyError(SlotCmaError, ValueError):
    """Objects built on different meshes or bases were combined."""


class SolverError(SlotCmaError, ArithmeticError):
    """Dense solve failed or the system is numerically singular."""

    def __init__(self, message, condition=None):
        super().__init__(message)
        self.condition = condition


class DecompositionError(SlotCmaError, ArithmeticError):
    """Generalized eigendecomposition could not be carried out."""

    def __init__(self, message, eigenvalue=None):
        super().__init__(message)
        self.eigenvalue = eigenvalue


class TrackingError(SlotCmaError):
    """Mode tracking input is malformed."""


class PlanningError(SlotCmaError, ValueError):
    """Slot-orientation procedure cannot proceed."""


class ConfigError(SlotCmaError, ValueError):
    """Run configuration is invalid.

    ``line`` carries the 1-based line number in the source file when known.
    """

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
