"""Exception hierarchy shared across the toolkit."""


class LatticeNavError(Exception):
    """Base class for all toolkit errors."""


class InvalidInputError(LatticeNavError):
    """Malformed or out-of-contract caller input (CLI exit code 2)."""


class MapFormatError(InvalidInputError):
    """Unparseable map file; carries file name and byte offset where known."""

    def __init__(self, message, path=None, offset=None):
        detail = message
        if path is not None:
            detail = f"{path}: {detail}"
        if offset is not None:
            detail = f"{detail} (byte offset {offset})"
        super().__init__(detail)
        self.path = path
        self.offset = offset


class OutOfBoundsError(LatticeNavError):
    """Continuous query outside the valid interior of a grid."""


class PrimitiveError(InvalidInputError):
    """Motion-primitive generation or file validation failure."""


class InvalidEndpointError(InvalidInputError):
    """Start or goal state is in collision or outside the map.

    Deliberately distinct from a NO_PATH result: the query itself is bad.
    """


class InvalidGoalError(InvalidInputError):
    """Goal cell lies inside the inflated-obstacle region of the 2-D grid."""


class NumericalFailureError(LatticeNavError):
    """Linear-algebra failure (non-positive pivot) in the banded solver."""
