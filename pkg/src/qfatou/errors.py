"""Exception hierarchy shared by all modules."""


class QFatouError(Exception):
    """Base class for library errors."""


class ParameterError(QFatouError, ValueError):
    """A parameter violates a documented constraint."""


class PointOffBoundaryError(QFatouError, ValueError):
    pass


class EmptySampleError(QFatouError, ValueError):
    pass


class NoCorkscrewError(QFatouError):
    """No candidate point reached the requested clearance."""


class DepthCapError(QFatouError, ValueError):
    pass


class DegenerateSceneError(QFatouError):
    pass


class EmptyRegionError(QFatouError):
    """W_Q^0 came out empty: eta/K do not suit the scene."""

    def __init__(self, cube, msg=None):
        self.cube = cube
        super().__init__(msg or f"empty Whitney collection for cube {cube}")


class InsufficientDepthError(QFatouError):
    pass


class BracketViolationError(QFatouError):
    pass


class NoWalksError(QFatouError):
    pass


class DimensionError(QFatouError, ValueError):
    pass
